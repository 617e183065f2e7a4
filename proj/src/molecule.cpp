#include "deepnose/molecule.hpp"

#include <cmath>
#include <sstream>

#include "deepnose/common.hpp"

namespace deepnose {

std::string_view element_symbol(Element e) {
  switch (e) {
    case Element::C: return "C";
    case Element::H: return "H";
    case Element::O: return "O";
    case Element::N: return "N";
    case Element::S: return "S";
    case Element::Cl: return "Cl";
    case Element::Other: return "X";
  }
  return "X";
}

Element element_from_symbol(std::string_view symbol) {
  std::string s = to_lower(trim(symbol));
  if (s == "c") return Element::C;
  if (s == "h") return Element::H;
  if (s == "o") return Element::O;
  if (s == "n") return Element::N;
  if (s == "s") return Element::S;
  if (s == "cl") return Element::Cl;
  return Element::Other;
}

std::string molecule_to_xyz(const Molecule& mol) {
  std::ostringstream out;
  out << mol.cid << ' ' << mol.atoms.size() << '\n';
  for (const Atom& a : mol.atoms) {
    out << element_symbol(a.element) << ' ' << format_double(a.position[0]) << ' '
        << format_double(a.position[1]) << ' ' << format_double(a.position[2]) << '\n';
  }
  return out.str();
}

Molecule molecule_from_xyz(const std::string& text) {
  std::istringstream in(text);
  Molecule mol;
  std::size_t n = 0;
  if (!(in >> mol.cid >> n)) raise(ErrorKind::MalformedRecord, "bad xyz header");
  mol.atoms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string sym;
    Atom& a = mol.atoms[i];
    if (!(in >> sym >> a.position[0] >> a.position[1] >> a.position[2]))
      raise(ErrorKind::MalformedRecord, "truncated xyz at atom " + std::to_string(i));
    a.element = element_from_symbol(sym);
    for (double c : a.position)
      if (!std::isfinite(c)) raise(ErrorKind::MalformedRecord, "non-finite coordinate at atom " + std::to_string(i));
  }
  return mol;
}

}  // namespace deepnose

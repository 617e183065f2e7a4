#include "deepnose/sdf.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

#include "deepnose/common.hpp"

namespace deepnose {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      std::size_t end = i;
      if (end > start && text[end - 1] == '\r') --end;
      lines.emplace_back(text.substr(start, end - start));
      start = i + 1;
    }
  }
  // a trailing newline yields an empty last element; drop it
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  raise(ErrorKind::MalformedRecord, "line " + std::to_string(line_no) + ": " + what);
}

// counts line uses fixed 3-character fields (atom and bond counts can abut)
long parse_count_field(const std::string& line, std::size_t offset, std::size_t line_no) {
  if (line.size() < offset + 3) fail(line_no, "counts line too short");
  std::string field = trim(line.substr(offset, 3));
  if (field.empty()) fail(line_no, "empty count field");
  char* end = nullptr;
  long v = std::strtol(field.c_str(), &end, 10);
  if (end != field.c_str() + field.size() || v < 0) fail(line_no, "bad count '" + field + "'");
  return v;
}

double parse_coord(const std::string& token, std::size_t line_no) {
  char* end = nullptr;
  double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || !std::isfinite(v))
    fail(line_no, "unparseable coordinate '" + token + "'");
  return v;
}

std::vector<std::string> whitespace_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

Molecule parse_sdf(const std::string& text) {
  std::vector<std::string> lines = split_lines(text);
  if (lines.size() < 4) raise(ErrorKind::MalformedRecord, "record shorter than 4 lines");

  Molecule mol;
  {
    std::string name = trim(lines[0]);
    if (!name.empty()) mol.name = name;
    char* end = nullptr;
    unsigned long cid = std::strtoul(name.c_str(), &end, 10);
    if (!name.empty() && end == name.c_str() + name.size()) mol.cid = static_cast<std::uint32_t>(cid);
  }

  const std::string& counts = lines[3];
  if (counts.find("V3000") != std::string::npos)
    raise(ErrorKind::MalformedRecord, "line 4: V3000 records are not supported");
  long natoms = parse_count_field(counts, 0, 4);
  if (natoms == 0) fail(4, "record declares zero atoms");
  if (lines.size() < 4 + static_cast<std::size_t>(natoms))
    fail(lines.size() + 1, "atom block truncated: expected " + std::to_string(natoms) + " atom lines");

  mol.atoms.reserve(static_cast<std::size_t>(natoms));
  for (long i = 0; i < natoms; ++i) {
    std::size_t line_no = 5 + static_cast<std::size_t>(i);
    const std::string& line = lines[4 + static_cast<std::size_t>(i)];
    std::vector<std::string> tok = whitespace_tokens(line);
    if (tok.size() < 4) fail(line_no, "atom line needs x y z symbol");
    Atom a;
    a.position = {parse_coord(tok[0], line_no), parse_coord(tok[1], line_no), parse_coord(tok[2], line_no)};
    a.element = element_from_symbol(tok[3]);
    mol.atoms.push_back(a);
  }
  return mol;
}

std::vector<Molecule> parse_sdf_file(const std::string& text) {
  std::vector<Molecule> mols;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t sep = text.find("$$$$", start);
    std::string record = text.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
    if (!trim(record).empty()) mols.push_back(parse_sdf(record));
    if (sep == std::string::npos) break;
    start = text.find('\n', sep);
    if (start == std::string::npos) break;
    ++start;
  }
  return mols;
}

}  // namespace deepnose

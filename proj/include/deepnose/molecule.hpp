#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepnose/geom.hpp"

namespace deepnose {

// The six modeled elements plus a catch-all. Other atoms survive parsing but
// are skipped (and counted) by the voxelizer.
enum class Element : std::uint8_t { C = 0, H, O, N, S, Cl, Other };

inline constexpr std::size_t kElementChannels = 6;  // Other has no raster channel

std::string_view element_symbol(Element e);
Element element_from_symbol(std::string_view symbol);  // case-insensitive, unknown -> Other

struct Atom {
  Element element = Element::Other;
  Vec3 position{0, 0, 0};
};

struct Molecule {
  std::uint32_t cid = 0;
  std::vector<Atom> atoms;
  std::optional<std::string> name;
};

// Debug serialization: "<cid> <n>" then one "<symbol> <x> <y> <z>" line per
// atom, coordinates at 17 significant digits so the round trip is bit-exact.
std::string molecule_to_xyz(const Molecule& mol);
Molecule molecule_from_xyz(const std::string& text);

}  // namespace deepnose

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "deepnose/molecule.hpp"
#include "deepnose/rotation_grid.hpp"

namespace deepnose {

// Occupancy raster of one molecule over a rotation grid.
// data layout: [orientation][element][x][y][z], z contiguous.
struct VoxelTensor {
  std::size_t n_orient = 0;
  std::size_t side = 0;  // L
  std::vector<float> data;
  // atoms of the six modeled elements that landed outside the box
  std::vector<std::array<std::uint32_t, kElementChannels>> dropped_atoms;  // per orientation
  std::uint32_t other_atoms = 0;  // Element::Other count, skipped everywhere

  std::size_t slab_size() const { return kElementChannels * side * side * side; }
  const float* slab(std::size_t orientation) const { return data.data() + orientation * slab_size(); }
  float* slab(std::size_t orientation) { return data.data() + orientation * slab_size(); }

  std::uint32_t dropped_total(std::size_t orientation) const {
    std::uint32_t n = 0;
    for (std::uint32_t d : dropped_atoms[orientation]) n += d;
    return n;
  }
};

// Shifts atom positions so the unweighted centroid sits at the origin.
Molecule center_molecule(const Molecule& mol);

// Rasterizes one orientation into out[element][x][y][z] (size
// kElementChannels * L^3, caller-provided, zero-filled here). Coordinate c
// maps to index round(c / step) + L / 2, halves rounding away from zero;
// atoms with any index outside [0, L) increment dropped[element] instead.
// Returns the number of Element::Other atoms skipped.
std::uint32_t voxelize_orientation(const Molecule& mol, const Mat3& rotation, double box, double step,
                                   float* out, std::array<std::uint32_t, kElementChannels>& dropped);

// Full tensor over every grid rotation. box/step must divide to an integer
// side length (GridMismatch otherwise). The molecule is expected centered;
// pass the output of center_molecule.
VoxelTensor voxelize(const Molecule& mol, const RotationGrid& grid, double box = 18.0, double step = 1.0);

// Raster dump for golden-file comparisons:
//   line "DNVOX v1 <cid> <n_orient> <L>\n", then little-endian f32 payload
//   in [orientation][element][x][y][z] order.
std::string voxel_to_bytes(const VoxelTensor& vox, std::uint32_t cid);
VoxelTensor voxel_from_bytes(const std::string& bytes, std::uint32_t* cid_out = nullptr);

}  // namespace deepnose

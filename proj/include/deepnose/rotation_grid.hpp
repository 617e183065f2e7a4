#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepnose/geom.hpp"

namespace deepnose {

// Near-uniform unit-sphere directions found by minimizing the Coulomb energy
// sum_{i<j} 1/|p_i - p_j|.
struct SpherePointSet {
  std::vector<Vec3> points;
  double energy = 0.0;
  std::uint64_t seed = 0;
  std::size_t iters = 0;
};

// Ordered rotation set: one block of n_axial rotations per sphere direction,
// rotation (j * n_axial + k) = axial(p_j, k) * to_direction(p_j).
struct RotationGrid {
  std::vector<Mat3> rotations;
  std::size_t n_dirs = 0;
  std::size_t n_axial = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return rotations.size(); }
};

// Projected gradient descent with step backtracking from a seeded random
// start. Deterministic given (n, seed, iters); the energy of the returned
// configuration never exceeds that of any earlier accepted iterate.
SpherePointSet thomson_points(std::size_t n, std::uint64_t seed, std::size_t iters);

// Minimum pairwise angle of the point set, radians.
double min_pairwise_angle(const SpherePointSet& pts);

// Minimal-angle rotation taking (0,0,1) to p. For p within 1e-6 of (0,0,-1)
// the convention is a half-turn about the x axis, diag(1,-1,-1).
Mat3 rotation_to_direction(const Vec3& p);

// Rotation by 2*pi*k/n_axial about unit axis p.
Mat3 axial_rotation(const Vec3& p, std::size_t k, std::size_t n_axial);

RotationGrid build_grid(const SpherePointSet& points, std::size_t n_axial);

// Canonical pipeline grid: thomson_points(n_dirs, seed, iters) + build_grid.
RotationGrid make_grid(std::size_t n_dirs, std::size_t n_axial, std::uint64_t seed,
                       std::size_t iters = 2000);

// Text format, bit-exact round trip:
//   DNGRID v1 <n_dirs> <n_axial> <seed>
//   r00 r01 r02 r10 ... r22        (one rotation per line, 17 sig. digits)
std::string grid_to_string(const RotationGrid& grid);
RotationGrid grid_from_string(const std::string& text);
void save_grid(const RotationGrid& grid, const std::string& path);
RotationGrid load_grid(const std::string& path);

}  // namespace deepnose

#include <cmath>

#include "deepnose/common.hpp"
#include "deepnose/voxelizer.hpp"
#include "doctest.h"
#include "support/synthetic.hpp"

using namespace deepnose;

namespace {

RotationGrid identity_grid() {
  SpherePointSet pts;
  pts.points = {{0, 0, 1}};
  return build_grid(pts, 1);
}

std::size_t voxel_index(const VoxelTensor& v, std::size_t o, std::size_t e, std::size_t x, std::size_t y,
                        std::size_t z) {
  return o * v.slab_size() + ((e * v.side + x) * v.side + y) * v.side + z;
}

}  // namespace

TEST_CASE("center_molecule examples") {
  Molecule one;
  one.atoms = {{Element::C, {3, 4, 5}}};
  const Molecule c1 = center_molecule(one);
  for (int d = 0; d < 3; ++d) CHECK(std::abs(c1.atoms[0].position[d]) < 1e-9);

  Molecule two;
  two.atoms = {{Element::C, {0, 0, 0}}, {Element::C, {2, 0, 0}}};
  const Molecule c2 = center_molecule(two);
  CHECK(c2.atoms[0].position[0] == doctest::Approx(-1));
  CHECK(c2.atoms[1].position[0] == doctest::Approx(1));

  const Molecule c3 = center_molecule(c2);  // idempotent
  CHECK(std::abs(c3.atoms[0].position[0] - c2.atoms[0].position[0]) < 1e-12);

  Molecule empty;
  CHECK_THROWS_AS(center_molecule(empty), Error);
}

TEST_CASE("single atom lands at the box center") {
  Molecule mol;
  mol.cid = 1;
  mol.atoms = {{Element::C, {0, 0, 0}}};
  const auto grid = make_grid(4, 2, 0, 200);
  const VoxelTensor vox = voxelize(mol, grid);
  CHECK(vox.n_orient == 8);
  CHECK(vox.side == 18);
  for (std::size_t o = 0; o < vox.n_orient; ++o) {
    CHECK(vox.data[voxel_index(vox, o, 0, 9, 9, 9)] == 1.0f);
    double sum = 0;
    const float* slab = vox.slab(o);
    for (std::size_t i = 0; i < vox.slab_size(); ++i) sum += slab[i];
    CHECK(sum == doctest::Approx(1));
    CHECK(vox.dropped_total(o) == 0);
  }
}

TEST_CASE("out-of-box atoms are dropped and counted") {
  Molecule mol;
  mol.atoms = {{Element::C, {9.6, 0, 0}}, {Element::O, {0, 0, 0}}};
  const VoxelTensor vox = voxelize(mol, identity_grid());
  REQUIRE(vox.n_orient == 1);
  CHECK(vox.dropped_atoms[0][static_cast<std::size_t>(Element::C)] == 1);
  CHECK(vox.dropped_total(0) == 1);
  CHECK(vox.data[voxel_index(vox, 0, static_cast<std::size_t>(Element::O), 9, 9, 9)] == 1.0f);
}

TEST_CASE("rounding is half-away-from-zero") {
  Molecule mol;
  mol.atoms = {{Element::C, {0.5, -0.5, 0}},   // rounds to (1, -1, 0)
               {Element::O, {0.4, -0.4, 0}}};  // rounds to (0, 0, 0)
  const VoxelTensor vox = voxelize(mol, identity_grid());
  CHECK(vox.data[voxel_index(vox, 0, 0, 10, 8, 9)] == 1.0f);
  CHECK(vox.data[voxel_index(vox, 0, 2, 9, 9, 9)] == 1.0f);

  Molecule edge;
  edge.atoms = {{Element::C, {8.5, 0, 0}}};  // round -> 9, index 18: out
  const VoxelTensor ve = voxelize(edge, identity_grid());
  CHECK(ve.dropped_total(0) == 1);

  Molecule in;
  in.atoms = {{Element::C, {8.4, -9.4, 0}}};  // indices 17, 0: in
  const VoxelTensor vi = voxelize(in, identity_grid());
  CHECK(vi.data[voxel_index(vi, 0, 0, 17, 0, 9)] == 1.0f);
}

TEST_CASE("co-located atoms accumulate") {
  Molecule mol;
  mol.atoms = {{Element::N, {1.1, 0, 0}}, {Element::N, {0.9, 0, 0}}};
  const VoxelTensor vox = voxelize(mol, identity_grid());
  CHECK(vox.data[voxel_index(vox, 0, static_cast<std::size_t>(Element::N), 10, 9, 9)] == 2.0f);
}

TEST_CASE("other atoms are skipped and counted once") {
  Molecule mol;
  mol.atoms = {{Element::Other, {0, 0, 0}}, {Element::C, {1, 0, 0}}, {Element::Other, {2, 0, 0}}};
  const auto grid = make_grid(2, 2, 0, 100);
  const VoxelTensor vox = voxelize(mol, grid);
  CHECK(vox.other_atoms == 2);
  for (std::size_t o = 0; o < vox.n_orient; ++o) {
    double sum = 0;
    const float* slab = vox.slab(o);
    for (std::size_t i = 0; i < vox.slab_size(); ++i) sum += slab[i];
    CHECK(sum + vox.dropped_total(o) == doctest::Approx(1));
  }
}

TEST_CASE("per-element sums equal retained atom counts") {
  Rng rng(21);
  const auto grid = make_grid(4, 3, 1, 200);
  for (int trial = 0; trial < 10; ++trial) {
    const Molecule mol = testsup::random_molecule(rng, 4 + trial * 2, 50 + trial);
    const VoxelTensor vox = voxelize(mol, grid);
    std::array<std::size_t, kElementChannels> counts{};
    for (const auto& a : mol.atoms)
      if (a.element != Element::Other) ++counts[static_cast<std::size_t>(a.element)];
    for (std::size_t o = 0; o < vox.n_orient; ++o)
      for (std::size_t e = 0; e < kElementChannels; ++e) {
        double sum = 0;
        for (std::size_t x = 0; x < 18; ++x)
          for (std::size_t y = 0; y < 18; ++y)
            for (std::size_t z = 0; z < 18; ++z) sum += vox.data[voxel_index(vox, o, e, x, y, z)];
        CHECK(sum == doctest::Approx(static_cast<double>(counts[e] - vox.dropped_atoms[o][e])));
      }
  }
}

TEST_CASE("raster equivariance: rotating coordinates equals selecting the orientation") {
  Rng rng(31);
  const auto grid = make_grid(4, 2, 3, 200);
  const Molecule mol = center_molecule(testsup::random_molecule(rng, 12, 77));
  const VoxelTensor full = voxelize(mol, grid);
  for (std::size_t o = 0; o < grid.size(); ++o) {
    Molecule pre = mol;
    for (auto& a : pre.atoms) a.position = grid.rotations[o] * a.position;
    const VoxelTensor single = voxelize(pre, identity_grid());
    const float* a = full.slab(o);
    const float* b = single.slab(0);
    for (std::size_t i = 0; i < full.slab_size(); ++i) REQUIRE(a[i] == b[i]);
  }
}

TEST_CASE("box/step must divide") {
  Molecule mol;
  mol.atoms = {{Element::C, {0, 0, 0}}};
  CHECK_THROWS_AS(voxelize(mol, identity_grid(), 18.0, 0.7), Error);
  const VoxelTensor fine = voxelize(mol, identity_grid(), 9.0, 0.5);
  CHECK(fine.side == 18);
}

TEST_CASE("raster dump round-trips") {
  Rng rng(41);
  const Molecule mol = testsup::random_molecule(rng, 8, 555);
  const auto grid = make_grid(2, 2, 0, 100);
  const VoxelTensor vox = voxelize(mol, grid);
  const std::string bytes = voxel_to_bytes(vox, mol.cid);
  std::uint32_t cid = 0;
  const VoxelTensor back = voxel_from_bytes(bytes, &cid);
  CHECK(cid == 555);
  CHECK(back.n_orient == vox.n_orient);
  CHECK(back.side == vox.side);
  REQUIRE(back.data.size() == vox.data.size());
  for (std::size_t i = 0; i < vox.data.size(); ++i) CHECK(back.data[i] == vox.data[i]);
  CHECK_THROWS_AS(voxel_from_bytes("DNVOX v2 1 1 18\n"), Error);
  CHECK_THROWS_AS(voxel_from_bytes(bytes.substr(0, bytes.size() - 7)), Error);
}

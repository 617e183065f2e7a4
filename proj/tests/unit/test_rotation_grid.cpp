#include <cmath>
#include <filesystem>

#include "deepnose/common.hpp"
#include "deepnose/rotation_grid.hpp"
#include "doctest.h"

using namespace deepnose;

// 90% of the best n=64 minimal separation over 20 seeded restarts (seeds
// 0..19, 2000 iterations each); regenerate with tools or the acceptance
// driver if the optimizer changes.
static constexpr double kMinAngle64 = 0.392;

TEST_CASE("two thomson points are antipodal") {
  const auto pts = thomson_points(2, 3, 500);
  REQUIRE(pts.points.size() == 2);
  CHECK(pts.energy == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(dot(pts.points[0], pts.points[1]) == doctest::Approx(-1).epsilon(1e-6));
}

TEST_CASE("four thomson points form a tetrahedron") {
  const auto pts = thomson_points(4, 0, 2000);
  REQUIRE(pts.points.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(norm(pts.points[i]) == doctest::Approx(1).epsilon(1e-9));
    for (std::size_t j = i + 1; j < 4; ++j) {
      const double angle = std::acos(std::clamp(dot(pts.points[i], pts.points[j]), -1.0, 1.0));
      CHECK(std::abs(angle - std::acos(-1.0 / 3.0)) < 1e-3);
    }
  }
}

TEST_CASE("thomson run is deterministic and 64 points stay separated") {
  const auto a = thomson_points(64, 0, 2000);
  const auto b = thomson_points(64, 0, 2000);
  REQUIRE(a.points.size() == 64);
  for (std::size_t i = 0; i < 64; ++i)
    for (int d = 0; d < 3; ++d) CHECK(a.points[i][d] == b.points[i][d]);
  CHECK(min_pairwise_angle(a) >= kMinAngle64);
}

TEST_CASE("rotation_to_direction conventions") {
  const Mat3 id = rotation_to_direction({0, 0, 1});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(id(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));

  const Mat3 rx = rotation_to_direction({1, 0, 0});
  // columns ((0,0,-1),(0,1,0),(1,0,0))
  CHECK(rx(2, 0) == doctest::Approx(-1).epsilon(1e-12));
  CHECK(rx(1, 1) == doctest::Approx(1).epsilon(1e-12));
  CHECK(rx(0, 2) == doctest::Approx(1).epsilon(1e-12));

  const Mat3 anti = rotation_to_direction({0, 0, -1});
  CHECK(anti(0, 0) == doctest::Approx(1).epsilon(1e-12));
  CHECK(anti(1, 1) == doctest::Approx(-1).epsilon(1e-12));
  CHECK(anti(2, 2) == doctest::Approx(-1).epsilon(1e-12));

  CHECK_THROWS_AS(rotation_to_direction({0, 0, 2}), Error);

  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    Vec3 p = normalized({rng.normal(), rng.normal(), rng.normal()});
    const Mat3 r = rotation_to_direction(p);
    Vec3 mapped = r * Vec3{0, 0, 1};
    for (int d = 0; d < 3; ++d) CHECK(std::abs(mapped[d] - p[d]) < 1e-9);
    CHECK(orthonormality_defect(r) < 1e-9);
    CHECK(std::abs(det(r) - 1) < 1e-9);
  }
}

TEST_CASE("axial_rotation conventions") {
  const Mat3 id = axial_rotation({0, 0, 1}, 0, 10);
  CHECK(orthonormality_defect(id) < 1e-12);
  CHECK(id(0, 0) == doctest::Approx(1).epsilon(1e-12));
  CHECK(id(0, 1) == doctest::Approx(0).epsilon(1e-12));

  const Mat3 half = axial_rotation({0, 0, 1}, 5, 10);
  CHECK(half(0, 0) == doctest::Approx(-1).epsilon(1e-12));
  CHECK(half(1, 1) == doctest::Approx(-1).epsilon(1e-12));
  CHECK(half(2, 2) == doctest::Approx(1).epsilon(1e-12));

  const Vec3 axis = normalized({1, 1, 2});
  const Mat3 a = axial_rotation(axis, 3, 10) * axial_rotation(axis, 9, 10);
  const Mat3 b = axial_rotation(axis, 2, 10);  // (3 + 9) mod 10
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(std::abs(a(i, j) - b(i, j)) < 1e-12);

  CHECK_THROWS_AS(axial_rotation({0, 0, 1}, 10, 10), Error);
  CHECK_THROWS_AS(axial_rotation({0, 0, 3}, 0, 10), Error);
}

TEST_CASE("grid layout, invariants and round trip") {
  const auto grid = make_grid(8, 5, 0, 400);
  REQUIRE(grid.size() == 40);
  CHECK(grid.n_dirs == 8);
  CHECK(grid.n_axial == 5);

  const auto pts = thomson_points(8, 0, 400);
  for (std::size_t j = 0; j < 8; ++j)
    for (std::size_t k = 0; k < 5; ++k) {
      const Mat3 expect = axial_rotation(pts.points[j], k, 5) * rotation_to_direction(pts.points[j]);
      const Mat3& got = grid.rotations[j * 5 + k];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(got(r, c) == expect(r, c));
      // every member of a direction block still maps z to the sphere point
      Vec3 mapped = got * Vec3{0, 0, 1};
      for (int d = 0; d < 3; ++d) CHECK(std::abs(mapped[d] - pts.points[j][d]) < 1e-9);
    }

  for (const Mat3& r : grid.rotations) {
    CHECK(orthonormality_defect(r) < 1e-9);
    CHECK(std::abs(det(r) - 1) < 1e-9);
  }

  const std::string text = grid_to_string(grid);
  const RotationGrid back = grid_from_string(text);
  CHECK(grid_to_string(back) == text);
  REQUIRE(back.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) CHECK(back.rotations[i](r, c) == grid.rotations[i](r, c));

  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "dn_grid_test.txt").string();
  save_grid(grid, path);
  const RotationGrid loaded = load_grid(path);
  CHECK(grid_to_string(loaded) == text);
  fs::remove(path);

  CHECK_THROWS_AS(grid_from_string("DNGRID v2 1 1 0\n"), Error);
  CHECK_THROWS_AS(grid_from_string("garbage"), Error);
}

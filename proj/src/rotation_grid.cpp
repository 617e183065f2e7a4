#include "deepnose/rotation_grid.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "deepnose/common.hpp"

namespace deepnose {

namespace {

double coulomb_energy(const std::vector<Vec3>& pts) {
  double e = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) e += 1.0 / norm(pts[i] - pts[j]);
  return e;
}

// dE/dp_i = -sum_{j != i} (p_i - p_j) / |p_i - p_j|^3, tangential part applied
// after the step via reprojection.
std::vector<Vec3> coulomb_gradient(const std::vector<Vec3>& pts) {
  std::vector<Vec3> grad(pts.size(), Vec3{0, 0, 0});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      Vec3 d = pts[i] - pts[j];
      double r = norm(d);
      double w = -1.0 / (r * r * r);
      grad[i] = grad[i] + w * d;
      grad[j] = grad[j] - w * d;
    }
  }
  return grad;
}

}  // namespace

SpherePointSet thomson_points(std::size_t n, std::uint64_t seed, std::size_t iters) {
  if (n < 2) raise(ErrorKind::InvalidConfig, "thomson_points needs n >= 2");
  Rng rng(seed);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) {
    do {
      p = {rng.normal(), rng.normal(), rng.normal()};
    } while (norm(p) < 1e-8);
    p = normalized(p);
  }

  double energy = coulomb_energy(pts);
  double step = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<Vec3> grad = coulomb_gradient(pts);
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      std::vector<Vec3> cand(n);
      for (std::size_t i = 0; i < n; ++i) cand[i] = normalized(pts[i] - step * grad[i]);
      double cand_energy = coulomb_energy(cand);
      if (cand_energy < energy) {
        pts = std::move(cand);
        energy = cand_energy;
        step *= 1.2;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent direction at float precision; done
  }

  SpherePointSet out;
  out.points = std::move(pts);
  out.energy = energy;
  out.seed = seed;
  out.iters = iters;
  return out;
}

double min_pairwise_angle(const SpherePointSet& pts) {
  double best = 3.14159265358979323846;
  for (std::size_t i = 0; i < pts.points.size(); ++i)
    for (std::size_t j = i + 1; j < pts.points.size(); ++j) {
      double c = dot(pts.points[i], pts.points[j]);
      c = std::min(1.0, std::max(-1.0, c));
      best = std::min(best, std::acos(c));
    }
  return best;
}

Mat3 rotation_to_direction(const Vec3& p) {
  double n = norm(p);
  if (std::abs(n - 1.0) > 1e-6) raise(ErrorKind::NotUnit, "direction has norm " + format_double(n));
  const Vec3 z{0, 0, 1};
  Vec3 axis = cross(z, p);
  double s = norm(axis);
  double c = dot(z, p);
  if (s < 1e-12) {
    if (c > 0.0) return Mat3::identity();
    // antipodal: half-turn about x
    return axis_angle(Vec3{1, 0, 0}, 3.14159265358979323846);
  }
  return axis_angle({axis[0] / s, axis[1] / s, axis[2] / s}, std::atan2(s, c));
}

Mat3 axial_rotation(const Vec3& p, std::size_t k, std::size_t n_axial) {
  double n = norm(p);
  if (std::abs(n - 1.0) > 1e-6) raise(ErrorKind::NotUnit, "axis has norm " + format_double(n));
  if (k >= n_axial) raise(ErrorKind::IndexOutOfRange, "axial index " + std::to_string(k) + " of " + std::to_string(n_axial));
  double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(k) / static_cast<double>(n_axial);
  return axis_angle({p[0] / n, p[1] / n, p[2] / n}, angle);
}

RotationGrid build_grid(const SpherePointSet& points, std::size_t n_axial) {
  if (n_axial < 1) raise(ErrorKind::InvalidConfig, "n_axial must be >= 1");
  RotationGrid grid;
  grid.n_dirs = points.points.size();
  grid.n_axial = n_axial;
  grid.seed = points.seed;
  grid.rotations.reserve(grid.n_dirs * n_axial);
  for (const Vec3& p : points.points) {
    Mat3 base = rotation_to_direction(p);
    for (std::size_t k = 0; k < n_axial; ++k) grid.rotations.push_back(axial_rotation(p, k, n_axial) * base);
  }
  return grid;
}

RotationGrid make_grid(std::size_t n_dirs, std::size_t n_axial, std::uint64_t seed, std::size_t iters) {
  if (n_dirs == 1) {
    SpherePointSet single;
    single.points = {Vec3{0, 0, 1}};
    single.seed = seed;
    return build_grid(single, n_axial);
  }
  return build_grid(thomson_points(n_dirs, seed, iters), n_axial);
}

std::string grid_to_string(const RotationGrid& grid) {
  std::ostringstream out;
  out << "DNGRID v1 " << grid.n_dirs << ' ' << grid.n_axial << ' ' << grid.seed << '\n';
  for (const Mat3& r : grid.rotations) {
    for (int i = 0; i < 9; ++i) {
      if (i) out << ' ';
      out << format_double(r.m[static_cast<std::size_t>(i)]);
    }
    out << '\n';
  }
  return out.str();
}

RotationGrid grid_from_string(const std::string& text) {
  std::istringstream in(strip_leading_comments(text));
  std::string magic, version;
  RotationGrid grid;
  if (!(in >> magic >> version) || magic != "DNGRID") raise(ErrorKind::BadMagic, "not a DNGRID file");
  if (version != "v1") raise(ErrorKind::VersionMismatch, "unsupported DNGRID version " + version);
  if (!(in >> grid.n_dirs >> grid.n_axial >> grid.seed))
    raise(ErrorKind::MalformedRecord, "bad DNGRID header");
  std::size_t count = grid.n_dirs * grid.n_axial;
  grid.rotations.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (int j = 0; j < 9; ++j) {
      if (!(in >> grid.rotations[i].m[static_cast<std::size_t>(j)]))
        raise(ErrorKind::MalformedRecord, "truncated DNGRID at rotation " + std::to_string(i));
    }
  }
  return grid;
}

void save_grid(const RotationGrid& grid, const std::string& path) {
  write_text_file(path, grid_to_string(grid));
}

RotationGrid load_grid(const std::string& path) { return grid_from_string(read_text_file(path)); }

}  // namespace deepnose

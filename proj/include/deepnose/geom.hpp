#pragma once

#include <array>
#include <cmath>

namespace deepnose {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() { return Mat3{{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }

  double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }
  double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }
};

inline Vec3 operator*(const Mat3& a, const Vec3& v) {
  return {a.m[0] * v[0] + a.m[1] * v[1] + a.m[2] * v[2],
          a.m[3] * v[0] + a.m[4] * v[1] + a.m[5] * v[2],
          a.m[6] * v[0] + a.m[7] * v[1] + a.m[8] * v[2]};
}

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
  return out;
}

inline Mat3 transpose(const Mat3& a) {
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = a(c, r);
  return out;
}

inline double det(const Mat3& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

// max |(R^T R - I)_ij|
inline double orthonormality_defect(const Mat3& r) {
  Mat3 g = transpose(r) * r;
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double target = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(g(i, j) - target));
    }
  return worst;
}

// Rodrigues rotation by `angle` about unit axis.
inline Mat3 axis_angle(const Vec3& axis, double angle) {
  double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  double x = axis[0], y = axis[1], z = axis[2];
  Mat3 r;
  r.m = {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,
         t * x * y + s * z, t * y * y + c,     t * y * z - s * x,
         t * x * z - s * y, t * y * z + s * x, t * z * z + c};
  return r;
}

}  // namespace deepnose

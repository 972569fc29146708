#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace mmks {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec3& operator+=(Vec3& a, const Vec3& b) {
  a[0] += b[0];
  a[1] += b[1];
  a[2] += b[2];
  return a;
}

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }
inline Vec3 midpoint(const Vec3& a, const Vec3& b) { return 0.5 * (a + b); }

/// Signed volume of the tetrahedron (a, b, c, d).
inline double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return dot(b - a, cross(c - a, d - a)) / 6.0;
}

inline double volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return std::abs(signed_volume(a, b, c, d));
}

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

/// Barycentric coordinates of p with respect to the tetrahedron v.
inline std::array<double, 4> barycentric(const std::array<Vec3, 4>& v, const Vec3& p) {
  const double vol = signed_volume(v[0], v[1], v[2], v[3]);
  std::array<double, 4> lam{};
  lam[0] = signed_volume(p, v[1], v[2], v[3]) / vol;
  lam[1] = signed_volume(v[0], p, v[2], v[3]) / vol;
  lam[2] = signed_volume(v[0], v[1], p, v[3]) / vol;
  lam[3] = 1.0 - lam[0] - lam[1] - lam[2];
  return lam;
}

inline double min_coordinate(const std::array<double, 4>& lam) {
  double m = lam[0];
  for (int i = 1; i < 4; ++i) m = std::min(m, lam[i]);
  return m;
}

inline Vec3 from_barycentric(const std::array<Vec3, 4>& v, const std::array<double, 4>& lam) {
  Vec3 p{0.0, 0.0, 0.0};
  for (int i = 0; i < 4; ++i) p += lam[i] * v[i];
  return p;
}

/// Gradients of the four barycentric functions of a (non-degenerate) tetrahedron.
inline std::array<Vec3, 4> barycentric_gradients(const std::array<Vec3, 4>& v) {
  const Vec3 e1 = v[1] - v[0];
  const Vec3 e2 = v[2] - v[0];
  const Vec3 e3 = v[3] - v[0];
  const double det = dot(e1, cross(e2, e3));
  std::array<Vec3, 4> g{};
  g[1] = (1.0 / det) * cross(e2, e3);
  g[2] = (1.0 / det) * cross(e3, e1);
  g[3] = (1.0 / det) * cross(e1, e2);
  g[0] = {-(g[1][0] + g[2][0] + g[3][0]), -(g[1][1] + g[2][1] + g[3][1]),
          -(g[1][2] + g[2][2] + g[3][2])};
  return g;
}

inline double longest_edge(const std::array<Vec3, 4>& v) {
  double h = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) h = std::max(h, distance(v[i], v[j]));
  return h;
}

}  // namespace mmks

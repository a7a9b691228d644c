#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>

// Scalar SU(2) kernel used by the simulation hot loops. The declared su(2)
// basis X1, X2, X3 multiplies exactly like the quaternion units i, j, k, so
// group elements are unit quaternions g = w + x X1 + y X2 + z X3 and all
// arithmetic stays allocation-free.

namespace fastslow::detail {

struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline Quat qmul(const Quat& a, const Quat& b) {
  return Quat{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
              a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
              a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
              a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quat qconj(const Quat& a) { return Quat{a.w, -a.x, -a.y, -a.z}; }

// exp(x X1 + y X2 + z X3); theta = |(x,y,z)| is the metric norm.
inline Quat qexp(const Vec3& v) {
  const double t2 = v.x * v.x + v.y * v.y + v.z * v.z;
  const double t = std::sqrt(t2);
  double s;
  if (t < 1e-8) {
    s = 1.0 - t2 / 6.0;  // sinc series
  } else {
    s = std::sin(t) / t;
  }
  return Quat{std::cos(t), s * v.x, s * v.y, s * v.z};
}

// Ad(g) v = g v g^{-1} on algebra coordinates.
inline Vec3 qrotate(const Quat& q, const Vec3& v) {
  const double tx = 2.0 * (q.y * v.z - q.z * v.y);
  const double ty = 2.0 * (q.z * v.x - q.x * v.z);
  const double tz = 2.0 * (q.x * v.y - q.y * v.x);
  return Vec3{v.x + q.w * tx + (q.y * tz - q.z * ty),
              v.y + q.w * ty + (q.z * tx - q.x * tz),
              v.z + q.w * tz + (q.x * ty - q.y * tx)};
}

inline double qdist_to_identity(const Quat& g) {
  // distance(I, g) = acos(Re trace / 2) in the su(2) metric
  double w = g.w;
  if (w > 1.0) w = 1.0;
  if (w < -1.0) w = -1.0;
  return std::acos(w);
}

inline Quat quat_from_matrix(const Eigen::MatrixXcd& m) {
  return Quat{0.5 * (m(0, 0).real() + m(1, 1).real()),
              0.5 * (m(0, 0).imag() - m(1, 1).imag()),
              0.5 * (m(0, 1).real() - m(1, 0).real()),
              0.5 * (m(0, 1).imag() + m(1, 0).imag())};
}

inline Eigen::MatrixXcd quat_to_matrix(const Quat& q) {
  Eigen::MatrixXcd m(2, 2);
  m(0, 0) = std::complex<double>(q.w, q.x);
  m(0, 1) = std::complex<double>(q.y, q.z);
  m(1, 0) = std::complex<double>(-q.y, q.z);
  m(1, 1) = std::complex<double>(q.w, -q.x);
  return m;
}

inline Vec3 vec_from_algebra(const Eigen::MatrixXcd& a) {
  return Vec3{a(0, 0).imag(), a(0, 1).real(), a(0, 1).imag()};
}

}  // namespace fastslow::detail

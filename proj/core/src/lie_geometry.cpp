#include "fastslow/lie_geometry.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>

#include "fastslow/detail/su2_kernel.hpp"
#include "fastslow/errors.hpp"

namespace fastslow {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

Matrix skew_project(const GroupSpec& spec, Matrix a) {
  if (spec.real_family()) a = a.real().cast<Complex>().eval();
  return 0.5 * (a - a.adjoint()).eval();
}

}  // namespace

GroupSpec GroupSpec::special_orthogonal(int n) {
  if (n < 2) throw std::invalid_argument("SO(n) requires n >= 2");
  return GroupSpec{GroupFamily::SpecialOrthogonal, n, 1.0};
}

GroupSpec GroupSpec::special_unitary(int n) {
  if (n != 2) throw std::invalid_argument("SU(n) is supported for n = 2 only");
  return GroupSpec{GroupFamily::SpecialUnitary, n, 0.5};
}

int GroupSpec::algebra_dim() const {
  return real_family() ? n * (n - 1) / 2 : n * n - 1;
}

GroupElement identity(const GroupSpec& spec) {
  return GroupElement{spec, Matrix::Identity(spec.n, spec.n)};
}

AlgebraVector zero_algebra(const GroupSpec& spec) {
  return AlgebraVector{spec, Matrix::Zero(spec.n, spec.n), std::nullopt};
}

int so_basis_index(int n, int i, int j) {
  if (i < 1 || j <= i || j > n) throw std::invalid_argument("so_basis_index: need 1 <= i < j <= n");
  // basis ordered (1,2), (1,3), ..., (1,n), (2,3), ...
  int idx = 0;
  for (int r = 1; r < i; ++r) idx += n - r;
  return idx + (j - i - 1);
}

std::vector<AlgebraVector> algebra_basis(const GroupSpec& spec) {
  std::vector<AlgebraVector> basis;
  if (spec.real_family()) {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < spec.n; ++i) {
      for (int j = i + 1; j < spec.n; ++j) {
        Matrix m = Matrix::Zero(spec.n, spec.n);
        m(i, j) = inv_sqrt2;
        m(j, i) = -inv_sqrt2;
        basis.push_back(AlgebraVector{spec, std::move(m), std::nullopt});
      }
    }
  } else {
    const Complex I(0.0, 1.0);
    Matrix x1(2, 2), x2(2, 2), x3(2, 2);
    x1 << I, 0.0, 0.0, -I;
    x2 << 0.0, 1.0, -1.0, 0.0;
    x3 << 0.0, I, I, 0.0;
    basis.push_back(AlgebraVector{spec, x1, std::nullopt});
    basis.push_back(AlgebraVector{spec, x2, std::nullopt});
    basis.push_back(AlgebraVector{spec, x3, std::nullopt});
  }
  for (std::size_t k = 0; k < basis.size(); ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<int>(basis.size()));
    e(static_cast<int>(k)) = 1.0;
    basis[k].coords = e;
  }
  return basis;
}

AlgebraVector algebra_from_coords(const GroupSpec& spec, const Eigen::VectorXd& coords) {
  const auto basis = algebra_basis(spec);
  if (coords.size() != static_cast<int>(basis.size()))
    throw std::invalid_argument("algebra_from_coords: coordinate size mismatch");
  Matrix m = Matrix::Zero(spec.n, spec.n);
  for (int k = 0; k < coords.size(); ++k) m += coords(k) * basis[k].matrix;
  return AlgebraVector{spec, std::move(m), coords};
}

double inner(const AlgebraVector& a, const AlgebraVector& b) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("inner: spec mismatch");
  return a.spec.metric_scale * (a.matrix.adjoint() * b.matrix).trace().real();
}

double algebra_norm(const AlgebraVector& a) { return std::sqrt(std::max(0.0, inner(a, a))); }

Eigen::VectorXd coords_of(const AlgebraVector& a) {
  if (a.coords) return *a.coords;
  const auto basis = algebra_basis(a.spec);
  Eigen::VectorXd c(static_cast<int>(basis.size()));
  for (std::size_t k = 0; k < basis.size(); ++k) c(static_cast<int>(k)) = inner(basis[k], a);
  return c;
}

AlgebraVector operator+(const AlgebraVector& a, const AlgebraVector& b) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("algebra +: spec mismatch");
  std::optional<Eigen::VectorXd> coords;
  if (a.coords && b.coords) coords = (*a.coords + *b.coords).eval();
  return AlgebraVector{a.spec, a.matrix + b.matrix, coords};
}

AlgebraVector operator-(const AlgebraVector& a, const AlgebraVector& b) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("algebra -: spec mismatch");
  std::optional<Eigen::VectorXd> coords;
  if (a.coords && b.coords) coords = (*a.coords - *b.coords).eval();
  return AlgebraVector{a.spec, a.matrix - b.matrix, coords};
}

AlgebraVector operator*(double s, const AlgebraVector& a) {
  std::optional<Eigen::VectorXd> coords;
  if (a.coords) coords = (s * *a.coords).eval();
  return AlgebraVector{a.spec, s * a.matrix, coords};
}

GroupElement multiply(const GroupElement& a, const GroupElement& b) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("multiply: spec mismatch");
  return GroupElement{a.spec, a.matrix * b.matrix};
}

GroupElement inverse(const GroupElement& g) { return GroupElement{g.spec, g.matrix.adjoint()}; }

double unitarity_defect(const GroupElement& g) {
  return (g.matrix.adjoint() * g.matrix - Matrix::Identity(g.spec.n, g.spec.n))
      .cwiseAbs()
      .maxCoeff();
}

double determinant_defect(const GroupElement& g) { return std::abs(g.matrix.determinant() - Complex(1.0, 0.0)); }

double skewness_defect(const AlgebraVector& a) {
  return (a.matrix + a.matrix.adjoint()).cwiseAbs().maxCoeff();
}

double injectivity_threshold(const GroupSpec& spec) {
  // Metric norm below which every principal angle is < pi:
  // so(n): |A|^2 = sum over eigen-angles (each plane counted twice), so
  // |A| < sqrt(2) pi forces each plane angle below pi.
  // su(2): |A| equals the rotation half-angle directly.
  return spec.real_family() ? std::sqrt(2.0) * kPi : kPi;
}

GroupElement exp_map(const AlgebraVector& a) {
  const GroupSpec& spec = a.spec;
  if (!spec.real_family() && spec.n == 2) {
    return GroupElement{spec, detail::quat_to_matrix(detail::qexp(detail::vec_from_algebra(a.matrix)))};
  }
  if (spec.real_family() && spec.n == 3) {
    // Rodrigues; rotation angle phi relates to the metric norm by |A| = sqrt2 phi.
    Eigen::Matrix3d m = a.matrix.real();
    const double phi = std::sqrt(0.5 * (m.transpose() * m).trace());
    Eigen::Matrix3d r;
    if (phi < 1e-8) {
      r = Eigen::Matrix3d::Identity() + m + 0.5 * (m * m);
    } else {
      const double s = std::sin(phi) / phi;
      const double c = (1.0 - std::cos(phi)) / (phi * phi);
      r = Eigen::Matrix3d::Identity() + s * m + c * (m * m);
    }
    return GroupElement{spec, r.cast<Complex>()};
  }
  if (spec.real_family()) {
    Eigen::MatrixXd m = a.matrix.real();
    Eigen::MatrixXd e = m.exp();  // Pade scaling-and-squaring
    return GroupElement{spec, e.cast<Complex>()};
  }
  Matrix e = a.matrix.exp();
  return GroupElement{spec, std::move(e)};
}

AlgebraVector log_map(const GroupElement& g) {
  const GroupSpec& spec = g.spec;
  if (!spec.real_family() && spec.n == 2) {
    const detail::Quat q = detail::quat_from_matrix(g.matrix);
    const double w = std::min(1.0, std::max(-1.0, q.w));
    const double theta = std::acos(w);
    if (theta > kPi - kCutLocusAngleTol)
      throw CutLocusError("log_map: SU(2) element within tolerance of the cut locus");
    double scale;
    if (theta < 1e-8) {
      scale = 1.0 + theta * theta / 6.0;  // theta/sin(theta)
    } else {
      scale = theta / std::sin(theta);
    }
    Eigen::Vector3d coords(scale * q.x, scale * q.y, scale * q.z);
    Matrix m(2, 2);
    m(0, 0) = Complex(0.0, coords(0));
    m(0, 1) = Complex(coords(1), coords(2));
    m(1, 0) = Complex(-coords(1), coords(2));
    m(1, 1) = Complex(0.0, -coords(0));
    return AlgebraVector{spec, std::move(m), coords};
  }
  if (spec.real_family() && spec.n == 3) {
    Eigen::Matrix3d r = g.matrix.real();
    const double cphi = std::min(1.0, std::max(-1.0, 0.5 * (r.trace() - 1.0)));
    const double phi = std::acos(cphi);
    if (phi > kPi - kCutLocusAngleTol)
      throw CutLocusError("log_map: SO(3) rotation within tolerance of angle pi");
    Eigen::Matrix3d s = 0.5 * (r - r.transpose());
    double scale;
    if (phi < 1e-8) {
      scale = 1.0 + phi * phi / 6.0;
    } else {
      scale = phi / std::sin(phi);
    }
    Eigen::Matrix3d m = scale * s;
    return AlgebraVector{spec, m.cast<Complex>(), std::nullopt};
  }
  // General case: Schur form of a normal matrix is diagonal, giving the
  // eigen-angles directly with an exactly unitary similarity.
  Eigen::ComplexSchur<Matrix> schur(g.matrix, true);
  const Matrix& t = schur.matrixT();
  const Matrix& u = schur.matrixU();
  Eigen::VectorXcd logdiag(spec.n);
  for (int k = 0; k < spec.n; ++k) {
    const double angle = std::arg(t(k, k));
    if (std::abs(angle) > kPi - kCutLocusAngleTol)
      throw CutLocusError("log_map: eigenvalue within tolerance of -1");
    logdiag(k) = Complex(0.0, angle);
  }
  Matrix a = u * logdiag.asDiagonal() * u.adjoint();
  return AlgebraVector{spec, skew_project(spec, a), std::nullopt};
}

double distance_to_identity(const GroupElement& g) {
  const GroupSpec& spec = g.spec;
  if (!spec.real_family() && spec.n == 2) {
    return detail::qdist_to_identity(detail::quat_from_matrix(g.matrix));
  }
  if (spec.real_family() && spec.n == 3) {
    const double cphi =
        std::min(1.0, std::max(-1.0, 0.5 * (g.matrix.real().trace() - 1.0)));
    const double phi = std::acos(cphi);
    if (phi > kPi - kCutLocusAngleTol)
      throw CutLocusError("distance: SO(3) rotation within tolerance of angle pi");
    return std::sqrt(2.0) * phi;
  }
  Eigen::ComplexSchur<Matrix> schur(g.matrix, false);
  double sum = 0.0;
  for (int k = 0; k < spec.n; ++k) {
    const double angle = std::arg(schur.matrixT()(k, k));
    if (std::abs(angle) > kPi - kCutLocusAngleTol)
      throw CutLocusError("distance: eigenvalue within tolerance of -1");
    sum += angle * angle;
  }
  return std::sqrt(spec.metric_scale * sum);
}

double distance(const GroupElement& g, const GroupElement& h) {
  if (!(g.spec == h.spec)) throw std::invalid_argument("distance: spec mismatch");
  return distance_to_identity(GroupElement{g.spec, g.matrix.adjoint() * h.matrix});
}

double chordal_distance(const GroupElement& g, const GroupElement& h) {
  return (g.matrix - h.matrix).norm();
}

AlgebraVector bracket(const AlgebraVector& a, const AlgebraVector& b) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("bracket: spec mismatch");
  return AlgebraVector{a.spec, a.matrix * b.matrix - b.matrix * a.matrix, std::nullopt};
}

AlgebraVector adjoint(const GroupElement& g, const AlgebraVector& a) {
  if (!(g.spec == a.spec)) throw std::invalid_argument("adjoint: spec mismatch");
  return AlgebraVector{a.spec, g.matrix * a.matrix * g.matrix.adjoint(), std::nullopt};
}

GroupElement haar_sample(const GroupSpec& spec, RngStream& rng) {
  if (!spec.real_family()) {
    // Uniform unit quaternion.
    double q[4];
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (double& v : q) {
        v = rng.normal();
        n2 += v * v;
      }
    } while (n2 < 1e-24);
    const double inv = 1.0 / std::sqrt(n2);
    return GroupElement{
        spec, detail::quat_to_matrix(detail::Quat{q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv})};
  }
  Eigen::MatrixXd gauss(spec.n, spec.n);
  for (int i = 0; i < spec.n; ++i)
    for (int j = 0; j < spec.n; ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < spec.n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  // Push O(n)^- Haar to SO(n) by a fixed right translation.
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  return GroupElement{spec, q.cast<Complex>()};
}

}  // namespace fastslow

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <vector>

#include "fastslow/rng.hpp"

namespace fastslow {

using Matrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;

// Tolerances carried by the data-type contracts.
inline constexpr double kUnitarityTol = 1e-10;
inline constexpr double kDeterminantTol = 1e-8;
inline constexpr double kSkewnessTol = 1e-12;
inline constexpr double kCoordsTol = 1e-10;
// Angle margin around pi at which the principal log is declared
// ill-conditioned (an eigenvalue within ~1e-6 of -1).
inline constexpr double kCutLocusAngleTol = 1e-6;

enum class GroupFamily { SpecialOrthogonal, SpecialUnitary };

/// A compact matrix group together with the inner-product normalization on
/// its Lie algebra. metric_scale is chosen so the declared basis is
/// orthonormal: <A,B> = metric_scale * Re trace(A^dagger B), which gives 1
/// for so(n) with the (E_ij - E_ji)/sqrt2 basis and 1/2 for su(2) with the
/// X1, X2, X3 basis.
struct GroupSpec {
  GroupFamily family = GroupFamily::SpecialOrthogonal;
  int n = 2;
  double metric_scale = 1.0;

  static GroupSpec special_orthogonal(int n);
  static GroupSpec special_unitary(int n);  // declared bases exist for n == 2 only

  int algebra_dim() const;
  bool real_family() const { return family == GroupFamily::SpecialOrthogonal; }
  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

/// State of either the fast or the slow process: a unitary (orthogonal)
/// matrix with determinant one, up to the declared tolerances.
struct GroupElement {
  GroupSpec spec;
  Matrix matrix;
};

/// A Lie algebra element, stored as a skew matrix and optionally as
/// coordinates in the declared orthonormal basis.
struct AlgebraVector {
  GroupSpec spec;
  Matrix matrix;
  std::optional<Eigen::VectorXd> coords;
};

GroupElement identity(const GroupSpec& spec);
AlgebraVector zero_algebra(const GroupSpec& spec);

/// Declared orthonormal basis: so(n) uses A_ij = (E_ij - E_ji)/sqrt2 ordered
/// lexicographically by (i, j), i < j; su(2) uses X1, X2, X3.
std::vector<AlgebraVector> algebra_basis(const GroupSpec& spec);
AlgebraVector algebra_from_coords(const GroupSpec& spec, const Eigen::VectorXd& coords);
Eigen::VectorXd coords_of(const AlgebraVector& a);

double inner(const AlgebraVector& a, const AlgebraVector& b);
double algebra_norm(const AlgebraVector& a);

AlgebraVector operator+(const AlgebraVector& a, const AlgebraVector& b);
AlgebraVector operator-(const AlgebraVector& a, const AlgebraVector& b);
AlgebraVector operator*(double s, const AlgebraVector& a);

GroupElement multiply(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& g);

double unitarity_defect(const GroupElement& g);    // max |g^dagger g - I|
double determinant_defect(const GroupElement& g);  // |det g - 1|
double skewness_defect(const AlgebraVector& a);    // max |A + A^dagger|

GroupElement exp_map(const AlgebraVector& a);
AlgebraVector log_map(const GroupElement& g);  // throws CutLocusError

/// Bi-invariant Riemannian distance, ||log(g^-1 h)|| in the declared metric.
double distance(const GroupElement& g, const GroupElement& h);
double distance_to_identity(const GroupElement& g);
/// Frobenius fallback used only where a caller explicitly accepts an
/// approximate value for cut-locus pairs.
double chordal_distance(const GroupElement& g, const GroupElement& h);

AlgebraVector bracket(const AlgebraVector& a, const AlgebraVector& b);
AlgebraVector adjoint(const GroupElement& g, const AlgebraVector& a);

/// Haar-uniform sample: QR orthonormalization of a Gaussian matrix with
/// sign-corrected diagonal; SU(2) draws a uniform unit quaternion.
GroupElement haar_sample(const GroupSpec& spec, RngStream& rng);

/// Largest metric norm below which log_map(exp_map(A)) = A is guaranteed
/// (every principal rotation angle stays below pi).
double injectivity_threshold(const GroupSpec& spec);

/// Index of the so(n) basis element A_ij within algebra_basis, i < j, 1-based
/// matrix indices.
int so_basis_index(int n, int i, int j);

}  // namespace fastslow

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "fastslow/fast_diffusion.hpp"
#include "fastslow/lie_geometry.hpp"

namespace fastslow {

inline constexpr int kTorusNodes = 512;
inline constexpr double kCenteringTolQuadrature = 1e-6;
inline constexpr double kFdStep = 1e-4;
inline constexpr double kPsdClampTol = 1e-8;
inline constexpr double kSpectralLeakTol = 1e-10;

enum class Smoothness { TrigPolynomial, Generic };

/// Finite trig series in a circle chart:
/// f(theta) = c0 + sum_{k=1..K} 2 Re(coef_k e^{+i k omega theta}).
struct TrigSeriesData {
  double omega = 1.0;
  double c0 = 0.0;
  std::vector<Complex> coef;

  double eval(double theta) const {
    double s = c0;
    for (std::size_t k = 0; k < coef.size(); ++k) {
      const double a = omega * static_cast<double>(k + 1) * theta;
      s += 2.0 * (coef[k] * Complex(std::cos(a), std::sin(a))).real();
    }
    return s;
  }
};

/// A bounded scalar function on the fast manifold. TrigPolynomial marks
/// functions that restrict to a finite trig series in the circle chart; for
/// those, `series` carries the coefficients so hot loops can evaluate in the
/// chart without matrix work.
struct Observable {
  std::function<double(const GroupElement&)> eval;
  Smoothness tag = Smoothness::Generic;
  int max_frequency = 0;
  double bound = std::numeric_limits<double>::infinity();
  std::optional<TrigSeriesData> series;

  double operator()(const GroupElement& g) const { return eval(g); }
};

enum class PoissonMethod { Spectral, MonteCarloResolvent };

/// A solution pair of L0 beta = alpha with a finite-difference residual
/// diagnostic (sup over a validation grid, 5-point centered stencils with
/// step kFdStep along the diffusion fields).
struct PoissonSolution {
  Observable alpha;
  Observable beta;
  PoissonMethod method = PoissonMethod::Spectral;
  double residual_sup = 0.0;
};

struct CenteringReport {
  double mean = 0.0;
  double std_error = 0.0;  // 0 for quadrature
  bool centered = false;
};

/// Coefficient functions of the homogeneous-space examples:
/// alpha_k(z) = <Ad(z) Y0, m_k>. Tagged TrigPolynomial on circle manifolds
/// with the maximal frequency detected from a 512-node transform.
std::vector<Observable> adjoint_alpha(const AlgebraVector& y0,
                                      const std::vector<AlgebraVector>& m_basis,
                                      const FastSpec& fast);

/// Invariant mean of alpha: 512-node quadrature on circles (centered iff
/// |mean| <= 1e-6), Haar Monte Carlo otherwise (centered iff |mean| <= 3 SE).
CenteringReport centering_check(const Observable& alpha, const FastSpec& fast,
                                std::size_t mc_samples = 1'000'000,
                                std::uint64_t seed = 0x5eed);

/// Fourier solution on a 1-torus fast manifold with L0 = (c/2) d^2/dtheta^2
/// (+ b d/dtheta for a drift along the circle): beta_hat_k = alpha_hat_k /
/// symbol(k), beta_hat_0 = 0 (the mean-zero branch). Throws NotCenteredError
/// and NotTorusError.
PoissonSolution solve_poisson_spectral(const Observable& alpha, const FastSpec& fast);

struct McResolventOptions {
  double h = 0.05;
  std::uint64_t master_seed = 0x7a11;
  unsigned workers = 0;
  int residual_grid = 16;
};

/// Truncated-resolvent Monte Carlo solution
/// beta(x) = -(1/N) sum_paths int_0^tail alpha(z_t^(x)) dt at eps = 1.
/// Every evaluation reuses the same driving streams (common random numbers),
/// so x -> beta(x) is a deterministic smooth function; circle manifolds with
/// trig-tagged alpha reduce to one shared ensemble of Fourier averages and
/// other manifolds memoize per query point.
PoissonSolution solve_poisson_mc(const Observable& alpha, const FastSpec& fast, double tail_T,
                                 std::size_t paths, const McResolventOptions& opts = {});

/// Single-pass batch of the same estimator for many query points (the paths
/// are shared across points by left invariance of the fast equation).
std::vector<double> resolvent_mc_batch(const Observable& alpha, const FastSpec& fast,
                                       double tail_T, std::size_t paths,
                                       const std::vector<GroupElement>& points,
                                       const McResolventOptions& opts = {});

/// sup over grid of |L0 beta - alpha| by 5-point centered differences.
double poisson_residual_sup(const std::function<double(const GroupElement&)>& alpha,
                            const std::function<double(const GroupElement&)>& beta,
                            const FastSpec& fast, const std::vector<GroupElement>& grid);

/// The averaged data of the effective limit: a_bar_ij = mean_pi(alpha_i beta_j),
/// its symmetric/antisymmetric split, and sigma with sigma sigma^T = -a_sym
/// (eigenvalue square root; eigenvalues in [-kPsdClampTol, 0] clamp to zero,
/// anything lower throws NotPSDError).
struct AveragedModel {
  Eigen::MatrixXd a_bar;
  Eigen::MatrixXd a_sym;
  Eigen::MatrixXd a_anti;
  Eigen::MatrixXd sigma;
  double quadrature_error = 0.0;  // statistical error estimate; ~0 for quadrature
};

struct AveragedMatrixOptions {
  std::size_t mc_samples = 4096;  // Haar samples for the non-torus route
  std::uint64_t master_seed = 0xa3a;
  unsigned workers = 0;
};

/// mean_pi(alpha_i beta_j) by 512-node torus quadrature on circle manifolds,
/// Haar Monte Carlo of the products otherwise.
AveragedModel averaged_matrix(const std::vector<Observable>& alphas,
                              const std::vector<Observable>& betas, const FastSpec& fast,
                              const AveragedMatrixOptions& opts = {});

struct ResolventAverageOptions {
  double tail_T = 20.0;
  double h = 0.05;
  std::size_t paths = 100'000;
  std::uint64_t master_seed = 0xa3b;
  unsigned workers = 0;
};

/// Same averaged matrix for beta_j = L0^{-1} alpha_j without materializing the
/// betas: a_bar_ij = -E_pi[ alpha_i(z_0) int_0^tail alpha_j(z_t) dt ], one
/// stationary path per sample. Identical in expectation to averaged_matrix
/// composed with solve_poisson_mc, at a fraction of the cost.
AveragedModel averaged_matrix_resolvent(const std::vector<Observable>& alphas,
                                        const FastSpec& fast,
                                        const ResolventAverageOptions& opts = {});

/// Builds the sigma / split fields of an AveragedModel from a raw a_bar.
AveragedModel finalize_averaged(Eigen::MatrixXd a_bar, double stat_error);

std::vector<GroupElement> torus_nodes(const CircleChart& chart, int nodes = kTorusNodes);
double torus_mean(const std::function<double(const GroupElement&)>& f, const CircleChart& chart,
                  int nodes = kTorusNodes);

}  // namespace fastslow

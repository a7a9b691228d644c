#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fastslow/errors.hpp"
#include "fastslow/lie_geometry.hpp"
#include "fastslow/rng.hpp"

namespace fastslow {

// Rank tolerance for the bracket-closure Gram test.
inline constexpr double kRankTol = 1e-8;
// Bracket levels explored before giving up; the examples close in <= 2.
inline constexpr int kBracketDepthCap = 8;

/// Shape of the fast manifold inside the ambient matrix group. States are
/// always stored as ambient matrices; Circle and Block carry the extra
/// structure needed for quadrature and invariant sampling.
enum class FastManifold { FullGroup, Circle, Block };

/// The fast diffusion datum: generator (1/eps) L0 with
/// L0 = 1/2 sum L_{X_i}^2 + L_{X_0} on the fast manifold.
struct FastSpec {
  GroupSpec group;  // ambient group the states live in
  std::vector<AlgebraVector> diffusion_fields;
  AlgebraVector drift_field;
  double epsilon = 1.0;
  FastManifold manifold = FastManifold::FullGroup;
  int block_dim = 0;  // Block only: fast subgroup is SO(block_dim), top-left

  /// Declared dimension of the fast subalgebra (what the Hoermander closure
  /// must reach).
  int algebra_dim() const;
  bool has_drift() const;
  void validate() const;  // field skewness, shared spec, epsilon in (0, 1]
};

/// Chart of a one-dimensional torus fast manifold: z(theta) = exp(theta Xhat)
/// with Xhat the unit generator. theta is arc length in the declared metric,
/// the period is 2 pi over the smallest eigen-frequency of Xhat, and at
/// eps = 1 the generator reads (c/2) d^2/dtheta^2 with c = |X|^2.
struct CircleChart {
  GroupSpec spec;
  AlgebraVector unit_generator;
  double fundamental_freq = 1.0;
  double period = 0.0;
  double speed_sq = 1.0;
  Eigen::VectorXcd probe;  // eigenvector of Xhat for +i * fundamental_freq

  double theta(const GroupElement& z) const;
  GroupElement point(double theta) const;
};

/// Builds the chart; throws NotTorusError when the single-field abelian
/// structure is missing or the orbit does not close.
CircleChart circle_chart(const FastSpec& fast);

/// One exponential-Euler (McKean-Gangolli) step:
/// z <- z * exp(sqrt(h/eps) sum xi_k X_k + (h/eps) X_0). Exactly group-valued.
/// Throws StepTooLargeError if h > 0.5 * eps.
GroupElement step_fast(const GroupElement& z, const FastSpec& spec, double h, RngStream& rng);

GroupElement simulate_fast(GroupElement z0, const FastSpec& spec, double T, double h,
                           RngStream& rng);

/// Like simulate_fast but invokes visit(step_index, time, z) after every step
/// (and once at time 0). Header template so the callback inlines.
template <class Visit>
GroupElement simulate_fast_visit(GroupElement z0, const FastSpec& spec, double T, double h,
                                 RngStream& rng, Visit&& visit);

/// Haar-uniform sample of the fast manifold itself (circle angle, embedded
/// SO(k) block, or the full ambient group).
GroupElement invariant_sample(const FastSpec& fast, RngStream& rng);

/// Embeds g in SO(k) as diag(g, I) inside SO(n).
GroupElement embed_so_block(const GroupElement& small, const GroupSpec& ambient);

struct HormanderReport {
  bool satisfied = false;
  int generated_dim = 0;
  int target_dim = 0;
  std::optional<int> weak_generated_dim;  // closure allowing drift brackets
};

/// Breadth-first bracket closure with a Gram-matrix rank test (tolerance
/// kRankTol), depth cap kBracketDepthCap, early exit on rank stagnation.
HormanderReport hormander_check(const std::vector<AlgebraVector>& fields,
                                const std::optional<AlgebraVector>& include_drift,
                                int target_dim);

/// Convenience overload: target dimension taken from the FastSpec.
HormanderReport hormander_check(const FastSpec& fast);

struct LlnPoint {
  double t = 0.0;
  double l2_error = 0.0;
  double std_error = 0.0;  // of the l2_error estimate (delta method)
};

struct LlnOptions {
  double h = 0.05;
  std::uint64_t master_seed = 1;
  unsigned workers = 0;
  std::size_t haar_samples = 1'000'000;  // for the invariant mean when no torus
};

/// L2 law-of-large-numbers probe at eps = 1: for each t in t_grid estimates
/// sqrt(E[((1/t) int_0^t f(z_s) ds - fbar)^2]) over `paths` independent paths.
/// fbar comes from 512-node torus quadrature on circle manifolds and from
/// Haar Monte Carlo otherwise.
std::vector<LlnPoint> lln_error(const std::function<double(const GroupElement&)>& f,
                                const FastSpec& spec, const std::vector<double>& t_grid,
                                std::size_t paths, const LlnOptions& opts = {});

// ---------------------------------------------------------------------------

template <class Visit>
GroupElement simulate_fast_visit(GroupElement z0, const FastSpec& spec, double T, double h,
                                 RngStream& rng, Visit&& visit) {
  double t = 0.0;
  std::size_t k = 0;
  visit(k, t, z0);
  while (t < T - 1e-12 * (1.0 + T)) {
    const double step = std::min(h, T - t);
    z0 = step_fast(z0, spec, step, rng);
    t += step;
    ++k;
    visit(k, t, z0);
  }
  return z0;
}

}  // namespace fastslow

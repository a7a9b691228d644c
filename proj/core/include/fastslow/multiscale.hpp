#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fastslow/ensemble.hpp"
#include "fastslow/fast_diffusion.hpp"
#include "fastslow/poisson.hpp"
#include "fastslow/trace_observable.hpp"

namespace fastslow {

/// Present when the alphas came from adjoint_alpha; lets the SU(2) simulation
/// kernel evaluate them with scalar quaternion arithmetic.
struct AdjointAlphaData {
  AlgebraVector y0;
  std::vector<AlgebraVector> m_basis;
};

/// The full fast-slow problem datum:
/// ydot_t = sum_k Y_k(y_t) alpha_k(z_t), z the (1/eps) L0 diffusion.
struct MultiscaleSystem {
  GroupSpec slow_group;
  std::vector<AlgebraVector> slow_fields;  // Y_k, left-invariant
  FastSpec fast;
  std::vector<Observable> alphas;
  double epsilon = 0.1;  // mirrors fast.epsilon
  std::optional<AdjointAlphaData> adjoint_data;

  /// Checks the structural invariants: matching list sizes, centered alphas,
  /// Hoermander closure on the fast fields. Monte Carlo centering uses
  /// `centering_samples` draws on non-torus manifolds.
  void validate(std::size_t centering_samples = 200'000) const;

  MultiscaleSystem with_epsilon(double eps) const;
};

struct PathSample {
  std::vector<double> times;  // slow clock t (physical time t / eps)
  std::vector<GroupElement> states;
  std::uint64_t stream_id = 0;
};

/// Couples the two processes on the shared fast grid h = theta * eps over the
/// physical horizon [0, T/eps]; the slow state advances by exponential Euler
/// y <- y exp(h sum_k alpha_k(z) Y_k) each fast step. Records the slow state
/// at the requested slow-clock times.
PathSample simulate_pair(const MultiscaleSystem& sys, double T, double theta, RngStream& rng,
                         const std::vector<double>& record_grid);

/// Terminal marginal of y^eps_{T/eps} over `paths` independent runs,
/// path i driven by RngStream(master_seed, i); bit-reproducible for any
/// worker count.
Ensemble slow_marginal(const MultiscaleSystem& sys, double T, std::size_t paths, double theta,
                       std::uint64_t master_seed, unsigned workers = 0);

struct IdentityCheckReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double pooled_se = 0.0;
  double allowance = 0.0;
  bool pass = false;
};

/// Monte Carlo check of the exact finite-eps reduction identity
///   E f(y_{t/eps}) - f(y_0) =
///     eps sum_j E[(L_{Y_j} f)(y_{t/eps}) beta_j(z_{t/eps})
///                 - (L_{Y_j} f)(y_0) beta_j(z_0)]
///     - eps sum_ij int_0^{t/eps} E[(L_{Y_i} L_{Y_j} f)(y_r)
///                                  alpha_i(z_r) beta_j(z_r)] dr
/// with common paths on both sides; the time integral uses the trapezoid
/// rule on the fast grid. Passes iff |lhs - rhs| <= 3 SE + 10 theta eps.
IdentityCheckReport ito_reduction_check(const MultiscaleSystem& sys, const TraceObservable& f,
                                        const std::vector<Observable>& betas, double t,
                                        std::size_t paths, double theta,
                                        std::uint64_t master_seed, unsigned workers = 0);

struct MomentProbeRow {
  double epsilon = 0.0;
  double sup_moment = 0.0;  // E sup_{u <= T} V^p(y_{u/eps})
};

struct MomentProbeReport {
  std::vector<MomentProbeRow> rows;
  double max_over_min = 0.0;
  bool uniform = false;  // max/min <= 2 across the eps grid
};

/// Empirical uniform-in-eps moment probe of the running supremum of V^p along
/// the slow path. V defaults to squared distance to the identity.
MomentProbeReport uniform_moment_probe(
    const MultiscaleSystem& sys, double p, const std::vector<double>& eps_grid, double T,
    std::size_t paths, double theta, std::uint64_t master_seed, unsigned workers = 0,
    const std::function<double(const GroupElement&)>& V = {});

}  // namespace fastslow

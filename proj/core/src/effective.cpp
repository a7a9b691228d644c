#include "fastslow/effective.hpp"

#include <cmath>
#include <stdexcept>

#include "fastslow/detail/su2_kernel.hpp"
#include "fastslow/parallel.hpp"

namespace fastslow {

namespace {

using detail::Quat;
using detail::Vec3;

bool su2_kernel_eligible(const EffectiveSDE& sde) {
  return sde.slow_group == GroupSpec::special_unitary(2);
}

struct Su2LimitKernel {
  std::vector<Vec3> fields;
  Vec3 drift;
  bool has_drift = false;
};

Su2LimitKernel make_kernel(const EffectiveSDE& sde) {
  Su2LimitKernel k;
  for (const auto& f : sde.driving_fields) k.fields.push_back(detail::vec_from_algebra(f.matrix));
  k.drift = detail::vec_from_algebra(sde.bracket_drift.matrix);
  k.has_drift = sde.bracket_drift.matrix.squaredNorm() > 0.0;
  return k;
}

inline void kernel_step(const Su2LimitKernel& k, Quat& y, double sqrt_h, double h,
                        RngStream& rng) {
  Vec3 inc{0.0, 0.0, 0.0};
  for (const auto& f : k.fields) {
    const double s = sqrt_h * rng.normal();
    inc.x += s * f.x;
    inc.y += s * f.y;
    inc.z += s * f.z;
  }
  if (k.has_drift) {
    inc.x += h * k.drift.x;
    inc.y += h * k.drift.y;
    inc.z += h * k.drift.z;
  }
  y = detail::qmul(y, detail::qexp(inc));
}

// Runs one path to time T, calling record(index) at the requested step
// indices. Generic matrix fallback.
template <class Record>
void run_path_generic(const EffectiveSDE& sde, GroupElement& y, double h, std::size_t nsteps,
                      RngStream& rng, const std::vector<std::size_t>& record_at, Record&& record) {
  const double sqrt_h = std::sqrt(h);
  const bool has_drift = sde.bracket_drift.matrix.squaredNorm() > 0.0;
  std::size_t jrec = 0;
  Matrix inc(sde.slow_group.n, sde.slow_group.n);
  for (std::size_t k = 0; k <= nsteps; ++k) {
    while (jrec < record_at.size() && record_at[jrec] == k) {
      record(jrec, y);
      ++jrec;
    }
    if (k == nsteps) break;
    inc.setZero();
    for (const auto& f : sde.driving_fields) inc += (sqrt_h * rng.normal()) * f.matrix;
    if (has_drift) inc += h * sde.bracket_drift.matrix;
    y.matrix = y.matrix * exp_map(AlgebraVector{sde.slow_group, inc, std::nullopt}).matrix;
  }
}

}  // namespace

EffectiveSDE build_effective(const AveragedModel& model,
                             const std::vector<AlgebraVector>& slow_fields) {
  const int m = static_cast<int>(slow_fields.size());
  if (model.sigma.rows() != m || model.sigma.cols() != m)
    throw std::invalid_argument("build_effective: sigma dimension mismatch");
  EffectiveSDE sde;
  sde.slow_group = slow_fields.empty() ? GroupSpec{} : slow_fields[0].spec;
  const double sqrt2 = std::sqrt(2.0);
  for (int k = 0; k < m; ++k) {
    if (model.sigma.col(k).norm() == 0.0) continue;  // rank-deficient noise
    AlgebraVector field = zero_algebra(sde.slow_group);
    for (int i = 0; i < m; ++i) field = field + (sqrt2 * model.sigma(i, k)) * slow_fields[i];
    sde.driving_fields.push_back(std::move(field));
  }
  AlgebraVector drift = zero_algebra(sde.slow_group);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const double a = model.a_anti(i, j);
      if (a != 0.0) drift = drift + (-a) * bracket(slow_fields[i], slow_fields[j]);
    }
  sde.bracket_drift = std::move(drift);
  return sde;
}

GroupElement step_limit(const GroupElement& y, const EffectiveSDE& sde, double h, RngStream& rng) {
  if (h <= 0.0) throw std::invalid_argument("step_limit: h must be positive");
  Matrix inc = Matrix::Zero(sde.slow_group.n, sde.slow_group.n);
  const double sqrt_h = std::sqrt(h);
  for (const auto& f : sde.driving_fields) inc += (sqrt_h * rng.normal()) * f.matrix;
  if (sde.bracket_drift.matrix.squaredNorm() > 0.0) inc += h * sde.bracket_drift.matrix;
  const GroupElement e = exp_map(AlgebraVector{sde.slow_group, std::move(inc), std::nullopt});
  return GroupElement{sde.slow_group, y.matrix * e.matrix};
}

McEstimate semigroup_mc(const Observable& f, const GroupElement& y0, const EffectiveSDE& sde,
                        double T, double h, std::size_t paths, std::uint64_t master_seed,
                        unsigned workers) {
  if (paths == 0) throw std::invalid_argument("semigroup_mc: need paths >= 1");
  if (T == 0.0) return McEstimate{f(y0), 0.0};
  const auto nsteps = static_cast<std::size_t>(std::llround(T / h));
  std::vector<double> slot(paths);
  const bool kernel_ok = su2_kernel_eligible(sde);
  const Su2LimitKernel kernel = kernel_ok ? make_kernel(sde) : Su2LimitKernel{};
  parallel_for(paths, workers, [&](std::size_t i) {
    RngStream rng(master_seed, i);
    if (kernel_ok) {
      Quat y = detail::quat_from_matrix(y0.matrix);
      const double sqrt_h = std::sqrt(h);
      for (std::size_t k = 0; k < nsteps; ++k) kernel_step(kernel, y, sqrt_h, h, rng);
      slot[i] = f(GroupElement{sde.slow_group, detail::quat_to_matrix(y)});
    } else {
      GroupElement y = y0;
      run_path_generic(sde, y, h, nsteps, rng, {nsteps},
                       [&](std::size_t, const GroupElement& g) { slot[i] = f(g); });
    }
  });
  double mean = 0.0;
  for (std::size_t i = 0; i < paths; ++i) mean += slot[i];
  mean /= static_cast<double>(paths);
  double var = 0.0;
  for (std::size_t i = 0; i < paths; ++i) {
    const double d = slot[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(paths > 1 ? paths - 1 : 1);
  return McEstimate{mean, std::sqrt(var / static_cast<double>(paths))};
}

Ensemble limit_marginal(const GroupElement& y0, const EffectiveSDE& sde, double T, double h,
                        std::size_t paths, std::uint64_t master_seed, unsigned workers) {
  Ensemble ens;
  ens.master_seed = master_seed;
  ens.states.resize(paths, y0);
  const auto nsteps = static_cast<std::size_t>(std::llround(T / h));
  const bool kernel_ok = su2_kernel_eligible(sde);
  const Su2LimitKernel kernel = kernel_ok ? make_kernel(sde) : Su2LimitKernel{};
  parallel_for(paths, workers, [&](std::size_t i) {
    RngStream rng(master_seed, i);
    if (kernel_ok) {
      Quat y = detail::quat_from_matrix(y0.matrix);
      const double sqrt_h = std::sqrt(h);
      for (std::size_t k = 0; k < nsteps; ++k) kernel_step(kernel, y, sqrt_h, h, rng);
      ens.states[i] = GroupElement{sde.slow_group, detail::quat_to_matrix(y)};
    } else {
      GroupElement y = y0;
      run_path_generic(sde, y, h, nsteps, rng, {nsteps},
                       [&](std::size_t, const GroupElement& g) { ens.states[i] = g; });
    }
  });
  return ens;
}

double effective_generator_apply(const TraceObservable& f, const EffectiveSDE& sde,
                                 const GroupElement& y) {
  double acc = 0.0;
  for (const auto& field : sde.driving_fields) acc += 0.5 * f.lie2(y, field, field);
  if (sde.bracket_drift.matrix.squaredNorm() > 0.0) acc += f.lie(y, sde.bracket_drift);
  return acc;
}

BackwardCheckReport backward_check(const TraceObservable& f, const EffectiveSDE& sde, double T,
                                   double h, std::size_t paths, double delta,
                                   std::uint64_t master_seed, unsigned workers) {
  if (T <= delta) throw std::invalid_argument("backward_check: need T > delta");
  // Snap the three record times to the step grid.
  const auto n_minus = static_cast<std::size_t>(std::llround((T - delta) / h));
  const auto n_mid = static_cast<std::size_t>(std::llround(T / h));
  const auto n_plus = static_cast<std::size_t>(std::llround((T + delta) / h));
  const double eff_delta = 0.5 * static_cast<double>(n_plus - n_minus) * h;

  std::vector<double> slope_slot(paths), lf_slot(paths);
  const bool kernel_ok = su2_kernel_eligible(sde);
  const Su2LimitKernel kernel = kernel_ok ? make_kernel(sde) : Su2LimitKernel{};
  const Observable fobs = f.as_observable();
  parallel_for(paths, workers, [&](std::size_t i) {
    RngStream rng(master_seed, i);
    double f_minus = 0.0, f_plus = 0.0, lf_mid = 0.0;
    if (kernel_ok) {
      Quat y;
      const double sqrt_h = std::sqrt(h);
      for (std::size_t k = 0; k < n_plus; ++k) {
        if (k == n_minus)
          f_minus = fobs(GroupElement{sde.slow_group, detail::quat_to_matrix(y)});
        if (k == n_mid)
          lf_mid = effective_generator_apply(
              f, sde, GroupElement{sde.slow_group, detail::quat_to_matrix(y)});
        kernel_step(kernel, y, sqrt_h, h, rng);
      }
      f_plus = fobs(GroupElement{sde.slow_group, detail::quat_to_matrix(y)});
    } else {
      GroupElement y = identity(sde.slow_group);
      run_path_generic(sde, y, h, n_plus, rng, {n_minus, n_mid, n_plus},
                       [&](std::size_t j, const GroupElement& g) {
                         if (j == 0) f_minus = fobs(g);
                         if (j == 1) lf_mid = effective_generator_apply(f, sde, g);
                         if (j == 2) f_plus = fobs(g);
                       });
    }
    slope_slot[i] = (f_plus - f_minus) / (2.0 * eff_delta);
    lf_slot[i] = lf_mid;
  });

  double mean_slope = 0.0, mean_lf = 0.0;
  for (std::size_t i = 0; i < paths; ++i) {
    mean_slope += slope_slot[i];
    mean_lf += lf_slot[i];
  }
  mean_slope /= static_cast<double>(paths);
  mean_lf /= static_cast<double>(paths);
  const double mean_gap = mean_slope - mean_lf;
  double var = 0.0;
  for (std::size_t i = 0; i < paths; ++i) {
    const double d = (slope_slot[i] - lf_slot[i]) - mean_gap;
    var += d * d;
  }
  var /= static_cast<double>(paths > 1 ? paths - 1 : 1);

  BackwardCheckReport report;
  report.lhs_slope = mean_slope;
  report.rhs_value = mean_lf;
  report.pooled_se = std::sqrt(var / static_cast<double>(paths));
  report.allowance = eff_delta * eff_delta + h;
  report.pass = std::abs(mean_gap) <= 3.0 * report.pooled_se + report.allowance;
  return report;
}

}  // namespace fastslow

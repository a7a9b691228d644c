#include "fastslow/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fastslow/detail/su2_kernel.hpp"
#include "fastslow/errors.hpp"
#include "fastslow/parallel.hpp"

namespace fastslow {

namespace detail {

// Trace-family data in quaternion form: Re tr(A q) = 2 fa0 w - 2 fav . v for
// q = w + v . X.
struct TraceQuat {
  double fa0 = 0.0;
  Vec3 fav;

  static TraceQuat from_matrix(const Matrix& a) {
    TraceQuat t;
    t.fa0 = 0.5 * a.trace().real();
    const Complex a00 = a(0, 0), a01 = a(0, 1), a10 = a(1, 0), a11 = a(1, 1);
    // beta_l = -tr(A X_l)/2, keeping only the real part.
    t.fav.x = -0.5 * (Complex(0, 1) * (a00 - a11)).real();
    t.fav.y = -0.5 * (a01 - a10).real();
    t.fav.z = -0.5 * (Complex(0, 1) * (a01 + a10)).real();
    return t;
  }

  double eval(const Quat& q) const {
    return 2.0 * (fa0 * q.w - (fav.x * q.x + fav.y * q.y + fav.z * q.z));
  }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return Vec3{a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline Vec3 axpy(double s, const Vec3& a, const Vec3& b) {
  return Vec3{s * a.x + b.x, s * a.y + b.y, s * a.z + b.z};
}

}  // namespace detail

namespace {

using detail::Quat;
using detail::Vec3;

// Scalar quaternion configuration of an SU(2)/SU(2) system with
// adjoint-generated coefficients.
struct Su2PairKernel {
  std::vector<Vec3> fast_fields;
  Vec3 fast_drift;
  bool has_drift = false;
  std::vector<Vec3> slow_fields;
  Vec3 y0vec;
  std::vector<Vec3> m_coords;

  double alpha(std::size_t k, const Quat& z) const {
    return detail::dot(detail::qrotate(z, y0vec), m_coords[k]);
  }
};

bool su2_kernel_eligible(const MultiscaleSystem& sys) {
  if (!sys.adjoint_data) return false;
  const GroupSpec su2 = GroupSpec::special_unitary(2);
  return sys.slow_group == su2 && sys.fast.group == su2;
}

Su2PairKernel make_kernel(const MultiscaleSystem& sys) {
  Su2PairKernel k;
  for (const auto& f : sys.fast.diffusion_fields)
    k.fast_fields.push_back(detail::vec_from_algebra(f.matrix));
  k.fast_drift = detail::vec_from_algebra(sys.fast.drift_field.matrix);
  k.has_drift = sys.fast.has_drift();
  for (const auto& f : sys.slow_fields) k.slow_fields.push_back(detail::vec_from_algebra(f.matrix));
  k.y0vec = detail::vec_from_algebra(sys.adjoint_data->y0.matrix);
  for (const auto& m : sys.adjoint_data->m_basis)
    k.m_coords.push_back(detail::vec_from_algebra(m.matrix));
  return k;
}

// One coupled step: advance y with the coefficients frozen at the current z,
// then advance z. Consumes one normal per diffusion field.
inline void kernel_step(const Su2PairKernel& k, Quat& y, Quat& z, double h, double noise_scale,
                        double drift_scale, RngStream& rng) {
  Vec3 slow_inc{0.0, 0.0, 0.0};
  const Vec3 rotated = detail::qrotate(z, k.y0vec);
  for (std::size_t j = 0; j < k.slow_fields.size(); ++j) {
    const double a = detail::dot(rotated, k.m_coords[j]);
    slow_inc = detail::axpy(h * a, k.slow_fields[j], slow_inc);
  }
  y = detail::qmul(y, detail::qexp(slow_inc));
  Vec3 fast_inc{0.0, 0.0, 0.0};
  for (const auto& f : k.fast_fields) fast_inc = detail::axpy(noise_scale * rng.normal(), f, fast_inc);
  if (k.has_drift) fast_inc = detail::axpy(drift_scale, k.fast_drift, fast_inc);
  z = detail::qmul(z, detail::qexp(fast_inc));
}

std::vector<std::size_t> record_steps_for(const std::vector<double>& grid, double theta,
                                          double eps, std::size_t nsteps) {
  std::vector<std::size_t> steps;
  steps.reserve(grid.size());
  for (const double t : grid) {
    const auto k = static_cast<std::size_t>(std::llround(t / (theta * eps * eps)));
    steps.push_back(std::min(k, nsteps));
  }
  return steps;
}

}  // namespace

void MultiscaleSystem::validate(std::size_t centering_samples) const {
  if (slow_fields.empty() || slow_fields.size() != alphas.size())
    throw std::invalid_argument("MultiscaleSystem: need |slow_fields| = |alphas| >= 1");
  if (std::abs(epsilon - fast.epsilon) > 1e-15)
    throw std::invalid_argument("MultiscaleSystem: epsilon does not mirror fast.epsilon");
  for (const auto& y : slow_fields) {
    if (!(y.spec == slow_group)) throw std::invalid_argument("MultiscaleSystem: slow field spec");
    if (skewness_defect(y) > kSkewnessTol)
      throw std::invalid_argument("MultiscaleSystem: slow field not skew");
  }
  fast.validate();
  const HormanderReport h = hormander_check(fast);
  if (!h.satisfied)
    throw std::invalid_argument("MultiscaleSystem: fast fields fail the Hoermander check");
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    const CenteringReport c = centering_check(alphas[k], fast, centering_samples);
    if (!c.centered)
      throw NotCenteredError("MultiscaleSystem: alpha_" + std::to_string(k) + " not centered");
  }
}

MultiscaleSystem MultiscaleSystem::with_epsilon(double eps) const {
  MultiscaleSystem copy = *this;
  copy.epsilon = eps;
  copy.fast.epsilon = eps;
  return copy;
}

PathSample simulate_pair(const MultiscaleSystem& sys, double T, double theta, RngStream& rng,
                         const std::vector<double>& record_grid) {
  if (theta <= 0.0 || theta > 0.5)
    throw std::invalid_argument("simulate_pair: theta must lie in (0, 0.5]");
  if (T <= 0.0) throw std::invalid_argument("simulate_pair: T must be positive");
  const double eps = sys.epsilon;
  const double h = theta * eps;  // physical fast step, h <= 0.5 eps
  const auto nsteps = static_cast<std::size_t>(std::llround(T / (theta * eps * eps)));
  const auto rec = record_steps_for(record_grid, theta, eps, nsteps);

  PathSample sample;
  sample.stream_id = rng.stream_id();
  sample.times = record_grid;
  sample.states.reserve(record_grid.size());

  if (su2_kernel_eligible(sys)) {
    const Su2PairKernel kernel = make_kernel(sys);
    const double noise_scale = std::sqrt(h / eps);
    const double drift_scale = h / eps;
    Quat y, z;
    std::size_t jrec = 0;
    for (std::size_t k = 0; k <= nsteps; ++k) {
      while (jrec < rec.size() && rec[jrec] == k) {
        sample.states.push_back(GroupElement{sys.slow_group, detail::quat_to_matrix(y)});
        ++jrec;
      }
      if (k == nsteps) break;
      kernel_step(kernel, y, z, h, noise_scale, drift_scale, rng);
    }
    return sample;
  }

  GroupElement y = identity(sys.slow_group);
  GroupElement z = identity(sys.fast.group);
  const double noise_scale = std::sqrt(h / eps);
  const double drift_scale = h / eps;
  const bool has_drift = sys.fast.has_drift();
  const std::size_t m = sys.slow_fields.size();
  std::size_t jrec = 0;
  Matrix slow_inc(sys.slow_group.n, sys.slow_group.n);
  Matrix fast_inc(sys.fast.group.n, sys.fast.group.n);
  for (std::size_t k = 0; k <= nsteps; ++k) {
    while (jrec < rec.size() && rec[jrec] == k) {
      sample.states.push_back(y);
      ++jrec;
    }
    if (k == nsteps) break;
    slow_inc.setZero();
    for (std::size_t j = 0; j < m; ++j) slow_inc += (h * sys.alphas[j](z)) * sys.slow_fields[j].matrix;
    y.matrix = y.matrix * exp_map(AlgebraVector{sys.slow_group, slow_inc, std::nullopt}).matrix;
    fast_inc.setZero();
    for (const auto& f : sys.fast.diffusion_fields)
      fast_inc += (noise_scale * rng.normal()) * f.matrix;
    if (has_drift) fast_inc += drift_scale * sys.fast.drift_field.matrix;
    z.matrix = z.matrix * exp_map(AlgebraVector{sys.fast.group, fast_inc, std::nullopt}).matrix;
  }
  return sample;
}

Ensemble slow_marginal(const MultiscaleSystem& sys, double T, std::size_t paths, double theta,
                       std::uint64_t master_seed, unsigned workers) {
  Ensemble ens;
  ens.master_seed = master_seed;
  ens.states.resize(paths, identity(sys.slow_group));
  const std::vector<double> grid{T};
  parallel_for(paths, workers, [&](std::size_t i) {
    RngStream rng(master_seed, i);
    PathSample s = simulate_pair(sys, T, theta, rng, grid);
    ens.states[i] = std::move(s.states.back());
  });
  return ens;
}

IdentityCheckReport ito_reduction_check(const MultiscaleSystem& sys, const TraceObservable& f,
                                        const std::vector<Observable>& betas, double t,
                                        std::size_t paths, double theta,
                                        std::uint64_t master_seed, unsigned workers) {
  if (betas.size() != sys.slow_fields.size())
    throw std::invalid_argument("ito_reduction_check: beta list size mismatch");
  const double eps = sys.epsilon;
  const double h = theta * eps;
  const auto nsteps = static_cast<std::size_t>(std::llround(t / (theta * eps * eps)));
  const std::size_t m = sys.slow_fields.size();

  const bool kernel_ok = [&] {
    if (!su2_kernel_eligible(sys)) return false;
    if (sys.fast.manifold != FastManifold::Circle) return false;
    for (const auto& b : betas)
      if (!b.series) return false;
    return true;
  }();

  std::vector<double> lhs_slot(paths), rhs_slot(paths);

  if (kernel_ok) {
    const Su2PairKernel kernel = make_kernel(sys);
    const detail::TraceQuat fq = detail::TraceQuat::from_matrix(f.a);
    // Pair data for lie2: Y_i Y_j = -(ci . cj) I + (ci x cj) . X.
    std::vector<double> pair_s0(m * m);
    std::vector<Vec3> pair_sv(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        pair_s0[i * m + j] = -detail::dot(kernel.slow_fields[i], kernel.slow_fields[j]);
        pair_sv[i * m + j] = detail::cross(kernel.slow_fields[i], kernel.slow_fields[j]);
      }
    Vec3 uhat = kernel.fast_fields[0];
    const double un = std::sqrt(detail::dot(uhat, uhat));
    uhat = Vec3{uhat.x / un, uhat.y / un, uhat.z / un};
    std::vector<TrigSeriesData> series;
    for (const auto& b : betas) series.push_back(*b.series);
    const double noise_scale = std::sqrt(h / eps);
    const double drift_scale = h / eps;

    parallel_for(paths, workers, [&](std::size_t p) {
      RngStream rng(master_seed, p);
      Quat y, z;
      double integral = 0.0;
      double prev = 0.0;
      std::vector<double> av(m), bv(m);
      std::vector<double> lie_y(m);

      auto integrand = [&](const Quat& yy, const Quat& zz) {
        const Vec3 rotated = detail::qrotate(zz, kernel.y0vec);
        const double th = std::atan2(detail::dot(uhat, Vec3{zz.x, zz.y, zz.z}), zz.w);
        for (std::size_t j = 0; j < m; ++j) {
          av[j] = detail::dot(rotated, kernel.m_coords[j]);
          bv[j] = series[j].eval(th);
        }
        double g = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            // Re tr(A y Yi Yj) with y (w,v): quaternion product y * (s0, sv)
            const double s0 = pair_s0[i * m + j];
            const Vec3& sv = pair_sv[i * m + j];
            Quat q;
            q.w = yy.w * s0 - (yy.x * sv.x + yy.y * sv.y + yy.z * sv.z);
            q.x = yy.w * sv.x + s0 * yy.x + (yy.y * sv.z - yy.z * sv.y);
            q.y = yy.w * sv.y + s0 * yy.y + (yy.z * sv.x - yy.x * sv.z);
            q.z = yy.w * sv.z + s0 * yy.z + (yy.x * sv.y - yy.y * sv.x);
            g += fq.eval(q) * av[i] * bv[j];
          }
        return g;
      };

      // boundary term at time 0
      double boundary0 = 0.0;
      {
        const double th0 = std::atan2(detail::dot(uhat, Vec3{z.x, z.y, z.z}), z.w);
        for (std::size_t j = 0; j < m; ++j) {
          // L_{Y_j} f(y0) with y0 = identity: Re tr(A Y_j)
          Quat q{0.0, kernel.slow_fields[j].x, kernel.slow_fields[j].y, kernel.slow_fields[j].z};
          Quat yq = detail::qmul(y, q);
          boundary0 += fq.eval(yq) * series[j].eval(th0);
        }
      }
      const double f0 = fq.eval(y);

      prev = integrand(y, z);
      for (std::size_t k = 0; k < nsteps; ++k) {
        kernel_step(kernel, y, z, h, noise_scale, drift_scale, rng);
        const double cur = integrand(y, z);
        integral += 0.5 * h * (prev + cur);
        prev = cur;
      }
      double boundary_t = 0.0;
      {
        const double th = std::atan2(detail::dot(uhat, Vec3{z.x, z.y, z.z}), z.w);
        for (std::size_t j = 0; j < m; ++j) {
          Quat q{0.0, kernel.slow_fields[j].x, kernel.slow_fields[j].y, kernel.slow_fields[j].z};
          Quat yq = detail::qmul(y, q);
          boundary_t += fq.eval(yq) * series[j].eval(th);
        }
      }
      lhs_slot[p] = fq.eval(y) - f0;
      rhs_slot[p] = eps * (boundary_t - boundary0) - eps * integral;
    });
  } else {
    parallel_for(paths, workers, [&](std::size_t p) {
      RngStream rng(master_seed, p);
      GroupElement y = identity(sys.slow_group);
      GroupElement z = identity(sys.fast.group);
      const double noise_scale = std::sqrt(h / eps);
      const double drift_scale = h / eps;
      const bool has_drift = sys.fast.has_drift();

      auto integrand = [&](const GroupElement& yy, const GroupElement& zz) {
        double g = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double ai = sys.alphas[i](zz);
          for (std::size_t j = 0; j < m; ++j)
            g += f.lie2(yy, sys.slow_fields[i], sys.slow_fields[j]) * ai * betas[j](zz);
        }
        return g;
      };
      auto boundary = [&](const GroupElement& yy, const GroupElement& zz) {
        double b = 0.0;
        for (std::size_t j = 0; j < m; ++j) b += f.lie(yy, sys.slow_fields[j]) * betas[j](zz);
        return b;
      };

      const double f0 = f.eval(y);
      const double b0 = boundary(y, z);
      double integral = 0.0;
      double prev = integrand(y, z);
      Matrix slow_inc(sys.slow_group.n, sys.slow_group.n);
      Matrix fast_inc(sys.fast.group.n, sys.fast.group.n);
      for (std::size_t k = 0; k < nsteps; ++k) {
        slow_inc.setZero();
        for (std::size_t j = 0; j < m; ++j)
          slow_inc += (h * sys.alphas[j](z)) * sys.slow_fields[j].matrix;
        y.matrix = y.matrix * exp_map(AlgebraVector{sys.slow_group, slow_inc, std::nullopt}).matrix;
        fast_inc.setZero();
        for (const auto& fld : sys.fast.diffusion_fields)
          fast_inc += (noise_scale * rng.normal()) * fld.matrix;
        if (has_drift) fast_inc += drift_scale * sys.fast.drift_field.matrix;
        z.matrix = z.matrix * exp_map(AlgebraVector{sys.fast.group, fast_inc, std::nullopt}).matrix;
        const double cur = integrand(y, z);
        integral += 0.5 * h * (prev + cur);
        prev = cur;
      }
      lhs_slot[p] = f.eval(y) - f0;
      rhs_slot[p] = eps * (boundary(y, z) - b0) - eps * integral;
    });
  }

  IdentityCheckReport report;
  double mean_l = 0.0, mean_r = 0.0;
  for (std::size_t p = 0; p < paths; ++p) {
    mean_l += lhs_slot[p];
    mean_r += rhs_slot[p];
  }
  mean_l /= static_cast<double>(paths);
  mean_r /= static_cast<double>(paths);
  double var_d = 0.0;
  for (std::size_t p = 0; p < paths; ++p) {
    const double d = (lhs_slot[p] - rhs_slot[p]) - (mean_l - mean_r);
    var_d += d * d;
  }
  var_d /= static_cast<double>(paths > 1 ? paths - 1 : 1);
  report.lhs = mean_l;
  report.rhs = mean_r;
  report.pooled_se = std::sqrt(var_d / static_cast<double>(paths));
  report.allowance = 10.0 * theta * eps;
  report.pass = std::abs(mean_l - mean_r) <= 3.0 * report.pooled_se + report.allowance;
  return report;
}

MomentProbeReport uniform_moment_probe(const MultiscaleSystem& sys, double p,
                                       const std::vector<double>& eps_grid, double T,
                                       std::size_t paths, double theta,
                                       std::uint64_t master_seed, unsigned workers,
                                       const std::function<double(const GroupElement&)>& V) {
  if (eps_grid.empty()) throw std::invalid_argument("uniform_moment_probe: empty eps grid");
  MomentProbeReport report;
  const bool default_v = !V;
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    const MultiscaleSystem sys_e = sys.with_epsilon(eps_grid[e]);
    const std::uint64_t seed = RngStream::derive_seed(master_seed, e);
    const double eps = eps_grid[e];
    const double h = theta * eps;
    const auto nsteps = static_cast<std::size_t>(std::llround(T / (theta * eps * eps)));
    std::vector<double> sup_slot(paths, 0.0);

    if (su2_kernel_eligible(sys_e) && default_v) {
      const Su2PairKernel kernel = make_kernel(sys_e);
      const double noise_scale = std::sqrt(h / eps);
      const double drift_scale = h / eps;
      parallel_for(paths, workers, [&](std::size_t i) {
        RngStream rng(seed, i);
        Quat y, z;
        double sup_v = 0.0;
        for (std::size_t k = 0; k < nsteps; ++k) {
          kernel_step(kernel, y, z, h, noise_scale, drift_scale, rng);
          const double d = detail::qdist_to_identity(y);
          sup_v = std::max(sup_v, d * d);
        }
        sup_slot[i] = p == 0.0 ? 1.0 : std::pow(sup_v, p);
      });
    } else {
      parallel_for(paths, workers, [&](std::size_t i) {
        RngStream rng(seed, i);
        GroupElement y = identity(sys_e.slow_group);
        GroupElement z = identity(sys_e.fast.group);
        const double noise_scale = std::sqrt(h / eps);
        const double drift_scale = h / eps;
        const bool has_drift = sys_e.fast.has_drift();
        double sup_v = 0.0;
        Matrix slow_inc(sys_e.slow_group.n, sys_e.slow_group.n);
        Matrix fast_inc(sys_e.fast.group.n, sys_e.fast.group.n);
        for (std::size_t k = 0; k < nsteps; ++k) {
          slow_inc.setZero();
          for (std::size_t j = 0; j < sys_e.slow_fields.size(); ++j)
            slow_inc += (h * sys_e.alphas[j](z)) * sys_e.slow_fields[j].matrix;
          y.matrix =
              y.matrix * exp_map(AlgebraVector{sys_e.slow_group, slow_inc, std::nullopt}).matrix;
          fast_inc.setZero();
          for (const auto& fld : sys_e.fast.diffusion_fields)
            fast_inc += (noise_scale * rng.normal()) * fld.matrix;
          if (has_drift) fast_inc += drift_scale * sys_e.fast.drift_field.matrix;
          z.matrix =
              z.matrix * exp_map(AlgebraVector{sys_e.fast.group, fast_inc, std::nullopt}).matrix;
          const double v = default_v ? [&] {
            const double d = distance_to_identity(y);
            return d * d;
          }()
                                     : V(y);
          sup_v = std::max(sup_v, v);
        }
        sup_slot[i] = p == 0.0 ? 1.0 : std::pow(sup_v, p);
      });
    }

    double mean = 0.0;
    for (std::size_t i = 0; i < paths; ++i) mean += sup_slot[i];
    mean /= static_cast<double>(paths);
    report.rows.push_back(MomentProbeRow{eps, mean});
  }
  double lo = report.rows[0].sup_moment, hi = lo;
  for (const auto& r : report.rows) {
    lo = std::min(lo, r.sup_moment);
    hi = std::max(hi, r.sup_moment);
  }
  report.max_over_min = lo > 0.0 ? hi / lo : (hi > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  report.uniform = report.max_over_min <= 2.0;
  return report;
}

}  // namespace fastslow

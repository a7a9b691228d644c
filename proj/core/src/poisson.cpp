#include "fastslow/poisson.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>
#include <unordered_map>

#include "fastslow/errors.hpp"
#include "fastslow/parallel.hpp"

namespace fastslow {

namespace {

constexpr double kTwoPi = 6.28318530717958647692528676655900577;

// v^dagger m v without temporaries.
Complex sandwich(const Eigen::VectorXcd& v, const Matrix& m) {
  Complex acc(0.0, 0.0);
  const int n = static_cast<int>(v.size());
  for (int i = 0; i < n; ++i) {
    Complex row(0.0, 0.0);
    for (int j = 0; j < n; ++j) row += m(i, j) * v(j);
    acc += std::conj(v(i)) * row;
  }
  return acc;
}

double chart_theta(const CircleChart& chart, const Matrix& z) {
  return std::arg(sandwich(chart.probe, z)) / chart.fundamental_freq;
}

// Direct transform on kTorusNodes nodes; exact for trig polynomials up to
// frequency nodes/2 - 1.
TrigSeriesData transform_on_chart(const std::function<double(const GroupElement&)>& f,
                                  const CircleChart& chart, int nodes, int max_mode) {
  std::vector<double> vals(nodes);
  std::vector<double> thetas(nodes);
  for (int j = 0; j < nodes; ++j) {
    thetas[j] = (static_cast<double>(j) / nodes - 0.5) * chart.period;
    vals[j] = f(chart.point(thetas[j]));
  }
  TrigSeriesData s;
  s.omega = chart.fundamental_freq;
  double acc0 = 0.0;
  for (int j = 0; j < nodes; ++j) acc0 += vals[j];
  s.c0 = acc0 / nodes;
  s.coef.resize(max_mode);
  for (int k = 1; k <= max_mode; ++k) {
    Complex acc(0.0, 0.0);
    for (int j = 0; j < nodes; ++j) {
      const double a = s.omega * k * thetas[j];
      acc += vals[j] * Complex(std::cos(a), -std::sin(a));
    }
    s.coef[k - 1] = acc / static_cast<double>(nodes);
  }
  return s;
}

int detect_max_frequency(const TrigSeriesData& s, double tol) {
  int k_max = 0;
  for (std::size_t k = 0; k < s.coef.size(); ++k) {
    if (std::abs(s.coef[k]) > tol) k_max = static_cast<int>(k + 1);
  }
  return k_max;
}

// Drift component along the circle; throws when the drift is not tangent.
double circle_drift_rate(const FastSpec& fast, const CircleChart& chart) {
  if (!fast.has_drift()) return 0.0;
  const double b = inner(fast.drift_field, chart.unit_generator);
  const AlgebraVector resid = fast.drift_field - b * chart.unit_generator;
  if (algebra_norm(resid) > 1e-10)
    throw NotTorusError("fast drift is not tangent to the circle");
  return b;
}

struct PointKey {
  std::string bytes;
  bool operator==(const PointKey& o) const { return bytes == o.bytes; }
};
struct PointKeyHash {
  std::size_t operator()(const PointKey& k) const { return std::hash<std::string>()(k.bytes); }
};

PointKey key_of(const Matrix& m) {
  PointKey k;
  k.bytes.assign(reinterpret_cast<const char*>(m.data()), sizeof(Complex) * m.size());
  return k;
}

// Shared ensemble of trapezoid averages S_k = mean over paths of
// int_0^tail e^{i k omega theta_t} dt for the circle-from-identity process.
// By left invariance, beta at any start point is a trig combination of these.
std::vector<Complex> circle_mode_averages(const FastSpec& fast, const CircleChart& chart,
                                          int max_mode, double tail_T, std::size_t paths,
                                          const McResolventOptions& opts) {
  if (opts.h > 0.5 * fast.epsilon * (1.0 + 1e-12))
    throw StepTooLargeError("resolvent ensemble: h exceeds 0.5 * epsilon");
  const double h = opts.h;
  const double ratio = h / fast.epsilon;
  const double noise = std::sqrt(ratio) * std::sqrt(chart.speed_sq);
  const double drift = ratio * circle_drift_rate(fast, chart);
  const std::size_t nsteps = static_cast<std::size_t>(std::llround(tail_T / h));
  const double omega = chart.fundamental_freq;

  std::vector<Complex> slots(paths * max_mode);
  parallel_for(paths, opts.workers, [&](std::size_t i) {
    RngStream rng(opts.master_seed, i);
    double theta = 0.0;
    // trapezoid accumulation of e^{i k omega theta_t}
    std::vector<Complex> acc(max_mode, Complex(0.0, 0.0));
    std::vector<Complex> prev(max_mode);
    for (int k = 0; k < max_mode; ++k) prev[k] = Complex(1.0, 0.0);
    for (std::size_t s = 0; s < nsteps; ++s) {
      theta += noise * rng.normal() + drift;
      const Complex base(std::cos(omega * theta), std::sin(omega * theta));
      Complex cur(1.0, 0.0);
      for (int k = 0; k < max_mode; ++k) {
        cur *= base;
        acc[k] += 0.5 * h * (prev[k] + cur);
        prev[k] = cur;
      }
    }
    for (int k = 0; k < max_mode; ++k) slots[i * max_mode + k] = acc[k];
  });

  std::vector<Complex> mean(max_mode, Complex(0.0, 0.0));
  for (std::size_t i = 0; i < paths; ++i)
    for (int k = 0; k < max_mode; ++k) mean[k] += slots[i * max_mode + k];
  for (int k = 0; k < max_mode; ++k) mean[k] /= static_cast<double>(paths);
  return mean;
}

}  // namespace

std::vector<GroupElement> torus_nodes(const CircleChart& chart, int nodes) {
  std::vector<GroupElement> out;
  out.reserve(nodes);
  for (int j = 0; j < nodes; ++j)
    out.push_back(chart.point((static_cast<double>(j) / nodes - 0.5) * chart.period));
  return out;
}

double torus_mean(const std::function<double(const GroupElement&)>& f, const CircleChart& chart,
                  int nodes) {
  double acc = 0.0;
  for (int j = 0; j < nodes; ++j)
    acc += f(chart.point((static_cast<double>(j) / nodes - 0.5) * chart.period));
  return acc / nodes;
}

std::vector<Observable> adjoint_alpha(const AlgebraVector& y0,
                                      const std::vector<AlgebraVector>& m_basis,
                                      const FastSpec& fast) {
  if (m_basis.empty()) throw std::invalid_argument("adjoint_alpha: empty m basis");
  for (std::size_t i = 0; i < m_basis.size(); ++i) {
    for (std::size_t j = i; j < m_basis.size(); ++j) {
      const double g = inner(m_basis[i], m_basis[j]);
      if (std::abs(g - (i == j ? 1.0 : 0.0)) > 1e-8)
        throw std::invalid_argument("adjoint_alpha: m basis is not orthonormal");
    }
  }
  const double bound = algebra_norm(y0);
  std::vector<Observable> alphas;
  alphas.reserve(m_basis.size());
  for (const auto& mk : m_basis) {
    const Matrix y0m = y0.matrix;
    const Matrix mkm = mk.matrix;
    const double scale = fast.group.metric_scale;
    Observable obs;
    obs.eval = [y0m, mkm, scale](const GroupElement& z) {
      return scale * (mkm.adjoint() * (z.matrix * y0m * z.matrix.adjoint())).trace().real();
    };
    obs.bound = bound;
    alphas.push_back(std::move(obs));
  }
  if (fast.manifold == FastManifold::Circle) {
    const CircleChart chart = circle_chart(fast);
    for (auto& a : alphas) {
      TrigSeriesData s = transform_on_chart(a.eval, chart, kTorusNodes, kTorusNodes / 2 - 1);
      a.tag = Smoothness::TrigPolynomial;
      a.max_frequency = detect_max_frequency(s, 1e-9);
      s.coef.resize(std::max(1, a.max_frequency));
      a.series = std::move(s);
    }
  }
  return alphas;
}

CenteringReport centering_check(const Observable& alpha, const FastSpec& fast,
                                std::size_t mc_samples, std::uint64_t seed) {
  CenteringReport report;
  if (fast.manifold == FastManifold::Circle) {
    const CircleChart chart = circle_chart(fast);
    report.mean = torus_mean(alpha.eval, chart, kTorusNodes);
    report.std_error = 0.0;
    report.centered = std::abs(report.mean) <= kCenteringTolQuadrature;
    return report;
  }
  RngStream rng(seed, 0);
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t i = 0; i < mc_samples; ++i) {
    const double v = alpha(invariant_sample(fast, rng));
    acc += v;
    acc2 += v * v;
  }
  const double n = static_cast<double>(mc_samples);
  report.mean = acc / n;
  const double var = std::max(0.0, acc2 / n - report.mean * report.mean);
  report.std_error = std::sqrt(var / n);
  report.centered = std::abs(report.mean) <= 3.0 * report.std_error;
  return report;
}

double poisson_residual_sup(const std::function<double(const GroupElement&)>& alpha,
                            const std::function<double(const GroupElement&)>& beta,
                            const FastSpec& fast, const std::vector<GroupElement>& grid) {
  const double d = kFdStep;
  // Precompute shift elements for the 5-point stencils.
  struct Shifts {
    Matrix p1, p2, m1, m2;
  };
  std::vector<Shifts> field_shifts;
  for (const auto& f : fast.diffusion_fields) {
    Shifts s;
    s.p1 = exp_map(d * f).matrix;
    s.p2 = exp_map((2.0 * d) * f).matrix;
    s.m1 = exp_map((-d) * f).matrix;
    s.m2 = exp_map((-2.0 * d) * f).matrix;
    field_shifts.push_back(std::move(s));
  }
  Shifts drift_shift;
  const bool has_drift = fast.has_drift();
  if (has_drift) {
    drift_shift.p1 = exp_map(d * fast.drift_field).matrix;
    drift_shift.p2 = exp_map((2.0 * d) * fast.drift_field).matrix;
    drift_shift.m1 = exp_map((-d) * fast.drift_field).matrix;
    drift_shift.m2 = exp_map((-2.0 * d) * fast.drift_field).matrix;
  }

  double sup = 0.0;
  for (const auto& x : grid) {
    const double b0 = beta(x);
    double l0 = 0.0;
    for (const auto& s : field_shifts) {
      const double fp1 = beta(GroupElement{x.spec, x.matrix * s.p1});
      const double fp2 = beta(GroupElement{x.spec, x.matrix * s.p2});
      const double fm1 = beta(GroupElement{x.spec, x.matrix * s.m1});
      const double fm2 = beta(GroupElement{x.spec, x.matrix * s.m2});
      l0 += 0.5 * (-fp2 + 16.0 * fp1 - 30.0 * b0 + 16.0 * fm1 - fm2) / (12.0 * d * d);
    }
    if (has_drift) {
      const double fp1 = beta(GroupElement{x.spec, x.matrix * drift_shift.p1});
      const double fp2 = beta(GroupElement{x.spec, x.matrix * drift_shift.p2});
      const double fm1 = beta(GroupElement{x.spec, x.matrix * drift_shift.m1});
      const double fm2 = beta(GroupElement{x.spec, x.matrix * drift_shift.m2});
      l0 += (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * d);
    }
    sup = std::max(sup, std::abs(l0 - alpha(x)));
  }
  return sup;
}

PoissonSolution solve_poisson_spectral(const Observable& alpha, const FastSpec& fast) {
  if (alpha.tag != Smoothness::TrigPolynomial)
    throw std::invalid_argument("solve_poisson_spectral: alpha must be tagged TrigPolynomial");
  const CircleChart chart = circle_chart(fast);  // NotTorusError if nonabelian
  const double b = circle_drift_rate(fast, chart);
  const double c = chart.speed_sq;
  const double omega = chart.fundamental_freq;

  const TrigSeriesData a = transform_on_chart(alpha.eval, chart, kTorusNodes, kTorusNodes / 2 - 1);
  if (std::abs(a.c0) > kCenteringTolQuadrature)
    throw NotCenteredError("solve_poisson_spectral: alpha has nonzero invariant mean");
  const int declared = std::max(1, alpha.max_frequency);
  for (std::size_t k = declared; k < a.coef.size(); ++k) {
    if (std::abs(a.coef[k]) > kSpectralLeakTol)
      throw std::invalid_argument(
          "solve_poisson_spectral: energy above the declared max frequency");
  }

  auto series = std::make_shared<TrigSeriesData>();
  series->omega = omega;
  series->c0 = 0.0;  // mean-zero solution branch
  series->coef.resize(declared);
  double bound = 0.0;
  for (int k = 1; k <= declared; ++k) {
    const double w = omega * k;
    const Complex symbol(-0.5 * c * w * w, b * w);
    series->coef[k - 1] = a.coef[k - 1] / symbol;
    bound += 2.0 * std::abs(series->coef[k - 1]);
  }

  auto chart_ptr = std::make_shared<CircleChart>(chart);
  Observable beta;
  beta.eval = [series, chart_ptr](const GroupElement& z) {
    return series->eval(chart_theta(*chart_ptr, z.matrix));
  };
  beta.tag = Smoothness::TrigPolynomial;
  beta.max_frequency = declared;
  beta.bound = bound;
  beta.series = *series;

  PoissonSolution sol;
  sol.alpha = alpha;
  sol.beta = beta;
  sol.method = PoissonMethod::Spectral;
  // Validation grid offset from the transform nodes.
  std::vector<GroupElement> grid;
  const int vn = 64;
  for (int j = 0; j < vn; ++j)
    grid.push_back(chart.point((static_cast<double>(j) + 0.37) / vn * chart.period -
                               0.5 * chart.period));
  sol.residual_sup = poisson_residual_sup(alpha.eval, beta.eval, fast, grid);
  return sol;
}

std::vector<double> resolvent_mc_batch(const Observable& alpha, const FastSpec& fast,
                                       double tail_T, std::size_t paths,
                                       const std::vector<GroupElement>& points,
                                       const McResolventOptions& opts) {
  if (fast.manifold == FastManifold::Circle && alpha.tag == Smoothness::TrigPolynomial) {
    const CircleChart chart = circle_chart(fast);
    const TrigSeriesData a = transform_on_chart(alpha.eval, chart, kTorusNodes, kTorusNodes / 2 - 1);
    const int modes = std::max(1, detect_max_frequency(a, 1e-12));
    const std::vector<Complex> s_mean =
        circle_mode_averages(fast, chart, modes, tail_T, paths, opts);
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) {
      const double theta_p = chart_theta(chart, p.matrix);
      double acc = a.c0 * tail_T;
      for (int k = 1; k <= modes; ++k) {
        const double w = chart.fundamental_freq * k * theta_p;
        acc += 2.0 * (a.coef[k - 1] * Complex(std::cos(w), std::sin(w)) * s_mean[k - 1]).real();
      }
      out.push_back(-acc);
    }
    return out;
  }

  // Generic route: paths from the identity, shared across all points by left
  // invariance; per-point trapezoid integration of alpha along x * z_t.
  if (opts.h > 0.5 * fast.epsilon * (1.0 + 1e-12))
    throw StepTooLargeError("resolvent ensemble: h exceeds 0.5 * epsilon");
  const double h = opts.h;
  const std::size_t nsteps = static_cast<std::size_t>(std::llround(tail_T / h));
  const std::size_t np = points.size();
  std::vector<double> slots(paths * np, 0.0);
  parallel_for(paths, opts.workers, [&](std::size_t i) {
    RngStream rng(opts.master_seed, i);
    GroupElement z = identity(fast.group);
    std::vector<double> prev(np), acc(np, 0.0);
    for (std::size_t p = 0; p < np; ++p) prev[p] = alpha(points[p]);
    for (std::size_t s = 0; s < nsteps; ++s) {
      z = step_fast(z, fast, h, rng);
      for (std::size_t p = 0; p < np; ++p) {
        const double cur = alpha(GroupElement{z.spec, points[p].matrix * z.matrix});
        acc[p] += 0.5 * h * (prev[p] + cur);
        prev[p] = cur;
      }
    }
    for (std::size_t p = 0; p < np; ++p) slots[i * np + p] = acc[p];
  });
  std::vector<double> out(np, 0.0);
  for (std::size_t i = 0; i < paths; ++i)
    for (std::size_t p = 0; p < np; ++p) out[p] += slots[i * np + p];
  for (std::size_t p = 0; p < np; ++p) out[p] = -out[p] / static_cast<double>(paths);
  return out;
}

PoissonSolution solve_poisson_mc(const Observable& alpha, const FastSpec& fast, double tail_T,
                                 std::size_t paths, const McResolventOptions& opts) {
  {
    const CenteringReport c = centering_check(alpha, fast, 100'000,
                                              RngStream::derive_seed(opts.master_seed, 0xCE));
    if (!c.centered)
      throw NotCenteredError("solve_poisson_mc: alpha has nonzero invariant mean");
  }

  PoissonSolution sol;
  sol.alpha = alpha;
  sol.method = PoissonMethod::MonteCarloResolvent;

  if (fast.manifold == FastManifold::Circle && alpha.tag == Smoothness::TrigPolynomial) {
    const CircleChart chart = circle_chart(fast);
    const TrigSeriesData a = transform_on_chart(alpha.eval, chart, kTorusNodes, kTorusNodes / 2 - 1);
    const int modes = std::max(1, detect_max_frequency(a, 1e-12));
    const std::vector<Complex> s_mean =
        circle_mode_averages(fast, chart, modes, tail_T, paths, opts);
    auto series = std::make_shared<TrigSeriesData>();
    series->omega = chart.fundamental_freq;
    series->c0 = -a.c0 * tail_T;
    series->coef.resize(modes);
    for (int k = 1; k <= modes; ++k) series->coef[k - 1] = -a.coef[k - 1] * s_mean[k - 1];
    auto chart_ptr = std::make_shared<CircleChart>(chart);
    sol.beta.eval = [series, chart_ptr](const GroupElement& z) {
      return series->eval(chart_theta(*chart_ptr, z.matrix));
    };
    sol.beta.tag = Smoothness::TrigPolynomial;
    sol.beta.max_frequency = modes;
    sol.beta.series = *series;

    std::vector<GroupElement> grid;
    for (int j = 0; j < opts.residual_grid; ++j)
      grid.push_back(chart.point((static_cast<double>(j) + 0.5) / opts.residual_grid *
                                     chart.period -
                                 0.5 * chart.period));
    sol.residual_sup = poisson_residual_sup(alpha.eval, sol.beta.eval, fast, grid);
    return sol;
  }

  // Generic manifold: memoized per-point evaluation with shared streams.
  auto cache = std::make_shared<std::unordered_map<PointKey, double, PointKeyHash>>();
  const Observable alpha_copy = alpha;
  const FastSpec fast_copy = fast;
  const McResolventOptions opts_copy = opts;
  sol.beta.eval = [cache, alpha_copy, fast_copy, tail_T, paths,
                   opts_copy](const GroupElement& x) {
    const PointKey key = key_of(x.matrix);
    auto it = cache->find(key);
    if (it != cache->end()) return it->second;
    const double v =
        resolvent_mc_batch(alpha_copy, fast_copy, tail_T, paths, {x}, opts_copy)[0];
    (*cache)[key] = v;
    return v;
  };

  // Validation grid of invariant samples; batch-fill the cache (including the
  // stencil displacements) in one pass over the shared paths.
  RngStream grid_rng(RngStream::derive_seed(opts.master_seed, 0x61D), 0);
  std::vector<GroupElement> grid;
  for (int j = 0; j < opts.residual_grid; ++j) grid.push_back(invariant_sample(fast, grid_rng));
  std::vector<GroupElement> all = grid;
  const double d = kFdStep;
  std::vector<AlgebraVector> dirs = fast.diffusion_fields;
  if (fast.has_drift()) dirs.push_back(fast.drift_field);
  for (const auto& x : grid) {
    for (const auto& f : dirs) {
      for (const double step : {d, 2.0 * d, -d, -2.0 * d}) {
        all.push_back(GroupElement{x.spec, x.matrix * exp_map(step * f).matrix});
      }
    }
  }
  const std::vector<double> vals =
      resolvent_mc_batch(alpha, fast, tail_T, paths, all, opts);
  for (std::size_t i = 0; i < all.size(); ++i) (*cache)[key_of(all[i].matrix)] = vals[i];
  sol.residual_sup = poisson_residual_sup(alpha.eval, sol.beta.eval, fast, grid);
  return sol;
}

AveragedModel finalize_averaged(Eigen::MatrixXd a_bar, double stat_error) {
  AveragedModel model;
  model.a_bar = a_bar;
  model.a_sym = 0.5 * (a_bar + a_bar.transpose());
  model.a_anti = 0.5 * (a_bar - a_bar.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-model.a_sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("finalize_averaged: eigensolver failed");
  Eigen::VectorXd lambda = es.eigenvalues();
  for (int k = 0; k < lambda.size(); ++k) {
    if (lambda(k) < -kPsdClampTol)
      throw NotPSDError("averaged matrix: -sym(a_bar) has eigenvalue " +
                        std::to_string(lambda(k)));
    if (lambda(k) < 0.0) lambda(k) = 0.0;
  }
  model.sigma = es.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
  model.quadrature_error = stat_error;
  return model;
}

AveragedModel averaged_matrix(const std::vector<Observable>& alphas,
                              const std::vector<Observable>& betas, const FastSpec& fast,
                              const AveragedMatrixOptions& opts) {
  if (alphas.size() != betas.size() || alphas.empty())
    throw std::invalid_argument("averaged_matrix: mismatched alpha/beta lists");
  const int m = static_cast<int>(alphas.size());
  Eigen::MatrixXd a_bar = Eigen::MatrixXd::Zero(m, m);

  if (fast.manifold == FastManifold::Circle) {
    const CircleChart chart = circle_chart(fast);
    const auto nodes = torus_nodes(chart, kTorusNodes);
    Eigen::MatrixXd av(m, static_cast<int>(nodes.size()));
    Eigen::MatrixXd bv(m, static_cast<int>(nodes.size()));
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      for (int i = 0; i < m; ++i) {
        av(i, static_cast<int>(j)) = alphas[i](nodes[j]);
        bv(i, static_cast<int>(j)) = betas[i](nodes[j]);
      }
    }
    a_bar = (av * bv.transpose()) / static_cast<double>(nodes.size());
    return finalize_averaged(a_bar, 0.0);
  }

  // Haar Monte Carlo of the products.
  const std::size_t n = opts.mc_samples;
  std::vector<double> slots(n * m * m);
  parallel_for(n, opts.workers, [&](std::size_t s) {
    RngStream rng(opts.master_seed, s);
    const GroupElement x = invariant_sample(fast, rng);
    std::vector<double> va(m), vb(m);
    for (int i = 0; i < m; ++i) va[i] = alphas[i](x);
    for (int j = 0; j < m; ++j) vb[j] = betas[j](x);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) slots[(s * m + i) * m + j] = va[i] * vb[j];
  });
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t s = 0; s < n; ++s) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double v = slots[(s * m + i) * m + j];
        a_bar(i, j) += v;
        sq(i, j) += v * v;
      }
  }
  a_bar /= static_cast<double>(n);
  double max_se = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const double var = std::max(0.0, sq(i, j) / n - a_bar(i, j) * a_bar(i, j));
      max_se = std::max(max_se, std::sqrt(var / n));
    }
  return finalize_averaged(a_bar, max_se);
}

AveragedModel averaged_matrix_resolvent(const std::vector<Observable>& alphas,
                                        const FastSpec& fast,
                                        const ResolventAverageOptions& opts) {
  if (alphas.empty()) throw std::invalid_argument("averaged_matrix_resolvent: empty alpha list");
  if (opts.h > 0.5 * fast.epsilon * (1.0 + 1e-12))
    throw StepTooLargeError("averaged_matrix_resolvent: h exceeds 0.5 * epsilon");
  const int m = static_cast<int>(alphas.size());
  const std::size_t nsteps = static_cast<std::size_t>(std::llround(opts.tail_T / opts.h));
  const std::uint64_t seed_start = RngStream::derive_seed(opts.master_seed, 1);
  const std::uint64_t seed_path = RngStream::derive_seed(opts.master_seed, 2);

  std::vector<double> slots(opts.paths * m * m);
  parallel_for(opts.paths, opts.workers, [&](std::size_t s) {
    RngStream start_rng(seed_start, s);
    RngStream path_rng(seed_path, s);
    GroupElement z = invariant_sample(fast, start_rng);
    std::vector<double> a0(m), prev(m), integral(m, 0.0);
    for (int j = 0; j < m; ++j) {
      a0[j] = alphas[j](z);
      prev[j] = a0[j];
    }
    for (std::size_t k = 0; k < nsteps; ++k) {
      z = step_fast(z, fast, opts.h, path_rng);
      for (int j = 0; j < m; ++j) {
        const double cur = alphas[j](z);
        integral[j] += 0.5 * opts.h * (prev[j] + cur);
        prev[j] = cur;
      }
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) slots[(s * m + i) * m + j] = -a0[i] * integral[j];
  });

  Eigen::MatrixXd a_bar = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t s = 0; s < opts.paths; ++s) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double v = slots[(s * m + i) * m + j];
        a_bar(i, j) += v;
        sq(i, j) += v * v;
      }
  }
  a_bar /= static_cast<double>(opts.paths);
  double max_se = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const double var = std::max(0.0, sq(i, j) / opts.paths - a_bar(i, j) * a_bar(i, j));
      max_se = std::max(max_se, std::sqrt(var / static_cast<double>(opts.paths)));
    }
  return finalize_averaged(a_bar, max_se);
}

}  // namespace fastslow

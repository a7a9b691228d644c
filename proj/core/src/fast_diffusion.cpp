#include "fastslow/fast_diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fastslow/parallel.hpp"

namespace fastslow {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

AlgebraVector normalized(const AlgebraVector& a) {
  const double n = algebra_norm(a);
  if (n == 0.0) throw std::invalid_argument("cannot normalize the zero algebra vector");
  return (1.0 / n) * a;
}

// Gram-Schmidt acceptance test; extends `basis` when `cand` adds rank.
bool try_extend(std::vector<AlgebraVector>& basis, const AlgebraVector& cand) {
  AlgebraVector r = cand;
  for (const auto& b : basis) r = r - inner(b, r) * b;
  const double cn = algebra_norm(cand);
  if (algebra_norm(r) > kRankTol * std::max(1.0, cn)) {
    basis.push_back(normalized(r));
    return true;
  }
  return false;
}

int bracket_closure_dim(const std::vector<AlgebraVector>& seed_span,
                        const std::vector<AlgebraVector>& generating) {
  std::vector<AlgebraVector> span;
  std::vector<AlgebraVector> frontier;
  for (const auto& f : seed_span) {
    if (algebra_norm(f) == 0.0) continue;
    try_extend(span, f);
  }
  frontier = generating;
  for (int depth = 0; depth < kBracketDepthCap; ++depth) {
    std::vector<AlgebraVector> next;
    const std::size_t before = span.size();
    for (const auto& g : generating) {
      for (const auto& w : frontier) {
        AlgebraVector br = bracket(g, w);
        if (algebra_norm(br) < 1e-14) continue;
        if (try_extend(span, br)) next.push_back(std::move(br));
      }
    }
    if (span.size() == before || next.empty()) break;  // rank stagnation
    frontier = std::move(next);
  }
  return static_cast<int>(span.size());
}

}  // namespace

int FastSpec::algebra_dim() const {
  switch (manifold) {
    case FastManifold::Circle:
      return 1;
    case FastManifold::Block:
      return block_dim * (block_dim - 1) / 2;
    case FastManifold::FullGroup:
      break;
  }
  return group.algebra_dim();
}

bool FastSpec::has_drift() const { return drift_field.matrix.squaredNorm() > 0.0; }

void FastSpec::validate() const {
  if (epsilon <= 0.0 || epsilon > 1.0)
    throw std::invalid_argument("FastSpec: epsilon must lie in (0, 1]");
  for (const auto& f : diffusion_fields) {
    if (!(f.spec == group)) throw std::invalid_argument("FastSpec: field spec mismatch");
    if (skewness_defect(f) > kSkewnessTol)
      throw std::invalid_argument("FastSpec: diffusion field is not skew");
  }
  if (!(drift_field.spec == group)) throw std::invalid_argument("FastSpec: drift spec mismatch");
  if (skewness_defect(drift_field) > kSkewnessTol)
    throw std::invalid_argument("FastSpec: drift field is not skew");
  if (manifold == FastManifold::Block &&
      (block_dim < 2 || block_dim > group.n || !group.real_family()))
    throw std::invalid_argument("FastSpec: bad block_dim");
}

CircleChart circle_chart(const FastSpec& fast) {
  if (fast.manifold != FastManifold::Circle)
    throw NotTorusError("circle_chart: fast manifold is not declared a circle");
  if (fast.diffusion_fields.size() != 1)
    throw NotTorusError("circle_chart: need exactly one diffusion field");
  const AlgebraVector& x = fast.diffusion_fields[0];
  const double xnorm = algebra_norm(x);
  if (xnorm == 0.0) throw NotTorusError("circle_chart: zero generator");
  AlgebraVector xhat = (1.0 / xnorm) * x;

  // Skew-Hermitian generator: -i Xhat is Hermitian with real eigenvalues mu,
  // so Xhat v = i mu v.
  Eigen::SelfAdjointEigenSolver<Matrix> es(Complex(0, -1) * xhat.matrix);
  if (es.info() != Eigen::Success) throw std::runtime_error("circle_chart: eigensolver failed");
  const Eigen::VectorXd mu = es.eigenvalues();

  double fund = 0.0;
  for (int k = 0; k < mu.size(); ++k) {
    const double a = std::abs(mu(k));
    if (a > 1e-10 && (fund == 0.0 || a < fund)) fund = a;
  }
  if (fund == 0.0) throw NotTorusError("circle_chart: generator has no rotation frequency");
  int probe_index = -1;
  for (int k = 0; k < mu.size(); ++k) {
    const double ratio = mu(k) / fund;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
      throw NotTorusError("circle_chart: orbit does not close (irrational frequency ratio)");
    if (probe_index < 0 && std::abs(mu(k) - fund) < 1e-9) probe_index = k;
  }
  if (probe_index < 0) throw NotTorusError("circle_chart: no +i*fund eigenvector");

  CircleChart chart;
  chart.spec = fast.group;
  chart.unit_generator = std::move(xhat);
  chart.fundamental_freq = fund;
  chart.period = 2.0 * kPi / fund;
  chart.speed_sq = xnorm * xnorm;
  chart.probe = es.eigenvectors().col(probe_index);
  return chart;
}

double CircleChart::theta(const GroupElement& z) const {
  const Complex phase = (probe.adjoint() * z.matrix * probe)(0, 0);
  return std::arg(phase) / fundamental_freq;
}

GroupElement CircleChart::point(double th) const { return exp_map(th * unit_generator); }

GroupElement step_fast(const GroupElement& z, const FastSpec& spec, double h, RngStream& rng) {
  if (h > 0.5 * spec.epsilon * (1.0 + 1e-12))
    throw StepTooLargeError("step_fast: h exceeds 0.5 * epsilon");
  const double ratio = h / spec.epsilon;
  const double noise_scale = std::sqrt(ratio);
  Matrix inc = Matrix::Zero(spec.group.n, spec.group.n);
  for (const auto& f : spec.diffusion_fields) inc += (noise_scale * rng.normal()) * f.matrix;
  if (spec.has_drift()) inc += ratio * spec.drift_field.matrix;
  const GroupElement e = exp_map(AlgebraVector{spec.group, std::move(inc), std::nullopt});
  return GroupElement{spec.group, z.matrix * e.matrix};
}

GroupElement simulate_fast(GroupElement z0, const FastSpec& spec, double T, double h,
                           RngStream& rng) {
  return simulate_fast_visit(std::move(z0), spec, T, h, rng,
                             [](std::size_t, double, const GroupElement&) {});
}

GroupElement embed_so_block(const GroupElement& small, const GroupSpec& ambient) {
  if (!ambient.real_family() || small.spec.n > ambient.n)
    throw std::invalid_argument("embed_so_block: incompatible specs");
  Matrix m = Matrix::Identity(ambient.n, ambient.n);
  m.topLeftCorner(small.spec.n, small.spec.n) = small.matrix;
  return GroupElement{ambient, std::move(m)};
}

GroupElement invariant_sample(const FastSpec& fast, RngStream& rng) {
  switch (fast.manifold) {
    case FastManifold::Circle: {
      const CircleChart chart = circle_chart(fast);
      const double u = rng.uniform01();
      return chart.point((u - 0.5) * chart.period);
    }
    case FastManifold::Block: {
      const GroupSpec sub = GroupSpec::special_orthogonal(fast.block_dim);
      return embed_so_block(haar_sample(sub, rng), fast.group);
    }
    case FastManifold::FullGroup:
      break;
  }
  return haar_sample(fast.group, rng);
}

HormanderReport hormander_check(const std::vector<AlgebraVector>& fields,
                                const std::optional<AlgebraVector>& include_drift,
                                int target_dim) {
  if (fields.empty()) throw std::invalid_argument("hormander_check: empty field list");
  HormanderReport report;
  report.target_dim = target_dim;
  report.generated_dim = bracket_closure_dim(fields, fields);
  report.satisfied = report.generated_dim == target_dim;
  if (include_drift && algebra_norm(*include_drift) > 0.0) {
    std::vector<AlgebraVector> gens = fields;
    gens.push_back(*include_drift);
    // Weak closure: the drift participates in brackets but is not itself part
    // of the spanning set.
    report.weak_generated_dim = bracket_closure_dim(fields, gens);
  }
  return report;
}

HormanderReport hormander_check(const FastSpec& fast) {
  std::optional<AlgebraVector> drift;
  if (fast.has_drift()) drift = fast.drift_field;
  return hormander_check(fast.diffusion_fields, drift, fast.algebra_dim());
}

std::vector<LlnPoint> lln_error(const std::function<double(const GroupElement&)>& f,
                                const FastSpec& spec, const std::vector<double>& t_grid,
                                std::size_t paths, const LlnOptions& opts) {
  if (std::abs(spec.epsilon - 1.0) > 1e-12)
    throw std::invalid_argument("lln_error: probe is defined for eps = 1");
  if (t_grid.empty() || paths == 0) throw std::invalid_argument("lln_error: empty budget");
  std::vector<double> grid = t_grid;
  std::sort(grid.begin(), grid.end());
  const double t_max = grid.back();
  const double h = opts.h;

  // Invariant mean of f.
  double fbar = 0.0;
  if (spec.manifold == FastManifold::Circle) {
    const CircleChart chart = circle_chart(spec);
    const int nodes = 512;
    for (int j = 0; j < nodes; ++j)
      fbar += f(chart.point((static_cast<double>(j) / nodes - 0.5) * chart.period));
    fbar /= nodes;
  } else {
    RngStream rng(RngStream::derive_seed(opts.master_seed, 0xFBA), 0);
    double acc = 0.0;
    for (std::size_t i = 0; i < opts.haar_samples; ++i) acc += f(invariant_sample(spec, rng));
    fbar = acc / static_cast<double>(opts.haar_samples);
  }

  // Snap grid times to step multiples.
  std::vector<std::size_t> record_steps(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j)
    record_steps[j] = static_cast<std::size_t>(std::llround(grid[j] / h));

  const std::size_t nt = grid.size();
  std::vector<double> sq(paths * nt, 0.0);
  parallel_for(paths, opts.workers, [&](std::size_t i) {
    RngStream rng(opts.master_seed, i);
    GroupElement z = identity(spec.group);
    double integral = 0.0;
    double f_prev = f(z);
    std::size_t jrec = 0;
    const std::size_t nsteps = static_cast<std::size_t>(std::llround(t_max / h));
    for (std::size_t k = 1; k <= nsteps && jrec < nt; ++k) {
      z = step_fast(z, spec, h, rng);
      const double f_cur = f(z);
      integral += 0.5 * h * (f_prev + f_cur);
      f_prev = f_cur;
      while (jrec < nt && record_steps[jrec] == k) {
        const double t = static_cast<double>(k) * h;
        const double d = integral / t - fbar;
        sq[i * nt + jrec] = d * d;
        ++jrec;
      }
    }
  });

  std::vector<LlnPoint> out(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < paths; ++i) mean += sq[i * nt + j];
    mean /= static_cast<double>(paths);
    double var = 0.0;
    for (std::size_t i = 0; i < paths; ++i) {
      const double d = sq[i * nt + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(paths > 1 ? paths - 1 : 1);
    const double err = std::sqrt(std::max(0.0, mean));
    const double se_mean = std::sqrt(var / static_cast<double>(paths));
    out[j].t = grid[j];
    out[j].l2_error = err;
    out[j].std_error = err > 1e-30 ? se_mean / (2.0 * err) : 0.0;
  }
  return out;
}

}  // namespace fastslow

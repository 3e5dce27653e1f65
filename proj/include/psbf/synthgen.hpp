#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "psbf/dbn.hpp"
#include "psbf/rng.hpp"
#include "psbf/types.hpp"

namespace psbf {

struct GaussianComponent {
  int mean = 1;        // in {1..n}
  double sigma = 0.0;  // clamped spread; variance is sigma^2
  double variance() const { return sigma * sigma; }
};

/// Per-component record of the region-splitting run, for verification.
struct MixtureTraceEntry {
  int lo = 1, hi = 1;  // region before the draw (inclusive, 1-based)
  int mean = 1;
  double beta = 0.0;
  double sigma = 0.0;
};

/// Randomly place Gaussian bumps over the variable indices 1..n, splitting
/// the remaining index range around each bump so that bumps stay visually
/// separated. The bumps become the correlation areas of the generated edges.
inline std::vector<GaussianComponent> mixture_of_gaussians(
    int n, RngStream& rng, std::vector<MixtureTraceEntry>* trace = nullptr) {
  if (n < 1) throw ModelError("mixture_of_gaussians: need at least one variable");
  const double lambda = 4.0;
  const double sigma_min = 5.0 / lambda;
  const double sigma_max = double(n) / 10.0;

  std::vector<GaussianComponent> out;
  std::deque<std::pair<int, int>> regions;  // contiguous [lo, hi]
  regions.push_back({1, n});
  while (!regions.empty()) {
    auto [lo, hi] = regions.front();
    regions.pop_front();
    const int len = hi - lo + 1;
    const int mu = lo + int(std::ceil(rng.unit_open() * len)) - 1;
    const double beta = std::min(double(mu - lo), double(hi - mu)) / lambda;
    const double sigma = std::min(sigma_max, std::max(sigma_min, rng.unit_open() * beta));
    out.push_back({mu, sigma});
    if (trace) trace->push_back({lo, hi, mu, beta, sigma});
    // keep only indices strictly outside the bump's lambda-sigma window
    const int left_hi = int(std::ceil(mu - sigma * lambda)) - 1;
    const int right_lo = int(std::floor(mu + sigma * lambda)) + 1;
    if (left_hi >= lo) regions.push_back({lo, std::min(left_hi, hi)});
    if (right_lo <= hi) regions.push_back({std::max(right_lo, lo), hi});
  }
  return out;
}

enum class SizeClass { S, M, L, XL };

inline const char* size_class_name(SizeClass s) {
  switch (s) {
    case SizeClass::S: return "S";
    case SizeClass::M: return "M";
    case SizeClass::L: return "L";
    case SizeClass::XL: return "XL";
  }
  return "?";
}

inline SizeClass parse_size_class(const std::string& s) {
  if (s == "S") return SizeClass::S;
  if (s == "M") return SizeClass::M;
  if (s == "L") return SizeClass::L;
  if (s == "XL") return SizeClass::XL;
  throw ModelError("unknown size class: " + s);
}

inline std::pair<int, int> size_class_dims(SizeClass s) {
  switch (s) {
    case SizeClass::S: return {10, 3};
    case SizeClass::M: return {20, 6};
    case SizeClass::L: return {30, 9};
    case SizeClass::XL: return {40, 12};
  }
  return {0, 0};
}

/// Benchmark-process request: size class, degree of passivity, seed.
/// All generated variables are binary.
struct GenSpec {
  SizeClass size = SizeClass::S;
  double passivity = 0.5;
  std::uint64_t seed = 0;
};

/// Generation metadata exposed for verification.
struct GenInfo {
  std::vector<char> designated;           // passive designation per variable
  std::vector<std::vector<int>> targets;  // per action
};

namespace detail {

inline double gaussian_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
}

inline std::vector<double> random_distribution(int d, RngStream& rng) {
  std::vector<double> row(d);
  double sum = 0;
  for (int v = 0; v < d; ++v) {
    row[v] = -std::log(rng.unit_open());
    sum += row[v];
  }
  for (int v = 0; v < d; ++v) row[v] /= sum;
  return row;
}

inline void fill_random_x_cpt(Dbn& dbn, int i, RngStream& rng) {
  Cpt c = Cpt::zeros(dbn.x_cpt_rows(i), dbn.state_dims[i]);
  for (std::size_t r = 0; r < c.rows; ++r) {
    auto row = random_distribution(dbn.state_dims[i], rng);
    for (int v = 0; v < dbn.state_dims[i]; ++v) c.at(r, v) = row[v];
  }
  if (dbn.x_cpt.size() != std::size_t(dbn.n)) dbn.x_cpt.resize(dbn.n);
  dbn.x_cpt[i] = std::move(c);
}

/// Overwrite the rows where every witness member keeps its value with the
/// point mass on the variable's own previous value.
inline void enforce_keep_rows(Dbn& dbn, int j) {
  const auto& tp = dbn.x_t_parents[j];
  const auto& sp = dbn.x_t1_parents[j];
  std::vector<int> dims;
  for (int par : tp) dims.push_back(dbn.state_dims[par]);
  for (int par : sp) dims.push_back(dbn.state_dims[par]);
  Indexer ix = dims.empty() ? Indexer::over({1}) : Indexer::over(dims);
  std::vector<Value> vals;
  for (std::size_t r = 0; r < ix.size(); ++r) {
    ix.decode(r, vals);
    int own = -1;
    bool unchanged = true;
    for (std::size_t a = 0; a < tp.size(); ++a) {
      if (tp[a] == j) {
        own = vals[a];
        continue;
      }
      auto it = std::lower_bound(sp.begin(), sp.end(), tp[a]);
      if (it != sp.end() && *it == tp[a]) {
        std::size_t b = tp.size() + std::size_t(it - sp.begin());
        if (vals[a] != vals[b]) unchanged = false;
      }
    }
    if (!unchanged || own < 0) continue;
    for (int v = 0; v < dbn.state_dims[j]; ++v) dbn.x_cpt[j].at(r, v) = v == own ? 1.0 : 0.0;
  }
}

}  // namespace detail

/// Generate a benchmark process: Gaussian-bump edge placement, passive
/// structure injected at the requested degree, random tables with keep rows
/// enforced for the designated variables, biased binary sensors, and two
/// actions that each resample one to three target variables.
///
/// The draw order is fixed (designations, mixture, time-t edge pass with
/// paired intra-slice additions, intra-slice edge pass, reachability fixes,
/// sensor edges, tables, per-action targets), so the output is a pure
/// function of (n, m, passivity, seed).
inline ProcessModel generate_process_custom(int n, int m, double passivity, std::uint64_t seed,
                                            GenInfo* info = nullptr) {
  RngStream rng = RngStream::derive(seed, 0x9ea2c7d1);
  ProcessModel p;
  for (int i = 0; i < n; ++i) p.state_vars.push_back({i + 1, VarKind::State, 2});
  for (int j = 0; j < m; ++j) p.obs_vars.push_back({j + 1, VarKind::Obs, 2});

  Dbn base;
  base.action_id = "base";
  base.n = n;
  base.m = m;
  base.state_dims.assign(n, 2);
  base.obs_dims.assign(m, 2);

  std::vector<char> designated(n, 0);
  for (int j = 0; j < n; ++j) designated[j] = rng.bernoulli(passivity);
  for (int j = 0; j < n; ++j)
    if (designated[j]) base.add_edge(state_t(j), state_t1(j));

  auto mixture = mixture_of_gaussians(n, rng);
  auto edge_prob = [&](int i, int j) {  // 0-based variable indices
    double best = 0;
    for (const auto& g : mixture) {
      const double peak = detail::gaussian_pdf(g.mean, g.mean, g.sigma);
      const double v = detail::gaussian_pdf(i + 1, g.mean, g.sigma) *
                       detail::gaussian_pdf(j + 1, g.mean, g.sigma) / (peak * peak);
      best = std::max(best, v);
    }
    return best;
  };

  // time-t edges; a designated target also receives the paired intra edge
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (designated[j] && i >= j) continue;
      if (!rng.bernoulli(edge_prob(i, j))) continue;
      base.add_edge(state_t(i), state_t1(j));
      if (designated[j]) base.add_edge(state_t1(i), state_t1(j));
    }
  // intra-slice edges; a designated target also receives the paired t edge
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (!rng.bernoulli(edge_prob(i, j))) continue;
      base.add_edge(state_t1(i), state_t1(j));
      if (designated[j]) base.add_edge(state_t(i), state_t1(j));
    }
  // every variable must have an effect and a cause
  base.finalize();
  for (int i = 0; i < n; ++i) {
    bool has_out = false;
    for (int j = 0; j < n; ++j)
      if (std::binary_search(base.x_t_parents[j].begin(), base.x_t_parents[j].end(), i))
        has_out = true;
    if (!has_out) base.add_edge(state_t(i), state_t1(i));
  }
  base.finalize();
  for (int j = 0; j < n; ++j)
    if (base.x_t_parents[j].empty() && base.x_t1_parents[j].empty())
      base.add_edge(state_t(j), state_t1(j));
  // sensor edges
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (rng.bernoulli(0.1)) base.add_edge(state_t1(i), obs_t1(j));
  base.finalize();
  for (int j = 0; j < m; ++j)
    if (base.y_x_parents[j].empty())
      base.add_edge(state_t1(rng.uniform_int(0, n - 1)), obs_t1(j));
  base.finalize();

  for (int i = 0; i < n; ++i) detail::fill_random_x_cpt(base, i, rng);
  for (int j = 0; j < n; ++j)
    if (designated[j]) detail::enforce_keep_rows(base, j);

  // biased binary sensors: each probability lands in [0, 0.2] or [0.8, 1]
  base.y_cpt.resize(m);
  for (int j = 0; j < m; ++j) {
    Cpt c = Cpt::zeros(base.y_cpt_rows(j), 2);
    for (std::size_t r = 0; r < c.rows; ++r) {
      double p1 = rng.bernoulli(0.5) ? rng.unit() * 0.2 : 0.8 + rng.unit() * 0.2;
      c.at(r, 0) = 1.0 - p1;
      c.at(r, 1) = p1;
    }
    base.y_cpt[j] = std::move(c);
  }

  if (info) {
    info->designated = designated;
    info->targets.clear();
  }

  // two actions: each picks one to three targets, adds fresh time-t edges
  // with probability 0.1, and resamples the target tables (designated
  // passivity is lost for targets)
  for (int a = 0; a < 2; ++a) {
    Dbn dbn = base;
    dbn.action_id = "a" + std::to_string(a);
    int target_count = rng.uniform_int(1, 3);
    target_count = std::min(target_count, n);
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> targets;
    for (int t = 0; t < target_count; ++t) {
      int pick = rng.uniform_int(0, int(pool.size()) - 1);
      targets.push_back(pool[pick]);
      pool.erase(pool.begin() + pick);
    }
    std::sort(targets.begin(), targets.end());
    for (int tgt : targets)
      for (int i = 0; i < n; ++i)
        if (rng.bernoulli(0.1)) dbn.add_edge(state_t(i), state_t1(tgt));
    dbn.finalize();
    for (int tgt : targets) detail::fill_random_x_cpt(dbn, tgt, rng);
    if (info) info->targets.push_back(targets);
    p.actions.push_back(std::move(dbn));
  }
  return p;
}

inline ProcessModel generate_process(const GenSpec& spec, GenInfo* info = nullptr) {
  auto [n, m] = size_class_dims(spec.size);
  return generate_process_custom(n, m, spec.passivity, spec.seed, info);
}

// ---------------------------------------------------------------------------
// Trajectory simulation

struct TrajectoryStep {
  int action = 0;
  StateTuple state;
  ObsTuple obs;
};

struct Trajectory {
  StateTuple initial;
  std::vector<TrajectoryStep> steps;
};

/// Roll the process forward: uniformly random action each step, one sampled
/// transition and observation. All filters replay the same trajectory, so
/// comparisons share the action/observation sequence.
inline Trajectory simulate_trajectory(const ProcessModel& process, int steps, RngStream& rng) {
  Trajectory out;
  const auto dims = process.state_dims();
  out.initial.resize(dims.size());
  for (std::size_t v = 0; v < dims.size(); ++v)
    out.initial[v] = rng.uniform_int(0, dims[v] - 1);
  StateTuple s = out.initial;
  for (int t = 0; t < steps; ++t) {
    TrajectoryStep step;
    step.action = int(rng.below(process.actions.size()));
    auto [s2, o] = sample_step(process.actions[step.action], s, rng);
    step.state = s2;
    step.obs = o;
    s = std::move(s2);
    out.steps.push_back(std::move(step));
  }
  return out;
}

}  // namespace psbf

#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "psbf/clustering.hpp"
#include "psbf/dbn.hpp"
#include "psbf/types.hpp"

namespace psbf {

/// KL divergence requires the second argument to dominate the first.
struct AbsoluteContinuityError : std::runtime_error {
  explicit AbsoluteContinuityError(const std::string& what) : std::runtime_error(what) {}
};

/// Relative entropy sum_x p(x) ln(p(x)/q(x)), with 0 ln(0/q) = 0. A positive
/// floor lifts q entries below it before evaluation (no renormalisation);
/// without a floor, a support violation is an error.
inline double relative_entropy(const std::vector<double>& p, const std::vector<double>& q,
                               double floor = 0.0) {
  if (p.size() != q.size())
    throw ModelError("relative_entropy: distributions have different support sizes");
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    double qi = q[i];
    if (floor > 0.0 && qi < floor) qi = floor;
    if (qi <= 0.0)
      throw AbsoluteContinuityError(
          "relative_entropy: q vanishes where p does not (enable flooring to compare)");
    acc += p[i] * std::log(p[i] / qi);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Mixing rates

/// Mixing rate of a cluster transition: the minimum over conditioning pairs
/// of the overlap of their next-value distributions. 1 means the cluster
/// forgets its inputs in one step; 0 means two inputs lead to disjoint
/// futures.
inline double mixing_rate(const ClusterTransition& ct) {
  const std::size_t rows = ct.row_ix.size();
  const std::size_t cols = ct.col_ix.size();
  double best = 1.0;
  for (std::size_t a = 0; a < rows && best > 0.0; ++a)
    for (std::size_t b = a; b < rows; ++b) {
      double overlap = 0;
      const double* ra = &ct.table[a * cols];
      const double* rb = &ct.table[b * cols];
      for (std::size_t c = 0; c < cols; ++c) overlap += std::min(ra[c], rb[c]);
      if (overlap < best) best = overlap;
      if (best == 0.0) break;
    }
  return best;
}

/// Mixing rate of one cluster of the given action. The cluster must be
/// closed under its intra-slice parents, otherwise its local transition is
/// not defined.
inline double mixing_rate_cluster(const Dbn& dbn, const std::vector<int>& members,
                                  const std::vector<int>& state_dims,
                                  std::size_t cell_cap = kClusterTableCellCap) {
  StateClusterView view;
  view.members = members;
  std::set<int> t_union;
  for (int i : members) {
    LocalCpt lc;
    lc.t_parents = dbn.x_t_parents[i];
    for (int par : dbn.x_t1_parents[i]) {
      if (!std::binary_search(members.begin(), members.end(), par))
        throw ModelError("mixing_rate_cluster: cluster is not closed under slice parents");
      lc.t1_parents.push_back(par);
    }
    lc.cpt = dbn.x_cpt[i];
    for (int par : lc.t_parents) t_union.insert(par);
    view.local.push_back(std::move(lc));
  }
  view.t_parent_union.assign(t_union.begin(), t_union.end());
  return mixing_rate(build_cluster_transition(view, state_dims, cell_cap));
}

/// Dependency fan-in/fan-out of a clustering under one action: how many
/// other clusters any cluster reads from (r) and writes into (q), both
/// clamped to at least one.
inline std::pair<int, int> cluster_fan(const Clustering& c, const Dbn& dbn) {
  const auto& sc = c.state_clusters;
  std::vector<std::set<int>> depends(sc.size());
  for (std::size_t k = 0; k < sc.size(); ++k) {
    std::set<int> t_parents;
    for (int i : sc[k])
      for (int par : dbn.x_t_parents[i]) t_parents.insert(par);
    for (std::size_t k2 = 0; k2 < sc.size(); ++k2) {
      if (k2 == k) continue;
      for (int v : sc[k2])
        if (t_parents.count(v)) depends[k].insert(int(k2));
    }
  }
  int r = 1, q = 1;
  std::vector<int> influences(sc.size(), 0);
  for (std::size_t k = 0; k < sc.size(); ++k) {
    r = std::max(r, int(depends[k].size()));
    for (int k2 : depends[k]) influences[k2]++;
  }
  for (int inf : influences) q = std::max(q, inf);
  return {r, q};
}

/// Mixing rate of one action's network under a clustering. When the clusters
/// are closed and disjoint and the observation variables form one cluster,
/// composes the per-cluster rates as (min_k rate_k / r)^q; otherwise falls
/// back to the single cluster spanning the whole slice.
inline double mixing_rate_dbn(const Dbn& dbn, const Clustering& c,
                              const std::vector<int>& state_dims,
                              std::size_t cell_cap = kClusterTableCellCap) {
  bool a1 = true;
  for (const auto& ck : c.state_clusters)
    for (int i : ck)
      for (int par : dbn.x_t1_parents[i])
        if (!std::binary_search(ck.begin(), ck.end(), par)) a1 = false;
  bool a2 = detail::pairwise_disjoint(c.state_clusters);
  bool single_obs = c.obs_clusters.size() <= 1;
  if (a1 && a2 && single_obs) {
    double min_rate = 1.0;
    for (const auto& ck : c.state_clusters)
      min_rate = std::min(min_rate, mixing_rate_cluster(dbn, ck, state_dims, cell_cap));
    auto [r, q] = cluster_fan(c, dbn);
    return std::pow(min_rate / double(r), double(q));
  }
  std::vector<int> all(state_dims.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = int(i);
  return mixing_rate_cluster(dbn, all, state_dims, cell_cap);
}

// ---------------------------------------------------------------------------
// Error-bound report

/// Empirical check of the contraction bound: the running mean of the
/// per-step divergence from the dense filter should stay below
/// eps_hat / gamma. A zero mixing rate makes the bound vacuous.
struct Theorem3Report {
  bool vacuous = false;
  double bound = std::numeric_limits<double>::infinity();
  double final_running_mean = 0.0;
  std::vector<int> violation_steps;
  bool holds() const { return !vacuous && violation_steps.empty(); }
};

inline Theorem3Report bound_check(const std::vector<double>& kl_per_step, double eps_hat,
                                  double gamma) {
  Theorem3Report rep;
  if (gamma <= 0.0) {
    rep.vacuous = true;
    return rep;
  }
  rep.bound = eps_hat / gamma;
  double sum = 0;
  for (std::size_t t = 0; t < kl_per_step.size(); ++t) {
    sum += kl_per_step[t];
    double mean = sum / double(t + 1);
    rep.final_running_mean = mean;
    if (mean > rep.bound) rep.violation_steps.push_back(int(t));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Run traces

/// One row of the per-step statistics stream.
struct StepRecord {
  int step = 0;
  std::string action;
  int factors_total = 0;
  int transition_updated = 0;
  int observation_updated = 0;
  std::uint64_t entries_evaluated = 0;
  double kl_exact = std::numeric_limits<double>::quiet_NaN();  // NaN = unavailable
  std::uint64_t wall_nanos = 0;
  std::string status = "ok";
};

struct RunTrace {
  std::string process;
  std::string size_class;
  double passivity = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  std::string filter;
  std::uint64_t precompute_nanos = 0;
  std::vector<StepRecord> records;
};

inline const char* trace_csv_header() {
  return "process,size,passivity,seed,filter,step,action,factors_total,transition_updated,"
         "observation_updated,entries_evaluated,kl_exact,wall_nanos,status";
}

inline void write_trace_csv(std::ostream& os, const RunTrace& trace) {
  auto prefix = [&]() -> std::ostream& {
    os << trace.process << "," << trace.size_class << ",";
    if (std::isnan(trace.passivity))
      os << "";
    else
      os << trace.passivity;
    os << "," << trace.seed << "," << trace.filter << ",";
    return os;
  };
  // precomputation reported as a pseudo-step so aggregation sees it
  prefix() << -1 << ",,0,0,0,0,," << trace.precompute_nanos << ",precompute\n";
  char buf[64];
  for (const auto& r : trace.records) {
    prefix() << r.step << "," << r.action << "," << r.factors_total << ","
             << r.transition_updated << "," << r.observation_updated << ","
             << r.entries_evaluated << ",";
    if (!std::isnan(r.kl_exact)) {
      std::snprintf(buf, sizeof buf, "%.17g", r.kl_exact);
      os << buf;
    }
    os << "," << r.wall_nanos << "," << r.status << "\n";
  }
}

/// Flat parsed view of a trace CSV row; used by the aggregation command.
struct TraceRow {
  std::string process;
  std::string size_class;
  double passivity = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  std::string filter;
  int step = 0;
  std::string action;
  int factors_total = 0;
  int transition_updated = 0;
  int observation_updated = 0;
  std::uint64_t entries_evaluated = 0;
  double kl_exact = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t wall_nanos = 0;
  std::string status;
};

inline std::vector<TraceRow> read_trace_csv(std::istream& is) {
  std::vector<TraceRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("process,", 0) == 0) continue;  // header
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 14) cells.push_back("");
    TraceRow r;
    r.process = cells[0];
    r.size_class = cells[1];
    if (!cells[2].empty()) r.passivity = std::stod(cells[2]);
    if (!cells[3].empty()) r.seed = std::stoull(cells[3]);
    r.filter = cells[4];
    if (!cells[5].empty()) r.step = std::stoi(cells[5]);
    r.action = cells[6];
    if (!cells[7].empty()) r.factors_total = std::stoi(cells[7]);
    if (!cells[8].empty()) r.transition_updated = std::stoi(cells[8]);
    if (!cells[9].empty()) r.observation_updated = std::stoi(cells[9]);
    if (!cells[10].empty()) r.entries_evaluated = std::stoull(cells[10]);
    if (!cells[11].empty()) r.kl_exact = std::stod(cells[11]);
    if (!cells[12].empty()) r.wall_nanos = std::stoull(cells[12]);
    r.status = cells[13];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace psbf

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "psbf/clustering.hpp"
#include "psbf/dbn.hpp"
#include "psbf/types.hpp"

namespace psbf {

enum class Passivity { Passive, Active, Undetermined };

/// Verdict for one state variable under one action. `phi` is the witness
/// set: time-t parents such that the variable can change its value only when
/// one of them changed. Minimal in cardinality, lexicographically first
/// among equal-size witnesses.
struct PassivityVerdict {
  int variable = -1;
  Passivity status = Passivity::Active;
  std::vector<int> phi;

  bool passive() const { return status == Passivity::Passive; }
  /// Undetermined verdicts are never trusted for skipping.
  bool effectively_active() const { return status != Passivity::Passive; }
};

struct PassivityOptions {
  /// Accept only witnesses whose table sweep holds on every conditioning row,
  /// including rows no positive-probability transition can realize. This is
  /// a stronger property than passivity; off by default.
  bool strict = false;
  /// Candidate pools larger than this make the subset enumeration
  /// intractable; the verdict degrades to Undetermined.
  int parent_cap = 16;
  /// Node budget for the reachable-counterexample search in non-strict mode.
  std::size_t search_cap = std::size_t(1) << 22;
};

namespace detail {

/// Sweep all conditioning rows of x_i's table with the phi members held
/// unchanged across slices: the variable must keep its previous value with
/// probability one. Checks the witness property at table level, ignoring
/// whether rows are reachable.
inline bool witness_sweep_holds(const Dbn& dbn, int i, const std::vector<int>& phi) {
  const auto& tp = dbn.x_t_parents[i];
  const auto& sp = dbn.x_t1_parents[i];
  const int di = dbn.state_dims[i];

  // slot classification over the table's parent tuple (t-parents then
  // t+1-parents)
  enum SlotRole { Free, Own, PhiT, PhiT1 };
  struct Slot {
    SlotRole role;
    int var;
    int dim;
    int phi_pos;  // for PhiT / PhiT1
  };
  std::vector<Slot> slots;
  for (int par : tp) {
    Slot s{Free, par, dbn.state_dims[par], -1};
    if (par == i) s.role = Own;
    auto it = std::find(phi.begin(), phi.end(), par);
    if (it != phi.end()) {
      s.role = PhiT;
      s.phi_pos = int(it - phi.begin());
    }
    slots.push_back(s);
  }
  for (int par : sp) {
    Slot s{Free, par, dbn.state_dims[par], -1};
    auto it = std::find(phi.begin(), phi.end(), par);
    if (it != phi.end()) {
      s.role = PhiT1;
      s.phi_pos = int(it - phi.begin());
    }
    slots.push_back(s);
  }

  std::vector<int> free_dims, phi_dims(phi.size());
  for (const auto& s : slots)
    if (s.role == Free) free_dims.push_back(s.dim);
  for (std::size_t k = 0; k < phi.size(); ++k) phi_dims[k] = dbn.state_dims[phi[k]];

  Indexer free_ix = free_dims.empty() ? Indexer::over({1}) : Indexer::over(free_dims);
  Indexer phi_ix = phi.empty() ? Indexer::over({1}) : Indexer::over(phi_dims);
  std::vector<Value> free_vals, phi_vals;

  const Cpt& cpt = dbn.x_cpt[i];
  for (std::size_t pf = 0; pf < phi_ix.size(); ++pf) {
    if (!phi.empty())
      phi_ix.decode(pf, phi_vals);
    else
      phi_vals.clear();
    for (std::size_t ff = 0; ff < free_ix.size(); ++ff) {
      if (!free_dims.empty())
        free_ix.decode(ff, free_vals);
      else
        free_vals.clear();
      for (int own = 0; own < di; ++own) {
        std::size_t row = 0;
        std::size_t fpos = 0;
        for (const auto& s : slots) {
          int v = 0;
          switch (s.role) {
            case Own: v = own; break;
            case PhiT:
            case PhiT1: v = phi_vals[s.phi_pos]; break;
            case Free: v = free_vals[fpos++]; break;
          }
          row = row * std::size_t(s.dim) + std::size_t(v);
        }
        if (cpt.at(row, own) < 1.0) return false;
      }
    }
  }
  return true;
}

/// Search for a positive-probability transition in which every phi member
/// keeps its value but x_i changes. Only the intra-slice ancestor closure of
/// {x_i} and phi needs to be searched; everything else always extends.
/// Returns 1 if a counterexample exists, 0 if none, -1 on budget exhaustion.
inline int find_change_witness(const Dbn& dbn, int i, const std::vector<int>& phi,
                               std::size_t budget) {
  // ancestor closure within the t+1 slice
  std::set<int> closure;
  std::deque<int> queue;
  auto push = [&](int v) {
    if (closure.insert(v).second) queue.push_back(v);
  };
  push(i);
  for (int p : phi) push(p);
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int par : dbn.x_t1_parents[v]) push(par);
  }
  std::vector<int> order;  // topological, restricted to the closure
  {
    auto full = dbn.state_topo_order();
    if (!full) throw ModelError("find_change_witness: cyclic t+1 slice");
    for (int v : *full)
      if (closure.count(v)) order.push_back(v);
  }
  // time-t inputs: t-parents of the closure, phi itself, and x_i^t
  std::set<int> t_inputs_set(phi.begin(), phi.end());
  t_inputs_set.insert(i);
  for (int v : order)
    for (int par : dbn.x_t_parents[v]) t_inputs_set.insert(par);
  std::vector<int> t_inputs(t_inputs_set.begin(), t_inputs_set.end());

  std::vector<Value> t_val(dbn.n, -1), next_val(dbn.n, -1);
  std::size_t nodes = 0;
  bool capped = false;

  auto row_of = [&](int v) {
    std::size_t row = 0;
    for (int par : dbn.x_t_parents[v])
      row = row * std::size_t(dbn.state_dims[par]) + std::size_t(t_val[par]);
    for (int par : dbn.x_t1_parents[v])
      row = row * std::size_t(dbn.state_dims[par]) + std::size_t(next_val[par]);
    return row;
  };

  std::function<bool(std::size_t)> assign_next = [&](std::size_t pos) -> bool {
    if (capped) return false;
    if (++nodes > budget) {
      capped = true;
      return false;
    }
    if (pos == order.size()) return true;  // all closure constraints satisfied
    int v = order[pos];
    std::size_t row = row_of(v);
    const Cpt& cpt = dbn.x_cpt[v];
    bool is_phi = std::find(phi.begin(), phi.end(), v) != phi.end();
    if (is_phi) {
      // forced to keep its time-t value
      if (cpt.at(row, t_val[v]) <= 0.0) return false;
      next_val[v] = t_val[v];
      if (assign_next(pos + 1)) return true;
      next_val[v] = -1;
      return false;
    }
    for (int w = 0; w < dbn.state_dims[v]; ++w) {
      if (v == i && w == t_val[i]) continue;  // must change
      if (cpt.at(row, w) <= 0.0) continue;
      next_val[v] = w;
      if (assign_next(pos + 1)) return true;
    }
    next_val[v] = -1;
    return false;
  };

  std::function<bool(std::size_t)> assign_t = [&](std::size_t pos) -> bool {
    if (capped) return false;
    if (++nodes > budget) {
      capped = true;
      return false;
    }
    if (pos == t_inputs.size()) return assign_next(0);
    int v = t_inputs[pos];
    for (int w = 0; w < dbn.state_dims[v]; ++w) {
      t_val[v] = w;
      if (assign_t(pos + 1)) return true;
    }
    t_val[v] = -1;
    return false;
  };

  bool found = assign_t(0);
  if (capped) return -1;
  return found ? 1 : 0;
}

/// Visit k-subsets of the sorted pool in ascending cardinality and
/// lexicographic order within each cardinality. Stops when fn returns true.
template <typename Fn>
void for_each_subset_ascending(const std::vector<int>& pool, Fn&& fn) {
  const int n = int(pool.size());
  for (int k = 0; k <= n; ++k) {
    std::vector<int> pick(k);
    for (int j = 0; j < k; ++j) pick[j] = j;
    while (true) {
      std::vector<int> subset(k);
      for (int j = 0; j < k; ++j) subset[j] = pool[pick[j]];
      if (fn(subset)) return;
      int j = k - 1;
      while (j >= 0 && pick[j] == n - k + j) --j;
      if (j < 0) break;
      ++pick[j];
      for (int l = j + 1; l < k; ++l) pick[l] = pick[l - 1] + 1;
    }
  }
}

}  // namespace detail

/// Decide whether a state variable is passive under the given action, and
/// return the smallest witness set. Candidates are enumerated in ascending
/// cardinality with a lexicographic tie-break, so the first accepted witness
/// is minimal. Passivity is a property of the action alone, never of the
/// process state, so one call per (action, variable) suffices.
inline PassivityVerdict detect_passive(int var, const Dbn& dbn, PassivityOptions opts = {}) {
  PassivityVerdict out;
  out.variable = var;
  std::vector<int> pool;
  for (int p : dbn.x_t_parents[var])
    if (p != var) pool.push_back(p);
  if (int(pool.size()) > opts.parent_cap) {
    out.status = Passivity::Undetermined;
    return out;
  }
  bool saw_cap = false;
  detail::for_each_subset_ascending(pool, [&](const std::vector<int>& phi) {
    for (int p : phi)
      if (!std::binary_search(dbn.x_t1_parents[var].begin(), dbn.x_t1_parents[var].end(), p))
        return false;  // edge clause violated
    if (detail::witness_sweep_holds(dbn, var, phi)) {
      out.status = Passivity::Passive;
      out.phi = phi;
      return true;
    }
    if (opts.strict) return false;
    int witness = detail::find_change_witness(dbn, var, phi, opts.search_cap);
    if (witness == 0) {
      out.status = Passivity::Passive;
      out.phi = phi;
      return true;
    }
    if (witness < 0) saw_cap = true;
    return false;
  });
  if (out.status != Passivity::Passive)
    out.status = saw_cap ? Passivity::Undetermined : Passivity::Active;
  return out;
}

inline std::vector<PassivityVerdict> detect_all_passive(const Dbn& dbn,
                                                        PassivityOptions opts = {}) {
  std::vector<PassivityVerdict> out;
  out.reserve(dbn.n);
  for (int i = 0; i < dbn.n; ++i) out.push_back(detect_passive(i, dbn, opts));
  return out;
}

/// True iff a chain of intra-slice edges leads from src to dst in which each
/// successor is passive with respect to its predecessor (the predecessor's
/// time-t counterpart belongs to the successor's witness set). Chains have
/// at least one edge; src should be active per the verdicts.
inline bool causal_path_exists(int src, int dst, const Dbn& dbn,
                               const std::vector<PassivityVerdict>& verdicts) {
  std::vector<char> reached(dbn.n, 0);
  std::deque<int> queue = {src};
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int w : dbn.x_t1_children[u]) {
      if (reached[w]) continue;
      const auto& vw = verdicts[w];
      if (!vw.passive()) continue;
      if (std::find(vw.phi.begin(), vw.phi.end(), u) == vw.phi.end()) continue;
      if (w == dst) return true;
      reached[w] = 1;
      queue.push_back(w);
    }
  }
  return false;
}

/// All variables reachable from src along causal-path edges.
inline std::vector<int> causal_reach(int src, const Dbn& dbn,
                                     const std::vector<PassivityVerdict>& verdicts) {
  std::vector<char> reached(dbn.n, 0);
  std::deque<int> queue = {src};
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int w : dbn.x_t1_children[u]) {
      if (reached[w]) continue;
      const auto& vw = verdicts[w];
      if (!vw.passive()) continue;
      if (std::find(vw.phi.begin(), vw.phi.end(), u) == vw.phi.end()) continue;
      reached[w] = 1;
      queue.push_back(w);
    }
  }
  std::vector<int> out;
  for (int v = 0; v < dbn.n; ++v)
    if (reached[v]) out.push_back(v);
  return out;
}

/// Clusters whose propagation step can be omitted without change: every
/// member is passive and no active (or undetermined) variable reaches a
/// member along a causal path. Active variables are processed in descending
/// intra-slice out-degree (index-ascending tie-break) so the candidate set
/// empties early; the result does not depend on that order.
inline std::set<int> skippable_clusters(const std::vector<std::vector<int>>& state_clusters,
                                        const Dbn& dbn,
                                        const std::vector<PassivityVerdict>& verdicts) {
  std::set<int> skip;
  for (std::size_t k = 0; k < state_clusters.size(); ++k) {
    bool all_passive = true;
    for (int v : state_clusters[k]) all_passive &= verdicts[v].passive();
    if (all_passive) skip.insert(int(k));
  }
  std::vector<int> actives;
  for (int v = 0; v < dbn.n; ++v)
    if (verdicts[v].effectively_active()) actives.push_back(v);
  std::sort(actives.begin(), actives.end(), [&](int a, int b) {
    int da = dbn.t1_out_degree(a), db = dbn.t1_out_degree(b);
    if (da != db) return da > db;
    return a < b;
  });
  for (int u : actives) {
    if (skip.empty()) break;
    auto reach = causal_reach(u, dbn, verdicts);
    for (int w : reach)
      for (std::size_t k = 0; k < state_clusters.size(); ++k)
        if (skip.count(int(k)) &&
            std::binary_search(state_clusters[k].begin(), state_clusters[k].end(), w))
          skip.erase(int(k));
  }
  return skip;
}

/// Observation-step structure: which observation variables each state
/// cluster can influence (via directed paths), and which observation
/// clusters are therefore relevant when conditioning its factor.
struct ObsDependence {
  std::vector<std::vector<int>> y_k;           // per state cluster
  std::vector<std::vector<int>> relevant_obs;  // per state cluster: obs cluster indices
};

inline ObsDependence compute_obs_dependence(const Clustering& c, const Dbn& dbn) {
  ObsDependence out;
  out.y_k.resize(c.state_clusters.size());
  out.relevant_obs.resize(c.state_clusters.size());
  // obs -> obs children
  std::vector<std::vector<int>> y_children(dbn.m);
  for (int j = 0; j < dbn.m; ++j)
    for (int par : dbn.y_y_parents[j]) y_children[par].push_back(j);
  std::vector<std::vector<int>> x_obs_children(dbn.n);
  for (int j = 0; j < dbn.m; ++j)
    for (int par : dbn.y_x_parents[j]) x_obs_children[par].push_back(j);

  for (std::size_t k = 0; k < c.state_clusters.size(); ++k) {
    std::vector<char> x_seen(dbn.n, 0), y_seen(std::max(dbn.m, 1), 0);
    std::deque<int> xq, yq;
    for (int v : c.state_clusters[k]) {
      x_seen[v] = 1;
      xq.push_back(v);
    }
    while (!xq.empty()) {
      int u = xq.front();
      xq.pop_front();
      for (int w : dbn.x_t1_children[u])
        if (!x_seen[w]) {
          x_seen[w] = 1;
          xq.push_back(w);
        }
      for (int j : x_obs_children[u])
        if (!y_seen[j]) {
          y_seen[j] = 1;
          yq.push_back(j);
        }
    }
    while (!yq.empty()) {
      int u = yq.front();
      yq.pop_front();
      for (int w : y_children[u])
        if (!y_seen[w]) {
          y_seen[w] = 1;
          yq.push_back(w);
        }
    }
    for (int j = 0; j < dbn.m; ++j)
      if (y_seen[j]) out.y_k[k].push_back(j);
    for (std::size_t l = 0; l < c.obs_clusters.size(); ++l) {
      bool hit = false;
      for (int j : c.obs_clusters[l])
        if (j < dbn.m && y_seen[j]) hit = true;
      if (hit) out.relevant_obs[k].push_back(int(l));
    }
  }
  return out;
}

/// Per-action skip structure for one clustering.
struct ActionSkipAnalysis {
  std::set<int> transition_skippable;
  ObsDependence obs;
};

/// Full per-process report: verdicts per action plus skip analyses for any
/// number of clusterings. Verdicts are computed once per action; they are
/// invariant of the process state.
struct PassivityReport {
  std::vector<std::string> action_ids;
  std::vector<std::vector<PassivityVerdict>> verdicts;  // [action][variable]
  std::map<std::string, std::vector<ActionSkipAnalysis>> analyses;  // clustering -> per action
};

inline PassivityReport build_passivity_report(const ProcessModel& process,
                                              const std::vector<Clustering>& clusterings,
                                              PassivityOptions opts = {}) {
  PassivityReport rep;
  for (const auto& dbn : process.actions) {
    rep.action_ids.push_back(dbn.action_id);
    rep.verdicts.push_back(detect_all_passive(dbn, opts));
  }
  for (const auto& c : clusterings) {
    std::vector<ActionSkipAnalysis> per_action;
    for (std::size_t a = 0; a < process.actions.size(); ++a) {
      ActionSkipAnalysis an;
      an.transition_skippable =
          skippable_clusters(c.state_clusters, process.actions[a], rep.verdicts[a]);
      an.obs = compute_obs_dependence(c, process.actions[a]);
      per_action.push_back(std::move(an));
    }
    rep.analyses[c.name] = std::move(per_action);
  }
  return rep;
}

}  // namespace psbf

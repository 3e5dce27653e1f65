#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "psbf/dbn.hpp"
#include "psbf/types.hpp"

namespace psbf {

inline constexpr std::size_t kCliqueCap = std::size_t(1) << 16;
inline constexpr std::size_t kClusterTableCellCap = std::size_t(1) << 24;

/// State clusters partition-or-cover X^{t+1}; observation clusters cover
/// Y^{t+1}. Members are 0-based variable indices in ascending order.
struct Clustering {
  std::string name;
  std::vector<std::vector<int>> state_clusters;
  std::vector<std::vector<int>> obs_clusters;

  bool covers(int n, int m) const {
    std::vector<char> sc(n, 0), oc(m, 0);
    for (const auto& c : state_clusters)
      for (int v : c) sc[v] = 1;
    for (const auto& c : obs_clusters)
      for (int v : c) oc[v] = 1;
    return std::all_of(sc.begin(), sc.end(), [](char x) { return x; }) &&
           std::all_of(oc.begin(), oc.end(), [](char x) { return x; });
  }
};

namespace detail {

/// Directed intra-slice graph, as an edge union over all actions.
struct SliceGraph {
  int count = 0;
  std::vector<std::uint64_t> parents;   // adjacency masks
  std::vector<std::uint64_t> children;

  void add(int from, int to) {
    parents[to] |= (1ull << from);
    children[from] |= (1ull << to);
  }
};

inline SliceGraph state_slice_union(const ProcessModel& p) {
  if (p.n() > 64) throw InfeasibleError("clustering methods support at most 64 state variables");
  SliceGraph g;
  g.count = p.n();
  g.parents.assign(g.count, 0);
  g.children.assign(g.count, 0);
  for (const auto& a : p.actions)
    for (int i = 0; i < a.n; ++i)
      for (int par : a.x_t1_parents[i]) g.add(par, i);
  return g;
}

inline SliceGraph obs_slice_union(const ProcessModel& p) {
  if (p.m() > 64) throw InfeasibleError("clustering methods support at most 64 observation variables");
  SliceGraph g;
  g.count = p.m();
  g.parents.assign(std::max(g.count, 1), 0);
  g.children.assign(std::max(g.count, 1), 0);
  for (const auto& a : p.actions)
    for (int j = 0; j < a.m; ++j)
      for (int par : a.y_y_parents[j]) g.add(par, j);
  return g;
}

inline std::vector<int> mask_to_sorted(std::uint64_t mask) {
  std::vector<int> out;
  while (mask) {
    int b = __builtin_ctzll(mask);
    out.push_back(b);
    mask &= mask - 1;
  }
  return out;
}

/// Connected components of the undirected skeleton.
inline std::vector<std::vector<int>> components(const SliceGraph& g) {
  std::vector<std::uint64_t> adj(g.count, 0);
  for (int v = 0; v < g.count; ++v) adj[v] = g.parents[v] | g.children[v];
  std::vector<char> seen(g.count, 0);
  std::vector<std::vector<int>> out;
  for (int v = 0; v < g.count; ++v) {
    if (seen[v]) continue;
    std::uint64_t comp = 0;
    std::vector<int> stack = {v};
    seen[v] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      comp |= (1ull << u);
      auto nbrs = mask_to_sorted(adj[u]);
      for (int w : nbrs)
        if (!seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
    }
    out.push_back(mask_to_sorted(comp));
  }
  return out;
}

/// Moral graph: skeleton plus edges between co-parents of a common child.
inline std::vector<std::uint64_t> moralize(const SliceGraph& g) {
  std::vector<std::uint64_t> adj(g.count, 0);
  for (int v = 0; v < g.count; ++v) adj[v] |= g.parents[v] | g.children[v];
  for (int v = 0; v < g.count; ++v) {
    auto ps = mask_to_sorted(g.parents[v]);
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (std::size_t j = i + 1; j < ps.size(); ++j) {
        adj[ps[i]] |= (1ull << ps[j]);
        adj[ps[j]] |= (1ull << ps[i]);
      }
  }
  for (int v = 0; v < g.count; ++v) adj[v] &= ~(1ull << v);
  return adj;
}

inline void bron_kerbosch(std::uint64_t r, std::uint64_t p, std::uint64_t x,
                          const std::vector<std::uint64_t>& adj,
                          std::vector<std::uint64_t>& cliques) {
  if (p == 0 && x == 0) {
    if (cliques.size() >= kCliqueCap)
      throw InfeasibleError("maximal clique enumeration exceeded the cap");
    cliques.push_back(r);
    return;
  }
  std::uint64_t px = p | x;
  int pivot = __builtin_ctzll(px);
  int best = -1;
  std::uint64_t cand = px;
  while (cand) {
    int u = __builtin_ctzll(cand);
    cand &= cand - 1;
    int deg = __builtin_popcountll(p & adj[u]);
    if (deg > best) {
      best = deg;
      pivot = u;
    }
  }
  std::uint64_t ext = p & ~adj[pivot];
  while (ext) {
    int v = __builtin_ctzll(ext);
    ext &= ext - 1;
    std::uint64_t bit = 1ull << v;
    bron_kerbosch(r | bit, p & adj[v], x & adj[v], adj, cliques);
    p &= ~bit;
    x |= bit;
  }
}

inline std::vector<std::vector<int>> maximal_cliques(const std::vector<std::uint64_t>& adj) {
  int count = int(adj.size());
  std::vector<std::uint64_t> cliques;
  if (count > 0) {
    std::uint64_t all = count == 64 ? ~0ull : (1ull << count) - 1;
    bron_kerbosch(0, all, 0, adj, cliques);
  }
  std::vector<std::vector<int>> out;
  for (auto c : cliques) out.push_back(mask_to_sorted(c));
  std::sort(out.begin(), out.end());
  return out;
}

/// Truncate overlapping cliques into disjoint clusters: larger cliques claim
/// their variables first (lexicographic tie-break); fully claimed cliques
/// are dropped.
inline std::vector<std::vector<int>> make_disjoint(std::vector<std::vector<int>> cliques) {
  std::stable_sort(cliques.begin(), cliques.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a < b;
  });
  std::set<int> claimed;
  std::vector<std::vector<int>> out;
  for (const auto& c : cliques) {
    std::vector<int> kept;
    for (int v : c)
      if (!claimed.count(v)) kept.push_back(v);
    if (kept.empty()) continue;
    for (int v : kept) claimed.insert(v);
    out.push_back(std::move(kept));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Connected components of the undirected t+1 slice; satisfies every
/// clustering assumption by construction.
inline Clustering cluster_pc(const ProcessModel& p) {
  Clustering c;
  c.name = "pc";
  c.state_clusters = detail::components(detail::state_slice_union(p));
  c.obs_clusters = detail::components(detail::obs_slice_union(p));
  std::sort(c.state_clusters.begin(), c.state_clusters.end());
  std::sort(c.obs_clusters.begin(), c.obs_clusters.end());
  return c;
}

/// Maximal cliques of the moral graph. Clusters may overlap and may be
/// correlated across cluster boundaries.
inline Clustering cluster_moral(const ProcessModel& p) {
  Clustering c;
  c.name = "moral";
  c.state_clusters = detail::maximal_cliques(detail::moralize(detail::state_slice_union(p)));
  c.obs_clusters = detail::maximal_cliques(detail::moralize(detail::obs_slice_union(p)));
  return c;
}

/// Moral cliques truncated to a disjoint cover.
inline Clustering cluster_modis(const ProcessModel& p) {
  Clustering c = cluster_moral(p);
  c.name = "modis";
  c.state_clusters = detail::make_disjoint(std::move(c.state_clusters));
  c.obs_clusters = detail::make_disjoint(std::move(c.obs_clusters));
  return c;
}

/// One cluster spanning all state variables and one spanning all
/// observation variables.
inline Clustering cluster_single(const ProcessModel& p) {
  Clustering c;
  c.name = "single";
  std::vector<int> all_s(p.n()), all_o(p.m());
  for (int i = 0; i < p.n(); ++i) all_s[i] = i;
  for (int j = 0; j < p.m(); ++j) all_o[j] = j;
  c.state_clusters = {all_s};
  if (p.m() > 0) c.obs_clusters = {all_o};
  return c;
}

/// One cluster per variable.
inline Clustering cluster_singleton(const ProcessModel& p) {
  Clustering c;
  c.name = "singleton";
  for (int i = 0; i < p.n(); ++i) c.state_clusters.push_back({i});
  for (int j = 0; j < p.m(); ++j) c.obs_clusters.push_back({j});
  return c;
}

/// Build a named clustering; "<state>/<obs>" mixes methods for the two sides.
inline Clustering make_clustering(const ProcessModel& p, const std::string& name) {
  auto one = [&](const std::string& method) -> Clustering {
    if (method == "pc") return cluster_pc(p);
    if (method == "moral") return cluster_moral(p);
    if (method == "modis") return cluster_modis(p);
    if (method == "single") return cluster_single(p);
    if (method == "singleton") return cluster_singleton(p);
    throw ModelError("unknown clustering method: " + method);
  };
  auto slash = name.find('/');
  if (slash == std::string::npos) return one(name);
  Clustering c = one(name.substr(0, slash));
  Clustering obs = one(name.substr(slash + 1));
  c.name = name;
  c.obs_clusters = std::move(obs.obs_clusters);
  return c;
}

// ---------------------------------------------------------------------------
// Assumption checks

struct AssumptionStatus {
  std::string action_id;
  bool a1 = false;  // state clusters closed under t+1-slice parents
  bool a2 = false;  // state clusters pairwise disjoint
  bool a3 = false;  // observation clusters closed under observation parents
  bool a4 = false;  // observation clusters pairwise disjoint
  bool all() const { return a1 && a2 && a3 && a4; }
};

namespace detail {

inline bool pairwise_disjoint(const std::vector<std::vector<int>>& clusters) {
  std::set<int> seen;
  for (const auto& c : clusters)
    for (int v : c)
      if (!seen.insert(v).second) return false;
  return true;
}

}  // namespace detail

inline std::vector<AssumptionStatus> check_assumptions(const Clustering& c,
                                                       const ProcessModel& p) {
  if (!c.covers(p.n(), p.m()))
    throw ModelError("check_assumptions: clustering does not cover all variables");
  const bool a2 = detail::pairwise_disjoint(c.state_clusters);
  const bool a4 = detail::pairwise_disjoint(c.obs_clusters);
  std::vector<AssumptionStatus> out;
  for (const auto& dbn : p.actions) {
    AssumptionStatus st;
    st.action_id = dbn.action_id;
    st.a2 = a2;
    st.a4 = a4;
    st.a1 = true;
    for (const auto& ck : c.state_clusters)
      for (int i : ck)
        for (int par : dbn.x_t1_parents[i])
          if (!std::binary_search(ck.begin(), ck.end(), par)) st.a1 = false;
    st.a3 = true;
    for (const auto& cl : c.obs_clusters)
      for (int j : cl)
        for (int par : dbn.y_y_parents[j])
          if (!std::binary_search(cl.begin(), cl.end(), par)) st.a3 = false;
    out.push_back(st);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cluster-local distributions (uncorrelatedness enforcement)

/// Conditional table of one variable as seen from inside a cluster: parents
/// outside the cluster's slice closure have been marginalised out under a
/// uniform weighting over their joint domain.
struct LocalCpt {
  std::vector<int> t_parents;   // time-t parents (never touched)
  std::vector<int> t1_parents;  // within-cluster t+1 parents
  Cpt cpt;
  bool modified = false;
};

struct StateClusterView {
  std::vector<int> members;         // sorted t+1 state variable indices
  std::vector<LocalCpt> local;      // aligned with members
  std::vector<int> t_parent_union;  // sorted union of members' time-t parents
};

struct ObsLocalCpt {
  std::vector<int> x_parents;  // t+1 state parents (never touched)
  std::vector<int> y_parents;  // within-cluster observation parents
  Cpt cpt;
  bool modified = false;
};

struct ObsClusterView {
  std::vector<int> members;         // sorted observation variable indices
  std::vector<ObsLocalCpt> local;
  std::vector<int> x_parent_union;  // sorted union of members' state parents
};

/// A process together with per-cluster variable distributions. Each variable
/// has a separate distribution for every cluster that contains it.
struct EnforcedProcess {
  Clustering clustering;
  std::vector<int> state_dims;
  std::vector<int> obs_dims;
  std::vector<std::string> action_ids;
  std::vector<std::vector<StateClusterView>> state_views;  // [action][cluster]
  std::vector<std::vector<ObsClusterView>> obs_views;      // [action][obs cluster]
  // (cluster index, variable index) pairs whose distribution was modified
  std::vector<std::vector<std::pair<int, int>>> modified_state;  // [action]
  std::vector<std::vector<std::pair<int, int>>> modified_obs;    // [action]

  bool is_modified_state(int action, int cluster, int var) const {
    for (auto& [c, v] : modified_state[action])
      if (c == cluster && v == var) return true;
    return false;
  }
};

namespace detail {

/// Average the table over a subset of its parents (uniform weighting),
/// dropping those parents from the conditioning.
inline Cpt marginalize_out_parents(const Cpt& cpt, const std::vector<int>& parent_dims,
                                   const std::vector<char>& drop) {
  std::vector<int> kept_dims;
  for (std::size_t k = 0; k < parent_dims.size(); ++k)
    if (!drop[k]) kept_dims.push_back(parent_dims[k]);
  Indexer full = Indexer::over(parent_dims);
  Indexer kept = kept_dims.empty() ? Indexer::over({1}) : Indexer::over(kept_dims);
  double removed = 1;
  for (std::size_t k = 0; k < parent_dims.size(); ++k)
    if (drop[k]) removed *= parent_dims[k];
  Cpt out = Cpt::zeros(kept_dims.empty() ? 1 : kept.size(), cpt.cols);
  std::vector<Value> vals, kept_vals;
  for (std::size_t r = 0; r < full.size(); ++r) {
    full.decode(r, vals);
    kept_vals.clear();
    for (std::size_t k = 0; k < vals.size(); ++k)
      if (!drop[k]) kept_vals.push_back(vals[k]);
    std::size_t kr = kept_vals.empty() ? 0 : kept.index(kept_vals);
    for (int c = 0; c < cpt.cols; ++c) out.at(kr, c) += cpt.at(r, c) / removed;
  }
  return out;
}

}  // namespace detail

/// Build per-cluster variable distributions, marginalising foreign
/// intra-slice parents out of the tables so that every cluster is closed
/// under its slice parents. Records which (cluster, variable) pairs were
/// modified; those variables lose their passivity within that cluster.
inline EnforcedProcess enforce_a1(const ProcessModel& p, const Clustering& c) {
  if (!c.covers(p.n(), p.m()))
    throw ModelError("enforce_a1: clustering does not cover all variables");
  EnforcedProcess e;
  e.clustering = c;
  e.state_dims = p.state_dims();
  e.obs_dims = p.obs_dims();
  e.state_views.resize(p.actions.size());
  e.obs_views.resize(p.actions.size());
  e.modified_state.resize(p.actions.size());
  e.modified_obs.resize(p.actions.size());

  for (std::size_t a = 0; a < p.actions.size(); ++a) {
    const Dbn& dbn = p.actions[a];
    e.action_ids.push_back(dbn.action_id);
    for (std::size_t k = 0; k < c.state_clusters.size(); ++k) {
      StateClusterView view;
      view.members = c.state_clusters[k];
      std::set<int> t_union;
      for (int i : view.members) {
        LocalCpt lc;
        lc.t_parents = dbn.x_t_parents[i];
        std::vector<int> foreign;
        for (int par : dbn.x_t1_parents[i]) {
          if (std::binary_search(view.members.begin(), view.members.end(), par))
            lc.t1_parents.push_back(par);
          else
            foreign.push_back(par);
        }
        if (foreign.empty()) {
          lc.cpt = dbn.x_cpt[i];
        } else {
          std::vector<int> parent_dims = dbn.x_parent_dims(i);
          std::vector<char> drop(parent_dims.size(), 0);
          std::size_t pos = lc.t_parents.size();
          for (int par : dbn.x_t1_parents[i]) {
            if (!std::binary_search(view.members.begin(), view.members.end(), par)) drop[pos] = 1;
            ++pos;
          }
          lc.cpt = detail::marginalize_out_parents(dbn.x_cpt[i], parent_dims, drop);
          lc.modified = true;
          e.modified_state[a].push_back({int(k), i});
        }
        for (int par : lc.t_parents) t_union.insert(par);
        view.local.push_back(std::move(lc));
      }
      view.t_parent_union.assign(t_union.begin(), t_union.end());
      e.state_views[a].push_back(std::move(view));
    }

    for (std::size_t l = 0; l < c.obs_clusters.size(); ++l) {
      ObsClusterView view;
      view.members = c.obs_clusters[l];
      std::set<int> x_union;
      for (int j : view.members) {
        ObsLocalCpt lc;
        lc.x_parents = dbn.y_x_parents[j];
        std::vector<int> foreign;
        for (int par : dbn.y_y_parents[j]) {
          if (std::binary_search(view.members.begin(), view.members.end(), par))
            lc.y_parents.push_back(par);
          else
            foreign.push_back(par);
        }
        if (foreign.empty()) {
          lc.cpt = dbn.y_cpt[j];
        } else {
          std::vector<int> parent_dims = dbn.y_parent_dims(j);
          std::vector<char> drop(parent_dims.size(), 0);
          std::size_t pos = lc.x_parents.size();
          for (int par : dbn.y_y_parents[j]) {
            if (!std::binary_search(view.members.begin(), view.members.end(), par)) drop[pos] = 1;
            ++pos;
          }
          lc.cpt = detail::marginalize_out_parents(dbn.y_cpt[j], parent_dims, drop);
          lc.modified = true;
          e.modified_obs[a].push_back({int(l), j});
        }
        for (int par : lc.x_parents) x_union.insert(par);
        view.local.push_back(std::move(lc));
      }
      view.x_parent_union.assign(x_union.begin(), x_union.end());
      e.obs_views[a].push_back(std::move(view));
    }
  }
  return e;
}

/// Cluster transition table T_k: one row per joint assignment of the
/// cluster's time-t parents, one column per joint member value.
struct ClusterTransition {
  Indexer row_ix;  // over t_parent_union
  Indexer col_ix;  // over members
  std::vector<double> table;

  double at(std::size_t row, std::size_t col) const { return table[row * col_ix.size() + col]; }
};

inline ClusterTransition build_cluster_transition(const StateClusterView& view,
                                                  const std::vector<int>& state_dims,
                                                  std::size_t cell_cap = kClusterTableCellCap) {
  ClusterTransition ct;
  std::vector<int> row_dims, col_dims;
  for (int v : view.t_parent_union) row_dims.push_back(state_dims[v]);
  for (int v : view.members) col_dims.push_back(state_dims[v]);
  ct.row_ix = row_dims.empty() ? Indexer::over({1}) : Indexer::over(row_dims);
  ct.col_ix = Indexer::over(col_dims);
  if (ct.row_ix.size() * ct.col_ix.size() > cell_cap)
    throw InfeasibleError("cluster transition table exceeds the cell cap");
  ct.table.assign(ct.row_ix.size() * ct.col_ix.size(), 0.0);

  // member parent positions within the row/column tuples
  struct MemberRef {
    const LocalCpt* lc;
    std::vector<int> t_pos;   // positions in t_parent_union
    std::vector<int> t1_pos;  // positions in members
    int value_pos;
  };
  std::vector<MemberRef> refs;
  for (std::size_t mi = 0; mi < view.members.size(); ++mi) {
    MemberRef r;
    r.lc = &view.local[mi];
    for (int par : r.lc->t_parents)
      r.t_pos.push_back(int(std::lower_bound(view.t_parent_union.begin(),
                                             view.t_parent_union.end(), par) -
                            view.t_parent_union.begin()));
    for (int par : r.lc->t1_parents)
      r.t1_pos.push_back(int(std::lower_bound(view.members.begin(), view.members.end(), par) -
                             view.members.begin()));
    r.value_pos = int(mi);
    refs.push_back(std::move(r));
  }

  std::vector<Value> row_vals, col_vals;
  for (std::size_t r = 0; r < ct.row_ix.size(); ++r) {
    if (view.t_parent_union.empty())
      row_vals.clear();
    else
      ct.row_ix.decode(r, row_vals);
    for (std::size_t cidx = 0; cidx < ct.col_ix.size(); ++cidx) {
      ct.col_ix.decode(cidx, col_vals);
      double prob = 1.0;
      for (const auto& ref : refs) {
        std::size_t row = 0;
        for (std::size_t pi = 0; pi < ref.t_pos.size(); ++pi)
          row = row * std::size_t(state_dims[ref.lc->t_parents[pi]]) +
                std::size_t(row_vals[ref.t_pos[pi]]);
        for (std::size_t pi = 0; pi < ref.t1_pos.size(); ++pi)
          row = row * std::size_t(state_dims[ref.lc->t1_parents[pi]]) +
                std::size_t(col_vals[ref.t1_pos[pi]]);
        prob *= ref.lc->cpt.at(row, col_vals[ref.value_pos]);
        if (prob == 0.0) break;
      }
      ct.table[r * ct.col_ix.size() + cidx] = prob;
    }
  }
  return ct;
}

}  // namespace psbf

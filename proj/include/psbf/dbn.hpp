#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "psbf/rng.hpp"
#include "psbf/types.hpp"

namespace psbf {

inline constexpr double kRowSumTolerance = 1e-9;

enum class Slice { T, T1 };

/// Endpoint of a network edge. State variables exist in both slices,
/// observation variables only at t+1. Indices are 0-based internally.
struct NodeRef {
  VarKind kind = VarKind::State;
  Slice slice = Slice::T1;
  int index = 0;

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

inline NodeRef state_t(int i) { return {VarKind::State, Slice::T, i}; }
inline NodeRef state_t1(int i) { return {VarKind::State, Slice::T1, i}; }
inline NodeRef obs_t1(int j) { return {VarKind::Obs, Slice::T1, j}; }

inline std::string node_name(const NodeRef& n) {
  std::string s = (n.kind == VarKind::State ? "x" : "y") + std::to_string(n.index + 1);
  s += (n.slice == Slice::T ? ":t" : ":t1");
  return s;
}

using Edge = std::pair<NodeRef, NodeRef>;

/// Dense conditional probability table: one row per joint parent assignment
/// (mixed-radix, first parent most significant), one column per child value.
struct Cpt {
  std::size_t rows = 0;
  int cols = 0;
  std::vector<double> table;  // rows * cols, row-major

  double at(std::size_t row, int col) const { return table[row * std::size_t(cols) + col]; }
  double& at(std::size_t row, int col) { return table[row * std::size_t(cols) + col]; }

  static Cpt zeros(std::size_t rows, int cols) {
    Cpt c;
    c.rows = rows;
    c.cols = cols;
    c.table.assign(rows * std::size_t(cols), 0.0);
    return c;
  }
};

/// Two-slice network for one action. Parent lists are sorted by variable
/// index; CPT rows are indexed by (t-slice parents, then t+1-slice parents,
/// then observation parents), each group in ascending index order.
struct Dbn {
  std::string action_id;
  int n = 0;  // state variables
  int m = 0;  // observation variables
  std::vector<int> state_dims;
  std::vector<int> obs_dims;
  std::vector<Edge> edges;

  // adjacency derived by finalize()
  std::vector<std::vector<int>> x_t_parents;    // per x_i^{t+1}: parents in X^t
  std::vector<std::vector<int>> x_t1_parents;   // per x_i^{t+1}: parents in X^{t+1}
  std::vector<std::vector<int>> y_x_parents;    // per y_j^{t+1}: parents in X^{t+1}
  std::vector<std::vector<int>> y_y_parents;    // per y_j^{t+1}: parents in Y^{t+1}
  std::vector<std::vector<int>> x_t1_children;  // per x_i^{t+1}: state children in slice

  std::vector<Cpt> x_cpt;  // per state variable
  std::vector<Cpt> y_cpt;  // per observation variable

  void add_edge(const NodeRef& from, const NodeRef& to) { edges.emplace_back(from, to); }

  bool has_edge(const NodeRef& from, const NodeRef& to) const {
    return std::find(edges.begin(), edges.end(), Edge{from, to}) != edges.end();
  }

  static bool legal_edge(const Edge& e) {
    const auto& [a, b] = e;
    if (a.kind == VarKind::State && a.slice == Slice::T)
      return b.kind == VarKind::State && b.slice == Slice::T1;
    if (a.kind == VarKind::State && a.slice == Slice::T1)
      return b.slice == Slice::T1;  // state or observation
    if (a.kind == VarKind::Obs) return b.kind == VarKind::Obs && b.slice == Slice::T1;
    return false;
  }

  /// Rebuild adjacency from the edge list. Illegal edges are kept in `edges`
  /// (for validation to report) but excluded from adjacency.
  void finalize() {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    x_t_parents.assign(n, {});
    x_t1_parents.assign(n, {});
    y_x_parents.assign(m, {});
    y_y_parents.assign(m, {});
    x_t1_children.assign(n, {});
    for (const auto& [a, b] : edges) {
      if (!legal_edge({a, b})) continue;
      if (a.index < 0 || b.index < 0) continue;
      if (a.kind == VarKind::State && a.index >= n) continue;
      if (a.kind == VarKind::Obs && a.index >= m) continue;
      if (b.kind == VarKind::State && b.index >= n) continue;
      if (b.kind == VarKind::Obs && b.index >= m) continue;
      if (b.kind == VarKind::State) {
        if (a.slice == Slice::T)
          x_t_parents[b.index].push_back(a.index);
        else {
          x_t1_parents[b.index].push_back(a.index);
          x_t1_children[a.index].push_back(b.index);
        }
      } else {  // observation child
        if (a.kind == VarKind::State)
          y_x_parents[b.index].push_back(a.index);
        else
          y_y_parents[b.index].push_back(a.index);
      }
    }
    auto sort_all = [](std::vector<std::vector<int>>& v) {
      for (auto& e : v) {
        std::sort(e.begin(), e.end());
        e.erase(std::unique(e.begin(), e.end()), e.end());
      }
    };
    sort_all(x_t_parents);
    sort_all(x_t1_parents);
    sort_all(y_x_parents);
    sort_all(y_y_parents);
    sort_all(x_t1_children);
  }

  std::vector<int> x_parent_dims(int i) const {
    std::vector<int> d;
    for (int p : x_t_parents[i]) d.push_back(state_dims[p]);
    for (int p : x_t1_parents[i]) d.push_back(state_dims[p]);
    return d;
  }

  std::vector<int> y_parent_dims(int j) const {
    std::vector<int> d;
    for (int p : y_x_parents[j]) d.push_back(state_dims[p]);
    for (int p : y_y_parents[j]) d.push_back(obs_dims[p]);
    return d;
  }

  std::size_t x_cpt_rows(int i) const {
    std::size_t r = 1;
    for (int d : x_parent_dims(i)) r *= std::size_t(d);
    return r;
  }

  std::size_t y_cpt_rows(int j) const {
    std::size_t r = 1;
    for (int d : y_parent_dims(j)) r *= std::size_t(d);
    return r;
  }

  std::size_t x_row_index(int i, const StateTuple& s, const StateTuple& s_next) const {
    std::size_t row = 0;
    for (int p : x_t_parents[i]) row = row * std::size_t(state_dims[p]) + std::size_t(s[p]);
    for (int p : x_t1_parents[i]) row = row * std::size_t(state_dims[p]) + std::size_t(s_next[p]);
    return row;
  }

  std::size_t y_row_index(int j, const StateTuple& s_next, const ObsTuple& o) const {
    std::size_t row = 0;
    for (int p : y_x_parents[j]) row = row * std::size_t(state_dims[p]) + std::size_t(s_next[p]);
    for (int p : y_y_parents[j]) row = row * std::size_t(obs_dims[p]) + std::size_t(o[p]);
    return row;
  }

  /// Fill the table for x_i^{t+1} from a row function. The function receives
  /// the parent values split into slices and writes a distribution over X_i.
  void set_x_cpt(int i, const std::function<void(const StateTuple& t_vals,
                                                 const StateTuple& t1_vals,
                                                 std::vector<double>& row)>& fn) {
    const auto& tp = x_t_parents[i];
    const auto& sp = x_t1_parents[i];
    std::vector<int> dims;
    for (int p : tp) dims.push_back(state_dims[p]);
    for (int p : sp) dims.push_back(state_dims[p]);
    Indexer ix = Indexer::over(dims);
    Cpt c = Cpt::zeros(ix.size(), state_dims[i]);
    StateTuple t_vals(tp.size()), t1_vals(sp.size());
    std::vector<Value> decoded;
    std::vector<double> row(state_dims[i]);
    for (std::size_t r = 0; r < ix.size(); ++r) {
      ix.decode(r, decoded);
      for (std::size_t k = 0; k < tp.size(); ++k) t_vals[k] = decoded[k];
      for (std::size_t k = 0; k < sp.size(); ++k) t1_vals[k] = decoded[tp.size() + k];
      std::fill(row.begin(), row.end(), 0.0);
      fn(t_vals, t1_vals, row);
      for (int v = 0; v < state_dims[i]; ++v) c.at(r, v) = row[v];
    }
    if (x_cpt.size() != std::size_t(n)) x_cpt.resize(n);
    x_cpt[i] = std::move(c);
  }

  void set_y_cpt(int j, const std::function<void(const StateTuple& x_vals,
                                                 const ObsTuple& y_vals,
                                                 std::vector<double>& row)>& fn) {
    const auto& xp = y_x_parents[j];
    const auto& yp = y_y_parents[j];
    std::vector<int> dims;
    for (int p : xp) dims.push_back(state_dims[p]);
    for (int p : yp) dims.push_back(obs_dims[p]);
    Indexer ix = Indexer::over(dims);
    Cpt c = Cpt::zeros(ix.size(), obs_dims[j]);
    StateTuple x_vals(xp.size());
    ObsTuple y_vals(yp.size());
    std::vector<Value> decoded;
    std::vector<double> row(obs_dims[j]);
    for (std::size_t r = 0; r < ix.size(); ++r) {
      ix.decode(r, decoded);
      for (std::size_t k = 0; k < xp.size(); ++k) x_vals[k] = decoded[k];
      for (std::size_t k = 0; k < yp.size(); ++k) y_vals[k] = decoded[xp.size() + k];
      std::fill(row.begin(), row.end(), 0.0);
      fn(x_vals, y_vals, row);
      for (int v = 0; v < obs_dims[j]; ++v) c.at(r, v) = row[v];
    }
    if (y_cpt.size() != std::size_t(m)) y_cpt.resize(m);
    y_cpt[j] = std::move(c);
  }

  /// Topological order of the state variables within the t+1 slice,
  /// index-ascending among ready variables. Empty optional on a cycle.
  std::optional<std::vector<int>> state_topo_order() const {
    return topo_order(n, x_t1_parents);
  }

  std::optional<std::vector<int>> obs_topo_order() const {
    return topo_order(m, y_y_parents);
  }

  /// Out-degree of x_i^{t+1} within the t+1 slice (state and obs children).
  int t1_out_degree(int i) const {
    int deg = int(x_t1_children[i].size());
    for (int j = 0; j < m; ++j)
      if (std::binary_search(y_x_parents[j].begin(), y_x_parents[j].end(), i)) ++deg;
    return deg;
  }

 private:
  static std::optional<std::vector<int>> topo_order(
      int count, const std::vector<std::vector<int>>& parents) {
    std::vector<int> remaining(count, 0);
    for (int i = 0; i < count; ++i) remaining[i] = int(parents[i].size());
    std::vector<std::vector<int>> children(count);
    for (int i = 0; i < count; ++i)
      for (int p : parents[i]) children[p].push_back(i);
    std::set<int> ready;
    for (int i = 0; i < count; ++i)
      if (remaining[i] == 0) ready.insert(i);
    std::vector<int> order;
    order.reserve(count);
    while (!ready.empty()) {
      int i = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(i);
      for (int c : children[i])
        if (--remaining[c] == 0) ready.insert(c);
    }
    if (int(order.size()) != count) return std::nullopt;
    return order;
  }
};

/// Discrete process: shared variable declarations plus one network per action.
struct ProcessModel {
  std::vector<VariableDecl> state_vars;  // ids 1..n
  std::vector<VariableDecl> obs_vars;    // ids 1..m
  std::vector<Dbn> actions;

  int n() const { return int(state_vars.size()); }
  int m() const { return int(obs_vars.size()); }

  std::vector<int> state_dims() const {
    std::vector<int> d;
    for (const auto& v : state_vars) d.push_back(v.domain_size);
    return d;
  }

  std::vector<int> obs_dims() const {
    std::vector<int> d;
    for (const auto& v : obs_vars) d.push_back(v.domain_size);
    return d;
  }

  const Dbn& action(const std::string& id) const {
    for (const auto& a : actions)
      if (a.action_id == id) return a;
    throw ModelError("unknown action: " + id);
  }

  int action_index(const std::string& id) const {
    for (std::size_t i = 0; i < actions.size(); ++i)
      if (actions[i].action_id == id) return int(i);
    throw ModelError("unknown action: " + id);
  }
};

// ---------------------------------------------------------------------------
// Validation

enum class FindingKind {
  BadDomainSize,
  BadVariableIds,
  IllegalEdgeClass,
  CycleInNextSlice,
  MissingCpt,
  CptDimensionMismatch,
  UnnormalizedCptRow,
  NegativeProbability,
  DeclMismatch,
};

struct Finding {
  FindingKind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& f : findings) os << f.message << "\n";
    return os.str();
  }
};

namespace detail {

inline void check_cpt(const Cpt& cpt, std::size_t want_rows, int want_cols,
                      const std::string& who, ValidationReport& rep) {
  if (cpt.rows != want_rows || cpt.cols != want_cols ||
      cpt.table.size() != cpt.rows * std::size_t(cpt.cols)) {
    std::ostringstream os;
    os << who << ": table is " << cpt.rows << "x" << cpt.cols << ", expected " << want_rows
       << "x" << want_cols;
    rep.findings.push_back({FindingKind::CptDimensionMismatch, os.str()});
    return;
  }
  for (std::size_t r = 0; r < cpt.rows; ++r) {
    double sum = 0;
    bool neg = false;
    for (int c = 0; c < cpt.cols; ++c) {
      double p = cpt.at(r, c);
      if (p < 0) neg = true;
      sum += p;
    }
    if (neg)
      rep.findings.push_back({FindingKind::NegativeProbability,
                              who + ": negative entry in row " + std::to_string(r)});
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream os;
      os << who << ": row " << r << " sums to " << sum;
      rep.findings.push_back({FindingKind::UnnormalizedCptRow, os.str()});
    }
  }
}

}  // namespace detail

/// Structural checks. Never throws; enumerates every violated invariant.
inline ValidationReport validate_dbn(const Dbn& dbn,
                                     const std::vector<VariableDecl>& state_vars,
                                     const std::vector<VariableDecl>& obs_vars) {
  ValidationReport rep;
  const int n = int(state_vars.size());
  const int m = int(obs_vars.size());
  if (dbn.n != n || dbn.m != m)
    rep.findings.push_back(
        {FindingKind::DeclMismatch, "action " + dbn.action_id + ": variable count mismatch"});
  for (int i = 0; i < n; ++i) {
    if (state_vars[i].id != i + 1)
      rep.findings.push_back({FindingKind::BadVariableIds,
                              "state variables must be indexed 1..n in order"});
    if (state_vars[i].domain_size < 2)
      rep.findings.push_back({FindingKind::BadDomainSize,
                              "x" + std::to_string(i + 1) + ": domain_size must be >= 2"});
    if (i < dbn.n && dbn.state_dims[i] != state_vars[i].domain_size)
      rep.findings.push_back({FindingKind::DeclMismatch,
                              "x" + std::to_string(i + 1) + ": domain disagrees with declaration"});
  }
  for (int j = 0; j < m; ++j) {
    if (obs_vars[j].id != j + 1)
      rep.findings.push_back({FindingKind::BadVariableIds,
                              "observation variables must be indexed 1..m in order"});
    if (obs_vars[j].domain_size < 2)
      rep.findings.push_back({FindingKind::BadDomainSize,
                              "y" + std::to_string(j + 1) + ": domain_size must be >= 2"});
    if (j < dbn.m && dbn.obs_dims[j] != obs_vars[j].domain_size)
      rep.findings.push_back({FindingKind::DeclMismatch,
                              "y" + std::to_string(j + 1) + ": domain disagrees with declaration"});
  }
  for (const auto& e : dbn.edges) {
    bool in_range = true;
    for (const NodeRef* node : {&e.first, &e.second}) {
      int limit = node->kind == VarKind::State ? dbn.n : dbn.m;
      if (node->index < 0 || node->index >= limit) in_range = false;
      if (node->kind == VarKind::Obs && node->slice == Slice::T) in_range = false;
    }
    if (!in_range || !Dbn::legal_edge(e))
      rep.findings.push_back({FindingKind::IllegalEdgeClass,
                              "illegal edge " + node_name(e.first) + " -> " + node_name(e.second)});
  }
  if (!dbn.state_topo_order())
    rep.findings.push_back(
        {FindingKind::CycleInNextSlice, "cycle among state variables in the t+1 slice"});
  if (!dbn.obs_topo_order())
    rep.findings.push_back(
        {FindingKind::CycleInNextSlice, "cycle among observation variables in the t+1 slice"});
  for (int i = 0; i < dbn.n; ++i) {
    std::string who = "action " + dbn.action_id + ", x" + std::to_string(i + 1);
    if (i >= int(dbn.x_cpt.size()) || dbn.x_cpt[i].table.empty()) {
      rep.findings.push_back({FindingKind::MissingCpt, who + ": missing table"});
      continue;
    }
    detail::check_cpt(dbn.x_cpt[i], dbn.x_cpt_rows(i), dbn.state_dims[i], who, rep);
  }
  for (int j = 0; j < dbn.m; ++j) {
    std::string who = "action " + dbn.action_id + ", y" + std::to_string(j + 1);
    if (j >= int(dbn.y_cpt.size()) || dbn.y_cpt[j].table.empty()) {
      rep.findings.push_back({FindingKind::MissingCpt, who + ": missing table"});
      continue;
    }
    detail::check_cpt(dbn.y_cpt[j], dbn.y_cpt_rows(j), dbn.obs_dims[j], who, rep);
  }
  return rep;
}

inline ValidationReport validate_process(const ProcessModel& p) {
  ValidationReport rep;
  for (const auto& a : p.actions) {
    auto r = validate_dbn(a, p.state_vars, p.obs_vars);
    rep.findings.insert(rep.findings.end(), r.findings.begin(), r.findings.end());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Process semantics

/// P(s' | s) under the given action: the product of the state variables'
/// conditional probabilities with parents assigned from (s, s').
inline double transition_prob(const Dbn& dbn, const StateTuple& s, const StateTuple& s_next) {
  if (int(s.size()) != dbn.n || int(s_next.size()) != dbn.n)
    throw ModelError("transition_prob: tuple length does not match declarations");
  double p = 1.0;
  for (int i = 0; i < dbn.n; ++i) {
    p *= dbn.x_cpt[i].at(dbn.x_row_index(i, s, s_next), s_next[i]);
    if (p == 0.0) return 0.0;
  }
  return p;
}

/// P(o | s') under the given action.
inline double observation_prob(const Dbn& dbn, const StateTuple& s_next, const ObsTuple& o) {
  if (int(s_next.size()) != dbn.n || int(o.size()) != dbn.m)
    throw ModelError("observation_prob: tuple length does not match declarations");
  double p = 1.0;
  for (int j = 0; j < dbn.m; ++j) {
    p *= dbn.y_cpt[j].at(dbn.y_row_index(j, s_next, o), o[j]);
    if (p == 0.0) return 0.0;
  }
  return p;
}

inline Value sample_row(const Cpt& cpt, std::size_t row, RngStream& rng) {
  double u = rng.unit();
  double acc = 0.0;
  for (int v = 0; v < cpt.cols; ++v) {
    acc += cpt.at(row, v);
    if (u < acc) return v;
  }
  return cpt.cols - 1;
}

/// Sample the next state only (used by the particle filter's propagation).
inline StateTuple sample_transition(const Dbn& dbn, const StateTuple& s, RngStream& rng) {
  auto order = dbn.state_topo_order();
  if (!order) throw ModelError("sample_transition: cyclic t+1 slice");
  StateTuple s_next(dbn.n, 0);
  for (int i : *order) s_next[i] = sample_row(dbn.x_cpt[i], dbn.x_row_index(i, s, s_next), rng);
  return s_next;
}

inline ObsTuple sample_observation(const Dbn& dbn, const StateTuple& s_next, RngStream& rng) {
  auto order = dbn.obs_topo_order();
  if (!order) throw ModelError("sample_observation: cyclic t+1 slice");
  ObsTuple o(dbn.m, 0);
  for (int j : *order) o[j] = sample_row(dbn.y_cpt[j], dbn.y_row_index(j, s_next, o), rng);
  return o;
}

/// Draw (s', o) from the process dynamics, sampling state variables and then
/// observation variables in a topological order of the t+1 slice
/// (index-ascending among ready variables).
inline std::pair<StateTuple, ObsTuple> sample_step(const Dbn& dbn, const StateTuple& s,
                                                   RngStream& rng) {
  StateTuple s_next = sample_transition(dbn, s, rng);
  ObsTuple o = sample_observation(dbn, s_next, rng);
  return {std::move(s_next), std::move(o)};
}

}  // namespace psbf

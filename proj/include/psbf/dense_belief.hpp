#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "psbf/dbn.hpp"
#include "psbf/types.hpp"

namespace psbf {

/// Joint state spaces larger than this are refused by the exact filter and
/// by joint reconstruction.
inline constexpr std::size_t kEnumerationCap = std::size_t(1) << 20;

/// Working-memory bound for the sliced propagation pass (table cells).
inline constexpr std::size_t kPropagationCellCap = std::size_t(1) << 24;

/// Full joint distribution over the state space, indexed by the mixed-radix
/// encoding of the state tuple (variable 1 most significant).
struct DenseBelief {
  Indexer indexer;
  std::vector<double> probs;

  double& at(const StateTuple& s) { return probs[indexer.index(s)]; }
  double at(const StateTuple& s) const { return probs[indexer.index(s)]; }
};

inline DenseBelief uniform_belief(const std::vector<int>& state_dims) {
  DenseBelief b;
  b.indexer = Indexer::over(state_dims);
  if (b.indexer.size() > kEnumerationCap)
    throw InfeasibleError("uniform_belief: state space exceeds the enumeration cap");
  b.probs.assign(b.indexer.size(), 1.0 / double(b.indexer.size()));
  return b;
}

inline DenseBelief point_mass_belief(const std::vector<int>& state_dims, const StateTuple& s) {
  DenseBelief b;
  b.indexer = Indexer::over(state_dims);
  if (b.indexer.size() > kEnumerationCap)
    throw InfeasibleError("point_mass_belief: state space exceeds the enumeration cap");
  b.probs.assign(b.indexer.size(), 0.0);
  b.at(s) = 1.0;
  return b;
}

inline void normalize_or_throw(std::vector<double>& probs, const char* who) {
  double sum = 0;
  for (double p : probs) sum += p;
  if (sum <= 0.0) throw ZeroMassError(std::string(who) + ": total probability mass is zero");
  for (double& p : probs) p /= sum;
}

namespace detail {

/// Multi-dimensional working table for the propagation pass. Dimensions are
/// appended at the least-significant position and summed out in place.
struct StagedTable {
  struct Dim {
    Slice slice;
    int var;
    int size;
  };
  std::vector<Dim> dims;
  std::vector<double> data;

  std::size_t cells() const { return data.size(); }

  std::size_t stride_of(std::size_t dim_pos) const {
    std::size_t s = 1;
    for (std::size_t k = dims.size(); k-- > dim_pos + 1;) s *= std::size_t(dims[k].size);
    return s;
  }

  int find(Slice slice, int var) const {
    for (std::size_t k = 0; k < dims.size(); ++k)
      if (dims[k].slice == slice && dims[k].var == var) return int(k);
    return -1;
  }
};

/// Belief propagation through the transition model: introduces each next-step
/// variable in topological order and releases time-t variables as soon as no
/// pending table references them.
inline std::vector<double> propagate(const std::vector<double>& prior, const Dbn& dbn) {
  auto order = dbn.state_topo_order();
  if (!order) throw ModelError("propagate: cyclic t+1 slice");

  StagedTable t;
  for (int i = 0; i < dbn.n; ++i) t.dims.push_back({Slice::T, i, dbn.state_dims[i]});
  t.data = prior;

  std::vector<int> pending(dbn.n, 0);  // per t-var: unprocessed children
  for (int i = 0; i < dbn.n; ++i)
    for (int p : dbn.x_t_parents[i]) pending[p]++;

  auto sum_out = [&](int pos) {
    std::size_t inner = t.stride_of(pos);
    std::size_t size = std::size_t(t.dims[pos].size);
    std::size_t outer = t.cells() / (inner * size);
    std::vector<double> out(t.cells() / size, 0.0);
    std::size_t in_idx = 0;
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t v = 0; v < size; ++v)
        for (std::size_t b = 0; b < inner; ++b, ++in_idx) out[a * inner + b] += t.data[in_idx];
    t.data = std::move(out);
    t.dims.erase(t.dims.begin() + pos);
  };

  auto release_free_tvars = [&]() {
    for (int v = dbn.n; v-- > 0;) {
      if (pending[v] != 0) continue;
      int pos = t.find(Slice::T, v);
      if (pos >= 0) sum_out(pos);
      pending[v] = -1;
    }
  };
  release_free_tvars();

  for (int i : *order) {
    const int child_dim = dbn.state_dims[i];
    if (t.cells() * std::size_t(child_dim) > kPropagationCellCap)
      throw InfeasibleError("propagate: working table exceeds the cell cap");
    // parent positions and strides in the current table
    struct ParentRef {
      std::size_t stride;
      std::size_t size;
      std::size_t radix;  // running radix for the row index
    };
    std::vector<ParentRef> parents;
    std::size_t radix = 1;
    std::vector<std::pair<Slice, int>> parent_order;
    for (int p : dbn.x_t_parents[i]) parent_order.push_back({Slice::T, p});
    for (int p : dbn.x_t1_parents[i]) parent_order.push_back({Slice::T1, p});
    for (std::size_t k = parent_order.size(); k-- > 0;) {
      auto [slice, var] = parent_order[k];
      int pos = t.find(slice, var);
      parents.push_back({t.stride_of(std::size_t(pos)),
                         std::size_t(slice == Slice::T ? dbn.state_dims[var] : dbn.state_dims[var]),
                         radix});
      radix *= std::size_t(dbn.state_dims[var]);
    }
    const Cpt& cpt = dbn.x_cpt[i];
    std::vector<double> out(t.cells() * std::size_t(child_dim));
    for (std::size_t idx = 0; idx < t.cells(); ++idx) {
      std::size_t row = 0;
      for (const auto& pr : parents) row += ((idx / pr.stride) % pr.size) * pr.radix;
      const double w = t.data[idx];
      const double* cpt_row = &cpt.table[row * std::size_t(child_dim)];
      double* dst = &out[idx * std::size_t(child_dim)];
      for (int v = 0; v < child_dim; ++v) dst[v] = w * cpt_row[v];
    }
    t.data = std::move(out);
    t.dims.push_back({Slice::T1, i, child_dim});
    for (int p : dbn.x_t_parents[i]) pending[p]--;
    release_free_tvars();
  }

  // all t-vars released; permute the t+1 dims into variable index order
  Indexer out_ix = Indexer::over(dbn.state_dims);
  std::vector<std::size_t> stride_of_var(dbn.n);
  for (std::size_t k = 0; k < t.dims.size(); ++k) stride_of_var[t.dims[k].var] = t.stride_of(k);
  std::vector<double> result(out_ix.size());
  StateTuple s;
  for (std::size_t out_idx = 0; out_idx < out_ix.size(); ++out_idx) {
    out_ix.decode(out_idx, s);
    std::size_t in_idx = 0;
    for (int v = 0; v < dbn.n; ++v) in_idx += stride_of_var[v] * std::size_t(s[v]);
    result[out_idx] = t.data[in_idx];
  }
  return result;
}

}  // namespace detail

/// Propagation step: b_hat(s') = sum_s b(s) T(s, s').
inline DenseBelief exact_transition(const DenseBelief& b, const Dbn& dbn) {
  if (b.indexer.size() > kEnumerationCap)
    throw InfeasibleError("exact_transition: state space exceeds the enumeration cap");
  DenseBelief out;
  out.indexer = b.indexer;
  out.probs = detail::propagate(b.probs, dbn);
  return out;
}

/// Conditioning step: b(s') ~ b_hat(s') * P(o | s'), renormalized.
inline DenseBelief exact_condition(const DenseBelief& b_hat, const Dbn& dbn, const ObsTuple& o) {
  DenseBelief out;
  out.indexer = b_hat.indexer;
  out.probs.resize(b_hat.probs.size());
  StateTuple s;
  for (std::size_t idx = 0; idx < b_hat.probs.size(); ++idx) {
    b_hat.indexer.decode(idx, s);
    out.probs[idx] = b_hat.probs[idx] * observation_prob(dbn, s, o);
  }
  normalize_or_throw(out.probs, "exact_condition");
  return out;
}

/// One full exact update: propagation through the dynamics, then
/// conditioning on the observation. Rejects updates that lose all mass.
inline DenseBelief exact_update(const DenseBelief& b, const Dbn& dbn, const ObsTuple& o) {
  return exact_condition(exact_transition(b, dbn), dbn, o);
}

/// Caches a dense transition matrix per action when the state space is small
/// enough, turning repeated updates into matrix-vector products. Falls back
/// to the sliced propagation pass otherwise.
class ExactFilterPlan {
 public:
  static constexpr std::size_t kDenseMatrixCellCap = std::size_t(1) << 21;

  explicit ExactFilterPlan(const ProcessModel& process) : process_(&process) {
    const auto dims = process.state_dims();
    Indexer ix = Indexer::over(dims);
    if (ix.size() > kEnumerationCap)
      throw InfeasibleError("ExactFilterPlan: state space exceeds the enumeration cap");
    if (ix.size() * ix.size() <= kDenseMatrixCellCap) {
      dense_t_.resize(process.actions.size());
      StateTuple s, s2;
      for (std::size_t a = 0; a < process.actions.size(); ++a) {
        const Dbn& dbn = process.actions[a];
        dense_t_[a].assign(ix.size() * ix.size(), 0.0);
        for (std::size_t i = 0; i < ix.size(); ++i) {
          ix.decode(i, s);
          for (std::size_t j = 0; j < ix.size(); ++j) {
            ix.decode(j, s2);
            dense_t_[a][i * ix.size() + j] = transition_prob(dbn, s, s2);
          }
        }
      }
    }
  }

  DenseBelief update(const DenseBelief& b, int action_index, const ObsTuple& o) const {
    const Dbn& dbn = process_->actions[action_index];
    if (dense_t_.empty()) return exact_update(b, dbn, o);
    const std::size_t size = b.probs.size();
    DenseBelief hat;
    hat.indexer = b.indexer;
    hat.probs.assign(size, 0.0);
    const std::vector<double>& t = dense_t_[action_index];
    for (std::size_t i = 0; i < size; ++i) {
      const double w = b.probs[i];
      if (w == 0.0) continue;
      const double* row = &t[i * size];
      for (std::size_t j = 0; j < size; ++j) hat.probs[j] += w * row[j];
    }
    return exact_condition(hat, dbn, o);
  }

 private:
  const ProcessModel* process_;
  std::vector<std::vector<double>> dense_t_;  // per action, |S| x |S|, empty if too large
};

/// Normalized product of belief factors over (possibly overlapping) clusters;
/// the low-level form used by accuracy evaluation and the projection filter.
/// Cluster members are 0-based variable indices in ascending order, and each
/// factor is indexed by the mixed-radix encoding of its members' values.
inline DenseBelief reconstruct_joint(const std::vector<std::vector<int>>& clusters,
                                     const std::vector<std::vector<double>>& factors,
                                     const std::vector<int>& state_dims,
                                     std::size_t cap = kEnumerationCap) {
  Indexer ix = Indexer::over(state_dims);
  if (ix.size() > cap)
    throw InfeasibleError("reconstruct_joint: state space exceeds the enumeration cap");
  std::vector<char> covered(state_dims.size(), 0);
  for (const auto& c : clusters)
    for (int v : c) covered[v] = 1;
  for (std::size_t v = 0; v < covered.size(); ++v)
    if (!covered[v])
      throw ModelError("reconstruct_joint: variable x" + std::to_string(v + 1) +
                       " is not covered by any cluster");

  struct ClusterRef {
    std::vector<int> members;
    Indexer sub;
    const std::vector<double>* probs;
  };
  std::vector<ClusterRef> refs;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    ClusterRef r;
    r.members = clusters[k];
    std::vector<int> dims;
    for (int v : r.members) dims.push_back(state_dims[v]);
    r.sub = Indexer::over(dims);
    r.probs = &factors[k];
    if (r.sub.size() != factors[k].size())
      throw ModelError("reconstruct_joint: factor size does not match its cluster");
    refs.push_back(std::move(r));
  }

  DenseBelief out;
  out.indexer = ix;
  out.probs.assign(ix.size(), 1.0);
  StateTuple s;
  std::vector<Value> sub;
  for (std::size_t idx = 0; idx < ix.size(); ++idx) {
    ix.decode(idx, s);
    double p = 1.0;
    for (const auto& r : refs) {
      sub.resize(r.members.size());
      for (std::size_t k = 0; k < r.members.size(); ++k) sub[k] = s[r.members[k]];
      p *= (*r.probs)[r.sub.index(sub)];
    }
    out.probs[idx] = p;
  }
  normalize_or_throw(out.probs, "reconstruct_joint");
  return out;
}

/// Marginal of a dense belief onto a sorted subset of state variables.
inline std::vector<double> marginalize(const DenseBelief& b, const std::vector<int>& members,
                                       const std::vector<int>& state_dims) {
  std::vector<int> dims;
  for (int v : members) dims.push_back(state_dims[v]);
  Indexer sub = Indexer::over(dims);
  std::vector<double> out(sub.size(), 0.0);
  StateTuple s;
  std::vector<Value> vals(members.size());
  for (std::size_t idx = 0; idx < b.probs.size(); ++idx) {
    b.indexer.decode(idx, s);
    for (std::size_t k = 0; k < members.size(); ++k) vals[k] = s[members[k]];
    out[sub.index(vals)] += b.probs[idx];
  }
  return out;
}

}  // namespace psbf

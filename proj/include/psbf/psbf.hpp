#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "psbf/clustering.hpp"
#include "psbf/dbn.hpp"
#include "psbf/dense_belief.hpp"
#include "psbf/passivity.hpp"
#include "psbf/types.hpp"

namespace psbf {

/// Distribution over one cluster's joint values, indexed mixed-radix over
/// the members in ascending variable order.
struct BeliefFactor {
  int cluster = -1;
  std::vector<double> probs;
};

struct UpdateStats {
  int factors_total = 0;
  int transition_updated = 0;
  int observation_updated = 0;
  std::uint64_t entries_evaluated = 0;
  std::uint64_t wall_nanos = 0;
};

enum class Force {
  None,
  EvaluateAll,  // ignore the skip analysis; used by the equality oracles
};

struct PsbfOptions {
  PassivityOptions passivity;
  /// Factor entries below this are zeroed and the factor renormalized after
  /// each update; 0 disables the sparsification.
  double sparsity_threshold = 0.0;
  std::size_t table_cell_cap = kClusterTableCellCap;
};

namespace detail {

/// Marginal of one factor onto a subset of its member positions; the
/// entry-to-submarginal map is precomputed so a step pays one pass per
/// distinct (factor, subset) pair.
struct MarginalSpec {
  int cluster = -1;
  std::vector<int> member_positions;      // positions within the cluster member list
  std::size_t sub_size = 1;
  std::vector<std::uint32_t> entry_to_sub;  // |S(C_k')| entries
};

struct TransitionContributor {
  int spec = -1;                           // marginal spec index
  std::vector<std::uint32_t> row_to_sub;   // per transition-table row
};

struct TransitionPlan {
  ClusterTransition table;
  std::vector<TransitionContributor> contributors;
};

struct ObsTermContributor {
  int spec = -1;
  std::vector<std::uint32_t> row_to_sub;
};

/// One observation-cluster term of the factored conditioning product for a
/// given state cluster.
struct ObsTermPlan {
  int obs_cluster = -1;
  Indexer row_ix;                        // over the obs cluster's state parents
  Indexer obs_ix;                        // over the obs cluster members' domains
  std::vector<double> omega;             // rows x |obs_ix|
  std::vector<int> obs_members;          // observation variable indices
  std::size_t overlap_size = 1;          // |S(C_k ∩ parents)|
  std::vector<std::uint32_t> row_to_overlap;
  std::vector<std::uint32_t> col_to_overlap;  // per factor column of C_k
  std::vector<ObsTermContributor> contributors;
};

}  // namespace detail

/// Everything the selective filter precomputes for one (process, clustering)
/// pair: cluster-local distributions, passivity verdicts, skip sets,
/// observation dependence, and dense per-cluster tables. Immutable once
/// built; updates only move factor values.
struct PsbfAnalysis {
  ProcessModel process;
  Clustering clustering;
  PsbfOptions opts;
  EnforcedProcess enforced;
  std::vector<std::vector<PassivityVerdict>> verdicts;  // [action][variable]
  std::vector<std::set<int>> transition_skip;           // [action]
  std::vector<ObsDependence> obs_dep;                   // [action]
  std::vector<Indexer> factor_ix;                       // per cluster
  std::vector<detail::MarginalSpec> marginal_specs;
  std::vector<std::vector<detail::TransitionPlan>> tplan;          // [action][cluster]
  std::vector<std::vector<std::vector<detail::ObsTermPlan>>> oplan;  // [action][cluster][obs l]
  std::uint64_t precompute_nanos = 0;

  int cluster_count() const { return int(clustering.state_clusters.size()); }
};

/// Factored belief state: the clustering's factors plus a handle to the
/// shared analysis they were built for.
struct FactorSet {
  std::shared_ptr<const PsbfAnalysis> analysis;
  std::vector<BeliefFactor> factors;
};

namespace detail {

inline int intern_marginal_spec(std::vector<MarginalSpec>& specs, int cluster,
                                const std::vector<int>& member_positions,
                                const std::vector<int>& member_dims) {
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].cluster == cluster && specs[i].member_positions == member_positions)
      return int(i);
  MarginalSpec spec;
  spec.cluster = cluster;
  spec.member_positions = member_positions;
  Indexer full = Indexer::over(member_dims);
  std::vector<int> sub_dims;
  for (int pos : member_positions) sub_dims.push_back(member_dims[pos]);
  Indexer sub = sub_dims.empty() ? Indexer::over({1}) : Indexer::over(sub_dims);
  spec.sub_size = sub.size();
  spec.entry_to_sub.resize(full.size());
  std::vector<Value> vals, sub_vals(member_positions.size());
  for (std::size_t e = 0; e < full.size(); ++e) {
    full.decode(e, vals);
    for (std::size_t k = 0; k < member_positions.size(); ++k)
      sub_vals[k] = vals[member_positions[k]];
    spec.entry_to_sub[e] =
        std::uint32_t(member_positions.empty() ? 0 : sub.index(sub_vals));
  }
  specs.push_back(std::move(spec));
  return int(specs.size()) - 1;
}

}  // namespace detail

inline std::shared_ptr<const PsbfAnalysis> build_psbf_analysis(const ProcessModel& process,
                                                               Clustering clustering,
                                                               PsbfOptions opts = {}) {
  auto start = std::chrono::steady_clock::now();
  auto an = std::make_shared<PsbfAnalysis>();
  an->process = process;
  an->clustering = std::move(clustering);
  an->opts = opts;
  an->enforced = enforce_a1(an->process, an->clustering);

  const auto state_dims = an->process.state_dims();
  const auto obs_dims = an->process.obs_dims();
  const auto& sc = an->clustering.state_clusters;
  const auto& oc = an->clustering.obs_clusters;

  for (const auto& members : sc) {
    std::vector<int> dims;
    for (int v : members) dims.push_back(state_dims[v]);
    an->factor_ix.push_back(Indexer::over(dims));
  }

  for (std::size_t a = 0; a < an->process.actions.size(); ++a) {
    const Dbn& dbn = an->process.actions[a];
    an->verdicts.push_back(detect_all_passive(dbn, opts.passivity));
    an->transition_skip.push_back(skippable_clusters(sc, dbn, an->verdicts.back()));
    an->obs_dep.push_back(compute_obs_dependence(an->clustering, dbn));

    // transition plans
    std::vector<detail::TransitionPlan> tplans;
    for (std::size_t k = 0; k < sc.size(); ++k) {
      detail::TransitionPlan plan;
      const auto& view = an->enforced.state_views[a][k];
      plan.table = build_cluster_transition(view, state_dims, opts.table_cell_cap);
      const auto& tpu = view.t_parent_union;
      for (std::size_t k2 = 0; k2 < sc.size(); ++k2) {
        std::vector<int> shared;  // members of k2 whose time-t counterpart feeds C_k
        std::vector<int> member_positions;
        for (std::size_t pos = 0; pos < sc[k2].size(); ++pos)
          if (std::binary_search(tpu.begin(), tpu.end(), sc[k2][pos])) {
            shared.push_back(sc[k2][pos]);
            member_positions.push_back(int(pos));
          }
        if (shared.empty()) continue;
        std::vector<int> member_dims;
        for (int v : sc[k2]) member_dims.push_back(state_dims[v]);
        detail::TransitionContributor contrib;
        contrib.spec =
            detail::intern_marginal_spec(an->marginal_specs, int(k2), member_positions, member_dims);
        // row value -> contributor submarginal index
        std::vector<int> shared_pos_in_row;
        for (int v : shared)
          shared_pos_in_row.push_back(
              int(std::lower_bound(tpu.begin(), tpu.end(), v) - tpu.begin()));
        std::vector<int> sub_dims;
        for (int v : shared) sub_dims.push_back(state_dims[v]);
        Indexer sub_ix = Indexer::over(sub_dims);
        contrib.row_to_sub.resize(plan.table.row_ix.size());
        std::vector<Value> row_vals, sub_vals(shared.size());
        for (std::size_t r = 0; r < plan.table.row_ix.size(); ++r) {
          if (tpu.empty()) {
            contrib.row_to_sub[r] = 0;
            continue;
          }
          plan.table.row_ix.decode(r, row_vals);
          for (std::size_t j = 0; j < shared.size(); ++j)
            sub_vals[j] = row_vals[shared_pos_in_row[j]];
          contrib.row_to_sub[r] = std::uint32_t(sub_ix.index(sub_vals));
        }
        plan.contributors.push_back(std::move(contrib));
      }
      // canonical (content-based) order keeps products identical under
      // cluster permutations
      std::sort(plan.contributors.begin(), plan.contributors.end(),
                [&](const detail::TransitionContributor& x, const detail::TransitionContributor& y) {
                  return sc[an->marginal_specs[x.spec].cluster] <
                         sc[an->marginal_specs[y.spec].cluster];
                });
      tplans.push_back(std::move(plan));
    }
    an->tplan.push_back(std::move(tplans));

    // observation-term plans, for every (state cluster, obs cluster) pair
    std::vector<std::vector<detail::ObsTermPlan>> oplans(sc.size());
    for (std::size_t k = 0; k < sc.size(); ++k) {
      for (std::size_t l = 0; l < oc.size(); ++l) {
        detail::ObsTermPlan plan;
        plan.obs_cluster = int(l);
        const auto& view = an->enforced.obs_views[a][l];
        plan.obs_members = view.members;
        const auto& xpu = view.x_parent_union;
        std::vector<int> row_dims;
        for (int v : xpu) row_dims.push_back(state_dims[v]);
        plan.row_ix = row_dims.empty() ? Indexer::over({1}) : Indexer::over(row_dims);
        std::vector<int> o_dims;
        for (int j : view.members) o_dims.push_back(obs_dims[j]);
        plan.obs_ix = Indexer::over(o_dims);
        if (plan.row_ix.size() * plan.obs_ix.size() > opts.table_cell_cap)
          throw InfeasibleError("observation term table exceeds the cell cap");

        // likelihood table over (state parents, member observation values)
        plan.omega.assign(plan.row_ix.size() * plan.obs_ix.size(), 0.0);
        std::vector<Value> row_vals, o_vals;
        for (std::size_t r = 0; r < plan.row_ix.size(); ++r) {
          if (!xpu.empty()) plan.row_ix.decode(r, row_vals);
          for (std::size_t ov = 0; ov < plan.obs_ix.size(); ++ov) {
            plan.obs_ix.decode(ov, o_vals);
            double prob = 1.0;
            for (std::size_t mi = 0; mi < view.members.size() && prob > 0.0; ++mi) {
              const auto& lc = view.local[mi];
              std::size_t row = 0;
              for (int par : lc.x_parents) {
                auto pos = std::lower_bound(xpu.begin(), xpu.end(), par) - xpu.begin();
                row = row * std::size_t(state_dims[par]) + std::size_t(row_vals[pos]);
              }
              for (int par : lc.y_parents) {
                auto pos = std::lower_bound(view.members.begin(), view.members.end(), par) -
                           view.members.begin();
                row = row * std::size_t(obs_dims[par]) + std::size_t(o_vals[pos]);
              }
              prob *= lc.cpt.at(row, o_vals[mi]);
            }
            plan.omega[r * plan.obs_ix.size() + ov] = prob;
          }
        }

        // overlap of the state cluster with the term's parents
        std::vector<int> overlap, overlap_pos_in_row, overlap_pos_in_cluster;
        for (std::size_t pos = 0; pos < sc[k].size(); ++pos)
          if (std::binary_search(xpu.begin(), xpu.end(), sc[k][pos])) {
            overlap.push_back(sc[k][pos]);
            overlap_pos_in_cluster.push_back(int(pos));
          }
        for (int v : overlap)
          overlap_pos_in_row.push_back(
              int(std::lower_bound(xpu.begin(), xpu.end(), v) - xpu.begin()));
        std::vector<int> overlap_dims;
        for (int v : overlap) overlap_dims.push_back(state_dims[v]);
        Indexer overlap_ix =
            overlap.empty() ? Indexer::over({1}) : Indexer::over(overlap_dims);
        plan.overlap_size = overlap_ix.size();
        plan.row_to_overlap.resize(plan.row_ix.size());
        std::vector<Value> sub_vals(overlap.size());
        for (std::size_t r = 0; r < plan.row_ix.size(); ++r) {
          if (overlap.empty()) {
            plan.row_to_overlap[r] = 0;
            continue;
          }
          plan.row_ix.decode(r, row_vals);
          for (std::size_t j = 0; j < overlap.size(); ++j)
            sub_vals[j] = row_vals[overlap_pos_in_row[j]];
          plan.row_to_overlap[r] = std::uint32_t(overlap_ix.index(sub_vals));
        }
        plan.col_to_overlap.resize(an->factor_ix[k].size());
        std::vector<Value> col_vals;
        for (std::size_t cidx = 0; cidx < an->factor_ix[k].size(); ++cidx) {
          if (overlap.empty()) {
            plan.col_to_overlap[cidx] = 0;
            continue;
          }
          an->factor_ix[k].decode(cidx, col_vals);
          for (std::size_t j = 0; j < overlap.size(); ++j)
            sub_vals[j] = col_vals[overlap_pos_in_cluster[j]];
          plan.col_to_overlap[cidx] = std::uint32_t(overlap_ix.index(sub_vals));
        }

        // other clusters feeding the term
        for (std::size_t k2 = 0; k2 < sc.size(); ++k2) {
          if (k2 == k) continue;
          std::vector<int> shared, member_positions;
          for (std::size_t pos = 0; pos < sc[k2].size(); ++pos)
            if (std::binary_search(xpu.begin(), xpu.end(), sc[k2][pos])) {
              shared.push_back(sc[k2][pos]);
              member_positions.push_back(int(pos));
            }
          if (shared.empty()) continue;
          std::vector<int> member_dims;
          for (int v : sc[k2]) member_dims.push_back(state_dims[v]);
          detail::ObsTermContributor contrib;
          contrib.spec = detail::intern_marginal_spec(an->marginal_specs, int(k2),
                                                      member_positions, member_dims);
          std::vector<int> shared_pos_in_row;
          for (int v : shared)
            shared_pos_in_row.push_back(
                int(std::lower_bound(xpu.begin(), xpu.end(), v) - xpu.begin()));
          std::vector<int> sub_dims;
          for (int v : shared) sub_dims.push_back(state_dims[v]);
          Indexer sub_ix = Indexer::over(sub_dims);
          contrib.row_to_sub.resize(plan.row_ix.size());
          std::vector<Value> svals(shared.size());
          for (std::size_t r = 0; r < plan.row_ix.size(); ++r) {
            plan.row_ix.decode(r, row_vals);
            for (std::size_t j = 0; j < shared.size(); ++j)
              svals[j] = row_vals[shared_pos_in_row[j]];
            contrib.row_to_sub[r] = std::uint32_t(sub_ix.index(svals));
          }
          plan.contributors.push_back(std::move(contrib));
        }
        std::sort(plan.contributors.begin(), plan.contributors.end(),
                  [&](const detail::ObsTermContributor& x, const detail::ObsTermContributor& y) {
                    return sc[an->marginal_specs[x.spec].cluster] <
                           sc[an->marginal_specs[y.spec].cluster];
                  });
        oplans[k].push_back(std::move(plan));
      }
    }
    an->oplan.push_back(std::move(oplans));
  }

  an->precompute_nanos = std::uint64_t(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                           std::chrono::steady_clock::now() - start)
                                           .count());
  return an;
}

/// Uniform factor per cluster.
inline FactorSet init_uniform(std::shared_ptr<const PsbfAnalysis> analysis) {
  FactorSet fs;
  fs.analysis = std::move(analysis);
  for (int k = 0; k < fs.analysis->cluster_count(); ++k) {
    BeliefFactor f;
    f.cluster = k;
    f.probs.assign(fs.analysis->factor_ix[k].size(),
                   1.0 / double(fs.analysis->factor_ix[k].size()));
    fs.factors.push_back(std::move(f));
  }
  return fs;
}

namespace detail {

/// Per-step marginal cache: each distinct (factor, subset) marginal is
/// computed once from the prior snapshot.
class MarginalCache {
 public:
  MarginalCache(const PsbfAnalysis& an, const FactorSet& fs) : an_(an), fs_(fs) {
    values_.resize(an.marginal_specs.size());
  }

  const std::vector<double>& get(int spec_id) {
    auto& slot = values_[spec_id];
    if (!slot.empty()) return slot;
    const auto& spec = an_.marginal_specs[spec_id];
    slot.assign(spec.sub_size, 0.0);
    const auto& probs = fs_.factors[spec.cluster].probs;
    for (std::size_t e = 0; e < probs.size(); ++e) slot[spec.entry_to_sub[e]] += probs[e];
    return slot;
  }

 private:
  const PsbfAnalysis& an_;
  const FactorSet& fs_;
  std::vector<std::vector<double>> values_;
};

inline void apply_sparsity(std::vector<double>& probs, double threshold) {
  if (threshold <= 0.0) return;
  double sum = 0;
  for (double p : probs)
    if (p >= threshold) sum += p;
  if (sum <= 0.0) return;  // zeroing everything would destroy the factor
  for (double& p : probs) p = p < threshold ? 0.0 : p / sum;
}

}  // namespace detail

/// Propagation step. Factors of skippable clusters are copied unchanged;
/// every other factor is recomputed from the prior snapshot, weighting the
/// cluster transition rows by the contributing factors' marginals.
inline FactorSet transition_step(const FactorSet& fs, int action, UpdateStats* stats = nullptr,
                                 Force force = Force::None) {
  const PsbfAnalysis& an = *fs.analysis;
  FactorSet out;
  out.analysis = fs.analysis;
  out.factors = fs.factors;
  detail::MarginalCache cache(an, fs);
  const auto& skip = an.transition_skip[action];
  if (stats) stats->factors_total = an.cluster_count();

  for (int k = 0; k < an.cluster_count(); ++k) {
    if (force == Force::None && skip.count(k)) continue;
    const auto& plan = an.tplan[action][k];
    const std::size_t rows = plan.table.row_ix.size();
    const std::size_t cols = plan.table.col_ix.size();
    std::vector<double> acc(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double w = 1.0;
      for (const auto& contrib : plan.contributors)
        w *= cache.get(contrib.spec)[contrib.row_to_sub[r]];
      if (w == 0.0) continue;
      const double* t_row = &plan.table.table[r * cols];
      for (std::size_t c = 0; c < cols; ++c) acc[c] += w * t_row[c];
    }
    normalize_or_throw(acc, "transition_step");
    out.factors[k].probs = std::move(acc);
    if (stats) {
      stats->transition_updated++;
      stats->entries_evaluated += rows * cols;
    }
  }
  return out;
}

/// Conditioning step. Factors of clusters with no directed path into the
/// observation variables are copied unchanged; the rest multiply in one
/// likelihood term per relevant observation cluster, then renormalize.
inline FactorSet observation_step(const FactorSet& fs, int action, const ObsTuple& o,
                                  UpdateStats* stats = nullptr, Force force = Force::None) {
  const PsbfAnalysis& an = *fs.analysis;
  if (int(o.size()) != an.process.m())
    throw ModelError("observation_step: tuple length does not match declarations");
  FactorSet out;
  out.analysis = fs.analysis;
  out.factors = fs.factors;
  detail::MarginalCache cache(an, fs);
  const auto& dep = an.obs_dep[action];
  if (stats && stats->factors_total == 0) stats->factors_total = an.cluster_count();

  const std::size_t obs_cluster_count = an.clustering.obs_clusters.size();
  for (int k = 0; k < an.cluster_count(); ++k) {
    std::vector<int> relevant;
    if (force == Force::EvaluateAll) {
      relevant.resize(obs_cluster_count);
      for (std::size_t l = 0; l < obs_cluster_count; ++l) relevant[l] = int(l);
    } else {
      if (dep.y_k[k].empty()) continue;
      relevant = dep.relevant_obs[k];
    }
    if (relevant.empty() && force == Force::None) continue;

    const std::size_t cols = an.factor_ix[k].size();
    std::vector<double> gain(cols, 1.0);
    for (int l : relevant) {
      const auto& plan = an.oplan[action][k][l];
      // observation values of this cluster's members
      std::vector<Value> o_vals;
      for (int j : plan.obs_members) o_vals.push_back(o[j]);
      const std::size_t o_idx = plan.obs_ix.index(o_vals);
      std::vector<double> term(plan.overlap_size, 0.0);
      const std::size_t rows = plan.row_ix.size();
      for (std::size_t r = 0; r < rows; ++r) {
        double w = plan.omega[r * plan.obs_ix.size() + o_idx];
        if (w == 0.0) continue;
        for (const auto& contrib : plan.contributors)
          w *= cache.get(contrib.spec)[contrib.row_to_sub[r]];
        term[plan.row_to_overlap[r]] += w;
      }
      for (std::size_t c = 0; c < cols; ++c) gain[c] *= term[plan.col_to_overlap[c]];
      if (stats) stats->entries_evaluated += rows + cols;
    }
    std::vector<double> acc(cols);
    for (std::size_t c = 0; c < cols; ++c) acc[c] = fs.factors[k].probs[c] * gain[c];
    normalize_or_throw(acc, "observation_step");
    out.factors[k].probs = std::move(acc);
    if (stats) stats->observation_updated++;
  }
  return out;
}

/// One full selective update: propagation then conditioning, with per-step
/// statistics for the harness.
inline FactorSet psbf_update(const FactorSet& fs, int action, const ObsTuple& o,
                             UpdateStats* stats = nullptr) {
  auto start = std::chrono::steady_clock::now();
  FactorSet hat = transition_step(fs, action, stats);
  FactorSet post = observation_step(hat, action, o, stats);
  const double threshold = fs.analysis->opts.sparsity_threshold;
  if (threshold > 0.0)
    for (auto& f : post.factors) detail::apply_sparsity(f.probs, threshold);
  if (stats)
    stats->wall_nanos += std::uint64_t(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                           std::chrono::steady_clock::now() - start)
                                           .count());
  return post;
}

/// Dense joint induced by the factor set; desk-scale only.
inline DenseBelief reconstruct_joint(const FactorSet& fs, std::size_t cap = kEnumerationCap) {
  const PsbfAnalysis& an = *fs.analysis;
  std::vector<std::vector<double>> probs;
  for (const auto& f : fs.factors) probs.push_back(f.probs);
  return reconstruct_joint(an.clustering.state_clusters, probs, an.process.state_dims(), cap);
}

}  // namespace psbf

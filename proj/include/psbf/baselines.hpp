#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "psbf/clustering.hpp"
#include "psbf/dbn.hpp"
#include "psbf/dense_belief.hpp"
#include "psbf/psbf.hpp"
#include "psbf/rng.hpp"
#include "psbf/types.hpp"

namespace psbf {

/// Sample-based belief representation: the probability of a state is its
/// normalised frequency among the particles.
struct ParticleSet {
  std::vector<StateTuple> particles;
  std::size_t count() const { return particles.size(); }
};

inline ParticleSet pf_init_uniform(const std::vector<int>& state_dims, std::size_t n,
                                   RngStream& rng) {
  ParticleSet ps;
  ps.particles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    StateTuple s(state_dims.size());
    for (std::size_t v = 0; v < state_dims.size(); ++v)
      s[v] = rng.uniform_int(0, state_dims[v] - 1);
    ps.particles.push_back(std::move(s));
  }
  return ps;
}

/// Bootstrap update: propagate every particle through the dynamics, weight by
/// the observation likelihood, then systematic resampling back to the same
/// particle count. Deterministic given the stream.
inline ParticleSet pf_update(const ParticleSet& ps, const Dbn& dbn, const ObsTuple& o,
                             RngStream& rng) {
  const std::size_t n = ps.count();
  std::vector<StateTuple> moved;
  moved.reserve(n);
  std::vector<double> weight(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    moved.push_back(sample_transition(dbn, ps.particles[i], rng));
    weight[i] = observation_prob(dbn, moved.back(), o);
    total += weight[i];
  }
  if (total <= 0.0)
    throw ZeroMassError("pf_update: every particle weight is zero; resampling impossible");

  ParticleSet out;
  out.particles.reserve(n);
  const double step = total / double(n);
  double position = rng.unit() * step;
  double cumulative = weight[0];
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (cumulative < position && idx + 1 < n) cumulative += weight[++idx];
    out.particles.push_back(moved[idx]);
    position += step;
  }
  return out;
}

/// Normalised state-frequency histogram of the particle set.
inline DenseBelief pf_histogram(const ParticleSet& ps, const std::vector<int>& state_dims) {
  DenseBelief b;
  b.indexer = Indexer::over(state_dims);
  if (b.indexer.size() > kEnumerationCap)
    throw InfeasibleError("pf_histogram: state space exceeds the enumeration cap");
  b.probs.assign(b.indexer.size(), 0.0);
  for (const auto& s : ps.particles) b.probs[b.indexer.index(s)] += 1.0;
  for (double& v : b.probs) v /= double(ps.count());
  return b;
}

/// Projection-based reference filter: reconstruct the joint from the factors,
/// run the dense update, then project back onto the clustering by
/// marginalisation. Exact inference plus projection; desk scale only.
inline std::vector<BeliefFactor> bk_reference_update(const std::vector<BeliefFactor>& factors,
                                                     const Clustering& clustering,
                                                     const std::vector<int>& state_dims,
                                                     const Dbn& dbn, const ObsTuple& o,
                                                     std::size_t cap = kEnumerationCap) {
  std::vector<std::vector<double>> probs;
  for (const auto& f : factors) probs.push_back(f.probs);
  DenseBelief joint = reconstruct_joint(clustering.state_clusters, probs, state_dims, cap);
  DenseBelief post = exact_update(joint, dbn, o);
  std::vector<BeliefFactor> out;
  for (std::size_t k = 0; k < clustering.state_clusters.size(); ++k) {
    BeliefFactor f;
    f.cluster = int(k);
    f.probs = marginalize(post, clustering.state_clusters[k], state_dims);
    out.push_back(std::move(f));
  }
  return out;
}

/// Replay-ready wrapper around the reference filter: caches the dense
/// transition matrices so long traces stay affordable.
class BkReferenceFilter {
 public:
  BkReferenceFilter(const ProcessModel& process, Clustering clustering)
      : process_(&process), clustering_(std::move(clustering)), plan_(process) {}

  std::vector<BeliefFactor> init_uniform() const {
    std::vector<BeliefFactor> out;
    const auto dims = process_->state_dims();
    for (std::size_t k = 0; k < clustering_.state_clusters.size(); ++k) {
      BeliefFactor f;
      f.cluster = int(k);
      std::vector<int> sub;
      for (int v : clustering_.state_clusters[k]) sub.push_back(dims[v]);
      f.probs.assign(Indexer::over(sub).size(), 0.0);
      for (double& p : f.probs) p = 1.0 / double(f.probs.size());
      out.push_back(std::move(f));
    }
    return out;
  }

  std::vector<BeliefFactor> update(const std::vector<BeliefFactor>& factors, int action_index,
                                   const ObsTuple& o) const {
    const auto dims = process_->state_dims();
    std::vector<std::vector<double>> probs;
    for (const auto& f : factors) probs.push_back(f.probs);
    DenseBelief joint = reconstruct_joint(clustering_.state_clusters, probs, dims);
    DenseBelief post = plan_.update(joint, action_index, o);
    std::vector<BeliefFactor> out;
    for (std::size_t k = 0; k < clustering_.state_clusters.size(); ++k) {
      BeliefFactor f;
      f.cluster = int(k);
      f.probs = marginalize(post, clustering_.state_clusters[k], dims);
      out.push_back(std::move(f));
    }
    return out;
  }

  const Clustering& clustering() const { return clustering_; }

 private:
  const ProcessModel* process_;
  Clustering clustering_;
  ExactFilterPlan plan_;
};

}  // namespace psbf

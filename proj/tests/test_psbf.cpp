#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "psbf/fixtures.hpp"
#include "psbf/psbf.hpp"
#include "test_util.hpp"

using namespace psbf;

namespace {

FactorSet random_factor_set(std::shared_ptr<const PsbfAnalysis> an, RngStream& rng) {
  FactorSet fs = init_uniform(an);
  for (auto& f : fs.factors) {
    double sum = 0;
    for (auto& p : f.probs) {
      p = rng.unit_open();
      sum += p;
    }
    for (auto& p : f.probs) p /= sum;
  }
  return fs;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) acc += p[i] * std::log(p[i] / std::max(q[i], 1e-300));
  return acc;
}

Clustering single_single(const ProcessModel& p) { return cluster_single(p); }

}  // namespace

TEST_CASE("single-cluster propagation equals the dense transition pass") {
  RngStream rng(11);
  for (int trial = 0; trial < 15; ++trial) {
    auto d = testutil::random_dbn(5, 2, rng);
    auto p = testutil::wrap_process(std::move(d));
    auto an = build_psbf_analysis(p, single_single(p));
    auto fs = random_factor_set(an, rng);
    auto hat = transition_step(fs, 0);

    DenseBelief b;
    b.indexer = Indexer::over(p.state_dims());
    b.probs = fs.factors[0].probs;
    auto want = exact_transition(b, p.actions[0]);
    for (std::size_t i = 0; i < want.probs.size(); ++i)
      REQUIRE_THAT(hat.factors[0].probs[i], Catch::Matchers::WithinAbs(want.probs[i], 1e-12));
  }
}

TEST_CASE("single state and observation cluster equals the dense conditioning pass") {
  RngStream rng(21);
  for (int trial = 0; trial < 15; ++trial) {
    testutil::RandomDbnOptions opt;
    opt.y_edge_prob = trial % 2 ? 0.5 : 0.0;  // also cover correlated sensors
    auto d = testutil::random_dbn(5, 3, rng, opt);
    auto p = testutil::wrap_process(std::move(d));
    auto an = build_psbf_analysis(p, single_single(p));
    auto fs = random_factor_set(an, rng);
    ObsTuple o = {rng.uniform_int(0, 1), rng.uniform_int(0, 1), rng.uniform_int(0, 1)};
    auto post = observation_step(fs, 0, o);

    DenseBelief hat;
    hat.indexer = Indexer::over(p.state_dims());
    hat.probs = fs.factors[0].probs;
    auto want = exact_condition(hat, p.actions[0], o);
    for (std::size_t i = 0; i < want.probs.size(); ++i)
      REQUIRE_THAT(post.factors[0].probs[i], Catch::Matchers::WithinAbs(want.probs[i], 1e-12));
  }
}

TEST_CASE("rotating the last arm joint skips the first factor and recomputes the second") {
  auto arm = fixtures::robot_arm();
  auto an = build_psbf_analysis(arm, cluster_moral(arm));
  int cw3 = arm.action_index("cw3");
  RngStream rng(31);
  auto fs = random_factor_set(an, rng);
  UpdateStats stats;
  auto hat = transition_step(fs, cw3, &stats);
  CHECK(stats.transition_updated == 1);
  CHECK(stats.factors_total == 2);
  CHECK(hat.factors[0].probs == fs.factors[0].probs);  // bitwise copy
  CHECK(hat.factors[1].probs != fs.factors[1].probs);
}

TEST_CASE("forcing the propagation of skippable clusters reproduces the copied factor") {
  // uncorrelated disjoint clusters with every member passive: the cluster
  // transition collapses to the identity, so the forced evaluation must agree
  // with the skip to within accumulation noise
  RngStream rng(41);
  int exercised = 0;
  for (int trial = 0; trial < 120 && exercised < 50; ++trial) {
    testutil::RandomDbnOptions opt;
    opt.passive_bias = 0.6;
    opt.t1_edge_prob = 0.15;
    auto d = testutil::random_dbn(3 + int(trial % 5), 2, rng, opt);
    auto p = testutil::wrap_process(std::move(d));
    auto pc = cluster_pc(p);
    auto status = check_assumptions(pc, p);
    REQUIRE(status[0].all());
    auto an = build_psbf_analysis(p, pc);
    if (an->transition_skip[0].empty()) continue;
    ++exercised;
    auto fs = random_factor_set(an, rng);
    auto skipped = transition_step(fs, 0, nullptr, Force::None);
    auto forced = transition_step(fs, 0, nullptr, Force::EvaluateAll);
    for (int k : an->transition_skip[0]) {
      REQUIRE(skipped.factors[k].probs == fs.factors[k].probs);
      for (std::size_t i = 0; i < forced.factors[k].probs.size(); ++i)
        REQUIRE_THAT(forced.factors[k].probs[i],
                     Catch::Matchers::WithinAbs(fs.factors[k].probs[i], 1e-12));
    }
  }
  REQUIRE(exercised >= 50);
}

TEST_CASE("factors without a path into the observations are unchanged by conditioning") {
  RngStream rng(51);
  int exercised = 0;
  for (int trial = 0; trial < 120 && exercised < 40; ++trial) {
    testutil::RandomDbnOptions opt;
    opt.obs_edge_prob = 0.15;
    opt.t1_edge_prob = 0.2;
    auto d = testutil::random_dbn(5, 2, rng, opt);
    auto p = testutil::wrap_process(std::move(d));
    auto modis = cluster_modis(p);
    auto an = build_psbf_analysis(p, modis);
    const auto& dep = an->obs_dep[0];
    bool has_disconnected = false;
    for (const auto& yk : dep.y_k) has_disconnected |= yk.empty();
    if (!has_disconnected) continue;
    ++exercised;
    auto fs = random_factor_set(an, rng);
    ObsTuple o = {rng.uniform_int(0, 1), rng.uniform_int(0, 1)};
    auto lazy = observation_step(fs, 0, o);
    auto forced = observation_step(fs, 0, o, nullptr, Force::EvaluateAll);
    for (std::size_t k = 0; k < dep.y_k.size(); ++k) {
      if (!dep.y_k[k].empty()) continue;
      REQUIRE(lazy.factors[k].probs == fs.factors[k].probs);
      for (std::size_t i = 0; i < forced.factors[k].probs.size(); ++i)
        REQUIRE_THAT(forced.factors[k].probs[i],
                     Catch::Matchers::WithinAbs(fs.factors[k].probs[i], 1e-12));
    }
  }
  REQUIRE(exercised >= 40);
}

TEST_CASE("clustered conditioning vs joint conditioning of the observation variables") {
  // two observation clusters against the single observation cluster; the
  // factored form is an approximation except for point-mass beliefs
  RngStream rng(61);
  auto d = testutil::random_dbn(5, 2, rng);
  auto p = testutil::wrap_process(std::move(d));

  auto modis = cluster_modis(p);
  Clustering split = modis;
  split.name = "modis/singleton";
  split.obs_clusters = {{0}, {1}};
  Clustering joint = modis;
  joint.name = "modis/single";
  joint.obs_clusters = {{0, 1}};
  auto an_split = build_psbf_analysis(p, split);
  auto an_joint = build_psbf_analysis(p, joint);

  SECTION("divergence is finite and recorded") {
    auto fs_split = random_factor_set(an_split, rng);
    FactorSet fs_joint;
    fs_joint.analysis = an_joint;
    fs_joint.factors = fs_split.factors;
    ObsTuple o = {0, 1};
    auto post_split = observation_step(fs_split, 0, o);
    auto post_joint = observation_step(fs_joint, 0, o);
    auto js = reconstruct_joint(post_split);
    auto jj = reconstruct_joint(post_joint);
    double divergence = kl(jj.probs, js.probs);
    CHECK(divergence >= 0.0);
    CHECK(divergence < 10.0);
    INFO("clustered-vs-joint conditioning divergence: " << divergence);
  }

  SECTION("they coincide exactly on a point-mass belief") {
    // a point mass is representable because the state clusters are disjoint
    StateTuple s = {1, 0, 1, 1, 0};
    auto make_point = [&](std::shared_ptr<const PsbfAnalysis> an) {
      FactorSet fs = init_uniform(an);
      for (std::size_t k = 0; k < fs.factors.size(); ++k) {
        const auto& members = an->clustering.state_clusters[k];
        std::vector<Value> sub;
        for (int v : members) sub.push_back(s[v]);
        std::fill(fs.factors[k].probs.begin(), fs.factors[k].probs.end(), 0.0);
        fs.factors[k].probs[an->factor_ix[k].index(sub)] = 1.0;
      }
      return fs;
    };
    ObsTuple o = {1, 1};
    auto post_split = observation_step(make_point(an_split), 0, o);
    auto post_joint = observation_step(make_point(an_joint), 0, o);
    for (std::size_t k = 0; k < post_split.factors.size(); ++k)
      for (std::size_t i = 0; i < post_split.factors[k].probs.size(); ++i)
        REQUIRE_THAT(post_split.factors[k].probs[i],
                     Catch::Matchers::WithinAbs(post_joint.factors[k].probs[i], 1e-12));
  }
}

TEST_CASE("identity dynamics with uniform sensors fix every factor set") {
  auto p = fixtures::identity_process(4, 2, true);
  auto an = build_psbf_analysis(p, cluster_modis(p));
  RngStream rng(71);
  auto fs = random_factor_set(an, rng);
  auto post = psbf_update(fs, 0, {0, 1, 1, 0});
  for (std::size_t k = 0; k < fs.factors.size(); ++k)
    for (std::size_t i = 0; i < fs.factors[k].probs.size(); ++i)
      REQUIRE_THAT(post.factors[k].probs[i],
                   Catch::Matchers::WithinAbs(fs.factors[k].probs[i], 1e-12));
}

TEST_CASE("degenerate clustering tracks the dense filter exactly over a trajectory") {
  RngStream rng(81);
  for (int trial = 0; trial < 5; ++trial) {
    auto d = testutil::random_dbn(6, 2, rng);
    auto p = testutil::wrap_process(std::move(d));
    auto an = build_psbf_analysis(p, single_single(p));
    auto fs = init_uniform(an);
    auto exact = uniform_belief(p.state_dims());
    StateTuple s(6, 0);
    RngStream sim(900 + trial);
    for (int step = 0; step < 30; ++step) {
      auto [s2, o] = sample_step(p.actions[0], s, sim);
      s = s2;
      fs = psbf_update(fs, 0, o);
      exact = exact_update(exact, p.actions[0], o);
      auto joint = reconstruct_joint(fs);
      REQUIRE(kl(exact.probs, joint.probs) <= 1e-10);
    }
  }
}

TEST_CASE("with closed disjoint clusters and one observation cluster, each step computes the "
          "dense sub-step's marginals of the factored input") {
  // Both phases are exact relative to the product form they consume: the
  // propagated factor is the cluster marginal of the dense propagation of
  // the reconstructed prior, and the conditioned factor is the cluster
  // marginal of the dense conditioning of the reconstructed propagated
  // factors. This holds no matter how many clusters were skipped.
  RngStream rng(1331);
  int processes = 0;
  while (processes < 100) {
    testutil::RandomDbnOptions opt;
    opt.passive_bias = 0.4;
    int n = 4 + int(processes % 5);  // 4..8 variables
    auto d = testutil::random_dbn(n, 2, rng, opt);
    auto p = testutil::wrap_process(std::move(d));
    auto pc = cluster_pc(p);
    Clustering c = pc;
    c.name = "pc/single";
    c.obs_clusters = cluster_single(p).obs_clusters;
    auto status = check_assumptions(c, p);
    REQUIRE(status[0].all());
    auto an = build_psbf_analysis(p, c);
    ++processes;

    auto fs = random_factor_set(an, rng);
    RngStream sim(5000 + processes);
    StateTuple s(n, 0);
    for (int step = 0; step < 6; ++step) {
      auto [s2, o] = sample_step(p.actions[0], s, sim);
      s = s2;
      auto prior_joint = reconstruct_joint(fs);
      auto hat = transition_step(fs, 0);
      auto dense_hat = exact_transition(prior_joint, p.actions[0]);
      for (std::size_t k = 0; k < c.state_clusters.size(); ++k) {
        auto want = marginalize(dense_hat, c.state_clusters[k], p.state_dims());
        for (std::size_t i = 0; i < want.size(); ++i)
          REQUIRE_THAT(hat.factors[k].probs[i], Catch::Matchers::WithinAbs(want[i], 1e-10));
      }
      auto post = observation_step(hat, 0, o);
      auto dense_post = exact_condition(reconstruct_joint(hat), p.actions[0], o);
      for (std::size_t k = 0; k < c.state_clusters.size(); ++k) {
        auto want = marginalize(dense_post, c.state_clusters[k], p.state_dims());
        for (std::size_t i = 0; i < want.size(); ++i)
          REQUIRE_THAT(post.factors[k].probs[i], Catch::Matchers::WithinAbs(want[i], 1e-10));
      }
      fs = post;
    }
  }
}

TEST_CASE("the robot-arm trace updates exactly one of two factors per step") {
  auto arm = fixtures::robot_arm();
  auto an = build_psbf_analysis(arm, cluster_moral(arm));
  int cw3 = arm.action_index("cw3");
  auto fs = init_uniform(an);
  StateTuple s = {2, 5, 7};
  RngStream sim(4242);
  for (int step = 0; step < 25; ++step) {
    auto [s2, o] = sample_step(arm.actions[cw3], s, sim);
    s = s2;
    UpdateStats stats;
    fs = psbf_update(fs, cw3, o, &stats);
    REQUIRE(stats.factors_total == 2);
    REQUIRE(stats.transition_updated == 1);
  }
}

TEST_CASE("uniform initialisation") {
  auto p = fixtures::identity_process(4, 2);
  Clustering c;
  c.state_clusters = {{0, 1}, {2}, {3}};
  auto an = build_psbf_analysis(p, c);
  auto fs = init_uniform(an);
  REQUIRE(fs.factors[0].probs.size() == 4);
  for (double v : fs.factors[0].probs) CHECK(v == 0.25);
  for (double v : fs.factors[1].probs) CHECK(v == 0.5);
  auto joint = reconstruct_joint(fs);
  for (double v : joint.probs) CHECK_THAT(v, Catch::Matchers::WithinAbs(1.0 / 16, 1e-15));
}

TEST_CASE("updates preserve factor normalization") {
  RngStream rng(91);
  for (int trial = 0; trial < 10; ++trial) {
    auto d = testutil::random_dbn(5, 2, rng);
    auto p = testutil::wrap_process(std::move(d));
    auto an = build_psbf_analysis(p, cluster_moral(p));
    auto fs = random_factor_set(an, rng);
    ObsTuple o = {rng.uniform_int(0, 1), rng.uniform_int(0, 1)};
    fs = psbf_update(fs, 0, o);
    for (const auto& f : fs.factors) {
      double sum = 0;
      for (double v : f.probs) sum += v;
      REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
  }
}

TEST_CASE("factor processing order does not change any output") {
  RngStream rng(111);
  auto d = testutil::random_dbn(5, 2, rng);
  auto p = testutil::wrap_process(std::move(d));
  auto moral = cluster_moral(p);
  Clustering reversed = moral;
  std::reverse(reversed.state_clusters.begin(), reversed.state_clusters.end());
  auto an1 = build_psbf_analysis(p, moral);
  auto an2 = build_psbf_analysis(p, reversed);
  auto fs1 = random_factor_set(an1, rng);
  FactorSet fs2;
  fs2.analysis = an2;
  for (std::size_t k = moral.state_clusters.size(); k-- > 0;) {
    fs2.factors.push_back(fs1.factors[k]);
    fs2.factors.back().cluster = int(moral.state_clusters.size() - 1 - k);
  }
  ObsTuple o = {1, 0};
  auto post1 = psbf_update(fs1, 0, o);
  auto post2 = psbf_update(fs2, 0, o);
  const std::size_t count = moral.state_clusters.size();
  for (std::size_t k = 0; k < count; ++k)
    REQUIRE(post1.factors[k].probs == post2.factors[count - 1 - k].probs);
}

TEST_CASE("skipping shrinks the evaluated-entry count") {
  auto arm = fixtures::robot_arm();
  auto an = build_psbf_analysis(arm, cluster_moral(arm));
  int cw3 = arm.action_index("cw3");
  RngStream rng(121);
  auto fs = random_factor_set(an, rng);
  UpdateStats lazy, forced;
  transition_step(fs, cw3, &lazy);
  transition_step(fs, cw3, &forced, Force::EvaluateAll);
  CHECK(lazy.entries_evaluated < forced.entries_evaluated);
}

TEST_CASE("sparsification zeroes small entries and renormalizes") {
  auto p = fixtures::identity_process(3, 2, true);
  PsbfOptions opts;
  opts.sparsity_threshold = 0.01;
  auto an = build_psbf_analysis(p, cluster_single(p), opts);
  auto fs = init_uniform(an);
  auto& probs = fs.factors[0].probs;
  // hand-build a factor with one tiny entry
  std::fill(probs.begin(), probs.end(), 0.0);
  probs[0] = 0.995;
  probs[1] = 0.005;
  auto post = psbf_update(fs, 0, {0, 0, 0});
  CHECK(post.factors[0].probs[1] == 0.0);
  double sum = 0;
  for (double v : post.factors[0].probs) sum += v;
  CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("a zero-mass conditioning is rejected") {
  auto p = fixtures::swap_process(true);
  auto an = build_psbf_analysis(p, cluster_modis(p));
  auto fs = init_uniform(an);
  // concentrate on (0,1): after the swap the state is (1,0)
  fs.factors[0].probs = {1.0, 0.0};
  fs.factors[1].probs = {0.0, 1.0};
  CHECK_THROWS_AS(psbf_update(fs, 0, {0, 0}), ZeroMassError);
}

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "psbf/clustering.hpp"
#include "psbf/fixtures.hpp"
#include "test_util.hpp"

using namespace psbf;

namespace {

// Union-find over the undirected t+1 skeleton: the independent oracle for
// connected components.
std::vector<std::vector<int>> uf_components(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int v) {
    return parent[v] == v ? v : parent[v] = find(parent[v]);
  };
  for (auto [a, b] : edges) parent[find(a)] = find(b);
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(members);
  std::sort(out.begin(), out.end());
  return out;
}

// Exhaustive maximal-clique enumeration: test every vertex subset.
std::vector<std::vector<int>> exhaustive_cliques(int n, const std::vector<std::uint64_t>& adj) {
  std::vector<std::uint64_t> cliques;
  for (std::uint64_t s = 1; s < (1ull << n); ++s) {
    bool is_clique = true;
    for (int a = 0; a < n && is_clique; ++a) {
      if (!(s & (1ull << a))) continue;
      for (int b = a + 1; b < n && is_clique; ++b) {
        if (!(s & (1ull << b))) continue;
        if (!(adj[a] & (1ull << b))) is_clique = false;
      }
    }
    if (!is_clique) continue;
    bool maximal = true;
    for (int v = 0; v < n && maximal; ++v) {
      if (s & (1ull << v)) continue;
      if ((adj[v] & s) == s) maximal = false;
    }
    if (maximal) cliques.push_back(s);
  }
  std::vector<std::vector<int>> out;
  for (auto c : cliques) out.push_back(detail::mask_to_sorted(c));
  std::sort(out.begin(), out.end());
  return out;
}

ProcessModel edgeless_process(int n) {
  ProcessModel p;
  for (int i = 0; i < n; ++i) p.state_vars.push_back({i + 1, VarKind::State, 2});
  Dbn d;
  d.action_id = "a0";
  d.n = n;
  d.m = 0;
  d.state_dims.assign(n, 2);
  for (int i = 0; i < n; ++i) d.add_edge(state_t(i), state_t1(i));
  d.finalize();
  for (int i = 0; i < n; ++i)
    d.set_x_cpt(i, [](const StateTuple& t_vals, const StateTuple&, std::vector<double>& row) {
      row[t_vals[0]] = 1.0;
    });
  p.actions.push_back(std::move(d));
  return p;
}

}  // namespace

TEST_CASE("pc clustering") {
  SECTION("robot arm slice collapses into one cluster") {
    auto arm = fixtures::robot_arm();
    auto c = cluster_pc(arm);
    REQUIRE(c.state_clusters.size() == 1);
    CHECK(c.state_clusters[0] == std::vector<int>{0, 1, 2});
  }

  SECTION("edgeless slice gives singletons") {
    auto p = edgeless_process(5);
    auto c = cluster_pc(p);
    REQUIRE(c.state_clusters.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(c.state_clusters[i] == std::vector<int>{i});
  }

  SECTION("random slices match the union-find oracle") {
    RngStream rng(31);
    for (int trial = 0; trial < 40; ++trial) {
      int n = rng.uniform_int(2, 10);
      auto d = testutil::random_dbn(n, 0, rng);
      auto p = testutil::wrap_process(std::move(d));
      std::vector<std::pair<int, int>> undirected;
      for (int i = 0; i < n; ++i)
        for (int par : p.actions[0].x_t1_parents[i]) undirected.push_back({par, i});
      auto want = uf_components(n, undirected);
      auto got = cluster_pc(p).state_clusters;
      REQUIRE(got == want);
    }
  }

  SECTION("pc satisfies every assumption by construction") {
    RngStream rng(77);
    for (int trial = 0; trial < 30; ++trial) {
      auto d = testutil::random_dbn(rng.uniform_int(2, 8), 2, rng);
      auto p = testutil::wrap_process(std::move(d));
      auto st = check_assumptions(cluster_pc(p), p);
      for (const auto& s : st) CHECK(s.all());
    }
  }
}

TEST_CASE("moral clustering") {
  SECTION("robot arm gives the two overlapping joint pairs") {
    auto arm = fixtures::robot_arm();
    auto c = cluster_moral(arm);
    REQUIRE(c.state_clusters.size() == 2);
    CHECK(c.state_clusters[0] == std::vector<int>{0, 1});
    CHECK(c.state_clusters[1] == std::vector<int>{1, 2});
  }

  SECTION("edgeless slice gives singletons") {
    auto c = cluster_moral(edgeless_process(4));
    REQUIRE(c.state_clusters.size() == 4);
  }

  SECTION("random slices match exhaustive maximal-clique enumeration") {
    RngStream rng(13);
    for (int trial = 0; trial < 40; ++trial) {
      int n = rng.uniform_int(2, 12);
      auto d = testutil::random_dbn(n, 0, rng);
      auto p = testutil::wrap_process(std::move(d));
      auto adj = detail::moralize(detail::state_slice_union(p));
      auto want = exhaustive_cliques(n, adj);
      auto got = cluster_moral(p).state_clusters;
      REQUIRE(got == want);
    }
  }
}

TEST_CASE("modis clustering") {
  SECTION("robot arm keeps the first pair and truncates the second") {
    auto arm = fixtures::robot_arm();
    auto c = cluster_modis(arm);
    REQUIRE(c.state_clusters.size() == 2);
    CHECK(c.state_clusters[0] == std::vector<int>{0, 1});
    CHECK(c.state_clusters[1] == std::vector<int>{2});
  }

  SECTION("already-disjoint cliques pass through unchanged") {
    auto p = edgeless_process(4);
    auto moral = cluster_moral(p).state_clusters;
    auto modis = cluster_modis(p).state_clusters;
    CHECK(moral == modis);
  }

  SECTION("random slices: disjoint, covering, and subsets of moral cliques") {
    RngStream rng(19);
    for (int trial = 0; trial < 40; ++trial) {
      int n = rng.uniform_int(2, 10);
      auto d = testutil::random_dbn(n, 0, rng);
      auto p = testutil::wrap_process(std::move(d));
      auto moral = cluster_moral(p).state_clusters;
      auto modis = cluster_modis(p);
      CHECK(detail::pairwise_disjoint(modis.state_clusters));
      CHECK(modis.covers(n, 0));
      for (const auto& cluster : modis.state_clusters) {
        bool inside_some_clique = false;
        for (const auto& clique : moral)
          if (std::includes(clique.begin(), clique.end(), cluster.begin(), cluster.end()))
            inside_some_clique = true;
        CHECK(inside_some_clique);
      }
      auto st = check_assumptions(modis, p);
      for (const auto& s : st) {
        CHECK(s.a2);
        CHECK(s.a4);
      }
    }
  }
}

TEST_CASE("check_assumptions flags a shared variable") {
  auto arm = fixtures::robot_arm();
  Clustering c;
  c.state_clusters = {{0, 1}, {1, 2}};
  c.obs_clusters = {{0}, {1}, {2}};
  auto st = check_assumptions(c, arm);
  for (const auto& s : st) CHECK_FALSE(s.a2);
}

TEST_CASE("enforce_a1") {
  SECTION("no foreign parents leaves tables untouched") {
    auto arm = fixtures::robot_arm();
    auto single = cluster_single(arm);
    auto e = enforce_a1(arm, single);
    for (std::size_t a = 0; a < arm.actions.size(); ++a) {
      CHECK(e.modified_state[a].empty());
      CHECK(e.modified_obs[a].empty());
      const auto& view = e.state_views[a][0];
      for (std::size_t mi = 0; mi < view.members.size(); ++mi)
        CHECK(view.local[mi].cpt.table == arm.actions[a].x_cpt[view.members[mi]].table);
    }
  }

  SECTION("robot arm with moral clusters: joint 2 modified in the second cluster only") {
    auto arm = fixtures::robot_arm();
    auto moral = cluster_moral(arm);  // {t1,t2}, {t2,t3}
    auto e = enforce_a1(arm, moral);
    int cw3 = arm.action_index("cw3");
    REQUIRE(e.modified_state[cw3] == std::vector<std::pair<int, int>>{{1, 1}});
    CHECK(e.is_modified_state(cw3, 1, 1));
    CHECK_FALSE(e.is_modified_state(cw3, 0, 1));
    // within cluster 1 ({t2,t3}), joint 2 keeps only its time-t parents
    const auto& lc = e.state_views[cw3][1].local[0];
    CHECK(lc.t1_parents.empty());
    CHECK(lc.modified);
    // rows remain normalized
    for (std::size_t r = 0; r < lc.cpt.rows; ++r) {
      double sum = 0;
      for (int col = 0; col < lc.cpt.cols; ++col) sum += lc.cpt.at(r, col);
      CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
  }

  SECTION("binary fixture: marginalised rows are the average of the conditioned rows") {
    // x2 has parents (x2^t, x1^{t+1}); marginalising x1^{t+1} under the
    // uniform weighting must average the two conditioned rows.
    ProcessModel p;
    p.state_vars = {{1, VarKind::State, 2}, {2, VarKind::State, 2}};
    Dbn d;
    d.action_id = "a0";
    d.n = 2;
    d.m = 0;
    d.state_dims = {2, 2};
    d.add_edge(state_t(0), state_t1(0));
    d.add_edge(state_t(1), state_t1(1));
    d.add_edge(state_t1(0), state_t1(1));
    d.finalize();
    d.set_x_cpt(0, [](const StateTuple& t_vals, const StateTuple&, std::vector<double>& row) {
      row[t_vals[0]] = 1.0;
    });
    // rows indexed by (x2^t, x1^{t+1})
    d.x_cpt.resize(2);
    d.x_cpt[1] = Cpt::zeros(4, 2);
    double table[4][2] = {{0.3, 0.7}, {0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}};
    for (int r = 0; r < 4; ++r)
      for (int col = 0; col < 2; ++col) d.x_cpt[1].at(r, col) = table[r][col];
    p.actions.push_back(std::move(d));

    Clustering c;
    c.state_clusters = {{0}, {1}};
    auto e = enforce_a1(p, c);
    const auto& lc = e.state_views[0][1].local[0];
    REQUIRE(lc.modified);
    REQUIRE(lc.cpt.rows == 2);  // conditioned on x2^t only
    // hand-computed averages of the (x1^{t+1}=0, x1^{t+1}=1) row pairs
    CHECK_THAT(lc.cpt.at(0, 0), Catch::Matchers::WithinAbs(0.6, 1e-12));   // (0.3+0.9)/2
    CHECK_THAT(lc.cpt.at(0, 1), Catch::Matchers::WithinAbs(0.4, 1e-12));   // (0.7+0.1)/2
    CHECK_THAT(lc.cpt.at(1, 0), Catch::Matchers::WithinAbs(0.4, 1e-12));   // (0.2+0.6)/2
    CHECK_THAT(lc.cpt.at(1, 1), Catch::Matchers::WithinAbs(0.6, 1e-12));   // (0.8+0.4)/2
    REQUIRE(e.modified_state[0] == std::vector<std::pair<int, int>>{{1, 1}});
  }

  SECTION("idempotence: a second marginalisation pass changes nothing") {
    RngStream rng(44);
    for (int trial = 0; trial < 20; ++trial) {
      auto d = testutil::random_dbn(rng.uniform_int(3, 7), 2, rng);
      auto p = testutil::wrap_process(std::move(d));
      auto c = cluster_modis(p);
      auto e = enforce_a1(p, c);
      // each cluster-local table has no foreign parents left, so dropping
      // nothing must reproduce it exactly
      for (const auto& view : e.state_views[0]) {
        for (const auto& lc : view.local) {
          std::vector<int> dims;
          for ([[maybe_unused]] int par : lc.t_parents) dims.push_back(2);
          for ([[maybe_unused]] int par : lc.t1_parents) dims.push_back(2);
          if (dims.empty()) continue;
          auto again = detail::marginalize_out_parents(
              lc.cpt, dims, std::vector<char>(dims.size(), 0));
          REQUIRE(again.table == lc.cpt.table);
        }
      }
    }
  }

  SECTION("every modified row stays normalized on random processes") {
    RngStream rng(91);
    for (int trial = 0; trial < 20; ++trial) {
      auto d = testutil::random_dbn(rng.uniform_int(3, 8), 2, rng);
      auto p = testutil::wrap_process(std::move(d));
      for (const auto& name : {"moral", "modis"}) {
        auto e = enforce_a1(p, make_clustering(p, name));
        for (const auto& view : e.state_views[0])
          for (const auto& lc : view.local)
            for (std::size_t r = 0; r < lc.cpt.rows; ++r) {
              double sum = 0;
              for (int col = 0; col < lc.cpt.cols; ++col) sum += lc.cpt.at(r, col);
              REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
            }
      }
    }
  }
}

TEST_CASE("observation clusters are closed by marginalising foreign sensor parents") {
  // two correlated sensors: y2 reads y1; splitting them into singleton
  // clusters forces y1 out of y2's local table under the uniform weighting
  ProcessModel p;
  p.state_vars = {{1, VarKind::State, 2}};
  p.obs_vars = {{1, VarKind::Obs, 2}, {2, VarKind::Obs, 2}};
  Dbn d;
  d.action_id = "a0";
  d.n = 1;
  d.m = 2;
  d.state_dims = {2};
  d.obs_dims = {2, 2};
  d.add_edge(state_t(0), state_t1(0));
  d.add_edge(state_t1(0), obs_t1(0));
  d.add_edge(state_t1(0), obs_t1(1));
  d.add_edge(obs_t1(0), obs_t1(1));
  d.finalize();
  d.set_x_cpt(0, [](const StateTuple& t_vals, const StateTuple&, std::vector<double>& row) {
    row[t_vals[0]] = 1.0;
  });
  d.set_y_cpt(0, [](const StateTuple& x_vals, const ObsTuple&, std::vector<double>& row) {
    row[x_vals[0]] = 0.9;
    row[1 - x_vals[0]] = 0.1;
  });
  // rows of y2 indexed by (x1^{t+1}, y1)
  d.set_y_cpt(1, [](const StateTuple& x_vals, const ObsTuple& y_vals, std::vector<double>& row) {
    double agree = x_vals[0] == y_vals[0] ? 0.8 : 0.6;
    row[x_vals[0]] = agree;
    row[1 - x_vals[0]] = 1 - agree;
  });
  p.actions.push_back(std::move(d));

  auto singleton = cluster_singleton(p);
  auto status = check_assumptions(singleton, p);
  CHECK_FALSE(status[0].a3);
  auto e = enforce_a1(p, singleton);
  REQUIRE(e.modified_obs[0] == std::vector<std::pair<int, int>>{{1, 1}});
  const auto& lc = e.obs_views[0][1].local[0];
  REQUIRE(lc.y_parents.empty());
  REQUIRE(lc.cpt.rows == 2);  // conditioned on x1^{t+1} only
  // hand average of the (y1 = 0, y1 = 1) row pairs
  CHECK_THAT(lc.cpt.at(0, 0), Catch::Matchers::WithinAbs(0.7, 1e-12));  // (0.8+0.6)/2
  CHECK_THAT(lc.cpt.at(1, 1), Catch::Matchers::WithinAbs(0.7, 1e-12));

  // the single observation cluster is already closed
  auto single = cluster_single(p);
  CHECK(check_assumptions(single, p)[0].a3);
  auto e2 = enforce_a1(p, single);
  CHECK(e2.modified_obs[0].empty());

  // moralisation over the sensor subgraph keeps the chain together
  auto moral = cluster_moral(p);
  CHECK(moral.obs_clusters == std::vector<std::vector<int>>{{0, 1}});
}

TEST_CASE("cluster transition table matches direct evaluation under closure") {
  // with the single cluster, T_k over the full slice equals transition_prob
  RngStream rng(3);
  auto d = testutil::random_dbn(4, 0, rng);
  auto p = testutil::wrap_process(std::move(d));
  auto e = enforce_a1(p, cluster_single(p));
  auto ct = build_cluster_transition(e.state_views[0][0], p.state_dims());
  const auto& dbn = p.actions[0];
  StateTuple s(4), s2(4);
  for (std::size_t r = 0; r < ct.row_ix.size(); ++r) {
    auto rv = ct.row_ix.decode(r);
    // t_parent_union may omit variables with no outgoing edge
    const auto& tpu = e.state_views[0][0].t_parent_union;
    for (std::size_t c = 0; c < ct.col_ix.size(); ++c) {
      auto cv = ct.col_ix.decode(c);
      // assemble full (s, s') tuples; absent t-vars do not matter: try 0
      std::fill(s.begin(), s.end(), 0);
      for (std::size_t k = 0; k < tpu.size(); ++k) s[tpu[k]] = rv[k];
      for (int i = 0; i < 4; ++i) s2[i] = cv[i];
      REQUIRE_THAT(ct.at(r, c), Catch::Matchers::WithinAbs(transition_prob(dbn, s, s2), 1e-12));
    }
  }
}

TEST_CASE("mixed clustering names split state and observation methods") {
  auto arm = fixtures::robot_arm();
  auto c = make_clustering(arm, "moral/singleton");
  CHECK(c.state_clusters.size() == 2);
  CHECK(c.obs_clusters.size() == 3);
  CHECK_THROWS_AS(make_clustering(arm, "nope"), ModelError);
}

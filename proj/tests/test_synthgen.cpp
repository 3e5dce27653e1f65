#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>

#include "psbf/passivity.hpp"
#include "psbf/process_io.hpp"
#include "psbf/synthgen.hpp"

using namespace psbf;

TEST_CASE("mixture generation on a single variable") {
  // hand trace: the region is (1), the mean must be 1, the spread collapses
  // to zero so the clamp applies literally: min[n/10, max[5/4, 0]] = 0.1
  for (std::uint64_t seed : {0ull, 7ull, 131ull}) {
    RngStream rng(seed);
    std::vector<MixtureTraceEntry> trace;
    auto g = mixture_of_gaussians(1, rng, &trace);
    REQUIRE(g.size() == 1);
    CHECK(g[0].mean == 1);
    CHECK_THAT(g[0].sigma, Catch::Matchers::WithinAbs(0.1, 1e-15));
    CHECK_THAT(g[0].variance(), Catch::Matchers::WithinAbs(0.01, 1e-15));
    REQUIRE(trace.size() == 1);
    CHECK(trace[0].beta == 0.0);
  }
}

TEST_CASE("mixture trace replay obeys every line's postcondition") {
  const double lambda = 4.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    for (int n : {12, 20, 33}) {
      RngStream rng(seed * 1000 + n);
      std::vector<MixtureTraceEntry> trace;
      auto g = mixture_of_gaussians(n, rng, &trace);
      REQUIRE(g.size() == trace.size());
      const double sigma_min = 5.0 / lambda;
      const double sigma_max = n / 10.0;
      std::set<std::pair<int, int>> seen_regions;
      for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& e = trace[i];
        // region sanity and the mean inside it
        REQUIRE(1 <= e.lo);
        REQUIRE(e.lo <= e.mean);
        REQUIRE(e.mean <= e.hi);
        REQUIRE(e.hi <= n);
        REQUIRE(seen_regions.insert({e.lo, e.hi}).second);
        // spread derived from the distance to the region ends
        REQUIRE_THAT(e.beta,
                     Catch::Matchers::WithinAbs(
                         std::min(double(e.mean - e.lo), double(e.hi - e.mean)) / lambda, 1e-12));
        // the clamp window, applied in the stated order
        REQUIRE(e.sigma <= std::max(sigma_max, std::min(sigma_min, e.sigma)) + 1e-12);
        REQUIRE(e.sigma <= sigma_max + 1e-12);
        if (sigma_min <= sigma_max) REQUIRE(e.sigma >= sigma_min - 1e-12);
        CHECK(g[i].mean == e.mean);
        CHECK(g[i].sigma == e.sigma);
      }
      // child regions exclude the lambda-sigma window around the mean
      for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& parent = trace[i];
        for (std::size_t j = i + 1; j < trace.size(); ++j) {
          const auto& child = trace[j];
          if (child.lo >= parent.lo && child.hi <= parent.hi) {
            bool left = child.hi < parent.mean - parent.sigma * lambda;
            bool right = child.lo > parent.mean + parent.sigma * lambda;
            if (child.hi < parent.mean)
              CHECK(left);
            else if (child.lo > parent.mean)
              CHECK(right);
          }
        }
      }
      // every spread respects the upper clamp
      for (const auto& comp : g) REQUIRE(comp.sigma <= sigma_max + 1e-12);
    }
  }
}

TEST_CASE("full passivity: every untargeted variable is passive in both actions") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    GenInfo info;
    auto p = generate_process({SizeClass::S, 1.0, seed}, &info);
    REQUIRE(p.actions.size() == 2);
    for (std::size_t a = 0; a < 2; ++a) {
      const auto& targets = info.targets[a];
      for (int j = 0; j < p.n(); ++j) {
        if (std::find(targets.begin(), targets.end(), j) != targets.end()) continue;
        auto v = detect_passive(j, p.actions[a]);
        REQUIRE(v.status == Passivity::Passive);
      }
      REQUIRE(targets.size() >= 1);
      REQUIRE(targets.size() <= 3);
    }
  }
}

TEST_CASE("zero passivity: structural guarantees still hold") {
  for (std::uint64_t seed : {10ull, 11ull, 12ull}) {
    GenInfo info;
    auto p = generate_process({SizeClass::S, 0.0, seed}, &info);
    for (char d : info.designated) CHECK(d == 0);
    for (const auto& dbn : p.actions) {
      // every time-t variable has an effect
      for (int i = 0; i < dbn.n; ++i) {
        bool has_out = false;
        for (int j = 0; j < dbn.n; ++j)
          if (std::binary_search(dbn.x_t_parents[j].begin(), dbn.x_t_parents[j].end(), i))
            has_out = true;
        CHECK(has_out);
      }
      // every next-step variable has a cause, every sensor has a source
      for (int j = 0; j < dbn.n; ++j)
        CHECK((dbn.x_t_parents[j].size() + dbn.x_t1_parents[j].size()) >= 1);
      for (int j = 0; j < dbn.m; ++j) CHECK(dbn.y_x_parents[j].size() >= 1);
    }
  }
}

TEST_CASE("generated processes validate under every size class") {
  for (auto size : {SizeClass::S, SizeClass::M, SizeClass::L, SizeClass::XL}) {
    auto p = generate_process({size, 0.5, 99});
    REQUIRE(validate_process(p).ok());
  }
}

TEST_CASE("size-class dimensions") {
  auto p = generate_process({SizeClass::S, 0.5, 0});
  CHECK(p.n() == 10);
  CHECK(p.m() == 3);
  CHECK(Indexer::over(p.state_dims()).size() == 1024);  // > one thousand states
  CHECK(Indexer::over(p.obs_dims()).size() == 8);
  auto [n_xl, m_xl] = size_class_dims(SizeClass::XL);
  CHECK(n_xl == 40);
  CHECK(m_xl == 12);
}

TEST_CASE("keep rows of designated variables are point masses on the old value") {
  GenInfo info;
  auto p = generate_process({SizeClass::S, 0.8, 21}, &info);
  for (std::size_t a = 0; a < 2; ++a) {
    const auto& dbn = p.actions[a];
    for (int j = 0; j < p.n(); ++j) {
      if (!info.designated[j]) continue;
      if (std::find(info.targets[a].begin(), info.targets[a].end(), j) != info.targets[a].end())
        continue;
      const auto& tp = dbn.x_t_parents[j];
      const auto& sp = dbn.x_t1_parents[j];
      std::vector<int> dims(tp.size() + sp.size(), 2);
      Indexer ix = Indexer::over(dims);
      std::vector<Value> vals;
      int checked = 0;
      for (std::size_t r = 0; r < ix.size(); ++r) {
        ix.decode(r, vals);
        int own = -1;
        bool unchanged = true;
        for (std::size_t k = 0; k < tp.size(); ++k) {
          if (tp[k] == j) {
            own = vals[k];
            continue;
          }
          auto it = std::lower_bound(sp.begin(), sp.end(), tp[k]);
          REQUIRE((it != sp.end() && *it == tp[k]));  // paired edge exists
          if (vals[k] != vals[tp.size() + std::size_t(it - sp.begin())]) unchanged = false;
        }
        REQUIRE(own >= 0);
        if (!unchanged) continue;
        REQUIRE(dbn.x_cpt[j].at(r, own) == 1.0);
        REQUIRE(dbn.x_cpt[j].at(r, 1 - own) == 0.0);
        ++checked;
      }
      REQUIRE(checked > 0);
    }
  }
}

TEST_CASE("generation is a pure function of its request") {
  GenSpec spec{SizeClass::S, 0.5, 777};
  auto p1 = generate_process(spec);
  auto p2 = generate_process(spec);
  REQUIRE(p1.actions.size() == p2.actions.size());
  for (std::size_t a = 0; a < p1.actions.size(); ++a) {
    CHECK(p1.actions[a].edges == p2.actions[a].edges);
    for (int i = 0; i < p1.n(); ++i)
      CHECK(p1.actions[a].x_cpt[i].table == p2.actions[a].x_cpt[i].table);
    for (int j = 0; j < p1.m(); ++j)
      CHECK(p1.actions[a].y_cpt[j].table == p2.actions[a].y_cpt[j].table);
  }
  // and the serialized documents are byte-identical
  CHECK(process_to_json(p1).dump() == process_to_json(p2).dump());
  auto p3 = generate_process({SizeClass::S, 0.5, 778});
  CHECK(process_to_json(p1).dump() != process_to_json(p3).dump());
}

TEST_CASE("sensor probabilities sit in the biased bands") {
  auto p = generate_process({SizeClass::M, 0.5, 5});
  for (const auto& dbn : p.actions)
    for (int j = 0; j < dbn.m; ++j)
      for (std::size_t r = 0; r < dbn.y_cpt[j].rows; ++r) {
        double p1 = dbn.y_cpt[j].at(r, 1);
        bool banded = (p1 >= 0.0 && p1 <= 0.2) || (p1 >= 0.8 && p1 <= 1.0);
        REQUIRE(banded);
      }
}

TEST_CASE("trajectories") {
  auto p = generate_process({SizeClass::S, 0.5, 31});

  SECTION("replay with the same seed is identical") {
    RngStream r1(12), r2(12);
    auto t1 = simulate_trajectory(p, 50, r1);
    auto t2 = simulate_trajectory(p, 50, r2);
    CHECK(t1.initial == t2.initial);
    REQUIRE(t1.steps.size() == t2.steps.size());
    for (std::size_t i = 0; i < t1.steps.size(); ++i) {
      CHECK(t1.steps[i].action == t2.steps[i].action);
      CHECK(t1.steps[i].state == t2.steps[i].state);
      CHECK(t1.steps[i].obs == t2.steps[i].obs);
    }
  }

  SECTION("actions are chosen uniformly") {
    RngStream rng(77);
    auto t = simulate_trajectory(p, 10000, rng);
    int count0 = 0;
    for (const auto& s : t.steps) count0 += s.action == 0;
    double sigma = std::sqrt(10000 * 0.25);
    CHECK(std::abs(count0 - 5000.0) < 3 * sigma);
  }

  SECTION("every recorded step has positive probability") {
    RngStream rng(88);
    auto t = simulate_trajectory(p, 200, rng);
    StateTuple prev = t.initial;
    for (const auto& s : t.steps) {
      REQUIRE(transition_prob(p.actions[s.action], prev, s.state) > 0.0);
      REQUIRE(observation_prob(p.actions[s.action], s.state, s.obs) > 0.0);
      prev = s.state;
    }
  }
}

#include "gnas/evolution.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace gnas;

namespace {

ArchitectureVector vec(std::initializer_list<Index> v) {
  ArchitectureVector p;
  p.p = v;
  return p;
}

Evaluator hamming_evaluator(const ArchitectureVector& target) {
  return [target](const ArchitectureVector& p, std::uint64_t seed) {
    EvaluationRecord r;
    r.p = p;
    r.seed = seed;
    int d = 0;
    for (std::size_t i = 0; i < p.p.size(); ++i) d += p.p[i] != target.p[i];
    r.reward = -static_cast<double>(d);
    return r;
  };
}

double best_reward(const std::vector<EvaluationRecord>& log) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : log) best = std::max(best, r.reward);
  return best;
}

}  // namespace

TEST_CASE("population keeps FIFO semantics at capacity") {
  Population pop(2);
  pop.insert(vec({1}), -1.0);
  pop.insert(vec({2}), -2.0);
  pop.insert(vec({3}), -3.0);
  REQUIRE(pop.size() == 2);
  CHECK(pop[0].p == vec({2}));
  CHECK(pop[1].p == vec({3}));

  for (int i = 0; i < 50; ++i) {
    pop.insert(vec({Index(10 + i)}), 0.0);
    CHECK(pop.size() <= 2);
  }
  CHECK(pop.size() == 2);
}

TEST_CASE("tournament selection") {
  SUBCASE("size-1 tournaments are uniform draws") {
    Population pop(10);
    for (Index i = 0; i < 10; ++i) pop.insert(vec({i}), -static_cast<double>(i));
    std::mt19937_64 rng(3);
    const int trials = 100000;
    std::array<int, 10> hits{};
    for (int t = 0; t < trials; ++t)
      ++hits[static_cast<std::size_t>(pop.tournament(1, rng).p.p[0])];
    for (int i = 0; i < 10; ++i) {
      const double freq = static_cast<double>(hits[static_cast<std::size_t>(i)]) / trials;
      CHECK(freq > 0.08);
      CHECK(freq < 0.12);
    }
  }
  SUBCASE("winner is the max reward, ties to the oldest") {
    Population pop(4);
    pop.insert(vec({0}), -5.0);
    pop.insert(vec({1}), -1.0);
    pop.insert(vec({2}), -1.0);
    pop.insert(vec({3}), -9.0);
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
      const PopulationMember& w = pop.tournament(50, rng);  // large S covers everyone w.h.p.
      CHECK(w.reward == -1.0);
      CHECK(w.p == vec({1}));
    }
  }
}

TEST_CASE("search over the hamming surrogate") {
  const ChoiceTable table = ChoiceTable::uniform(10, 4);

  SUBCASE("regularized evolution solves it, random search practically never") {
    int re_hits = 0, rs_hits = 0;
    std::vector<double> re_best, rs_best;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ArchitectureVector target = sample_uniform(table, seed * 7919 + 13);
      SearchConfig cfg;
      cfg.population = 20;
      cfg.sample_size = 5;
      cfg.workers = 1;
      cfg.budget_s = 1e9;
      cfg.max_evals = 500;
      cfg.seed = seed;

      cfg.strategy = Strategy::kRegularizedEvolution;
      auto relog = run_search(cfg, table, hamming_evaluator(target));
      CHECK(relog.size() == 500);
      re_best.push_back(best_reward(relog));
      if (re_best.back() == 0.0) ++re_hits;

      cfg.strategy = Strategy::kRandomSearch;
      auto rslog = run_search(cfg, table, hamming_evaluator(target));
      rs_best.push_back(best_reward(rslog));
      if (rs_best.back() == 0.0) ++rs_hits;
    }
    CHECK(re_hits >= 8);
    CHECK(rs_hits <= 2);
  }

  SUBCASE("sequential mode is reproducible bitwise") {
    ArchitectureVector target = sample_uniform(table, std::uint64_t{99});
    SearchConfig cfg;
    cfg.population = 10;
    cfg.sample_size = 3;
    cfg.workers = 1;
    cfg.budget_s = 1e9;
    cfg.max_evals = 80;
    cfg.seed = 5;
    auto a = run_search(cfg, table, hamming_evaluator(target));
    auto b = run_search(cfg, table, hamming_evaluator(target));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].p == b[i].p);
      CHECK(a[i].reward == b[i].reward);
      CHECK(a[i].seed == b[i].seed);
    }
  }

  SUBCASE("running max of the log never decreases") {
    ArchitectureVector target = sample_uniform(table, std::uint64_t{123});
    SearchConfig cfg;
    cfg.population = 20;
    cfg.sample_size = 10;
    cfg.workers = 1;
    cfg.budget_s = 1e9;
    cfg.max_evals = 300;
    cfg.seed = 3;
    auto log = run_search(cfg, table, hamming_evaluator(target));
    double running = -std::numeric_limits<double>::infinity();
    for (const auto& r : log) {
      running = std::max(running, r.reward);
      CHECK(best_reward({log.begin(), log.begin() + (&r - log.data()) + 1}) == running);
    }
  }

  SUBCASE("multi-worker runs finish and honor the eval budget") {
    ArchitectureVector target = sample_uniform(table, std::uint64_t{5});
    SearchConfig cfg;
    cfg.population = 10;
    cfg.sample_size = 3;
    cfg.workers = 4;
    cfg.budget_s = 1e9;
    cfg.max_evals = 200;
    cfg.seed = 11;
    auto log = run_search(cfg, table, hamming_evaluator(target));
    CHECK(log.size() == 200);
  }

  SUBCASE("a crashing evaluator yields a failed record and the search continues") {
    ArchitectureVector target = sample_uniform(table, std::uint64_t{17});
    auto inner = hamming_evaluator(target);
    int calls = 0;
    Evaluator crashy = [&](const ArchitectureVector& p, std::uint64_t seed) {
      if (++calls % 7 == 0) throw std::runtime_error("boom");
      return inner(p, seed);
    };
    SearchConfig cfg;
    cfg.population = 10;
    cfg.sample_size = 3;
    cfg.workers = 1;
    cfg.budget_s = 1e9;
    cfg.max_evals = 60;
    cfg.seed = 2;
    auto log = run_search(cfg, table, crashy);
    CHECK(log.size() == 60);
    int failed = 0;
    for (const auto& r : log) failed += r.failed ? 1 : 0;
    CHECK(failed == 60 / 7);
    for (const auto& r : log)
      if (r.failed) CHECK(r.reward == EvaluationRecord::worst_reward());
  }
}

TEST_CASE("trajectory running average") {
  auto log_with = [](std::initializer_list<double> rewards) {
    std::vector<EvaluationRecord> log;
    double t = 0.0;
    for (double r : rewards) {
      EvaluationRecord rec;
      rec.reward = r;
      rec.t_finish = ++t;
      log.push_back(rec);
    }
    return log;
  };

  SUBCASE("window 2 over [1,2,3]") {
    auto series = trajectory(log_with({1, 2, 3}), 2);
    REQUIRE(series.size() == 3);
    CHECK(series[0].second == 1.0);
    CHECK(series[1].second == 1.5);
    CHECK(series[2].second == 2.5);
  }
  SUBCASE("window larger than the log ends at the global mean") {
    auto series = trajectory(log_with({2, 4, 6}), 100);
    CHECK(series.back().second == 4.0);
  }
  SUBCASE("constant rewards give a constant trajectory") {
    auto series = trajectory(log_with({-1, -1, -1, -1}), 2);
    for (const auto& [t, v] : series) CHECK(v == -1.0);
  }
  SUBCASE("empty log gives an empty series") {
    CHECK(trajectory({}, 100).empty());
  }
}

TEST_CASE("high-performer counting") {
  auto rec = [](std::initializer_list<Index> p, double reward, double t) {
    EvaluationRecord r;
    r.p = vec(p);
    r.reward = reward;
    r.t_finish = t;
    return r;
  };

  SUBCASE("duplicates count once") {
    std::vector<EvaluationRecord> log{rec({1, 2}, 0.5, 1), rec({1, 2}, 0.6, 2), rec({3, 4}, 0.7, 3)};
    auto series = count_high_performers(log, 0.0);
    REQUIRE(series.size() == 3);
    CHECK(series[0].second == 1);
    CHECK(series[1].second == 1);
    CHECK(series[2].second == 2);
  }
  SUBCASE("threshold above the maximum gives zeros") {
    std::vector<EvaluationRecord> log{rec({1}, -0.5, 1), rec({2}, -0.4, 2)};
    for (const auto& [t, c] : count_high_performers(log, 0.0)) CHECK(c == 0);
  }
  SUBCASE("strictly-above counting per the threshold") {
    std::vector<EvaluationRecord> log{rec({1}, -0.4, 1), rec({2}, -0.3, 2), rec({3}, -0.2, 3)};
    auto series = count_high_performers(log, -0.35);
    CHECK(series[0].second == 0);
    CHECK(series[1].second == 1);
    CHECK(series[2].second == 2);
  }
}

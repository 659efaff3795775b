#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "support.hpp"

#include <atomic>

using namespace driftguard;
using dgtest::Rng;

TEST_CASE("auc frozen values") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  CHECK(auc(s, y) == 0.75);
  CHECK(auc(std::vector<double>{1, 1, 1, 1}, y) == 0.5);
  CHECK(auc(std::vector<double>{0, 0, 1, 1}, y) == 1.0);
  CHECK(auc(std::vector<double>{1, 1, 0, 0}, y) == 0.0);
  CHECK_THROWS_AS(auc(s, std::vector<std::uint8_t>{0, 0, 0, 0}), UndefinedMetric);
  CHECK_THROWS_AS(auc(s, std::vector<std::uint8_t>{0, 1}), DimensionError);
  CHECK_THROWS_AS(auc(std::vector<double>{0, std::nan(""), 1, 1}, y), DataError);
}

TEST_CASE("auc matches the pairwise oracle with ties") {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    const auto levels = 1 + rng.below(8);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = t % 2 ? double(rng.below(levels)) : rng.normal();
      y[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(std::abs(auc(s, y) - dgtest::auc_oracle(s, y)) <= 1e-12);
  }
}

TEST_CASE("auc is invariant to monotone transforms") {
  Rng rng(32);
  std::vector<double> s(50), t(50);
  std::vector<std::uint8_t> y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    s[i] = rng.normal();
    t[i] = std::exp(3.0 * s[i]) + 1.0;
    y[i] = i % 3 == 0;
  }
  CHECK(auc(s, y) == auc(t, y));
}

TEST_CASE("cluster accuracy") {
  SelectionResult sel{{1, 2, 4}, {3, 5}, std::nullopt};
  const IdList ids{1, 2, 3, 4, 5};
  CHECK(cluster_accuracy(sel, ids, {0, 0, 1, 0, 1}) == 1.0);
  CHECK(cluster_accuracy(sel, ids, {1, 1, 0, 1, 0}) == 0.0);
  CHECK(cluster_accuracy(sel, ids, {0, 1, 1, 0, 0}) == doctest::Approx(0.6));
}

TEST_CASE("summaries") {
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(summarize({0.7}).std == 0.0);
  CHECK(to_json(s)["per_seed"].size() == 4);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw DataError("seven");
                               }),
                  DataError);
}

TEST_CASE("few-shot ids are true normals") {
  auto spec = SyntheticShiftSpec::default_benchmark(8, 0.3, 1);
  spec.n_target = 200;
  const auto data = materialize(spec, 1);
  const auto ids = choose_few_shot_ids(data.target, 20, 1);
  CHECK(ids.size() == 20);
  const auto& y = EvaluationView(data.target.base()).labels();
  for (auto id : ids) CHECK(y[static_cast<std::size_t>(data.target.base().index_of(id))] == 0);
  CHECK(choose_few_shot_ids(data.target, 20, 1) == ids);
  CHECK(choose_few_shot_ids(data.target, 10000, 1).size() == 140);
}

TEST_CASE("experiments are independent of the worker count") {
  auto spec = SyntheticShiftSpec::default_benchmark(8, 0.1, 0);
  spec.n_source = spec.n_target = 200;
  TrainingConfig cfg;
  cfg.epochs = 3;
  ExperimentOptions one, many;
  one.threads = 1;
  many.threads = 3;
  const auto a = run_experiment(spec, cfg, {1, 2, 3}, one);
  const auto b = run_experiment(spec, cfg, {1, 2, 3}, many);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(a.ok());
  CHECK(a.auc.per_seed.size() == 3);
  REQUIRE(a.cluster_accuracy);
  CHECK(to_json(a)["dataset"]["kind"] == "synthetic");
}

TEST_CASE("failed seeds are reported, not fatal") {
  auto spec = SyntheticShiftSpec::default_benchmark(8, 0.1, 0);
  spec.n_source = spec.n_target = 100;
  TrainingConfig cfg;
  cfg.epochs = 2;
  cfg.cluster_params.k = 500;
  const auto r = run_experiment(spec, cfg, {1, 2});
  CHECK(r.failures.size() == 2);
  CHECK(r.auc.per_seed.empty());
  CHECK_FALSE(r.ok());
}

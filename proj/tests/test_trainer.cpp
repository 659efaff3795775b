#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include "driftguard/checkpoint.hpp"
#include "driftguard/evaluation.hpp"

#include <unordered_set>

using namespace driftguard;

namespace {
LoadedData small_data(std::uint64_t seed, double contamination = 0.1) {
  auto spec = SyntheticShiftSpec::default_benchmark(8, contamination, seed);
  spec.n_source = 200;
  spec.n_target = 200;
  return materialize(spec, seed);
}

TrainingConfig quick() {
  TrainingConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 64;
  cfg.seed = 3;
  return cfg;
}
}  // namespace

TEST_CASE("config validation") {
  TrainingConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.mode = TrainingMode::few_shot;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.few_shot_ids = {1};
  cfg.few_shot_noise = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.alignment = Alignment::mmd;
  cfg.mmd_bandwidth_multipliers.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("enum strings round trip") {
  for (auto p : {EmptyPoolPolicy::attract, EmptyPoolPolicy::in_batch, EmptyPoolPolicy::skip})
    CHECK(empty_pool_policy_from_string(to_string(p)) == p);
  CHECK_THROWS_AS(empty_pool_policy_from_string("ignore"), ConfigError);
}

TEST_CASE("training is deterministic and logs every epoch") {
  const auto data = small_data(1);
  const auto a = train_on(data, quick());
  const auto b = train_on(data, quick());
  CHECK(encode_checkpoint(a.network) == encode_checkpoint(b.network));
  CHECK(a.log.size() == 4);
  CHECK(a.log.front().lr == doctest::Approx(quick().base_lr * 0.5 * (1 + std::cos(std::numbers::pi / 4))));
  CHECK(a.log.back().lr == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.log.front().purity.has_value());
  CHECK(a.selection.selected_ids.size() + a.selection.rejected_ids.size() == 200);
  auto other = quick();
  other.seed = 4;
  CHECK(encode_checkpoint(train_on(data, other).network) != encode_checkpoint(a.network));
}

TEST_CASE("labels never reach the trainer") {
  const auto data = small_data(2);
  const auto labeled = train(data.source.without_labels(), data.target, quick());
  const auto erased = train(data.source.without_labels(), data.target.without_labels(), quick());
  CHECK(parameters_equal(labeled.network, erased.network));
  CHECK(labeled.selection.selected_ids == erased.selection.selected_ids);
}

TEST_CASE("alignment none ignores the target") {
  auto cfg = quick();
  cfg.alignment = Alignment::none;
  const auto a = train_on(small_data(1), cfg);
  auto other = small_data(1, 0.3);
  const auto b = train_on(LoadedData{small_data(1).source, other.target}, cfg);
  CHECK(parameters_equal(a.network, b.network));
}

TEST_CASE("empty negative pool policies") {
  const auto data = small_data(1);
  auto cfg = quick();
  cfg.cluster_space = ClusterSpace::none;
  for (auto p : {EmptyPoolPolicy::attract, EmptyPoolPolicy::in_batch}) {
    cfg.empty_pool_policy = p;
    const auto d = train_on(data, cfg);
    CHECK(d.selection.rejected_ids.empty());
    REQUIRE_FALSE(d.warnings.empty());
    CHECK(d.warnings.front().find(to_string(p)) != std::string::npos);
  }
  cfg.empty_pool_policy = EmptyPoolPolicy::skip;
  CHECK_THROWS_AS(train_on(data, cfg), TrainingError);
}

TEST_CASE("mmd and base-space clustering train") {
  const auto data = small_data(1);
  auto cfg = quick();
  cfg.alignment = Alignment::mmd;
  CHECK(train_on(data, cfg).network.center.has_value());
  cfg.alignment = Alignment::contrastive;
  cfg.cluster_space = ClusterSpace::base;
  const auto d = train_on(data, cfg);
  CHECK(d.log.size() == 4);
  for (auto algo : {ClusterAlgorithm::gmm, ClusterAlgorithm::meanshift, ClusterAlgorithm::knn_filter}) {
    auto c = quick();
    c.clustering = algo;
    CAPTURE(to_string(algo));
    CHECK_NOTHROW(train_on(data, c));
  }
}

TEST_CASE("few-shot selection") {
  const auto data = small_data(1);
  auto cfg = quick();
  cfg.mode = TrainingMode::few_shot;
  cfg.few_shot_ids = choose_few_shot_ids(data.target, 15, 1);
  const auto d = train_on(data, cfg);
  const std::unordered_set<SampleId> shots(cfg.few_shot_ids.begin(), cfg.few_shot_ids.end());
  CHECK(d.selection.selected_ids.size() == 15);
  for (auto id : d.selection.selected_ids) CHECK(shots.count(id) == 1);
  CHECK(d.selection.rejected_ids.empty());

  cfg.few_shot_non_shot_negatives = true;
  CHECK(train_on(data, cfg).selection.rejected_ids.size() == 185);

  cfg.few_shot_ids.push_back(999999);
  CHECK_THROWS_AS(train_on(data, cfg), ConfigError);
}

TEST_CASE("shape errors") {
  const auto data = small_data(1);
  const auto wide = EmbeddingDataset::with_sequential_ids(MatrixXf::Zero(10, 9), Domain::source);
  CHECK_THROWS_AS(train(wide, data.target, quick()), DimensionError);
}

TEST_CASE("scoring and classification") {
  const auto data = small_data(1);
  const auto d = train_on(data, quick());
  const VectorXd s = score(d, data.target.base().features());
  CHECK(s.size() == 200);
  CHECK((s.array() >= 0.0).all());
  const auto flags = classify(d, data.target.base().features(), s.maxCoeff());
  CHECK(std::count(flags.begin(), flags.end(), 1) == 0);
  CHECK_THROWS_AS(classify(d, data.target.base().features(), std::nan("")), ConfigError);
}

TEST_CASE("source-only training descends and logs no alignment loss") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    auto cfg = quick();
    cfg.alignment = Alignment::none;
    cfg.epochs = 8;
    cfg.seed = seed;
    const auto d = train_on(small_data(seed), cfg);
    CHECK(d.log.back().l_ad <= d.log.front().l_ad);
    for (const auto& e : d.log) CHECK(e.l_uda == 0.0);
  }
}

TEST_CASE("aux-space selection is fixed across epochs") {
  const auto d = train_on(small_data(3), quick());
  for (const auto& e : d.log) CHECK(e.selected_count == d.log.front().selected_count);
}

#pragma once

#include "driftguard/clustering.hpp"
#include "driftguard/synthetic.hpp"
#include "driftguard/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace driftguard {

/// Rank-based (Mann-Whitney) area under the ROC curve with mid-ranks for
/// ties: P(anomaly score > normal score) + P(equal) / 2. Label 1 = anomaly.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auc(const VectorXd& scores, const LabelVector& labels);

/// (normals in selected + anomalies in rejected) / N.
double cluster_accuracy(const SelectionResult& selection, const IdList& ids, const LabelVector& labels);

/// Mean and sample (n-1) standard deviation; std is 0 for a single value.
struct Summary {
  std::vector<double> per_seed;
  double mean = 0.0;
  double std = 0.0;
};
Summary summarize(std::vector<double> values);
nlohmann::json to_json(const Summary& s);

struct MetricsReport {
  std::string experiment;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  Summary auc;
  std::optional<Summary> cluster_accuracy;
  nlohmann::json dataset;
  /// Per-seed failures (seed -> message); a failed seed is left out of the summaries.
  std::vector<std::pair<std::uint64_t, std::string>> failures;

  bool ok() const { return failures.empty(); }
};
nlohmann::json to_json(const MetricsReport& r);

/// Embedding files on disk; labels come from the sidecar.
struct DatasetPaths {
  std::filesystem::path source;
  std::filesystem::path target_base;
  std::filesystem::path target_aux;
  std::filesystem::path labels;
  FileFormat format = FileFormat::binary;
};

using ExperimentData = std::variant<SyntheticShiftSpec, DatasetPaths>;

struct LoadedData {
  EmbeddingDataset source;
  PairedTargetSet target;  // labeled (evaluation side)
};

/// Synthetic data is generated with `seed`; file data ignores it.
LoadedData materialize(const ExperimentData& data, std::uint64_t seed);

/// `count` true-normal target ids drawn from the run seed: data preparation
/// for the few-shot variant (needs labels).
IdList choose_few_shot_ids(const PairedTargetSet& target, int count, std::uint64_t seed);

/// Trains on label-free views of `data`; selection purity is logged when the
/// target carries labels.
TrainedDetector train_on(const LoadedData& data, const TrainingConfig& cfg);

struct RunOutcome {
  TrainedDetector detector;
  double auc = 0.0;
  std::optional<double> cluster_accuracy;
};

/// Trains on label-free views of `data` and evaluates against its labels.
/// `few_shot_count` > 0 replaces cfg.few_shot_ids with that many true-normal
/// target ids (data preparation for the few-shot variant).
RunOutcome run_once(const LoadedData& data, TrainingConfig cfg, int few_shot_count = 0);

struct ExperimentOptions {
  std::string name = "experiment";
  std::string config_hash;
  int few_shot_count = 0;
  /// Worker threads over seeds (0: DRIFTGUARD_THREADS or 1).
  unsigned threads = 0;
};

/// One training/evaluation per seed (both the data draw and cfg.seed follow
/// the seed), aggregated into a report. Training errors are recorded per seed.
MetricsReport run_experiment(const ExperimentData& data, const TrainingConfig& cfg,
                             const std::vector<std::uint64_t>& seeds, const ExperimentOptions& opts = {});

/// Worker count from DRIFTGUARD_THREADS (default 1).
unsigned worker_threads();

/// Runs tasks [0, n) on up to `threads` workers; results land by index.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& task);

}  // namespace driftguard

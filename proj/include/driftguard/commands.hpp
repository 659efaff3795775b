#pragma once

// The CLI subcommands as library calls. Every artifact they write carries
// the config hash and is written atomically.

#include "driftguard/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace driftguard {

struct CommandContext {
  ExperimentConfig config;
  std::filesystem::path out_dir = ".";
  FileFormat format = FileFormat::binary;
  /// Progress messages (nullptr: silent).
  std::ostream* log = nullptr;
};

/// Builds a context from a config file (may be empty for defaults),
/// `key=value` overrides and an optional seed list ("" keeps the config's).
CommandContext make_context(const std::filesystem::path& config_path, const std::vector<std::string>& overrides,
                            const std::string& seeds, const std::filesystem::path& out_dir,
                            FileFormat format = FileFormat::binary);

struct GeneratedFiles {
  std::filesystem::path source, target_base, target_aux, labels, manifest;
};

/// Writes source, target base/aux embeddings and the labels sidecar for the
/// first seed. Needs synthetic data.
GeneratedFiles cmd_gen(const CommandContext& ctx);

struct TrainArtifacts {
  std::filesystem::path checkpoint, log, summary;
  TrainedDetector detector;
};

/// Trains once with the first seed; writes `detector.net`, `train_log.jsonl`
/// (one line per epoch) and `train.json`.
TrainArtifacts cmd_train(const CommandContext& ctx);

/// Scores the target base stream with a checkpoint; writes `scores.csv` and
/// `eval.json` (AUC needs labels).
nlohmann::json cmd_eval(const CommandContext& ctx, const std::filesystem::path& checkpoint);

/// One experiment per contamination ratio; writes `sweep_ratio.csv`
/// (ratio,auc_mean,auc_std,cluster_accuracy_mean) and `sweep_ratio.json`.
nlohmann::json cmd_sweep_ratio(const CommandContext& ctx);

/// One experiment per distinct K (first occurrence order); writes
/// `sweep_k.csv` (K,auc_mean,auc_std) and `sweep_k.json`.
nlohmann::json cmd_sweep_k(const CommandContext& ctx);

/// Component grid {no-adapt, adapt-no-cluster, adapt+cluster(base),
/// adapt+cluster(aux)} x {contrastive, mmd} plus one aux/contrastive cell
/// per clustering algorithm; writes `ablate.csv` and `ablate.json`.
nlohmann::json cmd_ablate(const CommandContext& ctx);

/// Collects report JSON files (or every *.json in the given directories)
/// into `report.csv` and `report.md`.
nlohmann::json cmd_export_report(const CommandContext& ctx, const std::vector<std::filesystem::path>& inputs);

/// Deterministic numeric formatting used in every CSV.
std::string format_number(double v);

}  // namespace driftguard

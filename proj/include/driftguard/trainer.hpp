#pragma once

#include "driftguard/clustering.hpp"
#include "driftguard/data.hpp"
#include "driftguard/objectives.hpp"
#include "driftguard/projector.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace driftguard {

enum class Alignment { contrastive, mmd, none };
/// Where the dominant cluster is mined: the frozen aux stream, the current
/// projection of the target base stream, or nowhere (every target row selected).
enum class ClusterSpace { aux, base, none };
enum class TrainingMode { unsupervised, few_shot };
/// Contrastive behaviour when no negative rows exist:
///   attract  - the empty denominator is constant, leaving -sim/tau
///   in_batch - the selected batch doubles as the denominator pool
///   skip     - drop the alignment term for the batch
enum class EmptyPoolPolicy { attract, in_batch, skip };

std::string to_string(Alignment a);
std::string to_string(ClusterSpace s);
std::string to_string(TrainingMode m);
std::string to_string(EmptyPoolPolicy p);
EmptyPoolPolicy empty_pool_policy_from_string(const std::string& s);
Alignment alignment_from_string(const std::string& s);
ClusterSpace cluster_space_from_string(const std::string& s);
TrainingMode training_mode_from_string(const std::string& s);

struct TrainingConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double tau = 0.5;
  double base_lr = 1e-2;
  double weight_decay = 5e-7;
  double momentum = 0.0;
  int batch_size = 256;
  int epochs = 50;

  std::vector<Eigen::Index> hidden_dims{64};
  Eigen::Index output_dim = 32;
  bool use_bias = true;
  double init_gain = 1.0;

  ClusterAlgorithm clustering = ClusterAlgorithm::kmeans;
  ClusterParams cluster_params;
  ClusterSpace cluster_space = ClusterSpace::aux;
  bool normalize_aux = true;
  bool normalize_base = false;
  bool recluster_every_epoch = false;
  bool recompute_center_every_epoch = false;

  Alignment alignment = Alignment::contrastive;
  bool include_positive_in_denominator = false;
  bool stop_negative_gradient = false;
  /// What the contrastive term does when the selection rejects nothing.
  EmptyPoolPolicy empty_pool_policy = EmptyPoolPolicy::attract;
  std::vector<double> mmd_bandwidth_multipliers{0.5, 1.0, 2.0, 4.0};

  std::uint64_t seed = 0;
  TrainingMode mode = TrainingMode::unsupervised;
  IdList few_shot_ids;
  /// Few-shot negatives: non-shot target rows and/or noisy copies of the shots.
  bool few_shot_non_shot_negatives = false;
  bool few_shot_synthetic_negatives = true;
  double few_shot_noise = 10.0;

  /// Throws ConfigError.
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double l_ad = 0.0;
  double l_uda = 0.0;
  double lr = 0.0;
  std::size_t selected_count = 0;
  std::size_t skipped_batches = 0;
  std::optional<double> purity;
};

struct TrainedDetector {
  ProjectionNetwork<double> network;
  std::optional<double> threshold;
  TrainingConfig config;
  std::vector<EpochLog> log;
  /// Selection used in the final epoch (empty when alignment is none).
  SelectionResult selection;
  std::vector<std::string> warnings;
};

/// Observes each selection made during training (e.g. to log purity). The
/// returned value is only recorded in the log; training never reads it.
using SelectionObserver = std::function<std::optional<double>(const SelectionResult&)>;

/// Full adaptation pipeline on label-free views of the data.
TrainedDetector train(FeatureView source, TargetView target, const TrainingConfig& cfg,
                      const SelectionObserver& observer = {});

/// Convenience overload: checks the source is normal-only and hands the
/// trainer label-free views.
TrainedDetector train(const EmbeddingDataset& source, const PairedTargetSet& target, const TrainingConfig& cfg,
                      const SelectionObserver& observer = {});

/// Squared distance to the hypersphere center; higher is more anomalous.
VectorXd score(const TrainedDetector& detector, const MatrixXf& batch);
VectorXd score(const TrainedDetector& detector, const MatrixXd& batch);

/// 1 where score > threshold.
std::vector<std::uint8_t> classify(const TrainedDetector& detector, const MatrixXf& batch, double threshold);

/// Row selection of a target set, labels untouched: clusters `cfg.cluster_space`
/// features with `cfg.clustering`.
SelectionResult select_target(const ProjectionNetwork<double>& net, TargetView target, const TrainingConfig& cfg);

}  // namespace driftguard

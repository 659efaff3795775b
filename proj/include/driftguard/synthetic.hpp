#pragma once

// Synthetic source/target embeddings with a controllable domain shift.

#include "driftguard/data.hpp"

#include <json.hpp>

#include <vector>

namespace driftguard {

struct GaussianComponent {
  VectorXd mean;
  double scale = 1.0;  // isotropic standard deviation
};

/// x -> scale * R x + translation, where R composes Givens rotations by
/// `angles[k]` in the coordinate planes (2k, 2k+1).
struct AffineShift {
  std::vector<double> angles;
  VectorXd translation;
  double scale = 1.0;

  VectorXd apply(const VectorXd& x) const;
  MatrixXd rotation(Eigen::Index dim) const;
  bool is_identity() const;
};

struct SyntheticShiftSpec {
  int dim = 16;
  std::vector<GaussianComponent> normal_components;
  std::vector<GaussianComponent> anomaly_components;
  AffineShift shift;
  double contamination = 0.1;
  Eigen::Index n_source = 1000;
  Eigen::Index n_target = 1000;
  std::uint64_t seed = 0;

  // Stand-in frozen encoder for the aux stream:
  //   aux(x) = offset + tanh(gain * P x) + separation * label * u
  // with P, u and offset drawn once from `aux_seed`.
  int aux_dim = 16;
  double aux_gain = 0.3;
  double aux_separation = 4.0;
  double aux_offset_norm = 3.0;
  std::uint64_t aux_seed = 7;

  /// Throws SpecError on an invalid spec.
  void validate() const;

  /// The desk-scale benchmark: one normal component, several anomaly
  /// components around it, and a rotation + scaling + translation shift.
  static SyntheticShiftSpec default_benchmark(int dim = 16, double contamination = 0.1, std::uint64_t seed = 0);
};

nlohmann::json to_json(const SyntheticShiftSpec& spec);
/// Accepts either {"preset": "default", ...overrides} or a fully explicit spec.
SyntheticShiftSpec synthetic_spec_from_json(const nlohmann::json& j);

struct SyntheticPair {
  EmbeddingDataset source;
  PairedTargetSet target;
};

/// Source: normal rows only. Target: shifted normals plus contamination-fraction
/// shifted anomalies (exactly round(contamination * n_target) of them), rows in
/// random order, labels attached to both base and aux for evaluation.
SyntheticPair generate_synthetic_pair(const SyntheticShiftSpec& spec);

/// Unshifted labeled test set from the source domain (same contamination),
/// drawn from an independent stream.
EmbeddingDataset generate_source_holdout(const SyntheticShiftSpec& spec, Eigen::Index n);

/// The fixed aux map applied to base rows; labels select the offset term.
MatrixXf synthetic_aux_embedding(const SyntheticShiftSpec& spec, const MatrixXf& base, const LabelVector& labels);

}  // namespace driftguard

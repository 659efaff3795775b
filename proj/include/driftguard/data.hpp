#pragma once

#include "driftguard/core.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace driftguard {

enum class Domain { source, target };
enum class FileFormat { binary, csv };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);
FileFormat format_from_string(const std::string& s);

using LabelVector = std::vector<std::uint8_t>;

class EvaluationView;

/// A matrix of N feature rows of dimension D, with stable integer ids and an
/// optional 0/1 label per row (0 = normal, 1 = anomaly).
///
/// Features are stored in single precision so the binary container round-trips
/// bit-exactly. Labels are not reachable through the public interface; they are
/// read through `EvaluationView` only, which the training path never includes.
class EmbeddingDataset {
 public:
  /// Validates every invariant; throws DataError on violation.
  EmbeddingDataset(MatrixXf features, IdList ids, Domain domain,
                   std::optional<LabelVector> labels = std::nullopt);

  /// Sequential ids 0..N-1.
  static EmbeddingDataset with_sequential_ids(MatrixXf features, Domain domain,
                                              std::optional<LabelVector> labels = std::nullopt);

  const MatrixXf& features() const noexcept { return features_; }
  const IdList& ids() const noexcept { return ids_; }
  Domain domain() const noexcept { return domain_; }
  bool has_labels() const noexcept { return labels_.has_value(); }
  Eigen::Index rows() const noexcept { return features_.rows(); }
  Eigen::Index dim() const noexcept { return features_.cols(); }

  /// Row index of an id; throws DataError when absent.
  Eigen::Index index_of(SampleId id) const;

  /// Copy with labels removed.
  EmbeddingDataset without_labels() const;
  /// Copy with labels replaced (or removed when nullopt). Features and ids are untouched.
  EmbeddingDataset with_labels(std::optional<LabelVector> labels) const;
  /// Rows at the given indices, in that order.
  EmbeddingDataset subset(std::span<const Eigen::Index> rows) const;

  friend bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b);

 private:
  friend class EvaluationView;
  MatrixXf features_;
  IdList ids_;
  Domain domain_;
  std::optional<LabelVector> labels_;
};

/// The only accessor of ground-truth labels. Used by evaluation and by data
/// preparation, never by the trainer.
class EvaluationView {
 public:
  explicit EvaluationView(const EmbeddingDataset& ds) : ds_(ds) {}
  bool has_labels() const noexcept { return ds_.labels_.has_value(); }
  /// Throws DataError when the dataset is unlabeled.
  const LabelVector& labels() const;
  std::size_t count_anomalies() const;

 private:
  const EmbeddingDataset& ds_;
};

/// Two index-aligned representations of the same target rows: `base` is the
/// input of the trainable projection, `aux` is a frozen feature space used for
/// clustering. Dimensions may differ; id sequences must be identical.
class PairedTargetSet {
 public:
  PairedTargetSet(EmbeddingDataset base, EmbeddingDataset aux);

  const EmbeddingDataset& base() const noexcept { return base_; }
  const EmbeddingDataset& aux() const noexcept { return aux_; }
  const IdList& ids() const noexcept { return base_.ids(); }
  Eigen::Index rows() const noexcept { return base_.rows(); }

  PairedTargetSet without_labels() const;

 private:
  EmbeddingDataset base_;
  EmbeddingDataset aux_;
};

/// Label-free view of a dataset: what the trainer is allowed to see.
struct FeatureView {
  const MatrixXf& features;
  const IdList& ids;

  static FeatureView of(const EmbeddingDataset& ds) { return {ds.features(), ds.ids()}; }
};

/// Source view for training; verifies the one-class premise (every label, if
/// present, is 0).
FeatureView training_source_view(const EmbeddingDataset& source);

struct TargetView {
  FeatureView base;
  FeatureView aux;

  static TargetView of(const PairedTargetSet& t) {
    return {FeatureView::of(t.base()), FeatureView::of(t.aux())};
  }
};

EmbeddingDataset load_dataset(const std::filesystem::path& path, FileFormat format,
                              Domain csv_domain = Domain::target);
void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path,
                  FileFormat format);

/// Ground-truth labels sidecar: CSV with header `id,label`.
void save_labels_sidecar(const EmbeddingDataset& ds, const std::filesystem::path& path);
/// Returns a copy of `ds` with labels attached from a sidecar (ids must match).
EmbeddingDataset attach_labels_sidecar(const EmbeddingDataset& ds,
                                       const std::filesystem::path& path);

/// Mixes all `normals` with anomalies drawn uniformly without replacement from
/// `anomalies` so that the anomaly count equals round(ratio * output size).
/// Normal rows keep their order and ids; anomaly rows are appended with fresh
/// ids above the largest normal id. Labels are attached for evaluation.
EmbeddingDataset contaminate_target(const EmbeddingDataset& normals,
                                    const EmbeddingDataset& anomalies, double ratio,
                                    std::uint64_t seed);

/// Write to a temp file next to `path` and rename over it.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace driftguard

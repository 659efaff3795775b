#pragma once

#include "driftguard/core.hpp"
#include "driftguard/data.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace driftguard {

enum class ClusterAlgorithm { kmeans, gmm, meanshift, knn_filter };

std::string to_string(ClusterAlgorithm a);
ClusterAlgorithm cluster_algorithm_from_string(const std::string& s);

struct ClusterParams {
  int k = 2;                   // components (kmeans, gmm)
  double bandwidth = 0.0;      // meanshift; <= 0 means estimate from data
  int neighbors = 1;           // knn_filter
  double keep_fraction = 0.9;  // knn_filter
  int max_iter = 100;
  double tol = 1e-6;
  int max_seeds = 256;         // meanshift seed points
  int n_init = 4;              // kmeans restarts; lowest WCSS wins
  std::uint64_t seed = 0;
};

struct ClusterModel {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  ClusterParams params;
  /// Cluster index per row. For knn_filter: 0 = keep, 1 = drop.
  std::vector<int> assignments;
  /// K x D: kmeans/gmm means, meanshift modes. Empty for knn_filter.
  MatrixXd centroids;
  std::vector<Eigen::Index> sizes;
  int dominant = 0;
  int iterations = 0;
  /// Per-iteration objective: WCSS for kmeans, log-likelihood for gmm.
  std::vector<double> trace;
  /// gmm only.
  MatrixXd variances;
  VectorXd weights;
  /// knn_filter only: mean distance to the k nearest neighbours.
  VectorXd scores;

  int cluster_count() const { return static_cast<int>(sizes.size()); }
};

/// Within-cluster sum of squared distances.
double wcss(const MatrixXd& x, const std::vector<int>& assignments, const MatrixXd& centroids);

/// Largest cluster, ties broken by lowest index.
int dominant_cluster(const std::vector<Eigen::Index>& sizes);

/// Lloyd's algorithm with k-means++ seeding. Stops at an assignment fixed
/// point, when every centroid moves less than `tol`, or after `max_iter`
/// rounds; on return centroids are the exact means of their rows. An empty
/// cluster is re-seeded at the row farthest from its current centroid.
/// With n_init > 1 the run with the lowest WCSS is kept (first on ties).
ClusterModel fit_kmeans(const MatrixXd& x, int k, std::uint64_t seed, int max_iter = 100, double tol = 1e-6,
                        int n_init = 1);

/// EM for a diagonal-covariance mixture, initialized from k-means.
/// Variances are floored at kVarianceFloor; a collapsed component is
/// re-initialized, and the fit fails after three collapses.
ClusterModel fit_gmm(const MatrixXd& x, int k, std::uint64_t seed, int max_iter = 100, double tol = 1e-6);
inline constexpr double kVarianceFloor = 1e-6;

/// Flat-kernel mean shift started from up to `max_seeds` rows. Modes closer
/// than bandwidth/2 are merged; each row goes to its nearest mode.
ClusterModel fit_meanshift(const MatrixXd& x, double bandwidth, std::uint64_t seed, int max_iter = 100,
                           double tol = 1e-6, int max_seeds = 256);

/// Mean distance to the 30%-quantile nearest neighbour, averaged over rows.
double estimate_bandwidth(const MatrixXd& x, double quantile = 0.3);

/// Mean Euclidean distance from each row to its k nearest other rows.
VectorXd knn_scores(const MatrixXd& x, int k);

/// Keeps the `keep_fraction` of rows with the lowest kNN score.
ClusterModel fit_knn_filter(const MatrixXd& x, int k, double keep_fraction);

/// Dispatch on `algorithm` with `params`.
ClusterModel fit_clustering(const MatrixXd& x, ClusterAlgorithm algorithm, const ClusterParams& params);

/// Rows scaled to unit Euclidean norm (zero rows stay zero).
MatrixXd l2_normalize_rows(const MatrixXd& x);

struct SelectionResult {
  IdList selected_ids;
  IdList rejected_ids;
  std::optional<double> purity;
};

/// Ids in the dominant cluster versus the rest.
SelectionResult select_dominant(const ClusterModel& model, const IdList& ids);
/// As above for a paired target; purity is filled when the target carries labels.
SelectionResult select_dominant(const ClusterModel& model, const PairedTargetSet& target);

/// Fraction of selected rows whose label is normal.
double selection_purity(const SelectionResult& selection, const EmbeddingDataset& labeled);

nlohmann::json to_json(const ClusterModel& model, std::optional<double> purity = std::nullopt);

}  // namespace driftguard

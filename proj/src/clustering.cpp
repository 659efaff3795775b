#include "driftguard/clustering.hpp"

#include "driftguard/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace driftguard {

std::string to_string(ClusterAlgorithm a) {
  switch (a) {
    case ClusterAlgorithm::kmeans: return "kmeans";
    case ClusterAlgorithm::gmm: return "gmm";
    case ClusterAlgorithm::meanshift: return "meanshift";
    case ClusterAlgorithm::knn_filter: return "knn_filter";
  }
  return "?";
}

ClusterAlgorithm cluster_algorithm_from_string(const std::string& s) {
  if (s == "kmeans") return ClusterAlgorithm::kmeans;
  if (s == "gmm") return ClusterAlgorithm::gmm;
  if (s == "meanshift") return ClusterAlgorithm::meanshift;
  if (s == "knn_filter" || s == "knn") return ClusterAlgorithm::knn_filter;
  throw ConfigError("unknown clustering algorithm '" + s + "'");
}

int dominant_cluster(const std::vector<Eigen::Index>& sizes) {
  int best = 0;
  for (std::size_t k = 1; k < sizes.size(); ++k)
    if (sizes[k] > sizes[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  return best;
}

namespace {

std::vector<Eigen::Index> count_sizes(const std::vector<int>& assign, int k) {
  std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k), 0);
  for (int a : assign) ++sizes[static_cast<std::size_t>(a)];
  return sizes;
}

// Nearest centroid per row (ties -> lowest index). Returns number of changes.
Eigen::Index assign_nearest(const MatrixXd& x, const MatrixXd& c, std::vector<int>& assign, VectorXd& dist2) {
  Eigen::Index changed = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
      const double d = (x.row(i) - c.row(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    dist2[i] = best_d;
    if (assign[static_cast<std::size_t>(i)] != best) {
      assign[static_cast<std::size_t>(i)] = best;
      ++changed;
    }
  }
  return changed;
}

MatrixXd cluster_means(const MatrixXd& x, const std::vector<int>& assign, int k, std::vector<Eigen::Index>& sizes) {
  MatrixXd c = MatrixXd::Zero(k, x.cols());
  sizes.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto a = assign[static_cast<std::size_t>(i)];
    c.row(a) += x.row(i);
    ++sizes[static_cast<std::size_t>(a)];
  }
  for (int j = 0; j < k; ++j)
    if (sizes[static_cast<std::size_t>(j)] > 0) c.row(j) /= double(sizes[static_cast<std::size_t>(j)]);
  return c;
}

MatrixXd kmeanspp_seed(const MatrixXd& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  MatrixXd c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  VectorXd d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    c.row(j) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  return c;
}

void check_matrix(const MatrixXd& x, Eigen::Index min_rows) {
  if (x.rows() < min_rows) throw DataError("clustering needs at least " + std::to_string(min_rows) + " rows");
  if (x.cols() < 1) throw DataError("clustering needs D >= 1");
  if (!x.allFinite()) throw DataError("non-finite clustering input");
}

}  // namespace

double wcss(const MatrixXd& x, const std::vector<int>& assignments, const MatrixXd& centroids) {
  if (assignments.size() != static_cast<std::size_t>(x.rows())) throw DimensionError("one assignment per row expected");
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    s += (x.row(i) - centroids.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

namespace {

ClusterModel lloyd(const MatrixXd& x, int k, std::uint64_t seed, int max_iter, double tol) {
  Rng rng(seed);
  ClusterModel m;
  m.algorithm = ClusterAlgorithm::kmeans;
  m.params.k = k;
  m.params.seed = seed;
  m.params.max_iter = max_iter;
  m.params.tol = tol;

  MatrixXd c = kmeanspp_seed(x, k, rng);
  std::vector<int> assign(static_cast<std::size_t>(x.rows()), -1);
  VectorXd dist2(x.rows());
  std::vector<Eigen::Index> sizes;
  assign_nearest(x, c, assign, dist2);
  m.trace.push_back(dist2.sum());

  int it = 0;
  for (; it < max_iter; ++it) {
    MatrixXd next = cluster_means(x, assign, k, sizes);
    // Empty clusters take the row farthest from its own centroid.
    for (int j = 0; j < k; ++j) {
      if (sizes[static_cast<std::size_t>(j)] != 0) continue;
      Eigen::Index far = 0;
      dist2.maxCoeff(&far);
      next.row(j) = x.row(far);
      dist2[far] = 0.0;
      const int old = assign[static_cast<std::size_t>(far)];
      assign[static_cast<std::size_t>(far)] = j;
      --sizes[static_cast<std::size_t>(old)];
      sizes[static_cast<std::size_t>(j)] = 1;
      next = cluster_means(x, assign, k, sizes);
    }
    const double movement = (next - c).rowwise().norm().maxCoeff();
    c = std::move(next);
    const Eigen::Index changed = assign_nearest(x, c, assign, dist2);
    m.trace.push_back(dist2.sum());
    if (changed == 0 || movement < tol) {
      ++it;
      break;
    }
  }
  m.iterations = it;
  m.centroids = cluster_means(x, assign, k, sizes);
  for (int j = 0; j < k; ++j)
    if (sizes[static_cast<std::size_t>(j)] == 0) m.centroids.row(j) = c.row(j);
  m.assignments = std::move(assign);
  m.sizes = std::move(sizes);
  m.dominant = dominant_cluster(m.sizes);
  return m;
}

}  // namespace

ClusterModel fit_kmeans(const MatrixXd& x, int k, std::uint64_t seed, int max_iter, double tol, int n_init) {
  if (k < 1) throw ConfigError("K must be >= 1");
  if (n_init < 1) throw ConfigError("n_init must be >= 1");
  check_matrix(x, k);
  ClusterModel best;
  double best_wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < n_init; ++r) {
    ClusterModel m = lloyd(x, k, r == 0 ? seed : derive_seed(seed, 1000 + static_cast<std::uint64_t>(r)), max_iter, tol);
    const double w = wcss(x, m.assignments, m.centroids);
    if (w < best_wcss) {
      best_wcss = w;
      best = std::move(m);
    }
  }
  best.params.seed = seed;
  best.params.n_init = n_init;
  return best;
}

ClusterModel fit_gmm(const MatrixXd& x, int k, std::uint64_t seed, int max_iter, double tol) {
  if (k < 1) throw ConfigError("K must be >= 1");
  check_matrix(x, k);
  const Eigen::Index n = x.rows(), d = x.cols();
  Rng rng(derive_seed(seed, 17));

  const ClusterModel init = fit_kmeans(x, k, seed, max_iter, tol, 1);
  MatrixXd mu = init.centroids;
  MatrixXd var(k, d);
  VectorXd weight(k);
  const VectorXd global_var =
      ((x.rowwise() - x.colwise().mean()).array().square().colwise().sum() / double(n)).matrix().transpose();
  for (int j = 0; j < k; ++j) {
    RowVectorX<double> acc = RowVectorX<double>::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i)
      if (init.assignments[static_cast<std::size_t>(i)] == j) acc += (x.row(i) - mu.row(j)).array().square().matrix();
    const double nk = double(init.sizes[static_cast<std::size_t>(j)]);
    var.row(j) = nk > 1 ? RowVectorX<double>(acc / nk) : RowVectorX<double>(global_var.transpose());
    var.row(j) = var.row(j).cwiseMax(kVarianceFloor);
    weight[j] = std::max(nk, 1.0) / double(n);
  }
  weight /= weight.sum();

  ClusterModel m;
  m.algorithm = ClusterAlgorithm::gmm;
  m.params.k = k;
  m.params.seed = seed;
  m.params.max_iter = max_iter;
  m.params.tol = tol;

  constexpr double kLog2Pi = 1.8378770664093453;
  MatrixXd logr(n, k);
  int failures = 0;
  double prev = -std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < max_iter; ++it) {
    // E-step.
    for (int j = 0; j < k; ++j) {
      const double log_norm = std::log(weight[j]) - 0.5 * (d * kLog2Pi + var.row(j).array().log().sum());
      const RowVectorX<double> inv = var.row(j).cwiseInverse();
      for (Eigen::Index i = 0; i < n; ++i)
        logr(i, j) = log_norm - 0.5 * ((x.row(i) - mu.row(j)).array().square() * inv.array()).sum();
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = logr.row(i).maxCoeff();
      const double lse = mx + std::log((logr.row(i).array() - mx).exp().sum());
      logr.row(i).array() -= lse;
      ll += lse;
    }
    m.trace.push_back(ll);
    const MatrixXd resp = logr.array().exp().matrix();

    // M-step.
    const VectorXd nk = resp.colwise().sum().transpose();
    bool reset = false;
    for (int j = 0; j < k; ++j) {
      if (nk[j] < 1e-8) {
        if (++failures >= 3) throw TrainingError("gmm component collapsed three times; reduce K");
        mu.row(j) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
        var.row(j) = global_var.transpose().cwiseMax(kVarianceFloor);
        weight[j] = 1.0 / double(k);
        reset = true;
        continue;
      }
      mu.row(j) = (resp.col(j).transpose() * x) / nk[j];
      RowVectorX<double> v = RowVectorX<double>::Zero(d);
      for (Eigen::Index i = 0; i < n; ++i) v += resp(i, j) * (x.row(i) - mu.row(j)).array().square().matrix();
      var.row(j) = (v / nk[j]).cwiseMax(kVarianceFloor);
      weight[j] = nk[j] / double(n);
    }
    weight /= weight.sum();
    if (reset) {
      // The trace restarts after a re-initialization.
      prev = -std::numeric_limits<double>::infinity();
      continue;
    }
    if (std::isfinite(prev) && std::abs(ll - prev) < tol * std::max(1.0, std::abs(ll))) {
      ++it;
      break;
    }
    prev = ll;
  }
  m.iterations = it;

  // Final responsibilities under the fitted parameters.
  m.assignments.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double v = std::log(weight[j]) - 0.5 * var.row(j).array().log().sum() -
                       0.5 * ((x.row(i) - mu.row(j)).array().square() / var.row(j).array()).sum();
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    m.assignments[static_cast<std::size_t>(i)] = best;
  }
  m.centroids = std::move(mu);
  m.variances = std::move(var);
  m.weights = std::move(weight);
  m.sizes = count_sizes(m.assignments, k);
  m.dominant = dominant_cluster(m.sizes);
  return m;
}

double estimate_bandwidth(const MatrixXd& x, double quantile) {
  check_matrix(x, 2);
  const Eigen::Index n = x.rows();
  const auto kth = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(double(n) * quantile), 1, n - 1);
  double total = 0.0;
  std::vector<double> d(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d[static_cast<std::size_t>(j)] = (x.row(i) - x.row(j)).norm();
    // d[i] == 0 is the row itself, so the kth order statistic skips it.
    std::nth_element(d.begin(), d.begin() + kth, d.end());
    total += d[static_cast<std::size_t>(kth)];
  }
  return std::max(total / double(n), 1e-12);
}

ClusterModel fit_meanshift(const MatrixXd& x, double bandwidth, std::uint64_t seed, int max_iter, double tol,
                           int max_seeds) {
  if (!(bandwidth > 0.0)) throw ConfigError("mean-shift bandwidth must be positive");
  check_matrix(x, 1);
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> seeds(static_cast<std::size_t>(n));
  std::iota(seeds.begin(), seeds.end(), Eigen::Index{0});
  if (max_seeds > 0 && n > max_seeds) {
    Rng rng(seed);
    rng.shuffle(seeds);
    seeds.resize(static_cast<std::size_t>(max_seeds));
    std::sort(seeds.begin(), seeds.end());
  }

  const double bw2 = bandwidth * bandwidth;
  int max_used = 0;
  std::vector<RowVectorX<double>> raw_modes;
  for (auto s : seeds) {
    RowVectorX<double> p = x.row(s);
    int it = 0;
    for (; it < max_iter; ++it) {
      RowVectorX<double> acc = RowVectorX<double>::Zero(x.cols());
      Eigen::Index count = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if ((x.row(i) - p).squaredNorm() <= bw2) {
          acc += x.row(i);
          ++count;
        }
      if (count == 0) break;
      acc /= double(count);
      const double shift = (acc - p).norm();
      p = acc;
      if (shift < tol) {
        ++it;
        break;
      }
    }
    max_used = std::max(max_used, it);
    raw_modes.push_back(p);
  }

  std::vector<RowVectorX<double>> modes;
  for (const auto& p : raw_modes) {
    bool merged = false;
    for (const auto& q : modes)
      if ((p - q).norm() < 0.5 * bandwidth) {
        merged = true;
        break;
      }
    if (!merged) modes.push_back(p);
  }

  ClusterModel m;
  m.algorithm = ClusterAlgorithm::meanshift;
  m.params.bandwidth = bandwidth;
  m.params.seed = seed;
  m.params.max_iter = max_iter;
  m.params.tol = tol;
  m.params.max_seeds = max_seeds;
  m.params.k = static_cast<int>(modes.size());
  m.iterations = max_used;
  m.centroids.resize(static_cast<Eigen::Index>(modes.size()), x.cols());
  for (std::size_t j = 0; j < modes.size(); ++j) m.centroids.row(static_cast<Eigen::Index>(j)) = modes[j];
  m.assignments.assign(static_cast<std::size_t>(n), -1);
  VectorXd dist2(n);
  assign_nearest(x, m.centroids, m.assignments, dist2);
  m.sizes = count_sizes(m.assignments, m.params.k);
  m.dominant = dominant_cluster(m.sizes);
  return m;
}

VectorXd knn_scores(const MatrixXd& x, int k) {
  check_matrix(x, 2);
  const Eigen::Index n = x.rows();
  if (k < 1 || k >= n) throw ConfigError("need 1 <= k < N for the kNN filter");
  VectorXd scores(n);
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    d.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      double s2 = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) s2 += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      d.push_back(std::sqrt(s2));
    }
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += d[static_cast<std::size_t>(j)];
    scores[i] = s / double(k);
  }
  return scores;
}

ClusterModel fit_knn_filter(const MatrixXd& x, int k, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ConfigError("keep_fraction must lie in (0,1]");
  ClusterModel m;
  m.algorithm = ClusterAlgorithm::knn_filter;
  m.params.neighbors = k;
  m.params.keep_fraction = keep_fraction;
  m.params.k = 2;
  m.scores = knn_scores(x, k);
  const Eigen::Index n = x.rows();
  const auto keep = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::llround(keep_fraction * double(n))), 1, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return m.scores[a] < m.scores[b]; });
  m.assignments.assign(static_cast<std::size_t>(n), 1);
  for (Eigen::Index r = 0; r < keep; ++r) m.assignments[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = 0;
  m.sizes = {keep, n - keep};
  // The kept (densest) pseudo-cluster is the selection by construction.
  m.dominant = 0;
  return m;
}

ClusterModel fit_clustering(const MatrixXd& x, ClusterAlgorithm algorithm, const ClusterParams& p) {
  switch (algorithm) {
    case ClusterAlgorithm::kmeans: return fit_kmeans(x, p.k, p.seed, p.max_iter, p.tol, p.n_init);
    case ClusterAlgorithm::gmm: return fit_gmm(x, p.k, p.seed, p.max_iter, p.tol);
    case ClusterAlgorithm::meanshift: {
      const double bw = p.bandwidth > 0.0 ? p.bandwidth : estimate_bandwidth(x);
      return fit_meanshift(x, bw, p.seed, p.max_iter, p.tol, p.max_seeds);
    }
    case ClusterAlgorithm::knn_filter: return fit_knn_filter(x, p.neighbors, p.keep_fraction);
  }
  throw ConfigError("unknown clustering algorithm");
}

MatrixXd l2_normalize_rows(const MatrixXd& x) {
  MatrixXd out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double nrm = out.row(i).norm();
    if (nrm > 0.0) out.row(i) /= nrm;
  }
  return out;
}

SelectionResult select_dominant(const ClusterModel& model, const IdList& ids) {
  if (model.assignments.size() != ids.size()) throw DimensionError("cluster model and id list differ in length");
  SelectionResult r;
  for (std::size_t i = 0; i < ids.size(); ++i)
    (model.assignments[i] == model.dominant ? r.selected_ids : r.rejected_ids).push_back(ids[i]);
  return r;
}

double selection_purity(const SelectionResult& selection, const EmbeddingDataset& labeled) {
  const auto& labels = EvaluationView(labeled).labels();
  if (selection.selected_ids.empty()) throw DataError("empty selection");
  std::unordered_set<SampleId> sel(selection.selected_ids.begin(), selection.selected_ids.end());
  std::size_t normals = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (sel.count(labeled.ids()[i]) && labels[i] == 0) ++normals;
  return double(normals) / double(selection.selected_ids.size());
}

SelectionResult select_dominant(const ClusterModel& model, const PairedTargetSet& target) {
  SelectionResult r = select_dominant(model, target.ids());
  if (EvaluationView(target.base()).has_labels()) r.purity = selection_purity(r, target.base());
  return r;
}

nlohmann::json to_json(const ClusterModel& model, std::optional<double> purity) {
  nlohmann::json params = {{"k", model.params.k},
                           {"max_iter", model.params.max_iter},
                           {"tol", model.params.tol},
                           {"seed", model.params.seed}};
  if (model.algorithm == ClusterAlgorithm::kmeans) params["n_init"] = model.params.n_init;
  if (model.algorithm == ClusterAlgorithm::meanshift) {
    params["bandwidth"] = model.params.bandwidth;
    params["max_seeds"] = model.params.max_seeds;
  }
  if (model.algorithm == ClusterAlgorithm::knn_filter) {
    params["neighbors"] = model.params.neighbors;
    params["keep_fraction"] = model.params.keep_fraction;
  }
  nlohmann::json j = {{"algorithm", to_string(model.algorithm)},
                      {"params", params},
                      {"sizes", model.sizes},
                      {"dominant", model.dominant},
                      {"iterations", model.iterations}};
  j["purity"] = purity ? nlohmann::json(*purity) : nlohmann::json(nullptr);
  return j;
}

}  // namespace driftguard

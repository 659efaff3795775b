#pragma once

#include "driftguard/clustering.hpp"
#include "driftguard/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dgtest {

using namespace driftguard;

/// Minimum WCSS over every split of the rows into two nonempty groups.
inline double exhaustive_wcss_k2(const MatrixXd& x) {
  const auto n = static_cast<unsigned>(x.rows());
  double best = std::numeric_limits<double>::infinity();
  // Row 0 always sits in group 0, so each split is visited once.
  for (unsigned mask = 1; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> a(n, 0);
    for (unsigned i = 1; i < n; ++i) a[i] = (mask >> (i - 1)) & 1u;
    MatrixXd c = MatrixXd::Zero(2, x.cols());
    double count[2] = {0, 0};
    for (unsigned i = 0; i < n; ++i) {
      c.row(a[i]) += x.row(i);
      count[a[i]] += 1;
    }
    c.row(0) /= count[0];
    c.row(1) /= count[1];
    double w = 0.0;
    for (unsigned i = 0; i < n; ++i) w += (x.row(i) - c.row(a[i])).squaredNorm();
    best = std::min(best, w);
  }
  return best;
}

/// Every row sits at a nearest centroid and every centroid is its rows' mean.
inline bool is_lloyd_fixed_point(const MatrixXd& x, const ClusterModel& m, double tol = 1e-9) {
  const Eigen::Index k = m.centroids.rows();
  MatrixXd mean = MatrixXd::Zero(k, x.cols());
  VectorXd count = VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int a = m.assignments[static_cast<std::size_t>(i)];
    const double own = (x.row(i) - m.centroids.row(a)).squaredNorm();
    for (Eigen::Index c = 0; c < k; ++c)
      if ((x.row(i) - m.centroids.row(c)).squaredNorm() < own - tol) return false;
    mean.row(a) += x.row(i);
    count[a] += 1;
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (count[c] == 0) return false;
    if (((mean.row(c) / count[c]) - m.centroids.row(c)).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

/// Mean distance to the k nearest other rows, by full sort.
inline VectorXd knn_oracle(const MatrixXd& x, int k) {
  VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      d.push_back(std::sqrt(s));
    }
    std::sort(d.begin(), d.end());
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += d[static_cast<std::size_t>(j)];
    out[i] = s / double(k);
  }
  return out;
}

/// P(anomaly > normal) + P(tie)/2 over all pairs.
inline double auc_oracle(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace dgtest

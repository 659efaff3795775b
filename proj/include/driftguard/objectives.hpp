#pragma once

// Loss functions over feature matrices. Each returns its value together with
// the gradient w.r.t. every input matrix, keyed by the role of that input.

#include "driftguard/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace driftguard {

enum class Role { source, positive, negative, target };

template <typename Scalar>
struct LossValue {
  Scalar value = 0;
  std::map<Role, MatrixX<Scalar>> grads;

  bool has(Role r) const { return grads.count(r) != 0; }
  const MatrixX<Scalar>& grad(Role r) const { return grads.at(r); }
  bool all_finite() const {
    if (!std::isfinite(value)) return false;
    for (const auto& [role, g] : grads)
      if (!g.allFinite()) return false;
    return true;
  }
};

/// Mean squared distance of each source feature to the (constant) center.
template <typename Scalar, typename DerivedX, typename DerivedC>
LossValue<Scalar> dsvdd_loss(const Eigen::MatrixBase<DerivedX>& source_feats,
                             const Eigen::MatrixBase<DerivedC>& center) {
  const Eigen::Index n = source_feats.rows();
  if (n < 1) throw DataError("dsvdd_loss needs at least one row");
  if (center.size() != source_feats.cols()) throw DimensionError("center size does not match features");
  MatrixX<Scalar> diff = source_feats.rowwise() - center.derived().reshaped().transpose();
  LossValue<Scalar> out;
  out.value = diff.rowwise().squaredNorm().sum() / Scalar(n);
  out.grads[Role::source] = (Scalar(2) / Scalar(n)) * diff;
  return out;
}

struct ContrastiveOptions {
  /// Standard InfoNCE denominator (positive term included) instead of the
  /// negatives-only denominator.
  bool include_positive_in_denominator = false;
  /// Treat negative features as constants.
  bool stop_negative_gradient = false;
};

namespace detail {

constexpr double kNormEps = 1e-12;

template <typename Scalar>
VectorX<Scalar> row_norms(const MatrixX<Scalar>& x) {
  return x.rowwise().norm().cwiseMax(Scalar(kNormEps));
}

template <typename Scalar>
MatrixX<Scalar> normalize_rows(const MatrixX<Scalar>& x, const VectorX<Scalar>& norms) {
  return norms.cwiseInverse().asDiagonal() * x;
}

// Gradient w.r.t. x given the gradient w.r.t. x / |x| (row-wise).
template <typename Scalar>
MatrixX<Scalar> normalize_backward(const MatrixX<Scalar>& unit, const VectorX<Scalar>& norms,
                                   const MatrixX<Scalar>& grad_unit) {
  const VectorX<Scalar> radial = (grad_unit.array() * unit.array()).rowwise().sum();
  MatrixX<Scalar> g = grad_unit - radial.asDiagonal() * unit;
  return norms.cwiseInverse().asDiagonal() * g;
}

template <typename Scalar>
Scalar softplus(Scalar z) {
  return z > Scalar(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

}  // namespace detail

/// Mean over all (source i, selected j) pairs of
///   l_ij = -sim(s_i, t_j)/tau + log sum_p exp(sim(s_i, n_p)/tau)
/// with cosine similarity and every pair sharing the negative pool. With
/// `include_positive_in_denominator` the positive term joins the sum.
template <typename Scalar>
LossValue<Scalar> uda_loss(const MatrixX<Scalar>& src, const MatrixX<Scalar>& selected,
                           const MatrixX<Scalar>& rejected, Scalar tau, const ContrastiveOptions& opts = {}) {
  if (!(tau > Scalar(0))) throw ConfigError("temperature must be positive");
  if (src.rows() < 1 || selected.rows() < 1) throw DataError("uda_loss needs source and selected rows");
  if (rejected.rows() < 1) throw EmptyNegativePool();
  if (selected.cols() != src.cols() || rejected.cols() != src.cols())
    throw DimensionError("feature widths differ between source and target");

  const Eigen::Index ns = src.rows(), s = selected.rows();
  const VectorX<Scalar> na = detail::row_norms(src), np = detail::row_norms(selected),
                        nn = detail::row_norms(rejected);
  const MatrixX<Scalar> a = detail::normalize_rows(src, na);
  const MatrixX<Scalar> p = detail::normalize_rows(selected, np);
  const MatrixX<Scalar> q = detail::normalize_rows(rejected, nn);

  const MatrixX<Scalar> pos = (a * p.transpose()) / tau;  // ns x s
  const MatrixX<Scalar> neg = (a * q.transpose()) / tau;  // ns x m

  // Stabilized log-sum-exp and softmax over the negative pool, per source row.
  const VectorX<Scalar> row_max = neg.rowwise().maxCoeff();
  MatrixX<Scalar> w = (neg.colwise() - row_max).array().exp().matrix();
  const VectorX<Scalar> z = w.rowwise().sum();
  const VectorX<Scalar> lse = row_max.array() + z.array().log();
  w = z.cwiseInverse().asDiagonal() * w;

  const Scalar inv_pairs = Scalar(1) / (Scalar(ns) * Scalar(s));
  MatrixX<Scalar> g_pos(ns, s);  // dL/d(pos) in similarity units, before 1/tau
  VectorX<Scalar> lse_weight(ns);
  Scalar total = 0;
  if (!opts.include_positive_in_denominator) {
    total = Scalar(s) * lse.sum() - pos.sum();
    g_pos.setConstant(-inv_pairs);
    lse_weight.setConstant(Scalar(s) * inv_pairs);
  } else {
    for (Eigen::Index i = 0; i < ns; ++i) {
      Scalar weight = 0;
      for (Eigen::Index j = 0; j < s; ++j) {
        const Scalar zij = lse[i] - pos(i, j);
        total += detail::softplus(zij);
        const Scalar sg = detail::sigmoid(zij);
        g_pos(i, j) = -sg * inv_pairs;
        weight += sg;
      }
      lse_weight[i] = weight * inv_pairs;
    }
  }
  const MatrixX<Scalar> g_neg = lse_weight.asDiagonal() * w;  // ns x m

  LossValue<Scalar> out;
  out.value = total * inv_pairs;
  // Chain through sim/tau and the row normalizations.
  const MatrixX<Scalar> ga = (g_pos * p + g_neg * q) / tau;
  out.grads[Role::source] = detail::normalize_backward(a, na, ga);
  out.grads[Role::positive] = detail::normalize_backward(p, np, MatrixX<Scalar>((g_pos.transpose() * a) / tau));
  out.grads[Role::negative] = opts.stop_negative_gradient
                                  ? MatrixX<Scalar>::Zero(rejected.rows(), rejected.cols())
                                  : detail::normalize_backward(q, nn, MatrixX<Scalar>((g_neg.transpose() * a) / tau));
  return out;
}

/// Mean of -sim(s_i, t_j)/tau over all pairs: the contrastive loss when the
/// negative pool is empty and its denominator carries no gradient.
template <typename Scalar>
LossValue<Scalar> cosine_attraction_loss(const MatrixX<Scalar>& src, const MatrixX<Scalar>& selected, Scalar tau) {
  if (!(tau > Scalar(0))) throw ConfigError("temperature must be positive");
  if (src.rows() < 1 || selected.rows() < 1) throw DataError("attraction loss needs source and selected rows");
  if (selected.cols() != src.cols()) throw DimensionError("feature widths differ between source and target");
  const VectorX<Scalar> na = detail::row_norms(src), np = detail::row_norms(selected);
  const MatrixX<Scalar> a = detail::normalize_rows(src, na);
  const MatrixX<Scalar> p = detail::normalize_rows(selected, np);
  const Scalar c = Scalar(1) / (tau * Scalar(src.rows()) * Scalar(selected.rows()));
  // sum_ij a_i . p_j = (sum_i a_i) . (sum_j p_j)
  const RowVectorX<Scalar> sa = a.colwise().sum(), sp = p.colwise().sum();
  LossValue<Scalar> out;
  out.value = -c * sa.dot(sp);
  out.grads[Role::source] = detail::normalize_backward(a, na, MatrixX<Scalar>((-c * sp).replicate(src.rows(), 1)));
  out.grads[Role::positive] =
      detail::normalize_backward(p, np, MatrixX<Scalar>((-c * sa).replicate(selected.rows(), 1)));
  return out;
}

/// Loss of one (source, positive) pair against a negative pool.
template <typename Scalar, typename DerivedS, typename DerivedP, typename DerivedN>
LossValue<Scalar> contrastive_pair_loss(const Eigen::MatrixBase<DerivedS>& src_i,
                                        const Eigen::MatrixBase<DerivedP>& pos_j,
                                        const Eigen::MatrixBase<DerivedN>& negatives, Scalar tau,
                                        const ContrastiveOptions& opts = {}) {
  MatrixX<Scalar> s = src_i.derived().reshaped().transpose().template cast<Scalar>();
  MatrixX<Scalar> p = pos_j.derived().reshaped().transpose().template cast<Scalar>();
  MatrixX<Scalar> n = negatives.template cast<Scalar>();
  if (n.rows() == 0) throw EmptyNegativePool();
  return uda_loss<Scalar>(s, p, n, tau, opts);
}

/// Median of all pairwise Euclidean distances within the union of both sets.
template <typename Scalar>
Scalar median_pairwise_distance(const MatrixX<Scalar>& x, const MatrixX<Scalar>& y) {
  MatrixX<Scalar> all(x.rows() + y.rows(), x.cols());
  all << x, y;
  std::vector<Scalar> d;
  d.reserve(static_cast<std::size_t>(all.rows() * (all.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < all.rows(); ++i)
    for (Eigen::Index j = i + 1; j < all.rows(); ++j) d.push_back((all.row(i) - all.row(j)).norm());
  if (d.empty()) return Scalar(1);
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return std::max(*mid, Scalar(1e-6));
}

/// Unbiased squared maximum mean discrepancy with a Gaussian kernel averaged
/// over the given bandwidths, k(a,b) = mean_s exp(-|a-b|^2 / (2 s^2)).
/// Within-set sums exclude the diagonal; the cross term uses all pairs.
template <typename Scalar>
LossValue<Scalar> mmd_loss(const MatrixX<Scalar>& x, const MatrixX<Scalar>& y, const std::vector<Scalar>& bandwidths) {
  if (x.rows() < 2 || y.rows() < 2) throw DataError("mmd_loss needs at least two rows per set");
  if (x.cols() != y.cols()) throw DimensionError("feature widths differ");
  if (bandwidths.empty()) throw ConfigError("mmd_loss needs at least one bandwidth");
  const Eigen::Index n = x.rows(), m = y.rows();
  const Scalar cxx = Scalar(1) / (Scalar(n) * Scalar(n - 1));
  const Scalar cyy = Scalar(1) / (Scalar(m) * Scalar(m - 1));
  const Scalar cxy = Scalar(2) / (Scalar(n) * Scalar(m));
  const Scalar nb = Scalar(bandwidths.size());

  auto sqdist = [](const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
    MatrixX<Scalar> d = (-Scalar(2) * a * b.transpose()).eval();
    d.colwise() += a.rowwise().squaredNorm();
    d.rowwise() += b.rowwise().squaredNorm().transpose();
    return MatrixX<Scalar>(d.cwiseMax(Scalar(0)));
  };
  const MatrixX<Scalar> dxx = sqdist(x, x), dyy = sqdist(y, y), dxy = sqdist(x, y);

  // Kernel values and kernel-weighted 1/s^2 factors, summed over bandwidths.
  MatrixX<Scalar> kxx = MatrixX<Scalar>::Zero(n, n), kyy = MatrixX<Scalar>::Zero(m, m),
                  kxy = MatrixX<Scalar>::Zero(n, m);
  MatrixX<Scalar> wxx = kxx, wyy = kyy, wxy = kxy;
  for (Scalar bw : bandwidths) {
    if (!(bw > Scalar(0))) throw ConfigError("bandwidths must be positive");
    const Scalar inv = Scalar(1) / (Scalar(2) * bw * bw);
    const MatrixX<Scalar> ex = (-inv * dxx.array()).exp().matrix();
    const MatrixX<Scalar> ey = (-inv * dyy.array()).exp().matrix();
    const MatrixX<Scalar> exy = (-inv * dxy.array()).exp().matrix();
    kxx += ex / nb;
    kyy += ey / nb;
    kxy += exy / nb;
    wxx += ex * (Scalar(2) * inv) / nb;
    wyy += ey * (Scalar(2) * inv) / nb;
    wxy += exy * (Scalar(2) * inv) / nb;
  }
  kxx.diagonal().setZero();
  kyy.diagonal().setZero();
  wxx.diagonal().setZero();
  wyy.diagonal().setZero();

  LossValue<Scalar> out;
  out.value = cxx * kxx.sum() + cyy * kyy.sum() - cxy * kxy.sum();

  // d k(a,b)/d a = -sum_s k_s(a,b) (a-b)/s^2 ; W holds sum_s k_s / s^2.
  auto pull = [](const MatrixX<Scalar>& w, const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
    // sum_j w_ij (a_i - b_j)
    return MatrixX<Scalar>(w.rowwise().sum().asDiagonal() * a - w * b);
  };
  out.grads[Role::source] = -Scalar(2) * cxx * pull(wxx, x, x) + cxy * pull(wxy, x, y);
  out.grads[Role::target] = -Scalar(2) * cyy * pull(wyy, y, y) + cxy * pull(MatrixX<Scalar>(wxy.transpose()), y, x);
  return out;
}

/// lambda1 * ad + lambda2 * uda, with gradients added role by role.
template <typename Scalar>
LossValue<Scalar> total_loss(const LossValue<Scalar>& l_ad, const LossValue<Scalar>& l_uda, Scalar lambda1,
                             Scalar lambda2) {
  LossValue<Scalar> out;
  out.value = lambda1 * l_ad.value + lambda2 * l_uda.value;
  for (const auto& [role, g] : l_ad.grads) out.grads[role] = lambda1 * g;
  for (const auto& [role, g] : l_uda.grads) {
    auto it = out.grads.find(role);
    if (it == out.grads.end()) {
      out.grads[role] = lambda2 * g;
    } else {
      if (it->second.rows() != g.rows() || it->second.cols() != g.cols())
        throw DimensionError("gradient shapes differ for a shared role");
      it->second += lambda2 * g;
    }
  }
  return out;
}

}  // namespace driftguard

#include "driftguard/trainer.hpp"

#include "driftguard/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace driftguard {

std::string to_string(Alignment a) {
  switch (a) {
    case Alignment::contrastive: return "contrastive";
    case Alignment::mmd: return "mmd";
    case Alignment::none: return "none";
  }
  return "?";
}
std::string to_string(ClusterSpace s) {
  switch (s) {
    case ClusterSpace::aux: return "aux";
    case ClusterSpace::base: return "base";
    case ClusterSpace::none: return "none";
  }
  return "?";
}
std::string to_string(TrainingMode m) { return m == TrainingMode::unsupervised ? "unsupervised" : "few_shot"; }

std::string to_string(EmptyPoolPolicy p) {
  switch (p) {
    case EmptyPoolPolicy::attract: return "attract";
    case EmptyPoolPolicy::in_batch: return "in_batch";
    case EmptyPoolPolicy::skip: return "skip";
  }
  return "?";
}
EmptyPoolPolicy empty_pool_policy_from_string(const std::string& s) {
  if (s == "attract") return EmptyPoolPolicy::attract;
  if (s == "in_batch") return EmptyPoolPolicy::in_batch;
  if (s == "skip") return EmptyPoolPolicy::skip;
  throw ConfigError("unknown empty_pool_policy '" + s + "'");
}

Alignment alignment_from_string(const std::string& s) {
  if (s == "contrastive") return Alignment::contrastive;
  if (s == "mmd") return Alignment::mmd;
  if (s == "none") return Alignment::none;
  throw ConfigError("unknown alignment '" + s + "'");
}
ClusterSpace cluster_space_from_string(const std::string& s) {
  if (s == "aux") return ClusterSpace::aux;
  if (s == "base") return ClusterSpace::base;
  if (s == "none") return ClusterSpace::none;
  throw ConfigError("unknown cluster_space '" + s + "'");
}
TrainingMode training_mode_from_string(const std::string& s) {
  if (s == "unsupervised") return TrainingMode::unsupervised;
  if (s == "few_shot") return TrainingMode::few_shot;
  throw ConfigError("unknown mode '" + s + "'");
}

void TrainingConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (output_dim < 1) throw ConfigError("output_dim must be >= 1");
  for (auto h : hidden_dims)
    if (h < 1) throw ConfigError("hidden dims must be >= 1");
  if (cluster_params.k < 1) throw ConfigError("K must be >= 1");
  if (mode == TrainingMode::few_shot && few_shot_ids.empty()) throw ConfigError("few_shot mode needs few_shot_ids");
  if (few_shot_synthetic_negatives && !(few_shot_noise > 0.0)) throw ConfigError("few_shot_noise must be positive");
  if (alignment == Alignment::mmd && mmd_bandwidth_multipliers.empty())
    throw ConfigError("mmd needs at least one bandwidth multiplier");
}

namespace {

MatrixXd clustering_features(const ProjectionNetwork<double>& net, TargetView target, const TrainingConfig& cfg) {
  if (cfg.cluster_space == ClusterSpace::aux) {
    MatrixXd x = target.aux.features.cast<double>();
    return cfg.normalize_aux ? l2_normalize_rows(x) : x;
  }
  MatrixXd x = forward(net, target.base.features.cast<double>());
  return cfg.normalize_base ? l2_normalize_rows(x) : x;
}

struct Pools {
  std::vector<Eigen::Index> selected;
  std::vector<Eigen::Index> rejected;
};

Pools to_pools(const SelectionResult& sel, const IdList& ids) {
  std::unordered_map<SampleId, Eigen::Index> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], static_cast<Eigen::Index>(i));
  Pools p;
  for (auto id : sel.selected_ids) p.selected.push_back(index.at(id));
  for (auto id : sel.rejected_ids) p.rejected.push_back(index.at(id));
  return p;
}

// k distinct indices from `pool` (all of them when k >= pool size).
std::vector<Eigen::Index> draw_batch(const std::vector<Eigen::Index>& pool, std::size_t k, Rng& rng) {
  std::vector<Eigen::Index> out = pool;
  const std::size_t take = std::min(k, out.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(out[i], out[i + rng.below(out.size() - i)]);
  out.resize(take);
  return out;
}

MatrixXd gather(const MatrixXd& x, const std::vector<Eigen::Index>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

}  // namespace

SelectionResult select_target(const ProjectionNetwork<double>& net, TargetView target, const TrainingConfig& cfg) {
  if (cfg.mode == TrainingMode::few_shot) {
    std::unordered_set<SampleId> shots(cfg.few_shot_ids.begin(), cfg.few_shot_ids.end());
    SelectionResult r;
    for (auto id : target.base.ids) {
      if (shots.count(id)) r.selected_ids.push_back(id);
      else if (cfg.few_shot_non_shot_negatives) r.rejected_ids.push_back(id);
    }
    if (r.selected_ids.size() != shots.size()) throw ConfigError("few_shot_ids contains ids absent from the target");
    return r;
  }
  if (cfg.cluster_space == ClusterSpace::none) return SelectionResult{target.base.ids, {}, std::nullopt};
  ClusterParams params = cfg.cluster_params;
  params.seed = derive_seed(cfg.seed, 20);
  const ClusterModel model = fit_clustering(clustering_features(net, target, cfg), cfg.clustering, params);
  return select_dominant(model, target.base.ids);
}

TrainedDetector train(FeatureView source, TargetView target, const TrainingConfig& cfg,
                      const SelectionObserver& observer) {
  cfg.validate();
  if (source.features.cols() != target.base.features.cols())
    throw DimensionError("source and target base streams differ in dimension");
  if (target.base.ids != target.aux.ids) throw DataError("target base and aux ids are not aligned");
  if (target.base.features.rows() < 1 || source.features.rows() < 1) throw DataError("empty training data");

  Rng rng(derive_seed(cfg.seed, 30));
  TrainedDetector det;
  det.config = cfg;
  det.network = init_network<double>(source.features.cols(), cfg.hidden_dims, cfg.output_dim,
                                     derive_seed(cfg.seed, 10), cfg.use_bias, cfg.init_gain);

  const MatrixXd src = source.features.cast<double>();
  const MatrixXd tgt = target.base.features.cast<double>();
  set_center(det.network, src);

  const bool aligning = cfg.alignment != Alignment::none && cfg.lambda2 > 0.0;
  const bool recluster = cfg.mode == TrainingMode::unsupervised && cfg.cluster_space != ClusterSpace::none &&
                         (cfg.cluster_space == ClusterSpace::base || cfg.recluster_every_epoch);

  Pools pools;
  MatrixXd synthetic_negatives;
  auto refresh_selection = [&] {
    det.selection = select_target(det.network, target, cfg);
    pools = to_pools(det.selection, target.base.ids);
  };
  if (aligning) {
    refresh_selection();
    if (cfg.mode == TrainingMode::few_shot && cfg.few_shot_synthetic_negatives) {
      Rng noise(derive_seed(cfg.seed, 40));
      synthetic_negatives = gather(tgt, pools.selected);
      for (Eigen::Index i = 0; i < synthetic_negatives.size(); ++i)
        synthetic_negatives.data()[i] += cfg.few_shot_noise * noise.normal();
    }
    if (pools.rejected.empty() && synthetic_negatives.rows() == 0 && cfg.alignment == Alignment::contrastive)
      det.warnings.push_back("no rejected target rows; empty_pool_policy=" + to_string(cfg.empty_pool_policy));
  }

  const auto n_src = static_cast<std::size_t>(src.rows());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (n_src + batch - 1) / batch;
  OptimizerState opt{cfg.base_lr, cfg.weight_decay, cfg.momentum,
                     static_cast<std::int64_t>(steps_per_epoch) * cfg.epochs, 0};
  MomentumBuffer<double> momentum;
  const ContrastiveOptions copts{cfg.include_positive_in_denominator, cfg.stop_negative_gradient};

  std::vector<Eigen::Index> src_order(n_src);
  std::iota(src_order.begin(), src_order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.recompute_center_every_epoch && epoch > 0) set_center(det.network, src);
    const VectorXd center = *det.network.center;
    rng.shuffle(src_order);
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.selected_count = det.selection.selected_ids.size();
    if (aligning && observer) entry.purity = observer(det.selection);
    double sum_ad = 0.0, sum_uda = 0.0;

    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t lo = step * batch, hi = std::min(n_src, lo + batch);
      const std::vector<Eigen::Index> src_rows(src_order.begin() + static_cast<std::ptrdiff_t>(lo),
                                               src_order.begin() + static_cast<std::ptrdiff_t>(hi));
      ForwardCache<double> src_cache, sel_cache, rej_cache;
      const MatrixXd src_out = forward(det.network, gather(src, src_rows), src_cache);
      const LossValue<double> l_ad = dsvdd_loss<double>(src_out, center);

      LossValue<double> l_align;
      bool have_align = false, use_rej = false, in_batch = false;
      MatrixXd sel_out, rej_out;
      if (aligning) {
        const auto sel_rows = draw_batch(pools.selected, batch, rng);
        sel_out = forward(det.network, gather(tgt, sel_rows), sel_cache);
        if (cfg.alignment == Alignment::contrastive) {
          MatrixXd rej_in;
          if (!pools.rejected.empty()) rej_in = gather(tgt, draw_batch(pools.rejected, batch, rng));
          if (synthetic_negatives.rows() > 0) {
            std::vector<Eigen::Index> all(static_cast<std::size_t>(synthetic_negatives.rows()));
            std::iota(all.begin(), all.end(), Eigen::Index{0});
            MatrixXd extra = gather(synthetic_negatives, draw_batch(all, batch, rng));
            MatrixXd merged(rej_in.rows() + extra.rows(), tgt.cols());
            if (rej_in.rows() > 0) merged << rej_in, extra;
            else merged = extra;
            rej_in = std::move(merged);
          }
          if (rej_in.rows() > 0) {
            rej_out = forward(det.network, rej_in, rej_cache);
            l_align = uda_loss<double>(src_out, sel_out, rej_out, cfg.tau, copts);
            have_align = use_rej = true;
          } else if (cfg.empty_pool_policy == EmptyPoolPolicy::in_batch) {
            l_align = uda_loss<double>(src_out, sel_out, sel_out, cfg.tau, copts);
            have_align = in_batch = true;
          } else if (cfg.empty_pool_policy == EmptyPoolPolicy::attract) {
            l_align = cosine_attraction_loss<double>(src_out, sel_out, cfg.tau);
            have_align = true;
          } else {
            ++entry.skipped_batches;
          }
        } else if (src_out.rows() >= 2 && sel_out.rows() >= 2) {
          const double med = median_pairwise_distance<double>(src_out, sel_out);
          std::vector<double> bws;
          for (double m : cfg.mmd_bandwidth_multipliers) bws.push_back(m * med);
          l_align = mmd_loss<double>(src_out, sel_out, bws);
          l_align.grads[Role::positive] = std::move(l_align.grads[Role::target]);
          l_align.grads.erase(Role::target);
          have_align = true;
        } else {
          ++entry.skipped_batches;
        }
      }

      const LossValue<double> total =
          have_align ? total_loss<double>(l_ad, l_align, cfg.lambda1, cfg.lambda2)
                     : total_loss<double>(l_ad, LossValue<double>{}, cfg.lambda1, 0.0);
      if (!total.all_finite())
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch + 1));
      sum_ad += l_ad.value;
      if (have_align) sum_uda += l_align.value;

      GradientBundle<double> grads = backward(det.network, src_cache, total.grad(Role::source));
      if (have_align) {
        MatrixXd g_sel = total.grad(Role::positive);
        if (in_batch) g_sel += total.grad(Role::negative);
        grads += backward(det.network, sel_cache, g_sel);
        if (use_rej) grads += backward(det.network, rej_cache, total.grad(Role::negative));
      }
      try {
        sgd_step(det.network, grads, opt, &momentum);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
    }

    entry.l_ad = cfg.lambda1 * sum_ad / double(steps_per_epoch);
    entry.l_uda = sum_uda / double(steps_per_epoch);
    entry.lr = opt.current_lr();
    det.log.push_back(entry);
    if (2 * entry.skipped_batches >= steps_per_epoch && entry.skipped_batches > 0)
      throw TrainingError("epoch " + std::to_string(epoch + 1) + ": " + std::to_string(entry.skipped_batches) + " of " +
                          std::to_string(steps_per_epoch) + " batches had an empty negative pool");
    if (entry.skipped_batches > 0)
      det.warnings.push_back("epoch " + std::to_string(epoch + 1) + ": skipped alignment on " +
                             std::to_string(entry.skipped_batches) + " batches");

    if (aligning && recluster && epoch + 1 < cfg.epochs) refresh_selection();
  }
  return det;
}

TrainedDetector train(const EmbeddingDataset& source, const PairedTargetSet& target, const TrainingConfig& cfg,
                      const SelectionObserver& observer) {
  return train(training_source_view(source), TargetView::of(target), cfg, observer);
}

VectorXd score(const TrainedDetector& detector, const MatrixXd& batch) {
  return hypersphere_scores(detector.network, batch);
}

VectorXd score(const TrainedDetector& detector, const MatrixXf& batch) {
  return hypersphere_scores(detector.network, batch.cast<double>());
}

std::vector<std::uint8_t> classify(const TrainedDetector& detector, const MatrixXf& batch, double threshold) {
  if (!std::isfinite(threshold)) throw ConfigError("threshold must be finite");
  const VectorXd s = score(detector, batch);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = s[i] > threshold ? 1 : 0;
  return out;
}

}  // namespace driftguard

#include "driftguard/evaluation.hpp"

#include "driftguard/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>
#include <unordered_set>

namespace driftguard {

using nlohmann::json;

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto l : labels) {
    if (l > 1) throw DataError("labels must be 0 or 1");
    n_pos += l;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("AUC needs both normal and anomalous samples");
  for (double s : scores)
    if (std::isnan(s)) throw DataError("NaN score");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sum of (1-based, tie-averaged) ranks of the anomalies, kept in half units
  // so the arithmetic is exact.
  double rank_sum2 = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid2 = double(i + 1) + double(j + 1);  // 2 * mid-rank
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_sum2 += mid2;
    i = j + 1;
  }
  const double u2 = rank_sum2 - double(n_pos) * double(n_pos + 1);
  return u2 / (2.0 * double(n_pos) * double(n_neg));
}

double auc(const VectorXd& scores, const LabelVector& labels) {
  return auc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())),
             std::span<const std::uint8_t>(labels));
}

double cluster_accuracy(const SelectionResult& selection, const IdList& ids, const LabelVector& labels) {
  if (ids.size() != labels.size()) throw DimensionError("ids and labels differ in length");
  if (ids.empty()) throw DataError("empty label set");
  std::unordered_set<SampleId> sel(selection.selected_ids.begin(), selection.selected_ids.end());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const bool selected = sel.count(ids[i]) != 0;
    if (selected == (labels[i] == 0)) ++correct;
  }
  return double(correct) / double(ids.size());
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.per_seed = std::move(values);
  if (s.per_seed.empty()) return s;
  const double n = double(s.per_seed.size());
  s.mean = std::accumulate(s.per_seed.begin(), s.per_seed.end(), 0.0) / n;
  if (s.per_seed.size() > 1) {
    double ss = 0.0;
    for (double v : s.per_seed) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

json to_json(const Summary& s) { return {{"per_seed", s.per_seed}, {"mean", s.mean}, {"std", s.std}}; }

json to_json(const MetricsReport& r) {
  json failures = json::array();
  for (const auto& [seed, msg] : r.failures) failures.push_back({{"seed", seed}, {"error", msg}});
  return {{"experiment", r.experiment},
          {"config_hash", r.config_hash},
          {"seeds", r.seeds},
          {"auc", to_json(r.auc)},
          {"cluster_accuracy", r.cluster_accuracy ? to_json(*r.cluster_accuracy) : json(nullptr)},
          {"dataset", r.dataset},
          {"failures", failures}};
}

LoadedData materialize(const ExperimentData& data, std::uint64_t seed) {
  if (const auto* spec = std::get_if<SyntheticShiftSpec>(&data)) {
    SyntheticShiftSpec s = *spec;
    s.seed = seed;
    auto pair = generate_synthetic_pair(s);
    return {std::move(pair.source), std::move(pair.target)};
  }
  const auto& p = std::get<DatasetPaths>(data);
  EmbeddingDataset source = load_dataset(p.source, p.format, Domain::source);
  EmbeddingDataset base = load_dataset(p.target_base, p.format, Domain::target);
  EmbeddingDataset aux = load_dataset(p.target_aux, p.format, Domain::target);
  if (!p.labels.empty()) {
    base = attach_labels_sidecar(base, p.labels);
    aux = attach_labels_sidecar(aux, p.labels);
  }
  return {std::move(source), PairedTargetSet(std::move(base), std::move(aux))};
}

IdList choose_few_shot_ids(const PairedTargetSet& target, int count, std::uint64_t seed) {
  const LabelVector& labels = EvaluationView(target.base()).labels();
  IdList normals;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 0) normals.push_back(target.ids()[i]);
  Rng rng(derive_seed(seed, 50));
  rng.shuffle(normals);
  normals.resize(std::min(normals.size(), static_cast<std::size_t>(std::max(count, 0))));
  return normals;
}

TrainedDetector train_on(const LoadedData& data, const TrainingConfig& cfg) {
  SelectionObserver observer;
  if (data.target.base().has_labels())
    observer = [&](const SelectionResult& s) -> std::optional<double> {
      if (s.selected_ids.empty()) return std::nullopt;
      return selection_purity(s, data.target.base());
    };
  return train(training_source_view(data.source), TargetView::of(data.target), cfg, observer);
}

RunOutcome run_once(const LoadedData& data, TrainingConfig cfg, int few_shot_count) {
  const LabelVector& labels = EvaluationView(data.target.base()).labels();
  if (few_shot_count > 0) {
    cfg.mode = TrainingMode::few_shot;
    cfg.few_shot_ids = choose_few_shot_ids(data.target, few_shot_count, cfg.seed);
  }
  RunOutcome out{train_on(data, cfg), 0.0, std::nullopt};
  out.auc = auc(score(out.detector, data.target.base().features()), labels);
  if (cfg.alignment != Alignment::none && !out.detector.selection.selected_ids.empty())
    out.cluster_accuracy = cluster_accuracy(out.detector.selection, data.target.ids(), labels);
  return out;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("DRIFTGUARD_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& task) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

MetricsReport run_experiment(const ExperimentData& data, const TrainingConfig& cfg,
                             const std::vector<std::uint64_t>& seeds, const ExperimentOptions& opts) {
  if (seeds.empty()) throw ConfigError("run_experiment needs at least one seed");
  struct Slot {
    std::optional<double> auc, acc;
    std::string error;
  };
  std::vector<Slot> slots(seeds.size());
  parallel_for(seeds.size(), opts.threads ? opts.threads : worker_threads(), [&](std::size_t i) {
    try {
      TrainingConfig c = cfg;
      c.seed = seeds[i];
      const RunOutcome r = run_once(materialize(data, seeds[i]), c, opts.few_shot_count);
      slots[i].auc = r.auc;
      slots[i].acc = r.cluster_accuracy;
    } catch (const Error& e) {
      slots[i].error = e.what();
    }
  });

  MetricsReport rep;
  rep.experiment = opts.name;
  rep.config_hash = opts.config_hash;
  rep.seeds = seeds;
  std::vector<double> aucs, accs;
  bool all_acc = true;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!slots[i].error.empty()) {
      rep.failures.emplace_back(seeds[i], slots[i].error);
      continue;
    }
    aucs.push_back(*slots[i].auc);
    if (slots[i].acc) accs.push_back(*slots[i].acc);
    else all_acc = false;
  }
  rep.auc = summarize(std::move(aucs));
  if (all_acc && !accs.empty()) rep.cluster_accuracy = summarize(std::move(accs));
  if (const auto* spec = std::get_if<SyntheticShiftSpec>(&data)) {
    rep.dataset = to_json(*spec);
    rep.dataset.erase("seed");
    rep.dataset["kind"] = "synthetic";
  } else {
    const auto& p = std::get<DatasetPaths>(data);
    rep.dataset = {{"kind", "files"},
                   {"source", p.source.string()},
                   {"target_base", p.target_base.string()},
                   {"target_aux", p.target_aux.string()},
                   {"labels", p.labels.string()}};
  }
  return rep;
}

}  // namespace driftguard

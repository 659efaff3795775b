#include "driftguard/commands.hpp"

#include "driftguard/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace driftguard {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::string extension(FileFormat f) { return f == FileFormat::binary ? ".emb" : ".csv"; }

std::uint64_t first_seed(const ExperimentConfig& c) { return c.seeds.front(); }

void say(const CommandContext& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << msg << '\n';
}

const SyntheticShiftSpec& synthetic_or_throw(const ExperimentConfig& c, const char* command) {
  const auto* s = std::get_if<SyntheticShiftSpec>(&c.data);
  if (!s) throw ConfigError(std::string(command) + " needs synthetic data");
  return *s;
}

std::string mean_or_nan(const Summary& s) { return s.per_seed.empty() ? "nan" : format_number(s.mean); }
std::string std_or_nan(const Summary& s) { return s.per_seed.empty() ? "nan" : format_number(s.std); }
std::string acc_or_nan(const MetricsReport& r) {
  return r.cluster_accuracy ? format_number(r.cluster_accuracy->mean) : "nan";
}

json report_json(const MetricsReport& r) { return to_json(r); }

MetricsReport experiment(const CommandContext& ctx, const ExperimentData& data, TrainingConfig cfg,
                         const std::string& name) {
  ExperimentOptions opts;
  opts.name = name;
  opts.config_hash = config_hash(ctx.config);
  opts.few_shot_count = ctx.config.few_shot_count;
  say(ctx, "running " + name);
  MetricsReport r = run_experiment(data, cfg, ctx.config.seeds, opts);
  for (const auto& [seed, msg] : r.failures) say(ctx, "  seed " + std::to_string(seed) + " failed: " + msg);
  return r;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

CommandContext make_context(const fs::path& config_path, const std::vector<std::string>& overrides,
                            const std::string& seeds, const fs::path& out_dir, FileFormat format) {
  json raw = json::object();
  fs::path base_dir;
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw IoError("cannot read " + config_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      raw = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ConfigError(config_path.string() + ": malformed JSON: " + e.what());
    }
    base_dir = config_path.parent_path();
  }
  CommandContext ctx;
  ctx.config = config_from_json(apply_overrides(std::move(raw), overrides), base_dir);
  if (!seeds.empty()) ctx.config.seeds = parse_seed_list(seeds);
  ctx.out_dir = out_dir.empty() ? fs::path(".") : out_dir;
  ctx.format = format;
  return ctx;
}

GeneratedFiles cmd_gen(const CommandContext& ctx) {
  SyntheticShiftSpec spec = synthetic_or_throw(ctx.config, "gen");
  spec.seed = first_seed(ctx.config);
  const SyntheticPair pair = generate_synthetic_pair(spec);
  ensure_dir(ctx.out_dir);
  GeneratedFiles f;
  const std::string ext = extension(ctx.format);
  f.source = ctx.out_dir / ("source" + ext);
  f.target_base = ctx.out_dir / ("target_base" + ext);
  f.target_aux = ctx.out_dir / ("target_aux" + ext);
  f.labels = ctx.out_dir / "labels.csv";
  f.manifest = ctx.out_dir / "gen.json";
  save_dataset(pair.source.without_labels(), f.source, ctx.format);
  save_dataset(pair.target.base().without_labels(), f.target_base, ctx.format);
  save_dataset(pair.target.aux().without_labels(), f.target_aux, ctx.format);
  save_labels_sidecar(pair.target.base(), f.labels);
  const EvaluationView truth(pair.target.base());
  write_json(f.manifest, {{"experiment", "gen"},
                          {"config_hash", config_hash(ctx.config)},
                          {"seed", spec.seed},
                          {"format", ctx.format == FileFormat::binary ? "binary" : "csv"},
                          {"files",
                           {{"source", f.source.filename().string()},
                            {"target_base", f.target_base.filename().string()},
                            {"target_aux", f.target_aux.filename().string()},
                            {"labels", f.labels.filename().string()}}},
                          {"n_source", pair.source.rows()},
                          {"n_target", pair.target.rows()},
                          {"anomalies", truth.count_anomalies()},
                          {"spec", to_json(spec)}});
  say(ctx, "wrote " + std::to_string(pair.target.rows()) + " target rows to " + ctx.out_dir.string());
  return f;
}

TrainArtifacts cmd_train(const CommandContext& ctx) {
  const std::uint64_t seed = first_seed(ctx.config);
  const std::string hash = config_hash(ctx.config);
  const LoadedData data = materialize(ctx.config.data, seed);
  TrainingConfig cfg = ctx.config.training;
  cfg.seed = seed;
  if (ctx.config.few_shot_count > 0) {
    cfg.mode = TrainingMode::few_shot;
    cfg.few_shot_ids = choose_few_shot_ids(data.target, ctx.config.few_shot_count, seed);
  }
  say(ctx, "training seed " + std::to_string(seed) + " for " + std::to_string(cfg.epochs) + " epochs");
  TrainArtifacts out{{}, {}, {}, train_on(data, cfg)};
  const TrainedDetector& det = out.detector;

  ensure_dir(ctx.out_dir);
  out.checkpoint = ctx.out_dir / "detector.net";
  out.log = ctx.out_dir / "train_log.jsonl";
  out.summary = ctx.out_dir / "train.json";
  save_checkpoint(det.network, out.checkpoint);

  std::string lines;
  for (const EpochLog& e : det.log) {
    json j = {{"config_hash", hash},         {"epoch", e.epoch},
              {"l_ad", e.l_ad},              {"l_uda", e.l_uda},
              {"lr", e.lr},                  {"selected", e.selected_count},
              {"skipped_batches", e.skipped_batches}};
    j["purity"] = e.purity ? json(*e.purity) : json(nullptr);
    lines += j.dump() + "\n";
  }
  write_file_atomic(out.log, lines);

  json summary = {{"experiment", "train"},
                  {"config_hash", hash},
                  {"seed", seed},
                  {"epochs_completed", det.log.size()},
                  {"selected", det.selection.selected_ids.size()},
                  {"rejected", det.selection.rejected_ids.size()},
                  {"warnings", det.warnings},
                  {"config", to_json(ctx.config)}};
  if (data.target.base().has_labels()) {
    const LabelVector& labels = EvaluationView(data.target.base()).labels();
    const VectorXd s = score(det, data.target.base().features());
    try {
      summary["target_auc"] = auc(s, labels);
    } catch (const UndefinedMetric&) {
      summary["target_auc"] = nullptr;
    }
  }
  write_json(out.summary, summary);
  say(ctx, "wrote " + out.checkpoint.string());
  return out;
}

json cmd_eval(const CommandContext& ctx, const fs::path& checkpoint) {
  const std::uint64_t seed = first_seed(ctx.config);
  TrainedDetector det{load_checkpoint(checkpoint), std::nullopt, ctx.config.training, {}, {}, {}};
  const LoadedData data = materialize(ctx.config.data, seed);
  const EmbeddingDataset& base = data.target.base();
  if (base.dim() != det.network.input_dim())
    throw DimensionError("checkpoint expects " + std::to_string(det.network.input_dim()) + " features, data has " +
                         std::to_string(base.dim()));
  const VectorXd s = score(det, base.features());

  ensure_dir(ctx.out_dir);
  std::string csv = "id,score\n";
  for (Eigen::Index i = 0; i < s.size(); ++i)
    csv += std::to_string(base.ids()[static_cast<std::size_t>(i)]) + "," + format_number(s[i]) + "\n";
  write_file_atomic(ctx.out_dir / "scores.csv", csv);

  MetricsReport rep;
  rep.experiment = "eval";
  rep.config_hash = config_hash(ctx.config);
  rep.seeds = {seed};
  json j;
  if (base.has_labels()) {
    rep.auc = summarize({auc(s, EvaluationView(base).labels())});
    j = report_json(rep);
  } else {
    j = report_json(rep);
    j["auc"] = nullptr;
  }
  j["checkpoint"] = checkpoint.filename().string();
  j["n"] = base.rows();
  write_json(ctx.out_dir / "eval.json", j);
  return j;
}

json cmd_sweep_ratio(const CommandContext& ctx) {
  const SyntheticShiftSpec& base_spec = synthetic_or_throw(ctx.config, "sweep-ratio");
  if (ctx.config.ratios.empty()) throw ConfigError("sweep-ratio needs at least one ratio");
  json rows = json::array();
  std::string csv = "ratio,auc_mean,auc_std,cluster_accuracy_mean\n";
  for (double ratio : ctx.config.ratios) {
    SyntheticShiftSpec spec = base_spec;
    spec.contamination = ratio;
    const MetricsReport r = experiment(ctx, spec, ctx.config.training, "sweep-ratio " + format_number(ratio));
    csv += format_number(ratio) + "," + mean_or_nan(r.auc) + "," + std_or_nan(r.auc) + "," + acc_or_nan(r) + "\n";
    rows.push_back({{"ratio", ratio}, {"report", report_json(r)}});
  }
  ensure_dir(ctx.out_dir);
  write_file_atomic(ctx.out_dir / "sweep_ratio.csv", csv);
  json j = {{"experiment", "sweep-ratio"},
            {"config_hash", config_hash(ctx.config)},
            {"seeds", ctx.config.seeds},
            {"rows", rows}};
  write_json(ctx.out_dir / "sweep_ratio.json", j);
  return j;
}

json cmd_sweep_k(const CommandContext& ctx) {
  std::vector<int> ks;
  for (int k : ctx.config.ks)
    if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  if (ks.empty()) throw ConfigError("sweep-k needs at least one K");
  json rows = json::array();
  std::string csv = "K,auc_mean,auc_std\n";
  for (int k : ks) {
    TrainingConfig cfg = ctx.config.training;
    cfg.cluster_params.k = k;
    const MetricsReport r = experiment(ctx, ctx.config.data, cfg, "sweep-k " + std::to_string(k));
    csv += std::to_string(k) + "," + mean_or_nan(r.auc) + "," + std_or_nan(r.auc) + "\n";
    rows.push_back({{"K", k}, {"report", report_json(r)}});
  }
  ensure_dir(ctx.out_dir);
  write_file_atomic(ctx.out_dir / "sweep_k.csv", csv);
  json j = {{"experiment", "sweep-k"}, {"config_hash", config_hash(ctx.config)}, {"seeds", ctx.config.seeds}, {"rows", rows}};
  write_json(ctx.out_dir / "sweep_k.json", j);
  return j;
}

json cmd_ablate(const CommandContext& ctx) {
  struct Cell {
    std::string name;
    TrainingConfig cfg;
  };
  const TrainingConfig& base = ctx.config.training;
  std::vector<Cell> cells;
  const std::pair<const char*, ClusterSpace> variants[] = {{"adapt-no-cluster", ClusterSpace::none},
                                                           {"adapt+cluster(base)", ClusterSpace::base},
                                                           {"adapt+cluster(aux)", ClusterSpace::aux}};
  for (Alignment a : {Alignment::contrastive, Alignment::mmd}) {
    Cell none{"no-adapt", base};
    none.cfg.alignment = Alignment::none;
    none.cfg.cluster_space = ClusterSpace::none;
    cells.push_back(none);
    for (const auto& [name, space] : variants) {
      Cell c{name, base};
      c.cfg.alignment = a;
      c.cfg.cluster_space = space;
      cells.push_back(c);
    }
  }
  const std::size_t core = cells.size();
  for (ClusterAlgorithm algo :
       {ClusterAlgorithm::kmeans, ClusterAlgorithm::gmm, ClusterAlgorithm::meanshift, ClusterAlgorithm::knn_filter}) {
    Cell c{"clustering:" + to_string(algo), base};
    c.cfg.alignment = Alignment::contrastive;
    c.cfg.cluster_space = ClusterSpace::aux;
    c.cfg.clustering = algo;
    cells.push_back(c);
  }

  // Identical training setups share one run.
  std::map<std::string, json> cache;
  auto key_of = [](const TrainingConfig& t) {
    ExperimentConfig probe;
    probe.training = t;
    return to_json(probe).dump();
  };

  json out_cells = json::array();
  std::string csv = "cell,column,alignment,cluster_space,clustering,auc_mean,auc_std,cluster_accuracy_mean,status\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const std::string column = i < core ? (i < core / 2 ? "contrastive" : "mmd") : "clustering";
    json entry = {{"cell", c.name},
                  {"column", column},
                  {"alignment", to_string(c.cfg.alignment)},
                  {"cluster_space", to_string(c.cfg.cluster_space)},
                  {"clustering", to_string(c.cfg.clustering)}};
    const std::string key = key_of(c.cfg);
    std::string auc_mean = "nan", auc_std = "nan", acc = "nan", status = "ok";
    try {
      auto it = cache.find(key);
      if (it == cache.end()) {
        const MetricsReport r = experiment(ctx, ctx.config.data, c.cfg, "ablate " + c.name + " [" + column + "]");
        it = cache.emplace(key, report_json(r)).first;
      }
      entry["report"] = it->second;
      const json& rep = it->second;
      if (!rep["auc"]["per_seed"].empty()) {
        auc_mean = format_number(rep["auc"]["mean"].get<double>());
        auc_std = format_number(rep["auc"]["std"].get<double>());
      }
      if (rep.contains("cluster_accuracy") && !rep["cluster_accuracy"].is_null())
        acc = format_number(rep["cluster_accuracy"]["mean"].get<double>());
      if (!rep["failures"].empty()) status = "partial";
      if (rep["auc"]["per_seed"].empty()) status = "failed";
    } catch (const Error& e) {
      entry["error"] = e.what();
      status = "failed";
    }
    entry["status"] = status;
    csv += c.name + "," + column + "," + entry["alignment"].get<std::string>() + "," +
           entry["cluster_space"].get<std::string>() + "," + entry["clustering"].get<std::string>() + "," + auc_mean +
           "," + auc_std + "," + acc + "," + status + "\n";
    out_cells.push_back(std::move(entry));
  }
  ensure_dir(ctx.out_dir);
  write_file_atomic(ctx.out_dir / "ablate.csv", csv);
  json j = {{"experiment", "ablate"},
            {"config_hash", config_hash(ctx.config)},
            {"seeds", ctx.config.seeds},
            {"cells", out_cells}};
  write_json(ctx.out_dir / "ablate.json", j);
  return j;
}

json cmd_export_report(const CommandContext& ctx, const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    std::error_code ec;
    if (fs::is_directory(in, ec)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in))
        if (e.path().extension() == ".json") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in, ec)) {
      files.push_back(in);
    } else {
      throw IoError("no such report: " + in.string());
    }
  }
  if (files.empty()) throw ConfigError("export-report found no report files");

  struct Row {
    std::string experiment, entry, hash, auc_mean, auc_std, acc;
  };
  std::vector<Row> rows;
  auto add = [&](const std::string& exp, const std::string& entry, const std::string& hash, const json& rep) {
    Row r{exp, entry, hash, "nan", "nan", "nan"};
    if (rep.contains("auc") && rep["auc"].is_object() && !rep["auc"]["per_seed"].empty()) {
      r.auc_mean = format_number(rep["auc"]["mean"].get<double>());
      r.auc_std = format_number(rep["auc"]["std"].get<double>());
    }
    if (rep.contains("cluster_accuracy") && rep["cluster_accuracy"].is_object())
      r.acc = format_number(rep["cluster_accuracy"]["mean"].get<double>());
    rows.push_back(r);
  };

  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw IoError("cannot read " + f.string());
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
      j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw FormatError(f.string() + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("experiment")) continue;
    const std::string exp = j["experiment"].get<std::string>();
    const std::string hash = j.value("config_hash", "");
    if (j.contains("cells")) {
      for (const auto& c : j["cells"]) {
        const std::string entry = c["cell"].get<std::string>() + " [" + c["column"].get<std::string>() + "]";
        if (c.contains("report")) add(exp, entry, hash, c["report"]);
        else add(exp, entry, hash, json::object());
      }
    } else if (j.contains("rows")) {
      for (const auto& r : j["rows"]) {
        const std::string entry = r.contains("ratio") ? "ratio=" + format_number(r["ratio"].get<double>())
                                                      : "K=" + std::to_string(r["K"].get<int>());
        add(exp, entry, hash, r["report"]);
      }
    } else if (j.contains("auc")) {
      add(exp, "", hash, j);
    }
  }

  std::string csv = "experiment,entry,config_hash,auc_mean,auc_std,cluster_accuracy_mean\n";
  std::string md = "| experiment | entry | AUC mean | AUC std | cluster acc |\n|---|---|---|---|---|\n";
  json out = json::array();
  for (const Row& r : rows) {
    csv += r.experiment + ",\"" + r.entry + "\"," + r.hash + "," + r.auc_mean + "," + r.auc_std + "," + r.acc + "\n";
    md += "| " + r.experiment + " | " + r.entry + " | " + r.auc_mean + " | " + r.auc_std + " | " + r.acc + " |\n";
    out.push_back({{"experiment", r.experiment}, {"entry", r.entry}, {"config_hash", r.hash}, {"auc_mean", r.auc_mean},
                   {"auc_std", r.auc_std}, {"cluster_accuracy_mean", r.acc}});
  }
  ensure_dir(ctx.out_dir);
  write_file_atomic(ctx.out_dir / "report.csv", csv);
  write_file_atomic(ctx.out_dir / "report.md", md);
  return out;
}

}  // namespace driftguard

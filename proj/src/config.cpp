#include "driftguard/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace driftguard {

using nlohmann::json;

namespace {

const std::vector<std::string> kKeys = {
    // experiment
    "version", "seeds", "ratios", "ks", "few_shot_count",
    // training
    "lambda1", "lambda2", "tau", "base_lr", "weight_decay", "momentum", "batch_size", "epochs", "hidden_dims",
    "output_dim", "use_bias", "init_gain", "clustering", "K", "bandwidth", "neighbors", "keep_fraction",
    "cluster_max_iter", "cluster_tol", "max_seeds", "n_init", "cluster_space", "normalize_aux", "normalize_base",
    "recluster_every_epoch", "recompute_center_every_epoch", "alignment", "include_positive_in_denominator",
    "stop_negative_gradient", "empty_pool_policy", "mmd_bandwidth_multipliers", "mode", "few_shot_ids",
    "few_shot_non_shot_negatives", "few_shot_synthetic_negatives", "few_shot_noise",
    // data
    "data", "synthetic_spec", "dim", "contamination", "n_source", "n_target", "aux_dim", "aux_gain",
    "aux_separation", "aux_offset_norm", "aux_seed", "source", "target_base", "target_aux", "labels", "format"};

[[noreturn]] void bad_type(const std::string& key, const char* want) {
  throw ConfigError("config key '" + key + "' must be " + want);
}

class Reader {
 public:
  explicit Reader(const json& j) : j_(j) {}

  bool has(const std::string& k) const { return j_.contains(k); }

  double real(const std::string& k, double def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number()) bad_type(k, "a number");
    return v.get<double>();
  }
  long long integer(const std::string& k, long long def) const {
    if (!has(k)) return def;
    return as_integer(k, j_.at(k));
  }
  std::uint64_t unsigned_integer(const std::string& k, std::uint64_t def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    bad_type(k, "a nonnegative integer");
  }
  bool boolean(const std::string& k, bool def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_boolean()) bad_type(k, "a boolean");
    return v.get<bool>();
  }
  std::string string(const std::string& k, const std::string& def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_string()) bad_type(k, "a string");
    return v.get<std::string>();
  }
  std::vector<double> reals(const std::string& k, std::vector<double> def) const {
    if (!has(k)) return def;
    const json& v = array(k);
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) bad_type(k, "an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  std::vector<long long> integers(const std::string& k, std::vector<long long> def) const {
    if (!has(k)) return def;
    std::vector<long long> out;
    for (const auto& e : array(k)) out.push_back(as_integer(k, e));
    return out;
  }

 private:
  const json& array(const std::string& k) const {
    const json& v = j_.at(k);
    if (!v.is_array()) bad_type(k, "an array");
    return v;
  }
  static long long as_integer(const std::string& k, const json& v) {
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d == static_cast<double>(static_cast<long long>(d))) return static_cast<long long>(d);
    }
    bad_type(k, "an integer");
  }
  const json& j_;
};

template <typename F>
auto rethrow_as_config(const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
}

}  // namespace

const std::vector<std::string>& config_keys() { return kKeys; }

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const std::set<std::string> known(kKeys.begin(), kKeys.end());
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");

  const Reader r(j);
  ExperimentConfig c;
  c.version = static_cast<int>(r.integer("version", kConfigVersion));
  if (c.version != kConfigVersion)
    throw ConfigError("unsupported config version " + std::to_string(c.version));

  TrainingConfig& t = c.training;
  t.lambda1 = r.real("lambda1", t.lambda1);
  t.lambda2 = r.real("lambda2", t.lambda2);
  t.tau = r.real("tau", t.tau);
  t.base_lr = r.real("base_lr", t.base_lr);
  t.weight_decay = r.real("weight_decay", t.weight_decay);
  t.momentum = r.real("momentum", t.momentum);
  t.batch_size = static_cast<int>(r.integer("batch_size", t.batch_size));
  t.epochs = static_cast<int>(r.integer("epochs", t.epochs));
  {
    std::vector<long long> def(t.hidden_dims.begin(), t.hidden_dims.end());
    t.hidden_dims.clear();
    for (auto h : r.integers("hidden_dims", def)) t.hidden_dims.push_back(static_cast<Eigen::Index>(h));
  }
  t.output_dim = static_cast<Eigen::Index>(r.integer("output_dim", t.output_dim));
  t.use_bias = r.boolean("use_bias", t.use_bias);
  t.init_gain = r.real("init_gain", t.init_gain);
  t.clustering =
      rethrow_as_config("clustering", [&] { return cluster_algorithm_from_string(r.string("clustering", to_string(t.clustering))); });
  t.cluster_params.k = static_cast<int>(r.integer("K", t.cluster_params.k));
  t.cluster_params.bandwidth = r.real("bandwidth", t.cluster_params.bandwidth);
  t.cluster_params.neighbors = static_cast<int>(r.integer("neighbors", t.cluster_params.neighbors));
  t.cluster_params.keep_fraction = r.real("keep_fraction", t.cluster_params.keep_fraction);
  t.cluster_params.max_iter = static_cast<int>(r.integer("cluster_max_iter", t.cluster_params.max_iter));
  t.cluster_params.tol = r.real("cluster_tol", t.cluster_params.tol);
  t.cluster_params.max_seeds = static_cast<int>(r.integer("max_seeds", t.cluster_params.max_seeds));
  t.cluster_params.n_init = static_cast<int>(r.integer("n_init", t.cluster_params.n_init));
  t.cluster_space = rethrow_as_config(
      "cluster_space", [&] { return cluster_space_from_string(r.string("cluster_space", to_string(t.cluster_space))); });
  t.normalize_aux = r.boolean("normalize_aux", t.normalize_aux);
  t.normalize_base = r.boolean("normalize_base", t.normalize_base);
  t.recluster_every_epoch = r.boolean("recluster_every_epoch", t.recluster_every_epoch);
  t.recompute_center_every_epoch = r.boolean("recompute_center_every_epoch", t.recompute_center_every_epoch);
  t.alignment =
      rethrow_as_config("alignment", [&] { return alignment_from_string(r.string("alignment", to_string(t.alignment))); });
  t.include_positive_in_denominator = r.boolean("include_positive_in_denominator", t.include_positive_in_denominator);
  t.stop_negative_gradient = r.boolean("stop_negative_gradient", t.stop_negative_gradient);
  t.empty_pool_policy = rethrow_as_config("empty_pool_policy", [&] {
    return empty_pool_policy_from_string(r.string("empty_pool_policy", to_string(t.empty_pool_policy)));
  });
  t.mmd_bandwidth_multipliers = r.reals("mmd_bandwidth_multipliers", t.mmd_bandwidth_multipliers);
  t.mode = rethrow_as_config("mode", [&] { return training_mode_from_string(r.string("mode", to_string(t.mode))); });
  {
    t.few_shot_ids.clear();
    for (auto id : r.integers("few_shot_ids", {})) {
      if (id < 0) bad_type("few_shot_ids", "an array of nonnegative integers");
      t.few_shot_ids.push_back(static_cast<SampleId>(id));
    }
  }
  t.few_shot_non_shot_negatives = r.boolean("few_shot_non_shot_negatives", t.few_shot_non_shot_negatives);
  t.few_shot_synthetic_negatives = r.boolean("few_shot_synthetic_negatives", t.few_shot_synthetic_negatives);
  t.few_shot_noise = r.real("few_shot_noise", t.few_shot_noise);

  c.few_shot_count = static_cast<int>(r.integer("few_shot_count", 0));
  if (c.few_shot_count < 0) throw ConfigError("few_shot_count must be >= 0");
  if (t.mode == TrainingMode::few_shot && t.few_shot_ids.empty() && c.few_shot_count == 0)
    throw ConfigError("mode few_shot needs few_shot_ids or few_shot_count");
  {
    auto probe = t;
    if (probe.mode == TrainingMode::few_shot && probe.few_shot_ids.empty()) probe.few_shot_ids = {0};
    probe.validate();
  }

  c.seeds.clear();
  for (auto s : r.integers("seeds", {1, 2, 3, 4, 5})) {
    if (s < 0) bad_type("seeds", "an array of nonnegative integers");
    c.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  c.ratios = r.reals("ratios", c.ratios);
  for (double x : c.ratios)
    if (!(x >= 0.0 && x <= 0.95)) throw ConfigError("ratios must lie in [0, 0.95]");
  c.ks.clear();
  for (auto k : r.integers("ks", {1, 2, 4, 8})) {
    if (k < 1) throw ConfigError("ks must be >= 1");
    c.ks.push_back(static_cast<int>(k));
  }

  const std::string kind = r.string("data", r.has("source") ? "files" : "synthetic");
  if (kind == "synthetic") {
    for (const char* k : {"source", "target_base", "target_aux", "labels"})
      if (r.has(k)) throw ConfigError(std::string("config key '") + k + "' needs data = files");
    SyntheticShiftSpec s;
    c.synthetic_spec_path = r.string("synthetic_spec", "");
    if (!c.synthetic_spec_path.empty()) {
      const json sj = read_json_file(resolve(base_dir, c.synthetic_spec_path));
      s = rethrow_as_config("synthetic_spec", [&] { return synthetic_spec_from_json(sj); });
      if (r.has("dim") && r.integer("dim", s.dim) != s.dim)
        throw ConfigError("config key 'dim' disagrees with the synthetic spec file");
      s.contamination = r.real("contamination", s.contamination);
    } else {
      const auto dim = r.integer("dim", 16);
      if (dim < 2) throw ConfigError("dim must be >= 2");
      s = SyntheticShiftSpec::default_benchmark(static_cast<int>(dim), r.real("contamination", 0.1));
    }
    s.n_source = static_cast<Eigen::Index>(r.integer("n_source", s.n_source));
    s.n_target = static_cast<Eigen::Index>(r.integer("n_target", s.n_target));
    s.aux_dim = static_cast<int>(r.integer("aux_dim", s.aux_dim));
    s.aux_gain = r.real("aux_gain", s.aux_gain);
    s.aux_separation = r.real("aux_separation", s.aux_separation);
    s.aux_offset_norm = r.real("aux_offset_norm", s.aux_offset_norm);
    s.aux_seed = r.unsigned_integer("aux_seed", s.aux_seed);
    rethrow_as_config("synthetic", [&] {
      s.validate();
      return 0;
    });
    c.data = std::move(s);
  } else if (kind == "files") {
    for (const char* k : {"synthetic_spec", "dim", "contamination", "n_source", "n_target", "aux_dim", "aux_gain",
                          "aux_separation", "aux_offset_norm", "aux_seed"})
      if (r.has(k)) throw ConfigError(std::string("config key '") + k + "' needs data = synthetic");
    DatasetPaths p;
    p.source = resolve(base_dir, r.string("source", ""));
    p.target_base = resolve(base_dir, r.string("target_base", ""));
    p.target_aux = resolve(base_dir, r.string("target_aux", ""));
    p.labels = resolve(base_dir, r.string("labels", ""));
    if (p.source.empty() || p.target_base.empty() || p.target_aux.empty())
      throw ConfigError("data = files needs source, target_base and target_aux");
    p.format = rethrow_as_config("format", [&] { return format_from_string(r.string("format", "binary")); });
    c.data = std::move(p);
  } else {
    throw ConfigError("config key 'data' must be 'synthetic' or 'files'");
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  const TrainingConfig& t = c.training;
  json j;
  j["version"] = c.version;
  j["seeds"] = c.seeds;
  j["ratios"] = c.ratios;
  j["ks"] = c.ks;
  j["few_shot_count"] = c.few_shot_count;
  j["lambda1"] = t.lambda1;
  j["lambda2"] = t.lambda2;
  j["tau"] = t.tau;
  j["base_lr"] = t.base_lr;
  j["weight_decay"] = t.weight_decay;
  j["momentum"] = t.momentum;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["hidden_dims"] = t.hidden_dims;
  j["output_dim"] = t.output_dim;
  j["use_bias"] = t.use_bias;
  j["init_gain"] = t.init_gain;
  j["clustering"] = to_string(t.clustering);
  j["K"] = t.cluster_params.k;
  j["bandwidth"] = t.cluster_params.bandwidth;
  j["neighbors"] = t.cluster_params.neighbors;
  j["keep_fraction"] = t.cluster_params.keep_fraction;
  j["cluster_max_iter"] = t.cluster_params.max_iter;
  j["cluster_tol"] = t.cluster_params.tol;
  j["max_seeds"] = t.cluster_params.max_seeds;
  j["n_init"] = t.cluster_params.n_init;
  j["cluster_space"] = to_string(t.cluster_space);
  j["normalize_aux"] = t.normalize_aux;
  j["normalize_base"] = t.normalize_base;
  j["recluster_every_epoch"] = t.recluster_every_epoch;
  j["recompute_center_every_epoch"] = t.recompute_center_every_epoch;
  j["alignment"] = to_string(t.alignment);
  j["include_positive_in_denominator"] = t.include_positive_in_denominator;
  j["stop_negative_gradient"] = t.stop_negative_gradient;
  j["empty_pool_policy"] = to_string(t.empty_pool_policy);
  j["mmd_bandwidth_multipliers"] = t.mmd_bandwidth_multipliers;
  j["mode"] = to_string(t.mode);
  j["few_shot_ids"] = t.few_shot_ids;
  j["few_shot_non_shot_negatives"] = t.few_shot_non_shot_negatives;
  j["few_shot_synthetic_negatives"] = t.few_shot_synthetic_negatives;
  j["few_shot_noise"] = t.few_shot_noise;
  if (const auto* s = std::get_if<SyntheticShiftSpec>(&c.data)) {
    j["data"] = "synthetic";
    if (!c.synthetic_spec_path.empty()) j["synthetic_spec"] = c.synthetic_spec_path;
    j["dim"] = s->dim;
    j["contamination"] = s->contamination;
    j["n_source"] = s->n_source;
    j["n_target"] = s->n_target;
    j["aux_dim"] = s->aux_dim;
    j["aux_gain"] = s->aux_gain;
    j["aux_separation"] = s->aux_separation;
    j["aux_offset_norm"] = s->aux_offset_norm;
    j["aux_seed"] = s->aux_seed;
  } else {
    const auto& p = std::get<DatasetPaths>(c.data);
    j["data"] = "files";
    j["source"] = p.source.string();
    j["target_base"] = p.target_base.string();
    j["target_aux"] = p.target_aux.string();
    j["labels"] = p.labels.string();
    j["format"] = p.format == FileFormat::binary ? "binary" : "csv";
  }
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path), path.parent_path());
}

json apply_overrides(json j, const std::vector<std::string>& overrides) {
  const std::set<std::string> known(kKeys.begin(), kKeys.end());
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    json v;
    try {
      v = json::parse(text);
    } catch (const json::parse_error&) {
      v = text;
    }
    j[key] = std::move(v);
  }
  return j;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& c) {
  std::string canon = to_json(c).dump();
  // The geometry of a synthetic benchmark is not part of the flat form.
  if (const auto* s = std::get_if<SyntheticShiftSpec>(&c.data)) canon += to_json(*s).dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char ch) { return std::isdigit(ch); }))
      throw ConfigError("bad seed list '" + s + "'");
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad seed list '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

}  // namespace driftguard

#include "driftguard/synthetic.hpp"

#include "driftguard/random.hpp"

#include <cmath>
#include <numbers>

namespace driftguard {

using nlohmann::json;

MatrixXd AffineShift::rotation(Eigen::Index dim) const {
  MatrixXd r = MatrixXd::Identity(dim, dim);
  for (std::size_t k = 0; k < angles.size(); ++k) {
    const auto a = static_cast<Eigen::Index>(2 * k), b = a + 1;
    if (b >= dim) break;
    MatrixXd g = MatrixXd::Identity(dim, dim);
    const double c = std::cos(angles[k]), s = std::sin(angles[k]);
    g(a, a) = c;
    g(a, b) = -s;
    g(b, a) = s;
    g(b, b) = c;
    r = g * r;
  }
  return r;
}

VectorXd AffineShift::apply(const VectorXd& x) const {
  VectorXd y = scale * (rotation(x.size()) * x);
  if (translation.size() == x.size()) y += translation;
  return y;
}

bool AffineShift::is_identity() const {
  for (double a : angles)
    if (a != 0.0) return false;
  return scale == 1.0 && (translation.size() == 0 || translation.isZero());
}

void SyntheticShiftSpec::validate() const {
  if (dim < 1) throw SpecError("dim must be >= 1");
  if (normal_components.empty()) throw SpecError("at least one normal component is required");
  if (contamination > 0.0 && anomaly_components.empty())
    throw SpecError("contamination > 0 needs at least one anomaly component");
  if (!(contamination >= 0.0 && contamination <= 0.95)) throw SpecError("contamination must lie in [0, 0.95]");
  if (n_source < 1 || n_target < 1) throw SpecError("sample counts must be >= 1");
  if (!(shift.scale > 0.0)) throw SpecError("shift scale must be positive");
  if (shift.translation.size() != 0 && shift.translation.size() != dim)
    throw SpecError("shift translation has the wrong dimension");
  if (aux_dim < 1) throw SpecError("aux_dim must be >= 1");
  auto check = [&](const std::vector<GaussianComponent>& cs) {
    for (const auto& c : cs) {
      if (c.mean.size() != dim) throw SpecError("component mean has the wrong dimension");
      if (!c.mean.allFinite() || !(c.scale >= 0.0)) throw SpecError("invalid component");
    }
  };
  check(normal_components);
  check(anomaly_components);
  for (const auto& a : anomaly_components)
    for (const auto& n : normal_components)
      if (a.mean == n.mean) throw SpecError("anomaly and normal component means must differ");
}

SyntheticShiftSpec SyntheticShiftSpec::default_benchmark(int dim, double contamination, std::uint64_t seed) {
  if (dim < 4) throw SpecError("the default benchmark needs dim >= 4");
  SyntheticShiftSpec s;
  s.dim = dim;
  s.contamination = contamination;
  s.seed = seed;
  s.aux_dim = dim;

  // Geometry is fixed (independent of `seed`); only sampling varies.
  Rng geo(0x5eed);
  auto random_unit = [&] {
    VectorXd v(dim);
    for (auto& e : v) e = geo.normal();
    return VectorXd(v.normalized());
  };
  VectorXd normal_mean = VectorXd::Zero(dim);
  normal_mean[0] = 3.0;
  s.normal_components.push_back({normal_mean, 0.5});

  s.shift.angles.assign(static_cast<std::size_t>(dim / 2), std::numbers::pi / 5.0);
  s.shift.scale = 1.2;
  s.shift.translation = 5.0 * random_unit();

  // Anomalies: one component the shift carries next to the source normals
  // (source-only detectors miss it), one far and one close to the normals.
  const MatrixXd rot = s.shift.rotation(dim);
  const VectorXd landing = normal_mean + 4.0 * random_unit();
  s.anomaly_components.push_back({rot.transpose() * ((landing - s.shift.translation) / s.shift.scale), 0.5});
  s.anomaly_components.push_back({normal_mean + 12.0 * random_unit(), 0.5});
  s.anomaly_components.push_back({normal_mean + 3.0 * random_unit(), 0.5});
  return s;
}

namespace {

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json components_json(const std::vector<GaussianComponent>& cs) {
  json a = json::array();
  for (const auto& c : cs) a.push_back({{"mean", vec_json(c.mean)}, {"scale", c.scale}});
  return a;
}

std::vector<GaussianComponent> components_from_json(const json& j) {
  std::vector<GaussianComponent> cs;
  for (const auto& c : j) cs.push_back({vec_from_json(c.at("mean")), c.value("scale", 1.0)});
  return cs;
}

}  // namespace

json to_json(const SyntheticShiftSpec& s) {
  return {{"dim", s.dim},
          {"normal_components", components_json(s.normal_components)},
          {"anomaly_components", components_json(s.anomaly_components)},
          {"shift",
           {{"angles", s.shift.angles}, {"translation", vec_json(s.shift.translation)}, {"scale", s.shift.scale}}},
          {"contamination", s.contamination},
          {"n_source", s.n_source},
          {"n_target", s.n_target},
          {"seed", s.seed},
          {"aux_dim", s.aux_dim},
          {"aux_gain", s.aux_gain},
          {"aux_separation", s.aux_separation},
          {"aux_offset_norm", s.aux_offset_norm},
          {"aux_seed", s.aux_seed}};
}

SyntheticShiftSpec synthetic_spec_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "preset", "dim", "normal_components", "anomaly_components", "shift", "contamination", "n_source",
      "n_target", "seed", "aux_dim", "aux_gain", "aux_separation", "aux_offset_norm", "aux_seed", "version"};
  if (!j.is_object()) throw SpecError("synthetic spec must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw SpecError("unknown spec key '" + key + "'");
  try {
    SyntheticShiftSpec s;
    const bool preset = j.contains("preset");
    if (preset) {
      if (j.at("preset").get<std::string>() != "default") throw SpecError("unknown preset");
      s = SyntheticShiftSpec::default_benchmark(j.value("dim", 16), j.value("contamination", 0.1),
                                                j.value("seed", std::uint64_t{0}));
    }
    if (j.contains("dim")) s.dim = j.at("dim").get<int>();
    if (j.contains("normal_components")) s.normal_components = components_from_json(j.at("normal_components"));
    if (j.contains("anomaly_components")) s.anomaly_components = components_from_json(j.at("anomaly_components"));
    if (j.contains("shift")) {
      const auto& sh = j.at("shift");
      s.shift.angles = sh.value("angles", std::vector<double>{});
      s.shift.translation = sh.contains("translation") ? vec_from_json(sh.at("translation")) : VectorXd();
      s.shift.scale = sh.value("scale", 1.0);
    }
    if (j.contains("contamination")) s.contamination = j.at("contamination").get<double>();
    if (j.contains("n_source")) s.n_source = j.at("n_source").get<Eigen::Index>();
    if (j.contains("n_target")) s.n_target = j.at("n_target").get<Eigen::Index>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("aux_dim")) s.aux_dim = j.at("aux_dim").get<int>();
    else if (preset) s.aux_dim = s.dim;
    if (j.contains("aux_gain")) s.aux_gain = j.at("aux_gain").get<double>();
    if (j.contains("aux_separation")) s.aux_separation = j.at("aux_separation").get<double>();
    if (j.contains("aux_offset_norm")) s.aux_offset_norm = j.at("aux_offset_norm").get<double>();
    if (j.contains("aux_seed")) s.aux_seed = j.at("aux_seed").get<std::uint64_t>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed synthetic spec: ") + e.what());
  }
}

namespace {

VectorXd draw(const std::vector<GaussianComponent>& cs, Rng& rng) {
  const auto& c = cs[static_cast<std::size_t>(rng.below(cs.size()))];
  VectorXd x(c.mean.size());
  for (auto& e : x) e = rng.normal();
  return c.mean + c.scale * x;
}

struct AuxMap {
  MatrixXd projection;
  VectorXd offset;
  VectorXd class_direction;
};

AuxMap make_aux_map(const SyntheticShiftSpec& s) {
  Rng rng(s.aux_seed);
  AuxMap m;
  m.projection.resize(s.aux_dim, s.dim);
  for (Eigen::Index i = 0; i < m.projection.size(); ++i)
    m.projection.data()[i] = rng.normal() / std::sqrt(double(s.dim));
  m.offset.resize(s.aux_dim);
  for (auto& e : m.offset) e = rng.normal();
  m.offset = s.aux_offset_norm * m.offset.normalized();
  m.class_direction.resize(s.aux_dim);
  for (auto& e : m.class_direction) e = rng.normal();
  m.class_direction.normalize();
  return m;
}

}  // namespace

MatrixXf synthetic_aux_embedding(const SyntheticShiftSpec& s, const MatrixXf& base, const LabelVector& labels) {
  const AuxMap m = make_aux_map(s);
  MatrixXd z = (s.aux_gain * (base.cast<double>() * m.projection.transpose())).array().tanh().matrix();
  z.rowwise() += m.offset.transpose();
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    if (labels[static_cast<std::size_t>(i)] == 1) z.row(i) += s.aux_separation * m.class_direction.transpose();
  return z.cast<float>();
}

SyntheticPair generate_synthetic_pair(const SyntheticShiftSpec& spec) {
  spec.validate();
  Rng src_rng(derive_seed(spec.seed, 1));
  Rng tgt_rng(derive_seed(spec.seed, 2));

  MatrixXf source(spec.n_source, spec.dim);
  for (Eigen::Index i = 0; i < spec.n_source; ++i) source.row(i) = draw(spec.normal_components, src_rng).cast<float>().transpose();

  const auto n_anom = static_cast<Eigen::Index>(std::llround(spec.contamination * double(spec.n_target)));
  std::vector<std::uint8_t> order(static_cast<std::size_t>(spec.n_target), 0);
  std::fill(order.begin(), order.begin() + n_anom, std::uint8_t{1});
  tgt_rng.shuffle(order);

  const MatrixXd rot = spec.shift.rotation(spec.dim);
  MatrixXf base(spec.n_target, spec.dim);
  for (Eigen::Index i = 0; i < spec.n_target; ++i) {
    const bool anomalous = order[static_cast<std::size_t>(i)] == 1;
    VectorXd x = draw(anomalous ? spec.anomaly_components : spec.normal_components, tgt_rng);
    VectorXd y = spec.shift.scale * (rot * x);
    if (spec.shift.translation.size() == spec.dim) y += spec.shift.translation;
    base.row(i) = y.cast<float>().transpose();
  }
  LabelVector labels(order.begin(), order.end());
  MatrixXf aux = synthetic_aux_embedding(spec, base, labels);

  return SyntheticPair{
      EmbeddingDataset::with_sequential_ids(std::move(source), Domain::source, LabelVector(static_cast<std::size_t>(spec.n_source), 0)),
      PairedTargetSet(EmbeddingDataset::with_sequential_ids(std::move(base), Domain::target, labels),
                      EmbeddingDataset::with_sequential_ids(std::move(aux), Domain::target, labels))};
}

EmbeddingDataset generate_source_holdout(const SyntheticShiftSpec& spec, Eigen::Index n) {
  spec.validate();
  if (n < 1) throw SpecError("holdout size must be >= 1");
  Rng rng(derive_seed(spec.seed, 3));
  const auto n_anom = static_cast<Eigen::Index>(std::llround(spec.contamination * double(n)));
  LabelVector labels(static_cast<std::size_t>(n), 0);
  std::fill(labels.begin(), labels.begin() + n_anom, std::uint8_t{1});
  rng.shuffle(labels);
  MatrixXf f(n, spec.dim);
  for (Eigen::Index i = 0; i < n; ++i)
    f.row(i) = draw(labels[static_cast<std::size_t>(i)] ? spec.anomaly_components : spec.normal_components, rng)
                   .cast<float>()
                   .transpose();
  return EmbeddingDataset::with_sequential_ids(std::move(f), Domain::source, std::move(labels));
}

}  // namespace driftguard

#include "driftguard/data.hpp"

#include "binary_io.hpp"
#include "driftguard/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace driftguard {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw FormatError("unknown domain '" + s + "'");
}

FileFormat format_from_string(const std::string& s) {
  if (s == "binary") return FileFormat::binary;
  if (s == "csv") return FileFormat::csv;
  throw ConfigError("unknown format '" + s + "' (expected binary or csv)");
}

EmbeddingDataset::EmbeddingDataset(MatrixXf features, IdList ids, Domain domain,
                                   std::optional<LabelVector> labels)
    : features_(std::move(features)), ids_(std::move(ids)), domain_(domain), labels_(std::move(labels)) {
  if (features_.rows() < 1 || features_.cols() < 1)
    throw DataError("dataset needs N >= 1 rows and D >= 1 columns");
  if (!features_.allFinite()) throw DataError("non-finite feature value");
  if (static_cast<Eigen::Index>(ids_.size()) != features_.rows())
    throw DataError("id count does not match row count");
  std::unordered_set<SampleId> seen(ids_.begin(), ids_.end());
  if (seen.size() != ids_.size()) throw DataError("duplicate id");
  if (labels_) {
    if (static_cast<Eigen::Index>(labels_->size()) != features_.rows())
      throw DataError("label count does not match row count");
    for (auto l : *labels_)
      if (l > 1) throw DataError("label outside {0,1}");
  }
}

EmbeddingDataset EmbeddingDataset::with_sequential_ids(MatrixXf features, Domain domain,
                                                       std::optional<LabelVector> labels) {
  IdList ids(static_cast<std::size_t>(features.rows()));
  std::iota(ids.begin(), ids.end(), SampleId{0});
  return EmbeddingDataset(std::move(features), std::move(ids), domain, std::move(labels));
}

Eigen::Index EmbeddingDataset::index_of(SampleId id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw DataError("unknown id " + std::to_string(id));
  return static_cast<Eigen::Index>(it - ids_.begin());
}

EmbeddingDataset EmbeddingDataset::without_labels() const { return with_labels(std::nullopt); }

EmbeddingDataset EmbeddingDataset::with_labels(std::optional<LabelVector> labels) const {
  return EmbeddingDataset(features_, ids_, domain_, std::move(labels));
}

EmbeddingDataset EmbeddingDataset::subset(std::span<const Eigen::Index> rows) const {
  MatrixXf f(static_cast<Eigen::Index>(rows.size()), dim());
  IdList ids;
  ids.reserve(rows.size());
  std::optional<LabelVector> labels;
  if (labels_) labels.emplace();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    f.row(static_cast<Eigen::Index>(i)) = features_.row(rows[i]);
    ids.push_back(ids_[static_cast<std::size_t>(rows[i])]);
    if (labels_) labels->push_back((*labels_)[static_cast<std::size_t>(rows[i])]);
  }
  return EmbeddingDataset(std::move(f), std::move(ids), domain_, std::move(labels));
}

bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  if (a.features_.rows() != b.features_.rows() || a.features_.cols() != b.features_.cols())
    return false;
  const auto bytes = static_cast<std::size_t>(a.features_.size()) * sizeof(float);
  return std::memcmp(a.features_.data(), b.features_.data(), bytes) == 0 && a.ids_ == b.ids_ &&
         a.domain_ == b.domain_ && a.labels_ == b.labels_;
}

const LabelVector& EvaluationView::labels() const {
  if (!ds_.labels_) throw DataError("dataset carries no labels");
  return *ds_.labels_;
}

std::size_t EvaluationView::count_anomalies() const {
  const auto& l = labels();
  return static_cast<std::size_t>(std::count(l.begin(), l.end(), std::uint8_t{1}));
}

PairedTargetSet::PairedTargetSet(EmbeddingDataset base, EmbeddingDataset aux)
    : base_(std::move(base)), aux_(std::move(aux)) {
  if (base_.rows() != aux_.rows()) throw DataError("base and aux row counts differ");
  if (base_.ids() != aux_.ids()) throw DataError("base and aux ids are not aligned");
}

PairedTargetSet PairedTargetSet::without_labels() const {
  return PairedTargetSet(base_.without_labels(), aux_.without_labels());
}

FeatureView training_source_view(const EmbeddingDataset& source) {
  EvaluationView ev(source);
  if (ev.has_labels() && ev.count_anomalies() > 0)
    throw DataError("training source must contain normal samples only");
  return FeatureView::of(source);
}

namespace detail {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + path.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
}

namespace {

constexpr std::string_view kMagic = "EMB1";

std::string encode_binary(const EmbeddingDataset& ds) {
  EvaluationView ev(ds);
  json header = {{"n", ds.rows()},
                 {"d", ds.dim()},
                 {"domain", to_string(ds.domain())},
                 {"has_labels", ev.has_labels()}};
  const std::string h = header.dump();
  std::string out(kMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  const MatrixXf& f = ds.features();
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index j = 0; j < f.cols(); ++j) detail::put_le<float>(out, f(i, j));
  if (ev.has_labels())
    for (auto l : ev.labels()) out.push_back(static_cast<char>(l));
  for (auto id : ds.ids()) detail::put_le<std::uint64_t>(out, id);
  return out;
}

EmbeddingDataset decode_binary(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.take(4) != kMagic) throw FormatError("bad magic (expected EMB1)");
  const auto hlen = r.get_le<std::uint32_t>();
  json header;
  try {
    header = json::parse(r.take(hlen));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad header: ") + e.what());
  }
  std::int64_t n = 0, d = 0;
  bool has_labels = false;
  Domain domain{};
  try {
    n = header.at("n").get<std::int64_t>();
    d = header.at("d").get<std::int64_t>();
    has_labels = header.at("has_labels").get<bool>();
    domain = domain_from_string(header.at("domain").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad header: ") + e.what());
  }
  if (n < 1 || d < 1) throw FormatError("header declares an empty dataset");
  const auto un = static_cast<std::size_t>(n), ud = static_cast<std::size_t>(d);
  const std::size_t expected = un * ud * 4 + (has_labels ? un : 0) + un * 8;
  if (r.remaining() != expected)
    throw FormatError("payload length " + std::to_string(r.remaining()) + " does not match N*D header (expected " +
                      std::to_string(expected) + ")");
  MatrixXf f(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) f(i, j) = r.get_le<float>();
  std::optional<LabelVector> labels;
  if (has_labels) {
    auto raw = r.take(un);
    labels.emplace(raw.begin(), raw.end());
  }
  IdList ids(un);
  for (auto& id : ids) id = r.get_le<std::uint64_t>();
  return EmbeddingDataset(std::move(f), std::move(ids), domain, std::move(labels));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string encode_csv(const EmbeddingDataset& ds) {
  EvaluationView ev(ds);
  std::ostringstream out;
  out << "id,label";
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ",f" << j;
  out << '\n';
  out << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    out << ds.ids()[static_cast<std::size_t>(i)] << ','
        << (ev.has_labels() ? static_cast<int>(ev.labels()[static_cast<std::size_t>(i)]) : -1);
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ',' << ds.features()(i, j);
    out << '\n';
  }
  return out.str();
}

EmbeddingDataset decode_csv(const std::string& text, Domain domain) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty csv");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw FormatError("csv header must be id,label,f0..f{D-1}");
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j + 2] != "f" + std::to_string(j)) throw FormatError("unexpected column '" + header[j + 2] + "'");

  std::vector<float> values;
  IdList ids;
  std::vector<int> raw_labels;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != d + 2)
      throw FormatError("row " + std::to_string(ids.size() + 1) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(d + 2));
    try {
      ids.push_back(std::stoull(cells[0]));
      raw_labels.push_back(std::stoi(cells[1]));
      for (std::size_t j = 0; j < d; ++j) values.push_back(std::stof(cells[j + 2]));
    } catch (const std::out_of_range&) {
      throw DataError("value out of float range in row " + std::to_string(ids.size()));
    } catch (const std::invalid_argument&) {
      throw FormatError("unparseable cell in row " + std::to_string(ids.size()));
    }
  }
  if (ids.empty()) throw FormatError("csv has no rows");
  const bool any_unlabeled = std::any_of(raw_labels.begin(), raw_labels.end(), [](int l) { return l == -1; });
  const bool any_labeled = std::any_of(raw_labels.begin(), raw_labels.end(), [](int l) { return l != -1; });
  if (any_unlabeled && any_labeled) throw FormatError("csv mixes labeled and unlabeled rows");
  std::optional<LabelVector> labels;
  if (any_labeled) {
    labels.emplace();
    for (int l : raw_labels) {
      if (l != 0 && l != 1) throw DataError("label outside {-1,0,1}");
      labels->push_back(static_cast<std::uint8_t>(l));
    }
  }
  MatrixXf f = Eigen::Map<MatrixXf>(values.data(), static_cast<Eigen::Index>(ids.size()),
                                    static_cast<Eigen::Index>(d));
  return EmbeddingDataset(std::move(f), std::move(ids), domain, std::move(labels));
}

}  // namespace

EmbeddingDataset load_dataset(const fs::path& path, FileFormat format, Domain csv_domain) {
  const std::string bytes = detail::read_file(path.string());
  return format == FileFormat::binary ? decode_binary(bytes) : decode_csv(bytes, csv_domain);
}

void save_dataset(const EmbeddingDataset& ds, const fs::path& path, FileFormat format) {
  write_file_atomic(path, format == FileFormat::binary ? encode_binary(ds) : encode_csv(ds));
}

void save_labels_sidecar(const EmbeddingDataset& ds, const fs::path& path) {
  const auto& labels = EvaluationView(ds).labels();
  std::ostringstream out;
  out << "id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << ds.ids()[i] << ',' << int(labels[i]) << '\n';
  write_file_atomic(path, out.str());
}

EmbeddingDataset attach_labels_sidecar(const EmbeddingDataset& ds, const fs::path& path) {
  std::istringstream in(detail::read_file(path.string()));
  std::string line;
  std::getline(in, line);
  if (line.rfind("id,label", 0) != 0) throw FormatError("sidecar header must be id,label");
  std::unordered_map<SampleId, std::uint8_t> by_id;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2) throw FormatError("sidecar row must have 2 cells");
    const int l = std::stoi(cells[1]);
    if (l != 0 && l != 1) throw DataError("sidecar label outside {0,1}");
    by_id[std::stoull(cells[0])] = static_cast<std::uint8_t>(l);
  }
  LabelVector labels;
  labels.reserve(ds.ids().size());
  for (auto id : ds.ids()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("sidecar has no label for id " + std::to_string(id));
    labels.push_back(it->second);
  }
  return ds.with_labels(std::move(labels));
}

EmbeddingDataset contaminate_target(const EmbeddingDataset& normals, const EmbeddingDataset& anomalies,
                                    double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw SpecError("contamination ratio must lie in [0,1)");
  if (normals.dim() != anomalies.dim()) throw DimensionError("normals and anomalies differ in dimension");
  const auto n_normal = static_cast<std::int64_t>(normals.rows());

  // Smallest anomaly count a with round(ratio * (n_normal + a)) == a.
  std::int64_t n_anom = 0;
  if (ratio > 0.0) {
    const auto estimate = static_cast<std::int64_t>(std::llround(ratio * double(n_normal) / (1.0 - ratio)));
    n_anom = std::max<std::int64_t>(0, estimate - 3);
    while (std::llround(ratio * double(n_normal + n_anom)) != n_anom) ++n_anom;
  }
  if (n_anom > anomalies.rows())
    throw CapacityError("need " + std::to_string(n_anom) + " anomalies, pool has " +
                        std::to_string(anomalies.rows()));

  Rng rng(seed);
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(anomalies.rows()));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(n_anom));

  // Normals keep their order and ids; drawn anomalies follow with fresh ids.
  const Eigen::Index total = n_normal + n_anom;
  MatrixXf f(total, normals.dim());
  f.topRows(n_normal) = normals.features();
  IdList ids = normals.ids();
  SampleId next_id = *std::max_element(ids.begin(), ids.end()) + 1;
  LabelVector labels(static_cast<std::size_t>(total), 0);
  for (Eigen::Index k = 0; k < n_anom; ++k) {
    f.row(n_normal + k) = anomalies.features().row(pool[static_cast<std::size_t>(k)]);
    ids.push_back(next_id++);
    labels[static_cast<std::size_t>(n_normal + k)] = 1;
  }
  return EmbeddingDataset(std::move(f), std::move(ids), Domain::target, std::move(labels));
}

}  // namespace driftguard

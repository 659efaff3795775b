#include "driftguard/checkpoint.hpp"

#include "binary_io.hpp"
#include "driftguard/data.hpp"

#include <json.hpp>

namespace driftguard {

using nlohmann::json;

namespace {
constexpr std::string_view kMagic = "NET1";
}

std::string encode_checkpoint(const ProjectionNetwork<double>& net) {
  net.validate();
  json layers = json::array();
  for (const auto& l : net.layers)
    layers.push_back({{"in", l.in()}, {"out", l.out()},
                      {"activation", l.activation == Activation::tanh ? "tanh" : "identity"}});
  json header = {{"layers", layers}, {"use_bias", net.use_bias}, {"has_center", net.center.has_value()}};
  const std::string h = header.dump();
  std::string out(kMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (const auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) detail::put_le<float>(out, static_cast<float>(l.weight.data()[i]));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) detail::put_le<float>(out, static_cast<float>(l.bias[i]));
  }
  if (net.center)
    for (Eigen::Index i = 0; i < net.center->size(); ++i) detail::put_le<float>(out, static_cast<float>((*net.center)[i]));
  return out;
}

ProjectionNetwork<double> decode_checkpoint(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.take(4) != kMagic) throw FormatError("bad magic (expected NET1)");
  const auto hlen = r.get_le<std::uint32_t>();
  ProjectionNetwork<double> net;
  bool has_center = false;
  try {
    const json header = json::parse(r.take(hlen));
    net.use_bias = header.at("use_bias").get<bool>();
    has_center = header.at("has_center").get<bool>();
    for (const auto& l : header.at("layers")) {
      Layer<double> layer;
      const auto in = l.at("in").get<Eigen::Index>();
      const auto out = l.at("out").get<Eigen::Index>();
      if (in < 1 || out < 1) throw FormatError("layer with empty dimension");
      layer.weight.resize(out, in);
      layer.bias.resize(out);
      const auto act = l.at("activation").get<std::string>();
      if (act == "tanh") layer.activation = Activation::tanh;
      else if (act == "identity") layer.activation = Activation::identity;
      else throw FormatError("unknown activation '" + act + "'");
      net.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  if (net.layers.empty()) throw FormatError("checkpoint has no layers");
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = r.get_le<float>();
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = r.get_le<float>();
  }
  if (has_center) {
    VectorXd c(net.output_dim());
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = r.get_le<float>();
    net.center = std::move(c);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload");
  try {
    net.validate();
  } catch (const DataError& e) {
    throw FormatError(e.what());
  }
  return net;
}

void save_checkpoint(const ProjectionNetwork<double>& net, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(net));
}

ProjectionNetwork<double> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path.string()));
}

}  // namespace driftguard

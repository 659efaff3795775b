#pragma once

#include "driftguard/objectives.hpp"
#include "driftguard/projector.hpp"

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace dgtest {

using namespace driftguard;

inline MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Scratch directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("driftguard-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every scalar parameter of a network, in a fixed order.
inline std::vector<double*> parameters(ProjectionNetwork<double>& net) {
  std::vector<double*> out;
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) out.push_back(l.weight.data() + i);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
  }
  return out;
}

inline std::vector<double> flatten(const GradientBundle<double>& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    out.insert(out.end(), g.weight[l].data(), g.weight[l].data() + g.weight[l].size());
    out.insert(out.end(), g.bias[l].data(), g.bias[l].data() + g.bias[l].size());
  }
  return out;
}

/// A loss over network outputs: one input batch per role.
struct Composite {
  std::vector<std::pair<Role, MatrixXd>> batches;
  std::function<LossValue<double>(const std::map<Role, MatrixXd>&)> loss;
  /// Roles whose gradient is not propagated.
  std::vector<Role> detached;
};

inline double composite_value(const ProjectionNetwork<double>& net, const Composite& c) {
  std::map<Role, MatrixXd> outs;
  for (const auto& [role, x] : c.batches) outs[role] = forward(net, x);
  return c.loss(outs).value;
}

inline std::vector<double> composite_gradient(const ProjectionNetwork<double>& net, const Composite& c) {
  std::map<Role, MatrixXd> outs;
  std::map<Role, ForwardCache<double>> caches;
  for (const auto& [role, x] : c.batches) outs[role] = forward(net, x, caches[role]);
  const LossValue<double> l = c.loss(outs);
  GradientBundle<double> g = GradientBundle<double>::zeros_like(net);
  for (const auto& [role, x] : c.batches) {
    if (!l.has(role) || std::find(c.detached.begin(), c.detached.end(), role) != c.detached.end()) continue;
    g += backward(net, caches.at(role), l.grad(role));
  }
  return flatten(g);
}

/// Central difference in every parameter: the 5-point stencil
/// (-f(+2h) + 8f(+h) - 8f(-h) + f(-2h)) / 12h, or the 3-point one.
inline std::vector<double> numeric_gradient(ProjectionNetwork<double> net, const Composite& c, double h = 1e-4,
                                            int stencil = 5) {
  std::vector<double> out;
  for (double* p : parameters(net)) {
    const double keep = *p;
    auto at = [&](double d) {
      *p = keep + d;
      const double v = composite_value(net, c);
      *p = keep;
      return v;
    };
    if (stencil == 3) out.push_back((at(h) - at(-h)) / (2.0 * h));
    else out.push_back((-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0 * h));
  }
  return out;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, scale * max_j |a_j|, 1e-12). The
/// floor keeps entries that vanish analytically from being judged on
/// rounding noise alone.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& n, double scale = 1e-6) {
  double top = 0.0;
  for (double v : a) top = std::max(top, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(n[i]), scale * top, 1e-12});
    worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
  }
  return worst;
}

enum class LossKind { dsvdd, pair, uda, uda_with_positive, attraction, mmd, total };
inline const std::vector<LossKind> kAllLossKinds{LossKind::dsvdd,      LossKind::pair, LossKind::uda,
                                                 LossKind::uda_with_positive, LossKind::attraction,
                                                 LossKind::mmd,        LossKind::total};
inline const char* name(LossKind k) {
  switch (k) {
    case LossKind::dsvdd: return "dsvdd";
    case LossKind::pair: return "contrastive_pair";
    case LossKind::uda: return "uda";
    case LossKind::uda_with_positive: return "uda+positive";
    case LossKind::attraction: return "attraction";
    case LossKind::mmd: return "mmd";
    case LossKind::total: return "total";
  }
  return "?";
}

struct GradientCase {
  ProjectionNetwork<double> net;
  Composite composite;
};

/// A random network (at most a few hundred parameters) with one loss wired
/// onto random batches.
inline GradientCase random_gradient_case(LossKind kind, Rng& rng) {
  const auto in = static_cast<Eigen::Index>(3 + rng.below(6));
  const auto hidden = static_cast<Eigen::Index>(4 + rng.below(8));
  const auto out = static_cast<Eigen::Index>(2 + rng.below(5));
  GradientCase c{init_network<double>(in, {hidden}, out, rng.next()), {}};
  for (auto& l : c.net.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.3 * rng.normal();
  auto rows = [&] { return static_cast<Eigen::Index>(2 + rng.below(6)); };
  const double tau = 0.2 + rng.uniform();
  auto& comp = c.composite;
  comp.batches.push_back({Role::source, random_matrix(rows(), in, rng)});
  switch (kind) {
    case LossKind::dsvdd: {
      const VectorXd center = random_matrix(out, 1, rng, 0.5);
      comp.loss = [center](const std::map<Role, MatrixXd>& o) { return dsvdd_loss<double>(o.at(Role::source), center); };
      break;
    }
    case LossKind::pair: {
      comp.batches.front().second.conservativeResize(1, in);
      comp.batches.push_back({Role::positive, random_matrix(1, in, rng)});
      comp.batches.push_back({Role::negative, random_matrix(rows(), in, rng)});
      comp.loss = [tau](const std::map<Role, MatrixXd>& o) {
        return contrastive_pair_loss<double>(o.at(Role::source), o.at(Role::positive), o.at(Role::negative), tau);
      };
      break;
    }
    case LossKind::uda:
    case LossKind::uda_with_positive: {
      comp.batches.push_back({Role::positive, random_matrix(rows(), in, rng)});
      comp.batches.push_back({Role::negative, random_matrix(rows(), in, rng)});
      const ContrastiveOptions opts{kind == LossKind::uda_with_positive, false};
      comp.loss = [tau, opts](const std::map<Role, MatrixXd>& o) {
        return uda_loss<double>(o.at(Role::source), o.at(Role::positive), o.at(Role::negative), tau, opts);
      };
      break;
    }
    case LossKind::attraction: {
      comp.batches.push_back({Role::positive, random_matrix(rows(), in, rng)});
      comp.loss = [tau](const std::map<Role, MatrixXd>& o) {
        return cosine_attraction_loss<double>(o.at(Role::source), o.at(Role::positive), tau);
      };
      break;
    }
    case LossKind::mmd: {
      comp.batches.push_back({Role::target, random_matrix(rows(), in, rng, 1.5)});
      const double base = 0.3 + rng.uniform();
      const std::vector<double> bws{0.5 * base, base, 2.0 * base};
      comp.loss = [bws](const std::map<Role, MatrixXd>& o) {
        return mmd_loss<double>(o.at(Role::source), o.at(Role::target), bws);
      };
      break;
    }
    case LossKind::total: {
      comp.batches.push_back({Role::positive, random_matrix(rows(), in, rng)});
      comp.batches.push_back({Role::negative, random_matrix(rows(), in, rng)});
      const VectorXd center = random_matrix(out, 1, rng, 0.5);
      const double l1 = 0.5 + rng.uniform(), l2 = 0.5 + rng.uniform();
      comp.loss = [=](const std::map<Role, MatrixXd>& o) {
        return total_loss<double>(dsvdd_loss<double>(o.at(Role::source), center),
                                  uda_loss<double>(o.at(Role::source), o.at(Role::positive), o.at(Role::negative), tau),
                                  l1, l2);
      };
      break;
    }
  }
  return c;
}

/// Worst relative error between analytic and central-difference gradients.
inline double gradient_error(const GradientCase& c, double h = 1e-4, double scale = 1e-6) {
  return max_relative_error(composite_gradient(c.net, c.composite), numeric_gradient(c.net, c.composite, h), scale);
}

}  // namespace dgtest

// SPDX-License-Identifier: Apache-2.0
#include "dpid/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "dpid/error.hpp"

namespace dpid {

namespace {

std::vector<double> broadcast(const nlohmann::json& j, std::size_t n, const char* what) {
  if (j.is_number()) return std::vector<double>(n, j.get<double>());
  auto v = j.get<std::vector<double>>();
  if (v.size() != n) {
    throw PreconditionError(std::string("gmm: '") + what + "' has " + std::to_string(v.size()) +
                            " entries, expected " + std::to_string(n));
  }
  return v;
}

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

GmmModel::GmmModel(Shape shape, std::vector<GmmComponent> components,
                   std::map<std::string, ComponentSubset> named)
    : shape_(shape), components_(std::move(components)), named_(std::move(named)) {
  if (components_.empty()) throw PreconditionError("gmm: no components");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw DomainError("gmm: weights must be positive");
    if (c.mean.size() != shape_.count()) throw ShapeError("gmm: component mean does not match shape");
    if (c.variance.size() != 1 && c.variance.size() != shape_.count()) {
      throw ShapeError("gmm: variance must be scalar or per element");
    }
    for (double v : c.variance) {
      if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("gmm: variances must be positive");
    }
    total += c.weight;
  }
  for (auto& c : components_) c.weight /= total;
  for (const auto& [name, s] : named_) {
    if (s.mask.size() != components_.size()) throw PreconditionError("gmm: condition '" + name + "' has wrong mask size");
    if (std::none_of(s.mask.begin(), s.mask.end(), [](bool b) { return b; })) {
      throw PreconditionError("gmm: condition '" + name + "' selects no component");
    }
  }
}

GmmModel GmmModel::from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("shape").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw PreconditionError("gmm: shape must be [channels, height, width]");
    const Shape shape{dims[0], dims[1], dims[2]};
    std::vector<GmmComponent> comps;
    for (const auto& jc : j.at("components")) {
      GmmComponent c;
      c.weight = jc.value("weight", 1.0);
      c.mean = broadcast(jc.at("mean"), shape.count(), "mean");
      if (jc.contains("sd")) {
        const double sd = jc.at("sd").get<double>();
        c.variance = {sd * sd};
      } else if (jc.at("variance").is_number()) {
        c.variance = {jc.at("variance").get<double>()};
      } else {
        c.variance = broadcast(jc.at("variance"), shape.count(), "variance");
      }
      comps.push_back(std::move(c));
    }
    std::map<std::string, ComponentSubset> named;
    if (j.contains("conditions")) {
      for (const auto& [name, idx] : j.at("conditions").items()) {
        ComponentSubset s{std::vector<bool>(comps.size(), false)};
        for (std::size_t k : idx.get<std::vector<std::size_t>>()) {
          if (k >= comps.size()) throw PreconditionError("gmm: condition '" + name + "' references missing component");
          s.mask[k] = true;
        }
        named.emplace(name, std::move(s));
      }
    }
    return GmmModel(shape, std::move(comps), std::move(named));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("gmm: malformed model: ") + e.what());
  }
}

GmmModel GmmModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

nlohmann::json GmmModel::to_json() const {
  nlohmann::json j;
  j["shape"] = {shape_.channels, shape_.height, shape_.width};
  j["components"] = nlohmann::json::array();
  for (const auto& c : components_) {
    j["components"].push_back({{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
  }
  nlohmann::json conds = nlohmann::json::object();
  for (const auto& [name, s] : named_) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < s.mask.size(); ++k) {
      if (s.mask[k]) idx.push_back(k);
    }
    conds[name] = idx;
  }
  j["conditions"] = conds;
  return j;
}

ComponentSubset GmmModel::named(const std::string& name) const {
  auto it = named_.find(name);
  if (it == named_.end()) throw UnsupportedConditionError("gmm: unknown condition '" + name + "'");
  return it->second;
}

ComponentSubset GmmModel::subset(std::initializer_list<std::size_t> components) const {
  ComponentSubset s{std::vector<bool>(components_.size(), false)};
  for (std::size_t k : components) {
    if (k >= components_.size()) throw PreconditionError("gmm: component index out of range");
    s.mask[k] = true;
  }
  return s;
}

std::vector<double> GmmModel::condition_weights(const DenoiserCondition& condition) const {
  std::vector<double> w(components_.size());
  if (std::holds_alternative<Unconditional>(condition)) {
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = components_[k].weight;
    return w;
  }
  const auto* s = std::get_if<ComponentSubset>(&condition);
  if (s == nullptr) throw UnsupportedConditionError("gmm: cannot condition on " + describe(condition));
  if (s->mask.size() != components_.size()) throw UnsupportedConditionError("gmm: mask size mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = s->mask[k] ? components_[k].weight : 0.0;
    total += w[k];
  }
  if (total <= 0.0) throw UnsupportedConditionError("gmm: condition selects no component");
  for (double& x : w) x /= total;
  return w;
}

double GmmModel::probability(const DenoiserCondition& condition) const {
  if (std::holds_alternative<Unconditional>(condition)) return 1.0;
  const auto* s = std::get_if<ComponentSubset>(&condition);
  if (s == nullptr || s->mask.size() != components_.size()) {
    throw UnsupportedConditionError("gmm: cannot evaluate probability of " + describe(condition));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    if (s->mask[k]) total += components_[k].weight;
  }
  return total;
}

double GmmModel::log_density(const LatentField& x, const DenoiserCondition& condition) const {
  if (x.shape() != shape_) throw ShapeError("gmm: x shape " + to_string(x.shape()) + " vs model " + to_string(shape_));
  const auto w = condition_weights(condition);
  std::vector<double> terms;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    if (w[k] <= 0.0) continue;
    double t = std::log(w[k]);
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double v = variance(k, d);
      const double r = x[d] - components_[k].mean[d];
      t -= 0.5 * (std::log(2.0 * std::numbers::pi * v) + r * r / v);
    }
    terms.push_back(t);
  }
  return log_sum_exp(terms);
}

LatentField GmmModel::sample(const DenoiserCondition& condition, RandomStream& stream) const {
  const auto w = condition_weights(condition);
  double u = stream.uniform_open();
  std::size_t k = 0;
  for (; k + 1 < w.size(); ++k) {
    if (u < w[k]) break;
    u -= w[k];
  }
  while (w[k] <= 0.0) --k;  // round-off landed past the last admitted component
  LatentField x(shape_);
  for (std::size_t d = 0; d < x.size(); ++d) {
    x[d] = components_[k].mean[d] + std::sqrt(variance(k, d)) * stream.normal();
  }
  return x;
}

namespace {

// Shared pass over components: responsibilities r_k of x_alpha, then the
// callback receives (k, r_k) for admitted components.
template <typename F>
void for_each_responsibility(const GmmModel& model, const LatentField& x_alpha,
                             const LogSnrPoint& point, const std::vector<double>& w, F&& f) {
  const double a = point.signal, b2 = point.noise * point.noise;
  const auto& comps = model.components();
  std::vector<double> logr(comps.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (w[k] <= 0.0) continue;
    double t = std::log(w[k]);
    for (std::size_t d = 0; d < x_alpha.size(); ++d) {
      const double v = a * a * model.variance(k, d) + b2;
      const double r = x_alpha[d] - a * comps[k].mean[d];
      t -= 0.5 * (std::log(v) + r * r / v);
    }
    logr[k] = t;
  }
  const double norm = log_sum_exp(logr);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (w[k] <= 0.0) continue;
    f(k, std::exp(logr[k] - norm));
  }
}

}  // namespace

LatentField GmmDenoiser::predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                                     const DenoiserCondition& condition) const {
  if (x_alpha.shape() != model_.shape()) {
    throw ShapeError("gmm denoiser: input " + to_string(x_alpha.shape()) + " vs model " +
                     to_string(model_.shape()));
  }
  if (!std::isfinite(point.alpha)) throw DomainError("gmm denoiser: non-finite log-SNR");
  const auto w = model_.condition_weights(condition);
  const double a = point.signal, b = point.noise;
  // x_alpha - a E[x | x_alpha, k] = (b^2 / v_k)(x_alpha - a mu_k), so dividing
  // by b never cancels catastrophically at high SNR.
  LatentField eps(x_alpha.shape());
  for_each_responsibility(model_, x_alpha, point, w, [&](std::size_t k, double resp) {
    const auto& mu = model_.components()[k].mean;
    for (std::size_t d = 0; d < eps.size(); ++d) {
      const double v = a * a * model_.variance(k, d) + b * b;
      eps[d] += resp * (b / v) * (x_alpha[d] - a * mu[d]);
    }
  });
  return eps;
}

LatentField GmmDenoiser::posterior_mean(const LatentField& x_alpha, const LogSnrPoint& point,
                                        const DenoiserCondition& condition) const {
  if (x_alpha.shape() != model_.shape()) throw ShapeError("gmm denoiser: shape mismatch");
  const auto w = model_.condition_weights(condition);
  const double a = point.signal, b = point.noise;
  LatentField mean(x_alpha.shape());
  for_each_responsibility(model_, x_alpha, point, w, [&](std::size_t k, double resp) {
    const auto& mu = model_.components()[k].mean;
    for (std::size_t d = 0; d < mean.size(); ++d) {
      const double s2 = model_.variance(k, d);
      const double gain = a * s2 / (a * a * s2 + b * b);
      mean[d] += resp * (mu[d] + gain * (x_alpha[d] - a * mu[d]));
    }
  });
  return mean;
}

}  // namespace dpid

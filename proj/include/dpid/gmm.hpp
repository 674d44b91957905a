// SPDX-License-Identifier: Apache-2.0
#pragma once

// Gaussian mixture data model with an exact MMSE noise predictor. Conditions
// select subsets of the components, so conditional and unconditional
// densities (and therefore the true information content) are known exactly.

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpid/denoiser.hpp"
#include "dpid/rng.hpp"

namespace dpid {

struct GmmComponent {
  double weight = 1.0;
  std::vector<double> mean;      ///< one entry per latent element
  std::vector<double> variance;  ///< one entry (isotropic) or one per element
};

class GmmModel {
 public:
  GmmModel(Shape shape, std::vector<GmmComponent> components,
           std::map<std::string, ComponentSubset> named = {});

  /// Schema: {"shape": [c,h,w], "components": [{"weight": w, "mean": m | [..],
  /// "sd": s | "variance": v | [..]}], "conditions": {"name": [k, ...]}}.
  static GmmModel from_json(const nlohmann::json& j);
  static GmmModel load(const std::string& path);
  nlohmann::json to_json() const;

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return components_.size(); }
  const std::vector<GmmComponent>& components() const { return components_; }
  const std::map<std::string, ComponentSubset>& named_conditions() const { return named_; }

  /// Throws UnsupportedConditionError for unknown names.
  ComponentSubset named(const std::string& name) const;
  ComponentSubset subset(std::initializer_list<std::size_t> components) const;

  /// Component weights renormalized under the condition.
  std::vector<double> condition_weights(const DenoiserCondition& condition) const;
  /// Unnormalized mass of the condition, i.e. p(condition).
  double probability(const DenoiserCondition& condition) const;

  double log_density(const LatentField& x, const DenoiserCondition& condition) const;
  LatentField sample(const DenoiserCondition& condition, RandomStream& stream) const;

  double variance(std::size_t k, std::size_t d) const {
    const auto& v = components_[k].variance;
    return v.size() == 1 ? v[0] : v[d];
  }

 private:
  Shape shape_;
  std::vector<GmmComponent> components_;
  std::map<std::string, ComponentSubset> named_;
};

/// eps_hat = (x_alpha - a E[x | x_alpha, cond]) / b, exact for the mixture.
class GmmDenoiser : public Denoiser {
 public:
  explicit GmmDenoiser(GmmModel model) : model_(std::move(model)) {}

  const GmmModel& model() const { return model_; }

  LatentField predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                          const DenoiserCondition& condition) const override;

  /// E[x | x_alpha, cond].
  LatentField posterior_mean(const LatentField& x_alpha, const LogSnrPoint& point,
                             const DenoiserCondition& condition) const;

 private:
  GmmModel model_;
};

}  // namespace dpid

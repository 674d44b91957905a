// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small fully connected noise predictor for toy data, trained from scratch
// with Adam on the denoising objective.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dpid/denoiser.hpp"

namespace dpid {

struct MlpConfig {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t steps = 5000;
  std::size_t batch = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Probability of replacing the condition with the null slot during
  /// training, which teaches the unconditional predictor.
  double uncond_prob = 0.2;
  std::uint64_t seed = 0;
  LogSnrSampler sampler{};

  nlohmann::json to_json() const;
  static MlpConfig from_json(const nlohmann::json& j);
};

struct TrainingExample {
  LatentField x;
  std::size_t condition = 0;
};

/// Inputs are [x_alpha, a, b, one-hot(condition slot)], where slot
/// `num_conditions` means unconditional. Hidden layers use tanh.
class MlpDenoiser : public Denoiser {
 public:
  MlpDenoiser(Shape shape, std::size_t num_conditions, std::vector<std::size_t> hidden,
              std::uint64_t init_seed);

  const Shape& shape() const { return shape_; }
  std::size_t num_conditions() const { return num_conditions_; }
  std::size_t input_dim() const { return shape_.count() + 2 + num_conditions_ + 1; }
  std::vector<std::size_t> layer_sizes() const;

  LatentField predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                          const DenoiserCondition& condition) const override;

  /// Unconditional maps to num_conditions(); a one-component subset maps to
  /// that component. Anything else is unsupported.
  std::size_t condition_slot(const DenoiserCondition& condition) const;

  void write_features(Eigen::Ref<Eigen::VectorXd> column, std::span<const double> x_alpha,
                      const LogSnrPoint& point, std::size_t slot) const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

  /// Mean over columns of the squared error norm. Fills `gradient` (same
  /// layout as parameters()) when non-null.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                           std::vector<double>* gradient) const;

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  nlohmann::json to_json() const;
  static MlpDenoiser from_json(const nlohmann::json& j);

  std::uint64_t init_seed() const { return init_seed_; }

 private:
  Shape shape_;
  std::size_t num_conditions_;
  std::uint64_t init_seed_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

struct TrainingResult {
  MlpDenoiser model;
  MlpConfig config;
  std::vector<double> loss_trace;  ///< minibatch loss per step
  double eval_loss_initial = 0.0;  ///< fixed evaluation batch, before training
  double eval_loss_final = 0.0;    ///< same batch, after training
};

/// Throws DomainError if the loss becomes non-finite (reports the step).
TrainingResult train_toy_denoiser(std::span<const TrainingExample> dataset,
                                  std::size_t num_conditions, const MlpConfig& config);

/// Checkpoint = model JSON plus the training config.
void save_checkpoint(const std::string& path, const TrainingResult& result);
MlpDenoiser load_checkpoint(const std::string& path);

}  // namespace dpid

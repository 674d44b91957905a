// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pointwise MI / CMI / PID by differencing noise predictions under paired
// noise and integrating over log-SNR with importance weights.
//
// Every denoiser evaluation inside one call sees the same (alpha, eps,
// x_alpha) draw: draw j uses alpha stream (seed, j) and noise stream
// (seed, j, k). Results do not depend on the thread count.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpid/denoiser.hpp"
#include "dpid/pid_core.hpp"
#include "dpid/priors.hpp"

namespace dpid {

enum class EstimatorForm {
  kStandard,    ///< 1/2 (|eps - eps_hat(base)|^2 - |eps - eps_hat(cond)|^2)
  kOrthogonal,  ///< 1/2 |eps_hat(base) - eps_hat(cond)|^2
};

std::string to_string(EstimatorForm form);
EstimatorForm parse_form(const std::string& text);

struct EstimatorConfig {
  LogSnrSampler sampler{};
  std::size_t n_alpha = 50;
  std::size_t n_eps = 1;
  EstimatorForm form = EstimatorForm::kOrthogonal;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep the values already in `base`.
  static EstimatorConfig from_json(const nlohmann::json& j, EstimatorConfig base);
  static EstimatorConfig from_json(const nlohmann::json& j) { return from_json(j, EstimatorConfig{}); }
};

struct MiEstimate {
  LatentField pointwise_map;  ///< (1, h, w), nats per pixel
  LatentField std_error_map;  ///< per-pixel Monte-Carlo standard error
  double image_level = 0.0;   ///< spatial mean of pointwise_map
  double std_error = 0.0;     ///< standard error of image_level; 0 when n_alpha == 1
  std::size_t n_alpha = 0;
  std::size_t n_eps = 0;
  /// Per alpha-draw importance-weighted image-level values; their mean is
  /// image_level.
  std::vector<double> draw_values;
};

nlohmann::json to_json(const MiEstimate& e);

/// One information term: cond measured against base.
struct Contrast {
  std::size_t cond = 0;
  std::size_t base = 0;
};

/// Shared-draw engine behind every estimator below. Identical conditions
/// are evaluated once per draw.
std::vector<MiEstimate> estimate_contrasts(const LatentField& x,
                                           std::span<const DenoiserCondition> conditions,
                                           std::span<const Contrast> contrasts,
                                           const Denoiser& denoiser, const EstimatorConfig& config);

/// i(cond; x) against base. base = unconditional gives MI, base = context
/// (with cond already containing the context) gives CMI.
MiEstimate estimate_mi(const LatentField& x, const DenoiserCondition& cond,
                       const DenoiserCondition& base, const Denoiser& denoiser,
                       const EstimatorConfig& config);

struct PidRequest {
  DenoiserCondition y1;
  DenoiserCondition y2;
  DenoiserCondition joint;                   ///< both phrases present
  std::optional<DenoiserCondition> context;  ///< set for the conditional decomposition
  std::optional<PhraseLogProb> prior1;       ///< p(y1) or p(y1 | context)
  std::optional<PhraseLogProb> prior2;
};

struct PidMaps {
  LatentField redundancy;
  LatentField unique1;
  LatentField unique2;
  LatentField synergy;
  PidAtoms image_atoms;  ///< from the image-level MIs and the same priors
  MiEstimate mi1;
  MiEstimate mi2;
  MiEstimate mi_joint;
  PhraseLogProb prior1;
  PhraseLogProb prior2;
  bool conditional = false;
};

nlohmann::json to_json(const PidMaps& m);

PidMaps estimate_pid(const LatentField& x, const PidRequest& request, const Denoiser& denoiser,
                     const EstimatorConfig& config);

struct MeanSe {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Mean and standard error of the mean (sample standard deviation).
MeanSe mean_and_se(std::span<const double> values);

struct MmseRow {
  double alpha = 0.0;
  MeanSe mmse_base;   ///< |eps - eps_hat(base)|^2
  MeanSe mmse_cond;   ///< |eps - eps_hat(cond)|^2
  MeanSe standard;    ///< standard-form integrand
  MeanSe orthogonal;  ///< orthogonal-form integrand
};

std::vector<MmseRow> mmse_curves(const LatentField& x, const DenoiserCondition& cond,
                                 const DenoiserCondition& base, const Denoiser& denoiser,
                                 std::span<const double> alpha_grid, std::uint64_t seed,
                                 std::size_t n_eps, std::size_t threads = 1);

/// Columns: alpha, then mean/se for mmse_base, mmse_cond, standard, orthogonal.
void write_mmse_csv(std::ostream& out, std::span<const MmseRow> rows);

struct ResidualRow {
  double alpha = 0.0;
  MeanSe residual;
  std::size_t draws = 0;
};

/// E[(eps_hat(base) - eps_hat(cond)) . (eps_hat(cond) - eps)] at each alpha,
/// averaged over the supplied x samples and n_eps noise draws each. The
/// expectation vanishes for an exact MMSE predictor only when the samples
/// come from p(x | cond). The standard error treats samples, not individual
/// noise draws, as the independent units.
std::vector<ResidualRow> orthogonality_residual(std::span<const LatentField> samples,
                                                const DenoiserCondition& cond,
                                                const DenoiserCondition& base,
                                                const Denoiser& denoiser,
                                                std::span<const double> alphas, std::uint64_t seed,
                                                std::size_t n_eps, std::size_t threads = 1);

struct ChainRuleResult {
  MiEstimate mi_joint;         ///< i(y1, y2; x)
  MiEstimate mi_y2;            ///< i(y2; x)
  MiEstimate cmi_y1_given_y2;  ///< i(y1; x | y2)
  double discrepancy = 0.0;    ///< mi_joint - mi_y2 - cmi, image level
  double pooled_se = 0.0;      ///< sqrt of the summed squared standard errors
};

ChainRuleResult chain_rule_check(const LatentField& x, const DenoiserCondition& y1,
                                 const DenoiserCondition& y2, const Denoiser& denoiser,
                                 const EstimatorConfig& config);

}  // namespace dpid

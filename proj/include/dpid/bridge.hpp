// SPDX-License-Identifier: Apache-2.0
#pragma once

// Client side of the HTTP+JSON bridge protocol that exposes a pretrained
// latent denoiser and a masked language model.
//
//   GET  /v1/info     -> {"latent_shape": [c,h,w], "alpha_range": [lo, hi],
//                         "model": str, "parameterization": str}
//   POST /v1/denoise  <- {"items": [{"latent": b64, "shape": [c,h,w],
//                                    "alpha": a, "prompt": str | null}]}
//                     -> {"items": [{"eps": b64, "shape": [c,h,w],
//                                    "timestep": t, "echo": b64?}]}
//   POST /v1/logprob  <- {"template": str, "targets": [str]}
//                     -> {"log_probs": [nats], "sum": nats}
//
// Tensors travel as base64 of little-endian float32, channel-major.
// HTTP 400 maps to ShapeError, 422 to UnsupportedConditionError, anything
// else (including no connection) to TransportError.

#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpid/denoiser.hpp"

namespace dpid {

std::string encode_f32_base64(std::span<const double> values);
std::vector<double> decode_f32_base64(const std::string& text);

struct BridgeInfo {
  Shape latent_shape;
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  std::string model;
  std::string parameterization;
};

struct DenoiseItem {
  LatentField latent;
  double alpha = 0.0;
  std::optional<std::string> prompt;
};

struct DenoiseResult {
  LatentField eps;
  double timestep = 0.0;
  std::optional<LatentField> echo;  ///< only served by the echo fixture
};

struct LogProbResult {
  std::vector<double> log_probs;
  double sum = 0.0;
};

class BridgeClient {
 public:
  /// `url` like "http://127.0.0.1:8000".
  explicit BridgeClient(std::string url, double timeout_seconds = 60.0);

  const std::string& url() const { return url_; }

  BridgeInfo info() const;
  std::vector<DenoiseResult> denoise(std::span<const DenoiseItem> items) const;
  LogProbResult logprob(const std::string& masked_template, std::span<const std::string> targets) const;

 private:
  nlohmann::json get(const std::string& path) const;
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

  std::string url_;
  double timeout_seconds_;
};

class BridgedDenoiser : public Denoiser {
 public:
  explicit BridgedDenoiser(const BridgeClient& client);

  const BridgeInfo& info() const { return info_; }

  LatentField predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                          const DenoiserCondition& condition) const override;
  /// One HTTP round trip for all conditions.
  std::vector<LatentField> predict_eps_many(const LatentField& x_alpha, const LogSnrPoint& point,
                                            std::span<const DenoiserCondition> conditions) const override;

 private:
  const BridgeClient& client_;
  BridgeInfo info_;
};

}  // namespace dpid

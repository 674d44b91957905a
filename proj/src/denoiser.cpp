// SPDX-License-Identifier: Apache-2.0
#include "dpid/denoiser.hpp"

namespace dpid {

std::vector<LatentField> Denoiser::predict_eps_many(const LatentField& x_alpha,
                                                    const LogSnrPoint& point,
                                                    std::span<const DenoiserCondition> conditions) const {
  std::vector<LatentField> out;
  out.reserve(conditions.size());
  for (const auto& c : conditions) out.push_back(predict_eps(x_alpha, point, c));
  return out;
}

LatentField OffsetDenoiser::predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                                        const DenoiserCondition& condition) const {
  LatentField eps = inner_.predict_eps(x_alpha, point, condition);
  for (double& v : eps.values()) v += offset_;
  return eps;
}

}  // namespace dpid

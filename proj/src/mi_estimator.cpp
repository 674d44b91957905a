// SPDX-License-Identifier: Apache-2.0
#include "dpid/mi_estimator.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "dpid/error.hpp"
#include "dpid/parallel.hpp"
#include "dpid/rng.hpp"

namespace dpid {

std::string to_string(EstimatorForm form) {
  return form == EstimatorForm::kStandard ? "standard" : "orthogonal";
}

EstimatorForm parse_form(const std::string& text) {
  if (text == "standard") return EstimatorForm::kStandard;
  if (text == "orthogonal") return EstimatorForm::kOrthogonal;
  throw PreconditionError("unknown estimator form '" + text + "' (standard|orthogonal)");
}

void EstimatorConfig::validate() const {
  sampler.validate();
  if (n_alpha == 0 || n_eps == 0) throw PreconditionError("estimator: n_alpha and n_eps must be >= 1");
}

nlohmann::json EstimatorConfig::to_json() const {
  return {{"sampler",
           {{"location", sampler.location},
            {"scale", sampler.scale},
            {"lower", sampler.lower},
            {"upper", sampler.upper}}},
          {"n_alpha", n_alpha},
          {"n_eps", n_eps},
          {"form", to_string(form)},
          {"seed", seed},
          {"threads", threads}};
}

EstimatorConfig EstimatorConfig::from_json(const nlohmann::json& j, EstimatorConfig c) {
  try {
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      c.sampler.location = s.value("location", c.sampler.location);
      c.sampler.scale = s.value("scale", c.sampler.scale);
      c.sampler.lower = s.value("lower", c.sampler.lower);
      c.sampler.upper = s.value("upper", c.sampler.upper);
    }
    c.n_alpha = j.value("n_alpha", c.n_alpha);
    c.n_eps = j.value("n_eps", c.n_eps);
    if (j.contains("form")) c.form = parse_form(j.at("form").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("estimator config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const MiEstimate& e) {
  return {{"image_level", e.image_level},
          {"std_error", e.std_error},
          {"n_alpha", e.n_alpha},
          {"n_eps", e.n_eps}};
}

MeanSe mean_and_se(std::span<const double> values) {
  MeanSe out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std_error = std::sqrt(ss / (n - 1.0) / n);
  return out;
}

namespace {

struct UniqueConditions {
  std::vector<DenoiserCondition> list;
  std::vector<std::size_t> slot;  // input index -> list index
};

UniqueConditions dedupe(std::span<const DenoiserCondition> conditions) {
  UniqueConditions u;
  for (const auto& c : conditions) {
    std::size_t s = 0;
    while (s < u.list.size() && !(u.list[s] == c)) ++s;
    if (s == u.list.size()) u.list.push_back(c);
    u.slot.push_back(s);
  }
  return u;
}

std::string alpha_text(double alpha) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", alpha);
  return buf;
}

// Adds 1/2 * channel-summed integrand to acc (one value per pixel).
void accumulate_integrand(EstimatorForm form, const LatentField& eps, const LatentField& pred_base,
                          const LatentField& pred_cond, std::vector<double>& acc, double alpha) {
  const Shape& s = eps.shape();
  for (std::size_t p = 0; p < s.spatial(); ++p) {
    double g = 0.0;
    for (std::size_t c = 0; c < s.channels; ++c) {
      const std::size_t i = c * s.spatial() + p;
      if (form == EstimatorForm::kOrthogonal) {
        const double d = pred_base[i] - pred_cond[i];
        g += d * d;
      } else {
        const double eb = eps[i] - pred_base[i];
        const double ec = eps[i] - pred_cond[i];
        g += eb * eb - ec * ec;
      }
    }
    if (!std::isfinite(g)) throw DomainError("estimator: non-finite integrand at alpha = " + alpha_text(alpha));
    acc[p] += 0.5 * g;
  }
}

}  // namespace

std::vector<MiEstimate> estimate_contrasts(const LatentField& x,
                                           std::span<const DenoiserCondition> conditions,
                                           std::span<const Contrast> contrasts,
                                           const Denoiser& denoiser, const EstimatorConfig& config) {
  config.validate();
  if (!x.all_finite()) throw DomainError("estimator: x has non-finite values");
  for (const auto& c : contrasts) {
    if (c.cond >= conditions.size() || c.base >= conditions.size()) {
      throw PreconditionError("estimator: contrast references a missing condition");
    }
  }
  const UniqueConditions unique = dedupe(conditions);
  const auto draws = sample_log_snr(config.sampler, config.seed, config.n_alpha);
  const Shape shape = x.shape();
  const std::size_t pixels = shape.spatial();
  const std::size_t nc = contrasts.size();

  // contrib[j][c * pixels + p]: weight_j * mean_k(1/2 g) for draw j.
  std::vector<std::vector<double>> contrib(config.n_alpha);
  parallel_for(config.n_alpha, config.threads, [&](std::size_t j) {
    const LogSnrPoint& point = draws[j].point;
    std::vector<double> acc(nc * pixels, 0.0);
    std::vector<double> scratch(pixels);
    for (std::size_t k = 0; k < config.n_eps; ++k) {
      RandomStream stream(config.seed, StreamTag::kEps, {j, k});
      const LatentField eps = stream.normal_field(shape);
      const LatentField x_alpha = forward_perturb(x, point, eps);
      const auto preds = denoiser.predict_eps_many(x_alpha, point, unique.list);
      for (const auto& pred : preds) {
        if (pred.shape() != shape) throw ShapeError("estimator: denoiser returned shape " + to_string(pred.shape()));
      }
      for (std::size_t c = 0; c < nc; ++c) {
        std::fill(scratch.begin(), scratch.end(), 0.0);
        accumulate_integrand(config.form, eps, preds[unique.slot[contrasts[c].base]],
                             preds[unique.slot[contrasts[c].cond]], scratch, point.alpha);
        for (std::size_t p = 0; p < pixels; ++p) acc[c * pixels + p] += scratch[p];
      }
    }
    const double scale = draws[j].weight / static_cast<double>(config.n_eps);
    for (double& v : acc) v *= scale;
    contrib[j] = std::move(acc);
  });

  const double n = static_cast<double>(config.n_alpha);
  const Shape map_shape{1, shape.height, shape.width};
  std::vector<MiEstimate> out;
  for (std::size_t c = 0; c < nc; ++c) {
    MiEstimate e{LatentField(map_shape), LatentField(map_shape), 0.0, 0.0, config.n_alpha, config.n_eps, {}};
    for (std::size_t j = 0; j < config.n_alpha; ++j) {
      for (std::size_t p = 0; p < pixels; ++p) e.pointwise_map[p] += contrib[j][c * pixels + p];
    }
    // Z_j = n * contrib_j are i.i.d. with mean equal to the estimate.
    if (config.n_alpha > 1) {
      for (std::size_t p = 0; p < pixels; ++p) {
        double ss = 0.0;
        for (std::size_t j = 0; j < config.n_alpha; ++j) {
          const double d = n * contrib[j][c * pixels + p] - e.pointwise_map[p];
          ss += d * d;
        }
        e.std_error_map[p] = std::sqrt(ss / (n - 1.0) / n);
      }
    }
    double total = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) total += e.pointwise_map[p];
    e.image_level = total / static_cast<double>(pixels);
    e.draw_values.resize(config.n_alpha);
    for (std::size_t j = 0; j < config.n_alpha; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) s += contrib[j][c * pixels + p];
      e.draw_values[j] = n * s / static_cast<double>(pixels);
    }
    e.std_error = mean_and_se(e.draw_values).std_error;
    out.push_back(std::move(e));
  }
  return out;
}

MiEstimate estimate_mi(const LatentField& x, const DenoiserCondition& cond,
                       const DenoiserCondition& base, const Denoiser& denoiser,
                       const EstimatorConfig& config) {
  const DenoiserCondition conds[] = {cond, base};
  const Contrast contrast[] = {{0, 1}};
  return std::move(estimate_contrasts(x, conds, contrast, denoiser, config).front());
}

nlohmann::json to_json(const PidMaps& m) {
  auto prior = [](const PhraseLogProb& p) {
    nlohmann::json j{{"phrase", p.phrase}, {"log_prob", p.log_prob}};
    j["context"] = p.context ? nlohmann::json(*p.context) : nlohmann::json(nullptr);
    return j;
  };
  return {{"conditional", m.conditional},
          {"image_level",
           {{"redundancy", m.image_atoms.redundancy},
            {"unique1", m.image_atoms.unique1},
            {"unique2", m.image_atoms.unique2},
            {"synergy", m.image_atoms.synergy}}},
          {"mi1", to_json(m.mi1)},
          {"mi2", to_json(m.mi2)},
          {"mi_joint", to_json(m.mi_joint)},
          {"prior1", prior(m.prior1)},
          {"prior2", prior(m.prior2)}};
}

PidMaps estimate_pid(const LatentField& x, const PidRequest& request, const Denoiser& denoiser,
                     const EstimatorConfig& config) {
  if (!request.prior1 || !request.prior2) throw PreconditionError("estimate_pid: missing phrase prior");
  validate(*request.prior1);
  validate(*request.prior2);

  const DenoiserCondition base = request.context.value_or(Unconditional{});
  const DenoiserCondition conds[] = {conjoin(request.y1, base), conjoin(request.y2, base),
                                     conjoin(request.joint, base), base};
  const Contrast contrasts[] = {{0, 3}, {1, 3}, {2, 3}};
  auto mis = estimate_contrasts(x, conds, contrasts, denoiser, config);

  const double nlp1 = request.prior1->neg_log_prob();
  const double nlp2 = request.prior2->neg_log_prob();
  PidFields fields = decompose_field(nlp1, nlp2, mis[0].pointwise_map, mis[1].pointwise_map,
                                     mis[2].pointwise_map);
  const PidAtoms atoms =
      decompose_pointwise({nlp1, nlp2, mis[0].image_level, mis[1].image_level, mis[2].image_level});
  return PidMaps{std::move(fields.redundancy), std::move(fields.unique1), std::move(fields.unique2),
                 std::move(fields.synergy),    atoms,
                 std::move(mis[0]),            std::move(mis[1]),
                 std::move(mis[2]),            *request.prior1,
                 *request.prior2,              request.context.has_value()};
}

std::vector<MmseRow> mmse_curves(const LatentField& x, const DenoiserCondition& cond,
                                 const DenoiserCondition& base, const Denoiser& denoiser,
                                 std::span<const double> alpha_grid, std::uint64_t seed,
                                 std::size_t n_eps, std::size_t threads) {
  if (alpha_grid.empty()) throw PreconditionError("mmse_curves: empty alpha grid");
  for (std::size_t i = 1; i < alpha_grid.size(); ++i) {
    if (!(alpha_grid[i] > alpha_grid[i - 1])) throw PreconditionError("mmse_curves: grid must be strictly increasing");
  }
  if (n_eps == 0) throw PreconditionError("mmse_curves: n_eps must be >= 1");
  const DenoiserCondition conds[] = {base, cond};
  std::vector<MmseRow> rows(alpha_grid.size());
  parallel_for(alpha_grid.size(), threads, [&](std::size_t i) {
    const LogSnrPoint point = LogSnrPoint::at(alpha_grid[i]);
    std::vector<double> mb(n_eps), mc(n_eps), st(n_eps), orth(n_eps);
    for (std::size_t k = 0; k < n_eps; ++k) {
      RandomStream stream(seed, StreamTag::kEps, {i, k});
      const LatentField eps = stream.normal_field(x.shape());
      const LatentField x_alpha = forward_perturb(x, point, eps);
      const auto preds = denoiser.predict_eps_many(x_alpha, point, conds);
      double sb = 0.0, sc = 0.0, so = 0.0;
      for (std::size_t d = 0; d < x.size(); ++d) {
        const double eb = eps[d] - preds[0][d];
        const double ec = eps[d] - preds[1][d];
        const double diff = preds[0][d] - preds[1][d];
        sb += eb * eb;
        sc += ec * ec;
        so += diff * diff;
      }
      mb[k] = sb;
      mc[k] = sc;
      st[k] = 0.5 * (sb - sc);
      orth[k] = 0.5 * so;
    }
    rows[i] = {alpha_grid[i], mean_and_se(mb), mean_and_se(mc), mean_and_se(st), mean_and_se(orth)};
  });
  return rows;
}

void write_mmse_csv(std::ostream& out, std::span<const MmseRow> rows) {
  out << "alpha,mmse_base,mmse_base_se,mmse_cond,mmse_cond_se,standard,standard_se,orthogonal,orthogonal_se\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.alpha,
                  r.mmse_base.mean, r.mmse_base.std_error, r.mmse_cond.mean, r.mmse_cond.std_error,
                  r.standard.mean, r.standard.std_error, r.orthogonal.mean, r.orthogonal.std_error);
    out << buf;
  }
}

std::vector<ResidualRow> orthogonality_residual(std::span<const LatentField> samples,
                                                const DenoiserCondition& cond,
                                                const DenoiserCondition& base,
                                                const Denoiser& denoiser,
                                                std::span<const double> alphas, std::uint64_t seed,
                                                std::size_t n_eps, std::size_t threads) {
  if (samples.empty() || alphas.empty() || n_eps == 0) {
    throw PreconditionError("orthogonality_residual: need samples, alphas and n_eps >= 1");
  }
  const DenoiserCondition conds[] = {base, cond};
  std::vector<ResidualRow> rows(alphas.size());
  parallel_for(alphas.size(), threads, [&](std::size_t i) {
    const LogSnrPoint point = LogSnrPoint::at(alphas[i]);
    // Draws that share an x are correlated, so the standard error is taken
    // over per-sample means.
    std::vector<double> values(samples.size(), 0.0);
    for (std::size_t m = 0; m < samples.size(); ++m) {
      for (std::size_t k = 0; k < n_eps; ++k) {
        RandomStream stream(seed, StreamTag::kEps, {i, m, k});
        const LatentField eps = stream.normal_field(samples[m].shape());
        const LatentField x_alpha = forward_perturb(samples[m], point, eps);
        const auto preds = denoiser.predict_eps_many(x_alpha, point, conds);
        double dot = 0.0;
        for (std::size_t d = 0; d < eps.size(); ++d) {
          dot += (preds[0][d] - preds[1][d]) * (preds[1][d] - eps[d]);
        }
        values[m] += dot / static_cast<double>(n_eps);
      }
    }
    rows[i] = {alphas[i], mean_and_se(values), samples.size() * n_eps};
  });
  return rows;
}

ChainRuleResult chain_rule_check(const LatentField& x, const DenoiserCondition& y1,
                                 const DenoiserCondition& y2, const Denoiser& denoiser,
                                 const EstimatorConfig& config) {
  const DenoiserCondition conds[] = {Unconditional{}, y2, conjoin(y1, y2)};
  const Contrast contrasts[] = {{2, 0}, {1, 0}, {2, 1}};
  auto mis = estimate_contrasts(x, conds, contrasts, denoiser, config);
  ChainRuleResult r{std::move(mis[0]), std::move(mis[1]), std::move(mis[2]), 0.0, 0.0};
  r.discrepancy = r.mi_joint.image_level - r.mi_y2.image_level - r.cmi_y1_given_y2.image_level;
  r.pooled_se = std::sqrt(r.mi_joint.std_error * r.mi_joint.std_error +
                          r.mi_y2.std_error * r.mi_y2.std_error +
                          r.cmi_y1_given_y2.std_error * r.cmi_y1_given_y2.std_error);
  return r;
}

}  // namespace dpid

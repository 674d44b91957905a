// SPDX-License-Identifier: Apache-2.0
#include "dpid/priors.hpp"

#include <cmath>
#include <fstream>

#include "dpid/error.hpp"

namespace dpid {

namespace {

std::string context_key(const std::optional<std::string>& context) { return context.value_or(""); }

std::optional<std::string> normalized(const std::optional<std::string>& context) {
  if (context && context->empty()) return std::nullopt;
  return context;
}

}  // namespace

void validate(const PhraseLogProb& p) {
  if (std::isinf(p.log_prob) && p.log_prob < 0) {
    throw DomainError("prior for '" + p.phrase + "' has zero probability");
  }
  if (!std::isfinite(p.log_prob) || p.log_prob > 0.0) {
    throw DomainError("prior for '" + p.phrase + "' is not a valid log-probability");
  }
}

TablePriorProvider TablePriorProvider::from_json(const nlohmann::json& j) {
  TablePriorProvider t;
  try {
    if (j.contains("unconditional")) {
      for (const auto& [phrase, p] : j.at("unconditional").items()) t.set(phrase, std::nullopt, p.get<double>());
    }
    if (j.contains("conditional")) {
      for (const auto& e : j.at("conditional")) {
        t.set(e.at("phrase").get<std::string>(), e.at("context").get<std::string>(), e.at("p").get<double>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("prior table: ") + e.what());
  }
  return t;
}

TablePriorProvider TablePriorProvider::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

void TablePriorProvider::set(const std::string& phrase, const std::optional<std::string>& context,
                             double probability) {
  if (!(probability > 0.0) || probability > 1.0) {
    throw DomainError("prior for '" + phrase + "' must lie in (0, 1]");
  }
  log_probs_[{phrase, context_key(normalized(context))}] = std::log(probability);
}

PhraseLogProb TablePriorProvider::lookup(const std::string& phrase,
                                         const std::optional<std::string>& context) const {
  const auto ctx = normalized(context);
  auto it = log_probs_.find({phrase, context_key(ctx)});
  if (it == log_probs_.end()) {
    throw PreconditionError("no prior for phrase '" + phrase + "'" + (ctx ? " given '" + *ctx + "'" : ""));
  }
  return {phrase, ctx, it->second};
}

PhraseLogProb GmmPriorProvider::lookup(const std::string& phrase,
                                       const std::optional<std::string>& context) const {
  const auto ctx = normalized(context);
  const DenoiserCondition y = model_.named(phrase);
  double p = model_.probability(y);
  if (ctx) {
    const DenoiserCondition c = model_.named(*ctx);
    const double pc = model_.probability(c);
    DenoiserCondition both;
    try {
      both = conjoin(y, c);
    } catch (const UnsupportedConditionError&) {
      throw DomainError("prior for '" + phrase + "' given '" + *ctx + "' has zero probability");
    }
    p = model_.probability(both) / pc;
  }
  PhraseLogProb out{phrase, ctx, std::log(p)};
  validate(out);
  return out;
}

std::string BridgePriorProvider::masked_template(const std::string& phrase,
                                                 const std::optional<std::string>& context) {
  std::string masks;
  for (std::size_t i = 0; i < tokenize(phrase).size(); ++i) masks += (i ? " [MASK]" : "[MASK]");
  if (!context || context->empty()) return masks;
  std::string tpl = *context;
  if (auto pos = tpl.find("{}"); pos != std::string::npos) return tpl.replace(pos, 2, masks);
  return tpl + " " + masks;
}

PhraseLogProb BridgePriorProvider::lookup(const std::string& phrase,
                                          const std::optional<std::string>& context) const {
  const auto ctx = normalized(context);
  const auto key = std::make_pair(phrase, context_key(ctx));
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return {phrase, ctx, it->second};
  }
  const auto tokens = tokenize(phrase);
  if (tokens.empty()) throw PreconditionError("empty phrase");
  const auto res = client_.logprob(masked_template(phrase, ctx), tokens);
  const double floor = std::log(1e-12);
  double total = 0.0;
  for (double lp : res.log_probs) {
    if (std::isnan(lp) || lp > 0.0) throw TransportError("bridge returned an invalid log-probability");
    if (lp < floor) {
      ++clamp_events_;
      lp = floor;
    }
    total += lp;
  }
  PhraseLogProb out{phrase, ctx, total};
  validate(out);
  std::lock_guard lock(mutex_);
  // First writer wins so concurrent identical queries agree.
  return {phrase, ctx, cache_.emplace(key, total).first->second};
}

}  // namespace dpid

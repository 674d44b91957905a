// SPDX-License-Identifier: Apache-2.0
#pragma once

// Phrase probabilities p(y) and p(y | context) used by the redundancy term.

#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "dpid/bridge.hpp"
#include "dpid/gmm.hpp"

namespace dpid {

struct PhraseLogProb {
  std::string phrase;
  std::optional<std::string> context;
  double log_prob = 0.0;  ///< nats, <= 0

  double neg_log_prob() const { return -log_prob; }
};

/// Throws DomainError unless log_prob is finite and <= 0.
void validate(const PhraseLogProb& p);

class PriorProvider {
 public:
  virtual ~PriorProvider() = default;
  /// An empty context string is the same as no context.
  virtual PhraseLogProb lookup(const std::string& phrase,
                               const std::optional<std::string>& context = std::nullopt) const = 0;
  virtual std::string id() const = 0;
};

/// Immutable table of probabilities.
///   {"unconditional": {"cat": 0.25},
///    "conditional": [{"phrase": "cat", "context": "a photo of a", "p": 0.3}]}
class TablePriorProvider : public PriorProvider {
 public:
  TablePriorProvider() = default;
  static TablePriorProvider from_json(const nlohmann::json& j);
  static TablePriorProvider load(const std::string& path);

  /// Probability must lie in (0, 1].
  void set(const std::string& phrase, const std::optional<std::string>& context, double probability);

  PhraseLogProb lookup(const std::string& phrase,
                       const std::optional<std::string>& context = std::nullopt) const override;
  std::string id() const override { return "table"; }

 private:
  std::map<std::pair<std::string, std::string>, double> log_probs_;
};

/// Phrases and contexts are named conditions of a mixture model; the prior is
/// the mixture mass of the phrase, or of phrase-and-context over context.
class GmmPriorProvider : public PriorProvider {
 public:
  explicit GmmPriorProvider(const GmmModel& model) : model_(model) {}

  PhraseLogProb lookup(const std::string& phrase,
                       const std::optional<std::string>& context = std::nullopt) const override;
  std::string id() const override { return "gmm"; }

 private:
  const GmmModel& model_;
};

/// Masked-token probabilities from the bridge. Each word of the phrase
/// becomes one [MASK]; the unconditional template holds only masks, the
/// conditional one is the context with the masks at "{}" (appended when the
/// context has no placeholder). Per-token log-probs are summed.
class BridgePriorProvider : public PriorProvider {
 public:
  explicit BridgePriorProvider(const BridgeClient& client) : client_(client) {}

  static std::string masked_template(const std::string& phrase, const std::optional<std::string>& context);

  PhraseLogProb lookup(const std::string& phrase,
                       const std::optional<std::string>& context = std::nullopt) const override;
  std::string id() const override { return "bridge:" + client_.url(); }

  /// Number of per-token probabilities raised to the 1e-12 floor so far.
  std::size_t clamp_events() const { return clamp_events_.load(); }

 private:
  const BridgeClient& client_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<std::string, std::string>, double> cache_;
  mutable std::atomic<std::size_t> clamp_events_{0};
};

}  // namespace dpid

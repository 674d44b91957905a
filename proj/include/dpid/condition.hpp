// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dpid {

struct Unconditional {
  bool operator==(const Unconditional&) const = default;
};

/// Free-text prompt for bridged models.
struct PromptText {
  std::string text;
  bool operator==(const PromptText&) const = default;
};

/// A subset of a tokenized prompt. Indices are sorted and unique.
struct PhraseSet {
  std::vector<std::string> tokens;
  std::vector<std::size_t> indices;
  bool operator==(const PhraseSet&) const = default;
};

/// Mixture components admitted by the condition (toy models).
struct ComponentSubset {
  std::vector<bool> mask;
  bool operator==(const ComponentSubset&) const = default;
};

using DenoiserCondition = std::variant<Unconditional, PromptText, PhraseSet, ComponentSubset>;

/// Validates and normalizes a phrase set. Throws PreconditionError on an
/// out-of-range index.
PhraseSet make_phrase_set(std::vector<std::string> tokens, std::vector<std::size_t> indices);

/// Whitespace tokenization used for prompts throughout.
std::vector<std::string> tokenize(const std::string& text);

/// Prompt text sent to a text-conditioned model; nullopt for unconditional.
std::optional<std::string> prompt_text(const DenoiserCondition& c);

/// Conjunction of two conditions: phrase-set union, component-mask
/// intersection, prompt concatenation. Unconditional is the identity.
/// Throws UnsupportedConditionError for mixed kinds and for an empty
/// component intersection.
DenoiserCondition conjoin(const DenoiserCondition& a, const DenoiserCondition& b);

/// Short human-readable description, stable across runs.
std::string describe(const DenoiserCondition& c);

}  // namespace dpid

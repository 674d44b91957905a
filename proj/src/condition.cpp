// SPDX-License-Identifier: Apache-2.0
#include "dpid/condition.hpp"

#include <algorithm>
#include <sstream>

#include "dpid/error.hpp"

namespace dpid {

PhraseSet make_phrase_set(std::vector<std::string> tokens, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  for (std::size_t i : indices) {
    if (i >= tokens.size()) {
      throw PreconditionError("phrase index " + std::to_string(i) + " outside prompt of " +
                              std::to_string(tokens.size()) + " tokens");
    }
  }
  return PhraseSet{std::move(tokens), std::move(indices)};
}

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

std::optional<std::string> prompt_text(const DenoiserCondition& c) {
  struct Visitor {
    std::optional<std::string> operator()(const Unconditional&) const { return std::nullopt; }
    std::optional<std::string> operator()(const PromptText& p) const { return p.text; }
    std::optional<std::string> operator()(const PhraseSet& p) const {
      std::string out;
      for (std::size_t i : p.indices) {
        if (!out.empty()) out += ' ';
        out += p.tokens[i];
      }
      return out;
    }
    std::optional<std::string> operator()(const ComponentSubset&) const {
      throw UnsupportedConditionError("component subsets have no prompt text");
    }
  };
  return std::visit(Visitor{}, c);
}

DenoiserCondition conjoin(const DenoiserCondition& a, const DenoiserCondition& b) {
  if (std::holds_alternative<Unconditional>(a)) return b;
  if (std::holds_alternative<Unconditional>(b)) return a;
  if (auto* pa = std::get_if<PhraseSet>(&a)) {
    if (auto* pb = std::get_if<PhraseSet>(&b)) {
      if (pa->tokens != pb->tokens) throw UnsupportedConditionError("phrase sets from different prompts");
      std::vector<std::size_t> merged = pa->indices;
      merged.insert(merged.end(), pb->indices.begin(), pb->indices.end());
      return make_phrase_set(pa->tokens, std::move(merged));
    }
  }
  if (auto* ca = std::get_if<ComponentSubset>(&a)) {
    if (auto* cb = std::get_if<ComponentSubset>(&b)) {
      if (ca->mask.size() != cb->mask.size()) throw UnsupportedConditionError("component masks differ in size");
      ComponentSubset out{std::vector<bool>(ca->mask.size())};
      bool any = false;
      for (std::size_t k = 0; k < out.mask.size(); ++k) {
        out.mask[k] = ca->mask[k] && cb->mask[k];
        any = any || out.mask[k];
      }
      if (!any) throw UnsupportedConditionError("component intersection is empty");
      return out;
    }
  }
  if (auto* ta = std::get_if<PromptText>(&a)) {
    if (auto* tb = std::get_if<PromptText>(&b)) return PromptText{ta->text + " " + tb->text};
  }
  throw UnsupportedConditionError("cannot conjoin " + describe(a) + " with " + describe(b));
}

std::string describe(const DenoiserCondition& c) {
  struct Visitor {
    std::string operator()(const Unconditional&) const { return "unconditional"; }
    std::string operator()(const PromptText& p) const { return "prompt:\"" + p.text + "\""; }
    std::string operator()(const PhraseSet& p) const {
      return "phrases:\"" + *prompt_text(DenoiserCondition{p}) + "\"";
    }
    std::string operator()(const ComponentSubset& s) const {
      std::string out = "components:{";
      bool first = true;
      for (std::size_t k = 0; k < s.mask.size(); ++k) {
        if (!s.mask[k]) continue;
        if (!first) out += ',';
        out += std::to_string(k);
        first = false;
      }
      return out + "}";
    }
  };
  return std::visit(Visitor{}, c);
}

}  // namespace dpid

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Runners for the analysis studies: bias audits, per-case PID/CPID maps and
// prompt intervention.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpid/maps.hpp"
#include "dpid/mi_estimator.hpp"

namespace dpid {

/// Either a named toy condition or a token span of the prompt.
struct PhraseSelection {
  std::string condition;
  std::vector<std::size_t> tokens;

  bool empty() const { return condition.empty() && tokens.empty(); }
};

struct PromptCase {
  std::string id;
  std::string tag;  ///< bias, homonym, synonym, cohyponym, representative, complex, intervention
  std::string prompt;
  PhraseSelection phrase1;
  PhraseSelection phrase2;
  std::optional<PhraseSelection> context;
  std::optional<LatentField> x;
  std::uint64_t seed = 42;
};

/// Throws PreconditionError for empty or overlapping selections.
void validate(const PromptCase& c);

/// {"cases": [{"id", "tag", "prompt", "phrase1": {"condition": name} |
///   {"span": [begin, end)}, "phrase2": ..., "context": ... | null,
///   "latent": {"shape": [c,h,w], "values": [...]} | {"shape", "file"}, "seed"}]}
/// Relative latent files resolve against `base_dir`.
std::vector<PromptCase> cases_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
std::vector<PromptCase> load_cases(const std::string& path);

/// Display text of a selection: the condition name or the selected tokens.
std::string selection_text(const PromptCase& c, const PhraseSelection& s);

struct ResolvedCase {
  DenoiserCondition y1;
  DenoiserCondition y2;
  DenoiserCondition joint;
  std::optional<DenoiserCondition> context;
  PhraseLogProb prior1;
  PhraseLogProb prior2;
  LatentField x;
};

class CaseResolver {
 public:
  virtual ~CaseResolver() = default;
  virtual ResolvedCase resolve(const PromptCase& c) const = 0;
};

/// Selections name mixture conditions. Without an explicit latent, x is
/// drawn from p(x | both phrases, context) using the case seed.
class GmmCaseResolver : public CaseResolver {
 public:
  GmmCaseResolver(const GmmModel& model, const PriorProvider& priors) : model_(model), priors_(priors) {}
  ResolvedCase resolve(const PromptCase& c) const override;

 private:
  const GmmModel& model_;
  const PriorProvider& priors_;
};

/// Selections are token spans of a text prompt; the case must carry its latent.
class PromptCaseResolver : public CaseResolver {
 public:
  explicit PromptCaseResolver(const PriorProvider& priors) : priors_(priors) {}
  ResolvedCase resolve(const PromptCase& c) const override;

 private:
  const PriorProvider& priors_;
};

struct Engine {
  const Denoiser& denoiser;
  const CaseResolver& resolver;
  EstimatorConfig config;
};

struct PidCaseResult {
  PidMaps maps;
  nlohmann::json scalars;
  std::vector<std::string> files;
};

/// Full PID (CPID when the case has a context). When out_dir is set, writes
/// <term>_<phrase1>_<phrase2>.{pfm,pgm,json} for r, u1, u2, s plus
/// scalars_<phrase1>_<phrase2>.json.
PidCaseResult run_pid_case(const PromptCase& c, const Engine& engine,
                           const std::optional<std::string>& out_dir = std::nullopt,
                           RenderMode mode = RenderMode::kSigned);

struct BiasRow {
  std::string occupation;
  std::string attribute;
  std::optional<double> raw;         ///< image-level redundancy, nats
  std::optional<double> normalized;  ///< min-max over all successful rows
  std::string error;                 ///< cause when raw is missing
};

struct BiasTable {
  std::vector<BiasRow> rows;
  std::vector<std::string> occupations;  ///< first-seen order
  std::vector<std::string> attributes;   ///< first-seen order
  std::map<std::string, double> attribute_average;
};

/// Normalizes raw values across the table and fills the averages.
BiasTable make_bias_table(std::vector<BiasRow> rows);

/// phrase1 is the occupation, phrase2 the attribute. A failing case keeps
/// its row with the error recorded.
BiasTable run_bias_audit(const std::vector<PromptCase>& cases, const Engine& engine);

/// occupation,attribute,raw_redundancy,normalized_redundancy,error
void write_bias_csv(std::ostream& out, const BiasTable& table);
/// Occupation x attribute grid of normalized values plus an Average row,
/// three decimals; missing cells are empty.
void write_bias_table(std::ostream& out, const BiasTable& table);

struct InterventionResult {
  LatentField edited;       ///< reconstruction under the edited condition
  LatentField baseline;     ///< reconstruction under the original condition
  double mse = 0.0;         ///< input vs edited
  double correlation = 0.0;
  double baseline_mse = 0.0;
  double baseline_correlation = 0.0;
  std::vector<double> alpha_grid;
};

double mean_squared_difference(const LatentField& a, const LatentField& b);
double pearson_correlation(const LatentField& a, const LatentField& b);

/// Noises x to noise_alpha with a seeded draw, then runs deterministic
/// steps x_{t+1} = a_{t+1} x0_hat + b_{t+1} eps_hat along `steps` equal
/// increments of log-SNR up to end_alpha, and returns the final clean
/// estimate.
InterventionResult prompt_intervention(const LatentField& x, const DenoiserCondition& original,
                                       const DenoiserCondition& edited, double noise_alpha,
                                       std::size_t steps, const Denoiser& denoiser,
                                       std::uint64_t seed, double end_alpha = 12.0,
                                       double min_alpha = -12.0);

LatentField read_latent_f32(const std::string& path, const Shape& shape);

}  // namespace dpid

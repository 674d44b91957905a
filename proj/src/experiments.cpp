// SPDX-License-Identifier: Apache-2.0
#include "dpid/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

#include "dpid/error.hpp"
#include "dpid/parallel.hpp"
#include "dpid/rng.hpp"

namespace dpid {

namespace fs = std::filesystem;

void validate(const PromptCase& c) {
  if (c.phrase1.empty() || c.phrase2.empty()) {
    throw PreconditionError("case '" + c.id + "': both phrases must be selected");
  }
  auto overlaps = [](const PhraseSelection& a, const PhraseSelection& b) {
    if (!a.condition.empty() && a.condition == b.condition) return false;  // synonyms may share a name
    for (std::size_t t : a.tokens) {
      if (std::find(b.tokens.begin(), b.tokens.end(), t) != b.tokens.end()) return true;
    }
    return false;
  };
  if (overlaps(c.phrase1, c.phrase2)) throw PreconditionError("case '" + c.id + "': phrases overlap");
  if (c.context && (overlaps(c.phrase1, *c.context) || overlaps(c.phrase2, *c.context))) {
    throw PreconditionError("case '" + c.id + "': context overlaps a phrase");
  }
  const std::size_t n = tokenize(c.prompt).size();
  for (const PhraseSelection* s : {&c.phrase1, &c.phrase2, c.context ? &*c.context : nullptr}) {
    if (s == nullptr) continue;
    for (std::size_t t : s->tokens) {
      if (t >= n) throw PreconditionError("case '" + c.id + "': token index beyond prompt");
    }
  }
}

namespace {

PhraseSelection selection_from_json(const nlohmann::json& j) {
  PhraseSelection s;
  if (j.is_null()) return s;
  if (j.contains("condition")) s.condition = j.at("condition").get<std::string>();
  if (j.contains("span")) {
    const auto span = j.at("span").get<std::vector<std::size_t>>();
    if (span.size() != 2 || span[0] >= span[1]) throw PreconditionError("span must be [begin, end) with begin < end");
    for (std::size_t t = span[0]; t < span[1]; ++t) s.tokens.push_back(t);
  }
  return s;
}

}  // namespace

LatentField read_latent_f32(const std::string& path, const Shape& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<double> values(shape.count());
  for (double& v : values) {
    float f;
    in.read(reinterpret_cast<char*>(&f), 4);
    v = f;
  }
  if (!in) throw IoError(path + ": fewer than " + std::to_string(shape.count()) + " float32 values");
  return LatentField(shape, std::move(values));
}

std::vector<PromptCase> cases_from_json(const nlohmann::json& j, const std::string& base_dir) {
  std::vector<PromptCase> cases;
  try {
    for (const auto& jc : j.at("cases")) {
      PromptCase c;
      c.id = jc.value("id", "case" + std::to_string(cases.size()));
      c.tag = jc.value("tag", "");
      c.prompt = jc.value("prompt", "");
      c.phrase1 = selection_from_json(jc.value("phrase1", nlohmann::json()));
      c.phrase2 = selection_from_json(jc.value("phrase2", nlohmann::json()));
      if (jc.contains("context") && !jc.at("context").is_null()) c.context = selection_from_json(jc.at("context"));
      c.seed = jc.value("seed", c.seed);
      if (jc.contains("latent")) {
        const auto& jl = jc.at("latent");
        const auto dims = jl.at("shape").get<std::vector<std::size_t>>();
        if (dims.size() != 3) throw PreconditionError("latent shape must be [c,h,w]");
        const Shape shape{dims[0], dims[1], dims[2]};
        if (jl.contains("values")) {
          c.x = LatentField(shape, jl.at("values").get<std::vector<double>>());
        } else {
          fs::path file = jl.at("file").get<std::string>();
          if (file.is_relative()) file = fs::path(base_dir) / file;
          c.x = read_latent_f32(file.string(), shape);
        }
      }
      cases.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("case file: ") + e.what());
  }
  return cases;
}

std::vector<PromptCase> load_cases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return cases_from_json(nlohmann::json::parse(in), fs::path(path).parent_path().string());
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

std::string selection_text(const PromptCase& c, const PhraseSelection& s) {
  if (!s.condition.empty()) return s.condition;
  const auto tokens = tokenize(c.prompt);
  std::string out;
  for (std::size_t t : s.tokens) {
    if (t >= tokens.size()) continue;
    if (!out.empty()) out += ' ';
    out += tokens[t];
  }
  return out;
}

ResolvedCase GmmCaseResolver::resolve(const PromptCase& c) const {
  validate(c);
  if (c.phrase1.condition.empty() || c.phrase2.condition.empty()) {
    throw PreconditionError("case '" + c.id + "': toy cases select phrases by condition name");
  }
  const DenoiserCondition y1 = model_.named(c.phrase1.condition);
  const DenoiserCondition y2 = model_.named(c.phrase2.condition);
  std::optional<DenoiserCondition> context;
  std::optional<std::string> context_name;
  if (c.context) {
    context_name = c.context->condition;
    context = model_.named(*context_name);
  }
  const DenoiserCondition joint = conjoin(y1, y2);
  LatentField x;
  if (c.x) {
    x = *c.x;
  } else {
    RandomStream stream(c.seed, StreamTag::kData);
    x = model_.sample(conjoin(joint, context.value_or(Unconditional{})), stream);
  }
  return {y1,
          y2,
          joint,
          context,
          priors_.lookup(c.phrase1.condition, context_name),
          priors_.lookup(c.phrase2.condition, context_name),
          std::move(x)};
}

ResolvedCase PromptCaseResolver::resolve(const PromptCase& c) const {
  validate(c);
  if (!c.x) throw PreconditionError("case '" + c.id + "': prompt cases need a latent");
  const auto tokens = tokenize(c.prompt);
  const PhraseSet y1 = make_phrase_set(tokens, c.phrase1.tokens);
  const PhraseSet y2 = make_phrase_set(tokens, c.phrase2.tokens);
  std::optional<DenoiserCondition> context;
  std::optional<std::string> context_text;
  if (c.context) {
    context = make_phrase_set(tokens, c.context->tokens);
    context_text = prompt_text(*context);
  }
  return {y1,
          y2,
          conjoin(y1, y2),
          context,
          priors_.lookup(*prompt_text(y1), context_text),
          priors_.lookup(*prompt_text(y2), context_text),
          *c.x};
}

PidCaseResult run_pid_case(const PromptCase& c, const Engine& engine,
                           const std::optional<std::string>& out_dir, RenderMode mode) {
  const ResolvedCase r = engine.resolver.resolve(c);
  PidRequest req{r.y1, r.y2, r.joint, r.context, r.prior1, r.prior2};
  PidCaseResult out{estimate_pid(r.x, req, engine.denoiser, engine.config), {}, {}};

  const std::string p1 = selection_text(c, c.phrase1), p2 = selection_text(c, c.phrase2);
  out.scalars = to_json(out.maps);
  out.scalars["case"] = {{"id", c.id}, {"tag", c.tag}, {"prompt", c.prompt}, {"phrase1", p1}, {"phrase2", p2},
                         {"seed", c.seed}};
  if (c.context) out.scalars["case"]["context"] = selection_text(c, *c.context);
  out.scalars["config"] = engine.config.to_json();

  if (out_dir) {
    fs::create_directories(*out_dir);
    const std::string suffix = "_" + slugify(p1) + "_" + slugify(p2);
    const std::pair<const char*, const LatentField*> terms[] = {{"r", &out.maps.redundancy},
                                                                {"u1", &out.maps.unique1},
                                                                {"u2", &out.maps.unique2},
                                                                {"s", &out.maps.synergy}};
    for (const auto& [term, field] : terms) {
      const std::string stem = (fs::path(*out_dir) / (term + suffix)).string();
      export_heatmap(stem, Heatmap::from_field(*field, {term, c.prompt, false}), mode);
      out.files.push_back(stem + ".pfm");
      out.files.push_back(stem + ".pgm");
      out.files.push_back(stem + ".json");
    }
    const std::string scalars_path = (fs::path(*out_dir) / ("scalars" + suffix + ".json")).string();
    std::ofstream s(scalars_path);
    if (!s) throw IoError("cannot write " + scalars_path);
    s << out.scalars.dump(2) << '\n';
    out.files.push_back(scalars_path);
  }
  return out;
}

BiasTable make_bias_table(std::vector<BiasRow> rows) {
  BiasTable t;
  std::vector<double> raw;
  for (const auto& row : rows) {
    if (std::find(t.occupations.begin(), t.occupations.end(), row.occupation) == t.occupations.end()) {
      t.occupations.push_back(row.occupation);
    }
    if (std::find(t.attributes.begin(), t.attributes.end(), row.attribute) == t.attributes.end()) {
      t.attributes.push_back(row.attribute);
    }
    if (row.raw) raw.push_back(*row.raw);
  }
  if (!raw.empty()) {
    const auto norm = normalize_dataset(raw);
    std::size_t i = 0;
    for (auto& row : rows) {
      row.normalized = row.raw ? std::optional<double>(norm[i++]) : std::nullopt;
    }
  }
  for (const auto& attr : t.attributes) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : rows) {
      if (row.attribute == attr && row.normalized) {
        sum += *row.normalized;
        ++n;
      }
    }
    if (n > 0) t.attribute_average[attr] = sum / static_cast<double>(n);
  }
  t.rows = std::move(rows);
  return t;
}

BiasTable run_bias_audit(const std::vector<PromptCase>& cases, const Engine& engine) {
  std::vector<BiasRow> rows(cases.size());
  EstimatorConfig inner = engine.config;
  inner.threads = 1;
  const Engine per_case{engine.denoiser, engine.resolver, inner};
  parallel_for(cases.size(), engine.config.threads, [&](std::size_t i) {
    const PromptCase& c = cases[i];
    rows[i].occupation = selection_text(c, c.phrase1);
    rows[i].attribute = selection_text(c, c.phrase2);
    try {
      const ResolvedCase r = per_case.resolver.resolve(c);
      PidRequest req{r.y1, r.y2, r.joint, r.context, r.prior1, r.prior2};
      rows[i].raw = estimate_pid(r.x, req, per_case.denoiser, per_case.config).image_atoms.redundancy;
    } catch (const std::exception& e) {
      rows[i].error = e.what();
    }
  });
  return make_bias_table(std::move(rows));
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

void write_bias_csv(std::ostream& out, const BiasTable& table) {
  out << "occupation,attribute,raw_redundancy,normalized_redundancy,error\n";
  for (const auto& row : table.rows) {
    out << csv_field(row.occupation) << ',' << csv_field(row.attribute) << ','
        << (row.raw ? full(*row.raw) : "") << ',' << (row.normalized ? full(*row.normalized) : "") << ','
        << csv_field(row.error) << '\n';
  }
}

void write_bias_table(std::ostream& out, const BiasTable& table) {
  out << "Occupation";
  for (const auto& a : table.attributes) out << ',' << csv_field(a);
  out << '\n';
  for (const auto& occ : table.occupations) {
    out << csv_field(occ);
    for (const auto& a : table.attributes) {
      out << ',';
      for (const auto& row : table.rows) {
        if (row.occupation == occ && row.attribute == a && row.normalized) {
          out << fixed(*row.normalized, 3);
          break;
        }
      }
    }
    out << '\n';
  }
  out << "Average";
  for (const auto& a : table.attributes) {
    out << ',';
    if (auto it = table.attribute_average.find(a); it != table.attribute_average.end()) out << fixed(it->second, 3);
  }
  out << '\n';
}

double mean_squared_difference(const LatentField& a, const LatentField& b) {
  require_same_shape(a, b, "mean_squared_difference");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double pearson_correlation(const LatentField& a, const LatentField& b) {
  require_same_shape(a, b, "pearson_correlation");
  const double ma = a.mean(), mb = b.mean();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

LatentField reverse_trajectory(LatentField state, const std::vector<double>& grid,
                               const DenoiserCondition& condition, const Denoiser& denoiser) {
  auto check = [](const LatentField& f, std::size_t step) {
    if (!f.all_finite()) throw DomainError("intervention: non-finite trajectory at step " + std::to_string(step));
  };
  const std::size_t steps = grid.size() - 1;
  for (std::size_t t = 0; t < steps; ++t) {
    const LogSnrPoint now = LogSnrPoint::at(grid[t]);
    const LogSnrPoint next = LogSnrPoint::at(grid[t + 1]);
    const LatentField eps = denoiser.predict_eps(state, now, condition);
    for (std::size_t i = 0; i < state.size(); ++i) {
      const double x0 = (state[i] - now.noise * eps[i]) / now.signal;
      state[i] = next.signal * x0 + next.noise * eps[i];
    }
    check(state, t);
  }
  const LogSnrPoint last = LogSnrPoint::at(grid.back());
  const LatentField eps = denoiser.predict_eps(state, last, condition);
  for (std::size_t i = 0; i < state.size(); ++i) state[i] = (state[i] - last.noise * eps[i]) / last.signal;
  check(state, steps);
  return state;
}

}  // namespace

InterventionResult prompt_intervention(const LatentField& x, const DenoiserCondition& original,
                                       const DenoiserCondition& edited, double noise_alpha,
                                       std::size_t steps, const Denoiser& denoiser,
                                       std::uint64_t seed, double end_alpha, double min_alpha) {
  if (steps == 0) throw PreconditionError("intervention: steps must be >= 1");
  if (!(noise_alpha >= min_alpha && noise_alpha <= end_alpha)) {
    throw PreconditionError("intervention: noise_alpha outside [" + std::to_string(min_alpha) + ", " +
                            std::to_string(end_alpha) + "]");
  }
  std::vector<double> grid(steps + 1);
  for (std::size_t t = 0; t <= steps; ++t) {
    grid[t] = noise_alpha + (end_alpha - noise_alpha) * static_cast<double>(t) / static_cast<double>(steps);
  }
  RandomStream stream(seed, StreamTag::kIntervention);
  const LatentField eps = stream.normal_field(x.shape());
  const LatentField noised = forward_perturb(x, LogSnrPoint::at(noise_alpha), eps);

  InterventionResult r{reverse_trajectory(noised, grid, edited, denoiser),
                       reverse_trajectory(noised, grid, original, denoiser),
                       0, 0, 0, 0, grid};
  r.mse = mean_squared_difference(x, r.edited);
  r.correlation = pearson_correlation(x, r.edited);
  r.baseline_mse = mean_squared_difference(x, r.baseline);
  r.baseline_correlation = pearson_correlation(x, r.baseline);
  return r;
}

}  // namespace dpid

// SPDX-License-Identifier: Apache-2.0
#include "dpid/cli.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dpid/bridge.hpp"
#include "dpid/error.hpp"
#include "dpid/experiments.hpp"
#include "dpid/gmm.hpp"
#include "dpid/image_io.hpp"
#include "dpid/maps.hpp"
#include "dpid/mi_estimator.hpp"
#include "dpid/mlp.hpp"
#include "dpid/pid_core.hpp"
#include "dpid/priors.hpp"

#ifndef DPID_VERSION
#define DPID_VERSION "0.0.0"
#endif

namespace dpid {

std::string version() { return DPID_VERSION; }

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : Error {
  using Error::Error;
};

// JSON config files. Subcommand options live under an object named after the
// subcommand; unknown keys are ignored so a run manifest can be fed back in.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return section(app, default_also).dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, "", {}, items);
    return items;
  }

 private:
  static json section(const CLI::App* app, bool default_also) {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string& name = opt->get_lnames()[0];
      if (name == "help" || name == "config") continue;
      if (opt->get_type_size() == 0) {
        if (opt->count() > 0 || default_also) j[name] = opt->count() > 0;
      } else if (opt->count() > 0) {
        const auto& r = opt->results();
        if (opt->get_expected_max() > 1 || r.size() > 1)
          j[name] = r;
        else
          j[name] = r.front();
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      if (sub->parsed()) j[sub->get_name()] = section(sub, default_also);
    }
    return j;
  }

  static std::string scalar_text(const json& v, const std::string& name) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config key '" + name + "' must be a scalar or a list of scalars");
  }

  static void collect(const json& j, const std::string& name, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& items) {
    if (j.is_object()) {
      if (!name.empty()) parents.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) collect(*it, it.key(), parents, items);
      return;
    }
    CLI::ConfigItem item;
    item.name = name;
    item.parents = std::move(parents);
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(scalar_text(v, name));
    } else if (!j.is_null()) {
      item.inputs.push_back(scalar_text(j, name));
    } else {
      return;
    }
    items.push_back(std::move(item));
  }
};

struct BackendOptions {
  std::string gmm;
  std::string checkpoint;
  std::string bridge;
  std::string priors;
  double timeout = 60.0;
};

// Denoiser plus whatever names its conditions: the mixture file, the
// checkpoint's component count, or free-text prompts over the bridge.
struct Backend {
  std::optional<GmmModel> model;
  std::unique_ptr<Denoiser> local;
  std::unique_ptr<BridgeClient> client;
  std::unique_ptr<BridgedDenoiser> bridged;
  std::optional<std::size_t> mlp_conditions;
  Shape shape;
  std::string id;

  const Denoiser& denoiser() const {
    if (bridged) return *bridged;
    return *local;
  }

  DenoiserCondition condition(const std::string& spec) const {
    if (spec.empty() || spec == "none") return Unconditional{};
    if (bridged) return PromptText{spec};
    if (model) {
      DenoiserCondition c = Unconditional{};
      std::size_t start = 0;
      while (true) {
        std::size_t amp = spec.find('&', start);
        c = conjoin(c, model->named(spec.substr(start, amp - start)));
        if (amp == std::string::npos) break;
        start = amp + 1;
      }
      return c;
    }
    std::string digits = spec[0] == 'c' ? spec.substr(1) : spec;
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(digits, &used);
      if (used != digits.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UnsupportedConditionError("checkpoint conditions are c0..c" +
                                      std::to_string(*mlp_conditions - 1) + ", got '" + spec + "'");
    }
    if (k >= *mlp_conditions) throw UnsupportedConditionError("condition out of range: " + spec);
    ComponentSubset s{std::vector<bool>(*mlp_conditions, false)};
    s.mask[k] = true;
    return s;
  }

  const GmmModel& require_model(const std::string& why) const {
    if (!model) throw UsageError(why + " needs --gmm");
    return *model;
  }
};

Backend open_backend(const BackendOptions& o) {
  Backend b;
  const int sources = !o.checkpoint.empty() + !o.bridge.empty() + (!o.gmm.empty() && o.checkpoint.empty());
  if (sources == 0) throw UsageError("choose a denoiser: --gmm, --checkpoint or --bridge");
  if (!o.bridge.empty() && (!o.gmm.empty() || !o.checkpoint.empty()))
    throw UsageError("--bridge cannot be combined with --gmm or --checkpoint");
  if (!o.gmm.empty()) b.model = GmmModel::load(o.gmm);
  if (!o.bridge.empty()) {
    b.client = std::make_unique<BridgeClient>(o.bridge, o.timeout);
    b.bridged = std::make_unique<BridgedDenoiser>(*b.client);
    b.shape = b.bridged->info().latent_shape;
    b.id = "bridge:" + o.bridge;
  } else if (!o.checkpoint.empty()) {
    auto mlp = std::make_unique<MlpDenoiser>(load_checkpoint(o.checkpoint));
    b.shape = mlp->shape();
    b.mlp_conditions = mlp->num_conditions();
    if (b.model && (b.model->shape() != b.shape || b.model->size() != mlp->num_conditions()))
      throw ShapeError("checkpoint does not match the mixture in --gmm");
    b.local = std::move(mlp);
    b.id = "checkpoint:" + o.checkpoint;
  } else {
    b.shape = b.model->shape();
    b.local = std::make_unique<GmmDenoiser>(*b.model);
    b.id = "gmm:" + o.gmm;
  }
  return b;
}

std::unique_ptr<PriorProvider> open_priors(const BackendOptions& o, const Backend& b) {
  if (!o.priors.empty()) return std::make_unique<TablePriorProvider>(TablePriorProvider::load(o.priors));
  if (b.model) return std::make_unique<GmmPriorProvider>(*b.model);
  if (b.client) return std::make_unique<BridgePriorProvider>(*b.client);
  throw UsageError("phrase priors need --priors, --gmm or --bridge");
}

struct XOptions {
  std::vector<double> values;
  std::string latent;
  std::uint64_t seed = 0;
};

// Explicit values (one value broadcasts), a raw float32 file, or a draw from
// the mixture under `sample_cond`.
LatentField resolve_x(const XOptions& o, const Backend& b, const DenoiserCondition& sample_cond) {
  if (!o.values.empty() && !o.latent.empty()) throw UsageError("use either --x or --latent");
  if (!o.latent.empty()) return read_latent_f32(o.latent, b.shape);
  if (!o.values.empty()) {
    if (o.values.size() == 1) return LatentField(b.shape, o.values[0]);
    if (o.values.size() != b.shape.count())
      throw ShapeError("--x has " + std::to_string(o.values.size()) + " values, latent shape " +
                       to_string(b.shape) + " needs " + std::to_string(b.shape.count()));
    return LatentField(b.shape, o.values);
  }
  const GmmModel& model = b.require_model("sampling x (no --x or --latent)");
  RandomStream stream(o.seed, StreamTag::kData, {0});
  return model.sample(sample_cond, stream);
}

void add_backend(CLI::App* sub, BackendOptions& o, bool with_priors) {
  sub->add_option("--gmm", o.gmm, "Gaussian mixture JSON (exact denoiser, names, priors)");
  sub->add_option("--checkpoint", o.checkpoint, "trained toy denoiser checkpoint");
  sub->add_option("--bridge", o.bridge, "bridge server URL, e.g. http://127.0.0.1:8000");
  sub->add_option("--timeout", o.timeout, "bridge request timeout in seconds")->capture_default_str();
  if (with_priors) sub->add_option("--priors", o.priors, "phrase prior table JSON");
}

void add_estimator(CLI::App* sub, EstimatorConfig& c, std::string& form) {
  sub->add_option("--seed", c.seed, "master seed")->capture_default_str();
  sub->add_option("--n-alpha", c.n_alpha, "log-SNR draws")->capture_default_str();
  sub->add_option("--n-eps", c.n_eps, "noise draws per log-SNR draw")->capture_default_str();
  sub->add_option("--form", form, "integrand: orthogonal | standard")
      ->capture_default_str()
      ->check(CLI::IsMember({"orthogonal", "standard"}));
  sub->add_option("--alpha-loc", c.sampler.location, "logistic location")->capture_default_str();
  sub->add_option("--alpha-scale", c.sampler.scale, "logistic scale")->capture_default_str();
  sub->add_option("--alpha-min", c.sampler.lower, "lower truncation")->capture_default_str();
  sub->add_option("--alpha-max", c.sampler.upper, "upper truncation")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker cap; results do not depend on it")
      ->capture_default_str();
}

void add_x(CLI::App* sub, XOptions& o) {
  sub->add_option("--x", o.values, "latent values (comma separated; one value broadcasts)")
      ->delimiter(',');
  sub->add_option("--latent", o.latent, "raw little-endian float32 latent file");
  sub->add_option("--x-seed", o.seed, "seed for drawing x from the mixture")->capture_default_str();
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) throw UsageError("grid needs at least one point");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

json field_json(const LatentField& f) {
  const Shape& s = f.shape();
  return {{"shape", {s.channels, s.height, s.width}},
          {"values", std::vector<double>(f.values().begin(), f.values().end())}};
}

void write_f32(const fs::path& path, const LatentField& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (double v : f.values()) {
    float x = static_cast<float>(v);
    unsigned char bytes[4];
    std::memcpy(bytes, &x, 4);
    if constexpr (std::endian::native == std::endian::big) std::swap(bytes[0], bytes[3]), std::swap(bytes[1], bytes[2]);
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string exit_help() {
  return "Exit codes:\n"
         "  0  success\n"
         "  1  internal error\n"
         "  2  usage error (unknown flag, bad value, missing argument)\n"
         "  3  input error (unreadable config, fixture, checkpoint or latent)\n"
         "  4  estimation error (domain, shape or condition failure)\n"
         "  5  bridge transport error\n"
         "Failures print {\"error\": {\"code\", \"kind\", \"message\"}} on stderr.\n"
         "Config files are JSON: {\"<subcommand>\": {\"<long flag>\": value}}. Flags\n"
         "override the file, the file overrides defaults. A run manifest is a valid\n"
         "config: dpid --config run/manifest.json <subcommand>.";
}

int report(std::ostream& err, int code, const std::string& kind, const std::string& message) {
  json j{{"error", {{"code", code}, {"kind", kind}, {"message", message}}}};
  err << j.dump() << '\n';
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dpid: pointwise information decomposition for diffusion denoisers", "dpid"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file");
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  app.set_version_flag("--version", version());
  app.footer(exit_help());
  app.require_subcommand(1);
  app.fallthrough();

  BackendOptions backend_opts;
  EstimatorConfig est;
  std::string form = "orthogonal";
  XOptions xo;
  std::string out_dir;
  std::string mode_name = "signed";

  auto add_out = [&](CLI::App* sub, const std::string& what) {
    sub->add_option("--out", out_dir, what);
  };

  // estimate-mi
  std::string cond_name, base_name;
  auto* mi_cmd = app.add_subcommand("estimate-mi", "pointwise MI (or CMI with --base) map and image-level value");
  add_backend(mi_cmd, backend_opts, false);
  add_estimator(mi_cmd, est, form);
  add_x(mi_cmd, xo);
  mi_cmd->add_option("--cond", cond_name, "condition; names joined with '&' conjoin")->required();
  mi_cmd->add_option("--base", base_name, "base condition (default unconditional)");
  mi_cmd->add_option("--mode", mode_name, "heatmap preview: signed | clamped")
      ->capture_default_str()
      ->check(CLI::IsMember({"signed", "clamped"}));
  add_out(mi_cmd, "output directory for maps and manifest");

  // estimate-pid
  std::string cases_path, case_id, y1_name, y2_name, context_name;
  auto* pid_cmd = app.add_subcommand("estimate-pid", "redundancy, uniqueness and synergy maps (conditional with a context)");
  add_backend(pid_cmd, backend_opts, true);
  add_estimator(pid_cmd, est, form);
  add_x(pid_cmd, xo);
  pid_cmd->add_option("--cases", cases_path, "case file");
  pid_cmd->add_option("--case", case_id, "run only this case id");
  pid_cmd->add_option("--y1", y1_name, "first phrase (mixture condition name)");
  pid_cmd->add_option("--y2", y2_name, "second phrase");
  pid_cmd->add_option("--context", context_name, "context for the conditional decomposition");
  pid_cmd->add_option("--mode", mode_name, "heatmap preview: signed | clamped")
      ->capture_default_str()
      ->check(CLI::IsMember({"signed", "clamped"}));
  add_out(pid_cmd, "output directory for maps, scalars and manifest");

  // bias-audit
  auto* bias_cmd = app.add_subcommand("bias-audit", "redundancy between occupations and attributes");
  add_backend(bias_cmd, backend_opts, true);
  add_estimator(bias_cmd, est, form);
  bias_cmd->add_option("--cases", cases_path, "case file (phrase1 occupation, phrase2 attribute)")->required();
  add_out(bias_cmd, "output directory for bias.csv, bias_table.csv and manifest");

  // intervene
  std::string original_name, edited_name;
  double noise_alpha = 0.0, end_alpha = 12.0;
  std::size_t steps = 20;
  auto* int_cmd = app.add_subcommand("intervene", "re-denoise a latent under an edited prompt");
  add_backend(int_cmd, backend_opts, false);
  add_x(int_cmd, xo);
  int_cmd->add_option("--seed", est.seed, "noise seed")->capture_default_str();
  int_cmd->add_option("--original", original_name, "original condition");
  int_cmd->add_option("--edited", edited_name, "edited condition")->required();
  int_cmd->add_option("--noise-alpha", noise_alpha, "log-SNR the input is noised to")->capture_default_str();
  int_cmd->add_option("--end-alpha", end_alpha, "log-SNR of the last step")->capture_default_str();
  int_cmd->add_option("--steps", steps, "deterministic steps")->capture_default_str();
  add_out(int_cmd, "output directory for latents and manifest");

  // mmse-curves
  std::string grid = "-8:8:17";
  auto* mmse_cmd = app.add_subcommand("mmse-curves", "MMSE and integrands on a log-SNR grid (CSV)");
  add_backend(mmse_cmd, backend_opts, false);
  add_x(mmse_cmd, xo);
  mmse_cmd->add_option("--cond", cond_name, "condition")->required();
  mmse_cmd->add_option("--base", base_name, "base condition (default unconditional)");
  mmse_cmd->add_option("--grid", grid, "lo:hi:count")->capture_default_str();
  mmse_cmd->add_option("--seed", est.seed, "noise seed")->capture_default_str();
  mmse_cmd->add_option("--n-eps", est.n_eps, "noise draws per grid point")->capture_default_str();
  mmse_cmd->add_option("--threads", est.threads, "worker cap")->capture_default_str();
  add_out(mmse_cmd, "output directory for mmse.csv and manifest");

  // orthogonality
  std::vector<double> alphas{-4.0, -2.0, 0.0, 2.0, 4.0};
  std::size_t n_samples = 200;
  double offset = 0.0;
  auto* orth_cmd = app.add_subcommand("orthogonality", "residual of the orthogonality identity over x ~ p(x | cond)");
  add_backend(orth_cmd, backend_opts, false);
  orth_cmd->add_option("--cond", cond_name, "condition")->required();
  orth_cmd->add_option("--base", base_name, "base condition (default unconditional)");
  orth_cmd->add_option("--alphas", alphas, "log-SNR values")->delimiter(',')->capture_default_str();
  orth_cmd->add_option("--n-samples", n_samples, "x samples from the mixture")->capture_default_str();
  orth_cmd->add_option("--seed", est.seed, "seed")->capture_default_str();
  orth_cmd->add_option("--n-eps", est.n_eps, "noise draws per sample")->capture_default_str();
  orth_cmd->add_option("--threads", est.threads, "worker cap")->capture_default_str();
  orth_cmd->add_option("--offset", offset, "shift every prediction (negative control)")->capture_default_str();
  add_out(orth_cmd, "output directory for manifest");

  // train-toy
  MlpConfig mlp;
  std::size_t n_data = 4096;
  std::string hidden = "64,64";
  std::string checkpoint_out;
  auto* train_cmd = app.add_subcommand("train-toy", "train the small MLP denoiser on mixture samples");
  train_cmd->add_option("--gmm", backend_opts.gmm, "mixture to sample training data from")->required();
  train_cmd->add_option("--n-data", n_data, "training samples")->capture_default_str();
  train_cmd->add_option("--steps", mlp.steps, "optimizer steps")->capture_default_str();
  train_cmd->add_option("--batch", mlp.batch, "minibatch size")->capture_default_str();
  train_cmd->add_option("--lr", mlp.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--hidden", hidden, "hidden layer widths")->capture_default_str();
  train_cmd->add_option("--uncond-prob", mlp.uncond_prob, "condition dropout")->capture_default_str();
  train_cmd->add_option("--seed", mlp.seed, "seed")->capture_default_str();
  train_cmd->add_option("--save", checkpoint_out, "checkpoint path (default <out>/checkpoint.json)");
  add_out(train_cmd, "output directory for checkpoint, loss trace and manifest");

  // oracle-pid
  std::string gate = "xor", joint_path, csv_path;
  auto* oracle_cmd = app.add_subcommand("oracle-pid", "exact PID of a discrete joint distribution");
  oracle_cmd->add_option("--gate", gate, "xor | rdn | unq")
      ->capture_default_str()
      ->check(CLI::IsMember({"xor", "rdn", "unq"}));
  oracle_cmd->add_option("--joint", joint_path, "JSON {\"n1\", \"n2\", \"nx\", \"table\"} instead of a gate");
  oracle_cmd->add_option("--csv", csv_path, "write the per-event table");
  add_out(oracle_cmd, "output directory for oracle.csv and manifest");

  // render
  std::string pfm_path, with_path, size = "";
  double k_sigma = 1.5;
  auto* render_cmd = app.add_subcommand("render", "upsample and preview a PFM heatmap");
  render_cmd->add_option("--pfm", pfm_path, "input heatmap")->required();
  render_cmd->add_option("--mode", mode_name, "signed | clamped")
      ->capture_default_str()
      ->check(CLI::IsMember({"signed", "clamped"}));
  render_cmd->add_option("--size", size, "upsample to HxW");
  render_cmd->add_option("--with", with_path, "second heatmap: write the intersection baseline");
  render_cmd->add_option("--k", k_sigma, "threshold in standard deviations")->capture_default_str();
  std::string stem;
  render_cmd->add_option("--output", stem, "output stem (writes .pfm, .pgm, .json)")->required();

  for (auto* sub : app.get_subcommands({})) sub->configurable();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << version() << '\n';
    return kExitOk;
  } catch (const CLI::FileError& e) {
    return report(err, kExitInput, "config", e.what());
  } catch (const CLI::ConversionError& e) {
    return report(err, kExitInput, "config", e.what());
  } catch (const CLI::ParseError& e) {
    return report(err, kExitUsage, "usage", e.what());
  }

  const auto started = std::chrono::steady_clock::now();
  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    est.form = parse_form(form);
    const RenderMode mode = mode_name == "clamped" ? RenderMode::kClamped : RenderMode::kSigned;
    json manifest_extra = json::object();
    std::vector<std::string> outputs;
    fs::path dir;
    if (!out_dir.empty()) {
      dir = out_dir;
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    }
    auto record = [&](const fs::path& p) { outputs.push_back(fs::relative(p, dir).generic_string()); };

    if (command == "oracle-pid") {
      std::optional<DiscreteJoint> joint;
      if (!joint_path.empty()) {
        std::ifstream in(joint_path);
        if (!in) throw IoError("cannot read " + joint_path);
        json j;
        try {
          in >> j;
          joint.emplace(j.at("n1").get<std::size_t>(), j.at("n2").get<std::size_t>(),
                        j.at("nx").get<std::size_t>(), j.at("table").get<std::vector<double>>());
        } catch (const json::exception& e) {
          throw IoError(joint_path + ": " + e.what());
        }
      } else {
        joint = gate == "rdn" ? rdn_gate() : gate == "unq" ? unq_gate() : xor_gate();
      }
      OracleResult r = discrete_pid_oracle(*joint);
      json result{{"source", joint_path.empty() ? gate : joint_path},
                  {"r", r.expected.redundancy},
                  {"u1", r.expected.unique1},
                  {"u2", r.expected.unique2},
                  {"s", r.expected.synergy},
                  {"mi1", r.expected_mi1},
                  {"mi2", r.expected_mi2},
                  {"mi_joint", r.expected_mi_joint}};
      if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw IoError("cannot write " + csv_path);
        write_oracle_csv(csv, r);
      }
      if (!dir.empty()) {
        std::ostringstream csv;
        write_oracle_csv(csv, r);
        write_text(dir / "oracle.csv", csv.str());
        record(dir / "oracle.csv");
      }
      out << result.dump(2) << '\n';
    } else if (command == "render") {
      FloatImage img = read_pfm(pfm_path);
      std::vector<double> v(img.pixels.begin(), img.pixels.end());
      Heatmap map(img.height, img.width, std::move(v), HeatmapMeta{fs::path(pfm_path).stem().string(), "", false});
      auto resize = [&](const Heatmap& m) {
        if (size.empty()) return m;
        std::size_t h = 0, w = 0;
        char x = 0;
        std::istringstream in(size);
        if (!(in >> h >> x >> w) || (x != 'x' && x != 'X')) throw UsageError("--size expects HxW");
        return bilinear_upsample(m, h, w);
      };
      Heatmap result = resize(map);
      if (!with_path.empty()) {
        FloatImage other = read_pfm(with_path);
        Heatmap m2(other.height, other.width, std::vector<double>(other.pixels.begin(), other.pixels.end()));
        result = intersection_baseline(result, resize(m2), k_sigma);
        result.meta().term = "intersection";
      }
      result.meta().clamped = mode == RenderMode::kClamped;
      export_heatmap(stem, result, mode);
      out << sidecar_json(result).dump(2) << '\n';
    } else if (command == "train-toy") {
      GmmModel model = GmmModel::load(backend_opts.gmm);
      mlp.hidden.clear();
      std::istringstream hs(hidden);
      for (std::string tok; std::getline(hs, tok, ',');) {
        try {
          mlp.hidden.push_back(std::stoul(tok));
        } catch (const std::exception&) {
          throw UsageError("--hidden expects comma separated widths");
        }
      }
      std::vector<double> weights;
      for (const auto& c : model.components()) weights.push_back(c.weight);
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      std::vector<TrainingExample> data;
      data.reserve(n_data);
      for (std::size_t i = 0; i < n_data; ++i) {
        RandomStream stream(mlp.seed, StreamTag::kData, {i});
        const std::size_t k = pick(stream.engine());
        ComponentSubset only{std::vector<bool>(model.size(), false)};
        only.mask[k] = true;
        data.push_back({model.sample(only, stream), k});
      }
      TrainingResult res = train_toy_denoiser(data, model.size(), mlp);
      std::string save = checkpoint_out;
      if (save.empty() && !dir.empty()) save = (dir / "checkpoint.json").string();
      if (!save.empty()) {
        save_checkpoint(save, res);
        if (!dir.empty() && save.rfind(dir.string(), 0) == 0) record(save);
      }
      if (!dir.empty()) {
        std::ostringstream trace;
        trace << "step,loss\n";
        trace.precision(17);
        for (std::size_t i = 0; i < res.loss_trace.size(); ++i) trace << i << ',' << res.loss_trace[i] << '\n';
        write_text(dir / "loss.csv", trace.str());
        record(dir / "loss.csv");
      }
      json result{{"eval_loss_initial", res.eval_loss_initial},
                  {"eval_loss_final", res.eval_loss_final},
                  {"relative_reduction", 1.0 - res.eval_loss_final / res.eval_loss_initial},
                  {"steps", mlp.steps},
                  {"parameters", res.model.parameter_count()},
                  {"checkpoint", save.empty() ? json(nullptr) : json(save)}};
      out << result.dump(2) << '\n';
    } else {
      Backend backend = open_backend(backend_opts);
      manifest_extra["denoiser"] = backend.id;

      if (command == "estimate-mi") {
        est.validate();
        const DenoiserCondition base = backend.condition(base_name);
        const DenoiserCondition cond = conjoin(backend.condition(cond_name), base);
        const LatentField x = resolve_x(xo, backend, cond);
        MiEstimate e = estimate_mi(x, cond, base, backend.denoiser(), est);
        const std::string term = base_name.empty() ? "mi" : "cmi";
        json result{{"term", term},
                    {"cond", describe(cond)},
                    {"base", describe(base)},
                    {"denoiser", backend.id},
                    {"estimator", est.to_json()},
                    {"x", field_json(x)},
                    {"estimate", to_json(e)},
                    {"map", std::vector<double>(e.pointwise_map.values().begin(), e.pointwise_map.values().end())},
                    {"std_error_map",
                     std::vector<double>(e.std_error_map.values().begin(), e.std_error_map.values().end())}};
        if (!dir.empty()) {
          std::string slug = slugify(cond_name);
          if (!base_name.empty()) slug += "_" + slugify(base_name);
          const fs::path stem = dir / (term + "_" + slug);
          export_heatmap(stem.string(), Heatmap::from_field(e.pointwise_map, {term, cond_name, mode == RenderMode::kClamped}), mode);
          const fs::path se_stem = dir / (term + "_se_" + slug);
          export_heatmap(se_stem.string(), Heatmap::from_field(e.std_error_map, {term + "_se", cond_name, false}), RenderMode::kClamped);
          for (const char* ext : {".pfm", ".pgm", ".json"}) {
            record(stem.string() + ext);
            record(se_stem.string() + ext);
          }
          write_text(dir / "estimate.json", result.dump(2) + "\n");
          record(dir / "estimate.json");
        }
        out << result.dump(2) << '\n';
      } else if (command == "estimate-pid" || command == "bias-audit") {
        est.validate();
        std::unique_ptr<PriorProvider> priors = open_priors(backend_opts, backend);
        manifest_extra["priors"] = priors->id();
        std::unique_ptr<CaseResolver> resolver;
        if (backend.model)
          resolver = std::make_unique<GmmCaseResolver>(*backend.model, *priors);
        else if (backend.bridged)
          resolver = std::make_unique<PromptCaseResolver>(*priors);
        else
          throw UsageError(command + " with --checkpoint needs --gmm for condition names");
        Engine engine{backend.denoiser(), *resolver, est};

        std::vector<PromptCase> cases;
        if (!cases_path.empty()) {
          cases = load_cases(cases_path);
          if (!case_id.empty()) {
            std::erase_if(cases, [&](const PromptCase& c) { return c.id != case_id; });
            if (cases.empty()) throw UsageError("no case with id '" + case_id + "'");
          }
        } else if (command == "estimate-pid") {
          if (y1_name.empty() || y2_name.empty()) throw UsageError("estimate-pid needs --cases or --y1 and --y2");
          PromptCase c;
          c.id = "cli";
          c.prompt = y1_name + " " + y2_name;
          c.phrase1.condition = y1_name;
          c.phrase2.condition = y2_name;
          if (!context_name.empty()) c.context = PhraseSelection{context_name, {}};
          c.seed = xo.seed;
          if (!xo.values.empty() || !xo.latent.empty()) c.x = resolve_x(xo, backend, Unconditional{});
          cases.push_back(std::move(c));
        }

        if (command == "estimate-pid") {
          json all = json::array();
          for (const auto& c : cases) {
            std::optional<std::string> case_dir;
            if (!dir.empty()) {
              fs::path d = cases.size() > 1 ? dir / slugify(c.id) : dir;
              fs::create_directories(d);
              case_dir = d.string();
            }
            PidCaseResult r = run_pid_case(c, engine, case_dir, mode);
            for (const auto& f : r.files) record(f);
            json s = r.scalars;
            s["id"] = c.id;
            all.push_back(std::move(s));
          }
          out << (all.size() == 1 ? all[0] : all).dump(2) << '\n';
        } else {
          BiasTable table = run_bias_audit(cases, engine);
          std::ostringstream wide;
          write_bias_table(wide, table);
          if (!dir.empty()) {
            std::ostringstream longform;
            write_bias_csv(longform, table);
            write_text(dir / "bias.csv", longform.str());
            write_text(dir / "bias_table.csv", wide.str());
            record(dir / "bias.csv");
            record(dir / "bias_table.csv");
          }
          out << wide.str();
        }
      } else if (command == "intervene") {
        const DenoiserCondition original = backend.condition(original_name);
        const DenoiserCondition edited = backend.condition(edited_name);
        const LatentField x = resolve_x(xo, backend, original);
        InterventionResult r = prompt_intervention(x, original, edited, noise_alpha, steps,
                                                   backend.denoiser(), est.seed, end_alpha);
        json result{{"original", describe(original)},
                    {"edited", describe(edited)},
                    {"noise_alpha", noise_alpha},
                    {"steps", steps},
                    {"mse", r.mse},
                    {"correlation", r.correlation},
                    {"baseline_mse", r.baseline_mse},
                    {"baseline_correlation", r.baseline_correlation},
                    {"alpha_grid", r.alpha_grid}};
        if (!dir.empty()) {
          write_f32(dir / "input.f32", x);
          write_f32(dir / "edited.f32", r.edited);
          write_f32(dir / "baseline.f32", r.baseline);
          for (const char* f : {"input.f32", "edited.f32", "baseline.f32"}) record(dir / f);
        }
        out << result.dump(2) << '\n';
      } else if (command == "mmse-curves") {
        const DenoiserCondition base = backend.condition(base_name);
        const DenoiserCondition cond = conjoin(backend.condition(cond_name), base);
        const LatentField x = resolve_x(xo, backend, cond);
        std::vector<double> grid_points;
        {
          double lo = 0, hi = 0;
          std::size_t n = 0;
          char c1 = 0, c2 = 0;
          std::istringstream in(grid);
          if (!(in >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':') throw UsageError("--grid expects lo:hi:count");
          grid_points = linspace(lo, hi, n);
        }
        auto rows = mmse_curves(x, cond, base, backend.denoiser(), grid_points, est.seed, est.n_eps, est.threads);
        std::ostringstream csv;
        write_mmse_csv(csv, rows);
        if (!dir.empty()) {
          write_text(dir / "mmse.csv", csv.str());
          record(dir / "mmse.csv");
        }
        out << csv.str();
      } else if (command == "orthogonality") {
        const GmmModel& model = backend.require_model("orthogonality");
        const DenoiserCondition base = backend.condition(base_name);
        const DenoiserCondition cond = conjoin(backend.condition(cond_name), base);
        std::vector<LatentField> samples;
        samples.reserve(n_samples);
        for (std::size_t i = 0; i < n_samples; ++i) {
          RandomStream stream(est.seed, StreamTag::kData, {i});
          samples.push_back(model.sample(cond, stream));
        }
        std::optional<OffsetDenoiser> shifted;
        const Denoiser* d = &backend.denoiser();
        if (offset != 0.0) d = &shifted.emplace(backend.denoiser(), offset);
        auto rows = orthogonality_residual(samples, cond, base, *d, alphas, est.seed, est.n_eps, est.threads);
        json result = json::array();
        for (const auto& r : rows) {
          const double z = r.residual.std_error > 0 ? std::abs(r.residual.mean) / r.residual.std_error : 0.0;
          result.push_back({{"alpha", r.alpha},
                            {"residual", r.residual.mean},
                            {"std_error", r.residual.std_error},
                            {"draws", r.draws},
                            {"abs_over_se", z}});
        }
        if (!dir.empty()) {
          write_text(dir / "orthogonality.json", result.dump(2) + "\n");
          record(dir / "orthogonality.json");
        }
        out << result.dump(2) << '\n';
      }
    }

    if (!dir.empty()) {
      json manifest = json::parse(app.config_to_str(true, true));
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      manifest_extra["tool"] = "dpid";
      manifest_extra["version"] = version();
      manifest_extra["command"] = command;
      manifest_extra["outputs"] = outputs;
      manifest_extra["wall_time_seconds"] = wall;
      manifest["manifest"] = manifest_extra;
      write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    }
    return kExitOk;
  } catch (const UsageError& e) {
    return report(err, kExitUsage, "usage", e.what());
  } catch (const IoError& e) {
    return report(err, kExitInput, "input", e.what());
  } catch (const TransportError& e) {
    return report(err, kExitTransport, "transport", e.what());
  } catch (const DomainError& e) {
    return report(err, kExitEstimation, "domain", e.what());
  } catch (const ShapeError& e) {
    return report(err, kExitEstimation, "shape", e.what());
  } catch (const UnsupportedConditionError& e) {
    return report(err, kExitEstimation, "condition", e.what());
  } catch (const PreconditionError& e) {
    return report(err, kExitEstimation, "precondition", e.what());
  } catch (const fs::filesystem_error& e) {
    return report(err, kExitInput, "input", e.what());
  } catch (const std::exception& e) {
    return report(err, kExitInternal, "internal", e.what());
  }
}

}  // namespace dpid

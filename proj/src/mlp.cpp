// SPDX-License-Identifier: Apache-2.0
#include "dpid/mlp.hpp"

#include <cmath>
#include <fstream>

#include "dpid/error.hpp"
#include "dpid/rng.hpp"

namespace dpid {

nlohmann::json MlpConfig::to_json() const {
  return {{"hidden", hidden},
          {"steps", steps},
          {"batch", batch},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_epsilon", adam_epsilon},
          {"uncond_prob", uncond_prob},
          {"seed", seed},
          {"sampler",
           {{"location", sampler.location},
            {"scale", sampler.scale},
            {"lower", sampler.lower},
            {"upper", sampler.upper}}}};
}

MlpConfig MlpConfig::from_json(const nlohmann::json& j) {
  MlpConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.uncond_prob = j.value("uncond_prob", c.uncond_prob);
  c.seed = j.value("seed", c.seed);
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    c.sampler.location = s.value("location", c.sampler.location);
    c.sampler.scale = s.value("scale", c.sampler.scale);
    c.sampler.lower = s.value("lower", c.sampler.lower);
    c.sampler.upper = s.value("upper", c.sampler.upper);
  }
  return c;
}

MlpDenoiser::MlpDenoiser(Shape shape, std::size_t num_conditions, std::vector<std::size_t> hidden,
                         std::uint64_t init_seed)
    : shape_(shape), num_conditions_(num_conditions), init_seed_(init_seed) {
  std::vector<std::size_t> sizes{input_dim()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(shape.count());
  RandomStream stream(init_seed, StreamTag::kInit);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double scale = std::sqrt(1.0 / static_cast<double>(sizes[l]));
    Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * stream.normal();
    }
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[l + 1])));
  }
}

std::vector<std::size_t> MlpDenoiser::layer_sizes() const {
  std::vector<std::size_t> sizes{input_dim()};
  for (const auto& w : weights_) sizes.push_back(static_cast<std::size_t>(w.rows()));
  return sizes;
}

std::size_t MlpDenoiser::condition_slot(const DenoiserCondition& condition) const {
  if (std::holds_alternative<Unconditional>(condition)) return num_conditions_;
  if (const auto* s = std::get_if<ComponentSubset>(&condition)) {
    if (s->mask.size() == num_conditions_) {
      std::size_t slot = num_conditions_, count = 0;
      for (std::size_t k = 0; k < s->mask.size(); ++k) {
        if (s->mask[k]) {
          slot = k;
          ++count;
        }
      }
      if (count == 1) return slot;
    }
  }
  throw UnsupportedConditionError("mlp denoiser: cannot condition on " + describe(condition));
}

void MlpDenoiser::write_features(Eigen::Ref<Eigen::VectorXd> column, std::span<const double> x_alpha,
                                 const LogSnrPoint& point, std::size_t slot) const {
  const std::size_t d = shape_.count();
  column.setZero();
  for (std::size_t i = 0; i < d; ++i) column(static_cast<Eigen::Index>(i)) = x_alpha[i];
  column(static_cast<Eigen::Index>(d)) = point.signal;
  column(static_cast<Eigen::Index>(d + 1)) = point.noise;
  column(static_cast<Eigen::Index>(d + 2 + slot)) = 1.0;
}

Eigen::MatrixXd MlpDenoiser::forward(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = (weights_[l] * h).colwise() + biases_[l];
    h = (l + 1 < weights_.size()) ? Eigen::MatrixXd(z.array().tanh()) : std::move(z);
  }
  return h;
}

LatentField MlpDenoiser::predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                                     const DenoiserCondition& condition) const {
  if (x_alpha.shape() != shape_) throw ShapeError("mlp denoiser: input shape " + to_string(x_alpha.shape()));
  if (!std::isfinite(point.alpha)) throw DomainError("mlp denoiser: non-finite log-SNR");
  Eigen::MatrixXd in(static_cast<Eigen::Index>(input_dim()), 1);
  write_features(in.col(0), x_alpha.values(), point, condition_slot(condition));
  const Eigen::MatrixXd out = forward(in);
  std::vector<double> values(out.data(), out.data() + out.size());
  return LatentField(shape_, std::move(values));
}

double MlpDenoiser::loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                      std::vector<double>* gradient) const {
  const std::size_t layers = weights_.size();
  std::vector<Eigen::MatrixXd> acts{inputs};
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = (weights_[l] * acts.back()).colwise() + biases_[l];
    acts.push_back(l + 1 < layers ? Eigen::MatrixXd(z.array().tanh()) : std::move(z));
  }
  const double n = static_cast<double>(inputs.cols());
  const Eigen::MatrixXd diff = acts.back() - targets;
  const double loss = diff.squaredNorm() / n;
  if (gradient == nullptr) return loss;

  gradient->assign(parameter_count(), 0.0);
  std::vector<Eigen::MatrixXd> grad_w(layers);
  std::vector<Eigen::VectorXd> grad_b(layers);
  Eigen::MatrixXd delta = (2.0 / n) * diff;
  for (std::size_t l = layers; l-- > 0;) {
    grad_w[l] = delta * acts[l].transpose();
    grad_b[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (weights_[l].transpose() * delta).cwiseProduct(
          (1.0 - acts[l].array().square()).matrix());
    }
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::Map<Eigen::MatrixXd>(gradient->data() + offset, grad_w[l].rows(), grad_w[l].cols()) = grad_w[l];
    offset += static_cast<std::size_t>(grad_w[l].size());
    Eigen::Map<Eigen::VectorXd>(gradient->data() + offset, grad_b[l].size()) = grad_b[l];
    offset += static_cast<std::size_t>(grad_b[l].size());
  }
  return loss;
}

std::size_t MlpDenoiser::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

std::vector<double> MlpDenoiser::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    flat.insert(flat.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
    flat.insert(flat.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
  }
  return flat;
}

void MlpDenoiser::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw PreconditionError("mlp: parameter count mismatch");
  for (double v : flat) {
    if (!std::isfinite(v)) throw DomainError("mlp: non-finite parameter");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] = flat[offset++];
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l].data()[i] = flat[offset++];
  }
}

nlohmann::json MlpDenoiser::to_json() const {
  nlohmann::json j;
  j["format"] = "dpid-mlp-v1";
  j["shape"] = {shape_.channels, shape_.height, shape_.width};
  j["num_conditions"] = num_conditions_;
  j["layer_sizes"] = layer_sizes();
  j["init_seed"] = init_seed_;
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    // Column-major, Eigen's native order.
    j["weights"].push_back(std::vector<double>(weights_[l].data(), weights_[l].data() + weights_[l].size()));
    j["biases"].push_back(std::vector<double>(biases_[l].data(), biases_[l].data() + biases_[l].size()));
  }
  return j;
}

MlpDenoiser MlpDenoiser::from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("shape").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw IoError("mlp checkpoint: bad shape");
    const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    if (sizes.size() < 2) throw IoError("mlp checkpoint: need at least two layer sizes");
    std::vector<std::size_t> hidden(sizes.begin() + 1, sizes.end() - 1);
    MlpDenoiser m(Shape{dims[0], dims[1], dims[2]}, j.at("num_conditions").get<std::size_t>(), hidden,
                  j.value("init_seed", std::uint64_t{0}));
    if (m.layer_sizes() != sizes) throw IoError("mlp checkpoint: layer sizes inconsistent with shape");
    std::vector<double> flat;
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != m.weights_.size() || bs.size() != m.biases_.size()) {
      throw IoError("mlp checkpoint: wrong number of layers");
    }
    for (std::size_t l = 0; l < ws.size(); ++l) {
      auto w = ws[l].get<std::vector<double>>();
      auto b = bs[l].get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(m.weights_[l].size()) ||
          b.size() != static_cast<std::size_t>(m.biases_[l].size())) {
        throw IoError("mlp checkpoint: layer " + std::to_string(l) + " has wrong weight count");
      }
      flat.insert(flat.end(), w.begin(), w.end());
      flat.insert(flat.end(), b.begin(), b.end());
    }
    m.set_parameters(flat);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("mlp checkpoint: ") + e.what());
  }
}

namespace {

void fill_batch(const MlpDenoiser& model, std::span<const TrainingExample> dataset,
                const MlpConfig& config, RandomStream& stream, Eigen::MatrixXd& inputs,
                Eigen::MatrixXd& targets) {
  const std::size_t d = model.shape().count();
  std::vector<double> x_alpha(d);
  for (Eigen::Index col = 0; col < inputs.cols(); ++col) {
    const TrainingExample& ex = dataset[stream.index(dataset.size())];
    const LogSnrPoint point = LogSnrPoint::at(config.sampler.quantile(stream.uniform_open()));
    const std::size_t slot =
        stream.uniform_open() < config.uncond_prob ? model.num_conditions() : ex.condition;
    for (std::size_t i = 0; i < d; ++i) {
      const double eps = stream.normal();
      targets(static_cast<Eigen::Index>(i), col) = eps;
      x_alpha[i] = point.signal * ex.x[i] + point.noise * eps;
    }
    model.write_features(inputs.col(col), x_alpha, point, slot);
  }
}

}  // namespace

TrainingResult train_toy_denoiser(std::span<const TrainingExample> dataset,
                                  std::size_t num_conditions, const MlpConfig& config) {
  if (dataset.empty()) throw PreconditionError("train_toy_denoiser: empty dataset");
  if (config.batch == 0) throw PreconditionError("train_toy_denoiser: batch must be >= 1");
  config.sampler.validate();
  const Shape shape = dataset.front().x.shape();
  for (const auto& ex : dataset) {
    if (ex.x.shape() != shape) throw ShapeError("train_toy_denoiser: inconsistent example shapes");
    if (ex.condition >= num_conditions) throw PreconditionError("train_toy_denoiser: condition id out of range");
  }

  TrainingResult result{MlpDenoiser(shape, num_conditions, config.hidden, config.seed), config, {}, 0, 0};
  MlpDenoiser& model = result.model;
  const auto in_dim = static_cast<Eigen::Index>(model.input_dim());
  const auto out_dim = static_cast<Eigen::Index>(shape.count());

  Eigen::MatrixXd eval_in(in_dim, 2048), eval_target(out_dim, 2048);
  {
    RandomStream eval_stream(config.seed, StreamTag::kTraining, {~std::uint64_t{0}});
    fill_batch(model, dataset, config, eval_stream, eval_in, eval_target);
  }
  result.eval_loss_initial = model.loss_and_gradient(eval_in, eval_target, nullptr);

  std::vector<double> params = model.parameters();
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  Eigen::MatrixXd in(in_dim, static_cast<Eigen::Index>(config.batch));
  Eigen::MatrixXd target(out_dim, static_cast<Eigen::Index>(config.batch));
  double b1t = 1.0, b2t = 1.0;
  result.loss_trace.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    RandomStream stream(config.seed, StreamTag::kTraining, {step});
    fill_batch(model, dataset, config, stream, in, target);
    const double loss = model.loss_and_gradient(in, target, &grad);
    if (!std::isfinite(loss)) {
      throw DomainError("train_toy_denoiser: loss diverged at step " + std::to_string(step));
    }
    result.loss_trace.push_back(loss);
    b1t *= config.beta1;
    b2t *= config.beta2;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / (1.0 - b1t);
      const double v_hat = v[i] / (1.0 - b2t);
      params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
    model.set_parameters(params);
  }
  result.eval_loss_final = model.loss_and_gradient(eval_in, eval_target, nullptr);
  return result;
}

void save_checkpoint(const std::string& path, const TrainingResult& result) {
  nlohmann::json j = result.model.to_json();
  j["training"] = result.config.to_json();
  j["eval_loss_initial"] = result.eval_loss_initial;
  j["eval_loss_final"] = result.eval_loss_final;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(1) << '\n';
}

MlpDenoiser load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return MlpDenoiser::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace dpid

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dpid/error.hpp"
#include "dpid/gmm.hpp"
#include "dpid/mlp.hpp"

using namespace dpid;

namespace {

std::vector<TrainingExample> toy_data(std::size_t n) {
  const GmmModel m = GmmModel::load(DPID_FIXTURES "/two_comp.json");
  std::vector<TrainingExample> data;
  RandomStream rng(1, StreamTag::kData);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % 2;
    data.push_back({m.sample(m.subset({k}), rng), k});
  }
  return data;
}

}  // namespace

TEST_SUITE("mlp") {
  TEST_CASE("analytic gradient matches finite differences") {
    MlpDenoiser net(Shape{1, 1, 2}, 2, {5, 4}, 3);
    RandomStream rng(2, StreamTag::kData);
    Eigen::MatrixXd in(net.input_dim(), 6), tgt(2, 6);
    for (int c = 0; c < 6; ++c) {
      const std::vector<double> xa{rng.normal(), rng.normal()};
      net.write_features(in.col(c), xa, LogSnrPoint::at(rng.normal()), c % 3);
      tgt(0, c) = rng.normal();
      tgt(1, c) = rng.normal();
    }
    std::vector<double> grad;
    net.loss_and_gradient(in, tgt, &grad);
    REQUIRE(grad.size() == net.parameter_count());
    const auto base = net.parameters();
    const double h = 1e-6;
    for (std::size_t t = 0; t < 10; ++t) {
      const std::size_t i = (t * 7919) % base.size();
      auto p = base;
      p[i] = base[i] + h;
      net.set_parameters(p);
      const double up = net.loss_and_gradient(in, tgt, nullptr);
      p[i] = base[i] - h;
      net.set_parameters(p);
      const double down = net.loss_and_gradient(in, tgt, nullptr);
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::max(1.0, std::abs(grad[i])));
    }
  }

  TEST_CASE("zero steps keeps the initialization") {
    MlpConfig cfg;
    cfg.steps = 0;
    cfg.seed = 4;
    const auto data = toy_data(64);
    const TrainingResult r = train_toy_denoiser(data, 2, cfg);
    const MlpDenoiser fresh(Shape{1, 1, 1}, 2, cfg.hidden, 4);
    CHECK(r.model.parameters() == fresh.parameters());
    CHECK(r.loss_trace.empty());
  }

  TEST_CASE("short training lowers the loss and is reproducible") {
    MlpConfig cfg;
    cfg.steps = 300;
    cfg.batch = 64;
    cfg.seed = 2;
    const auto data = toy_data(512);
    const TrainingResult a = train_toy_denoiser(data, 2, cfg);
    const TrainingResult b = train_toy_denoiser(data, 2, cfg);
    CHECK(a.eval_loss_final < a.eval_loss_initial);
    CHECK(a.model.parameters() == b.model.parameters());
    CHECK(a.loss_trace.size() == 300);
  }

  TEST_CASE("divergence is reported") {
    MlpConfig cfg;
    cfg.steps = 200;
    cfg.learning_rate = 1e200;
    const auto data = toy_data(64);
    CHECK_THROWS_AS(train_toy_denoiser(data, 2, cfg), DomainError);
  }

  TEST_CASE("checkpoint round trip") {
    MlpConfig cfg;
    cfg.steps = 20;
    cfg.hidden = {8};
    const auto data = toy_data(64);
    const TrainingResult r = train_toy_denoiser(data, 2, cfg);
    const auto path = std::filesystem::temp_directory_path() / "dpid_unit_ckpt.json";
    save_checkpoint(path.string(), r);
    const MlpDenoiser back = load_checkpoint(path.string());
    std::filesystem::remove(path);
    CHECK(back.parameters() == r.model.parameters());
    CHECK(back.layer_sizes() == r.model.layer_sizes());
    const LatentField xa = LatentField::scalar(0.3);
    const LogSnrPoint p = LogSnrPoint::at(0.5);
    const ComponentSubset c1{{false, true}};
    CHECK(back.predict_eps(xa, p, c1) == r.model.predict_eps(xa, p, c1));
    CHECK(back.condition_slot(Unconditional{}) == 2);
    CHECK(back.condition_slot(c1) == 1);
    CHECK_THROWS_AS(back.condition_slot(ComponentSubset{{true, true}}), UnsupportedConditionError);
    CHECK_THROWS_AS(back.condition_slot(PromptText{"cat"}), UnsupportedConditionError);
  }
}

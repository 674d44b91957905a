// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dpid/bridge.hpp"
#include "dpid/error.hpp"
#include "dpid/priors.hpp"
#include "dpid/rng.hpp"
#include "fixture_server.hpp"

using namespace dpid;

TEST_SUITE("bridge") {
  TEST_CASE("base64 float32 round trip") {
    const std::vector<double> v{0.0, -1.5, 3.25, 1e-3, 12345.0};
    const auto back = decode_f32_base64(encode_f32_base64(v));
    REQUIRE(back.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(v[i])));
    for (std::size_t n = 0; n < 7; ++n) CHECK(decode_f32_base64(encode_f32_base64(std::vector<double>(n, 2.0))).size() == n);
    CHECK(encode_f32_base64(std::vector<double>{1.0}) == "AACAPw==");
    CHECK_THROWS_AS(decode_f32_base64("abc"), ShapeError);
    CHECK_THROWS_AS(decode_f32_base64("AAAA"), ShapeError);
  }

  TEST_CASE("echo server round trip") {
    fixture::Server server;
    fixture::install_echo(server, {4, 8, 8});
    const BridgeClient client(server.start(), 5.0);
    const BridgeInfo info = client.info();
    CHECK(info.latent_shape == Shape{4, 8, 8});
    CHECK(info.alpha_min == -12.0);
    CHECK(info.model == "echo");

    RandomStream rng(1, StreamTag::kData);
    LatentField latent = rng.normal_field(info.latent_shape);
    for (std::size_t i = 0; i < latent.size(); ++i) latent[i] = static_cast<float>(latent[i]);
    const std::vector<DenoiseItem> items{{latent, 0.5, std::string("a cat")}, {latent, -1.0, std::nullopt}};
    const auto out = client.denoise(items);
    REQUIRE(out.size() == 2);
    for (const auto& r : out) {
      CHECK(r.timestep == 500.0);
      REQUIRE(r.echo.has_value());
      CHECK(*r.echo == latent);
      for (double e : r.eps.values()) CHECK(e == 0.0);
    }

    const BridgedDenoiser d(client);
    const std::vector<DenoiserCondition> conds{Unconditional{}, PromptText{"a dog"}};
    const auto many = d.predict_eps_many(latent, LogSnrPoint::at(1.0), conds);
    CHECK(many.size() == 2);
    CHECK(d.predict_eps(latent, LogSnrPoint::at(1.0), PromptText{"x"}) == LatentField(info.latent_shape));
    CHECK_THROWS_AS(d.predict_eps(LatentField(Shape{1, 8, 8}), LogSnrPoint::at(0.0), Unconditional{}), ShapeError);
  }

  TEST_CASE("masked-token log probabilities") {
    fixture::Server server;
    fixture::install_echo(server, {1, 2, 2}, 1000);
    const BridgeClient client(server.start(), 5.0);
    const std::vector<std::string> targets{"fire", "truck"};
    const auto r = client.logprob("[MASK] [MASK]", targets);
    REQUIRE(r.log_probs.size() == 2);
    CHECK(r.log_probs[0] == doctest::Approx(-std::log(1000.0)));
    CHECK(r.sum == doctest::Approx(-2.0 * std::log(1000.0)));

    const BridgePriorProvider priors(client);
    CHECK(priors.lookup("fire truck").log_prob == doctest::Approx(-2.0 * std::log(1000.0)));
    CHECK(priors.id() == "bridge:" + client.url());
  }

  TEST_CASE("recorded interactions") {
    fixture::Server server;
    fixture::install_cassette(server, DPID_FIXTURES "/bridge/logprob_cassette.json");
    const BridgeClient client(server.start(), 5.0);
    const BridgePriorProvider priors(client);
    CHECK(priors.lookup("doctor").log_prob == doctest::Approx(-9.2103));
    const PhraseLogProb c = priors.lookup("doctor", std::string("a photo of a"));
    CHECK(c.log_prob == doctest::Approx(-4.6052));
    CHECK(c.context == std::optional<std::string>("a photo of a"));
    CHECK(priors.lookup("fire truck").log_prob == doctest::Approx(-10.3));
    CHECK(priors.clamp_events() == 0);
    const PhraseLogProb rare = priors.lookup("zyzzyva");
    CHECK(rare.log_prob == doctest::Approx(std::log(1e-12)));
    CHECK(priors.clamp_events() == 1);
    CHECK_THROWS_AS(priors.lookup("nurse"), UnsupportedConditionError);
    CHECK_THROWS_AS(priors.lookup("   "), PreconditionError);
  }

  TEST_CASE("templates") {
    CHECK(BridgePriorProvider::masked_template("fire truck", std::nullopt) == "[MASK] [MASK]");
    CHECK(BridgePriorProvider::masked_template("cat", std::string("")) == "[MASK]");
    CHECK(BridgePriorProvider::masked_template("cat", std::string("a {} on a mat")) == "a [MASK] on a mat");
    CHECK(BridgePriorProvider::masked_template("cat", std::string("a photo of a")) == "a photo of a [MASK]");
  }

  TEST_CASE("http status mapping") {
    const std::vector<std::string> targets{"cat"};
    {
      fixture::Server server;
      fixture::install_status(server, 400);
      const BridgeClient client(server.start(), 5.0);
      CHECK_THROWS_AS(client.logprob("[MASK]", targets), ShapeError);
    }
    {
      fixture::Server server;
      fixture::install_status(server, 422);
      const BridgeClient client(server.start(), 5.0);
      CHECK_THROWS_AS(client.logprob("[MASK]", targets), UnsupportedConditionError);
    }
    {
      fixture::Server server;
      fixture::install_status(server, 503);
      const BridgeClient client(server.start(), 5.0);
      CHECK_THROWS_AS(client.info(), TransportError);
    }
    const BridgeClient nowhere("http://127.0.0.1:1", 1.0);
    CHECK_THROWS_AS(nowhere.info(), TransportError);
  }

  TEST_CASE("malformed responses") {
    fixture::Server server;
    server.raw().Get("/v1/info", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json", "application/json");
    });
    server.raw().Post("/v1/logprob", [](const httplib::Request&, httplib::Response& res) {
      fixture::reply(res, {{"log_probs", {0.5}}, {"sum", 0.5}});
    });
    const BridgeClient client(server.start(), 5.0);
    CHECK_THROWS_AS(client.info(), TransportError);
    const BridgePriorProvider priors(client);
    CHECK_THROWS_AS(priors.lookup("cat"), TransportError);
  }
}

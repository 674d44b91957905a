// SPDX-License-Identifier: Apache-2.0
#pragma once

// In-process bridge servers for client tests.

#include <cmath>
#include <fstream>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dpid/bridge.hpp"

namespace fixture {

class Server {
 public:
  Server() = default;
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Server& raw() { return server_; }

  std::string start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return url();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

inline void reply(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

/// Zero noise prediction, echoes the latent back, uniform masked-token
/// probabilities over a `vocab`-sized vocabulary.
inline void install_echo(Server& s, std::vector<std::size_t> shape, std::size_t vocab = 30522) {
  s.raw().Get("/v1/info", [shape](const httplib::Request&, httplib::Response& res) {
    reply(res, {{"latent_shape", shape}, {"alpha_range", {-12.0, 12.0}}, {"model", "echo"},
                {"parameterization", "eps"}});
  });
  s.raw().Post("/v1/denoise", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& item : body.at("items")) {
      const auto latent = dpid::decode_f32_base64(item.at("latent").get<std::string>());
      const std::vector<double> zeros(latent.size(), 0.0);
      out.push_back({{"eps", dpid::encode_f32_base64(zeros)},
                     {"shape", item.at("shape")},
                     {"timestep", 500.0},
                     {"echo", item.at("latent")}});
    }
    reply(res, {{"items", out}});
  });
  s.raw().Post("/v1/logprob", [vocab](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const double lp = -std::log(static_cast<double>(vocab));
    const std::size_t n = body.at("targets").size();
    reply(res, {{"log_probs", std::vector<double>(n, lp)}, {"sum", lp * static_cast<double>(n)}});
  });
}

/// Replays recorded /v1/logprob interactions; unknown requests get 422.
inline void install_cassette(Server& s, const std::string& path) {
  std::ifstream in(path);
  const auto cassette = nlohmann::json::parse(in);
  s.raw().Post("/v1/logprob", [cassette](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    for (const auto& it : cassette.at("interactions")) {
      if (it.at("request") == body) return reply(res, it.at("response"));
    }
    reply(res, {{"error", "no recorded interaction"}}, 422);
  });
}

/// Every endpoint answers with `status`.
inline void install_status(Server& s, int status) {
  auto h = [status](const httplib::Request&, httplib::Response& res) {
    reply(res, {{"error", "fixture"}}, status);
  };
  s.raw().Get("/v1/info", h);
  s.raw().Post("/v1/denoise", h);
  s.raw().Post("/v1/logprob", h);
}

}  // namespace fixture

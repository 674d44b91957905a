// SPDX-License-Identifier: Apache-2.0
#include "dpid/bridge.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include <httplib.h>
#include <openssl/evp.h>

#include "dpid/error.hpp"

namespace dpid {

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

std::string encode_f32_base64(std::span<const double> values) {
  std::vector<unsigned char> raw(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(raw.data() + 4 * i, &f, 4);
  }
  std::string out(4 * ((raw.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), raw.data(),
                                static_cast<int>(raw.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<double> decode_f32_base64(const std::string& text) {
  if (text.size() % 4 != 0) throw ShapeError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> raw(text.size() / 4 * 3 + 1);
  const int n = EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ShapeError("malformed base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t bytes = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --bytes;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --bytes;
  if (bytes % 4 != 0) throw ShapeError("payload is not a whole number of float32 values");
  std::vector<double> out(bytes / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f;
    std::memcpy(&f, raw.data() + 4 * i, 4);
    out[i] = f;
  }
  return out;
}

namespace {

Shape shape_from_json(const nlohmann::json& j) {
  const auto dims = j.get<std::vector<std::size_t>>();
  if (dims.size() != 3) throw ShapeError("bridge: shape must have three entries");
  return Shape{dims[0], dims[1], dims[2]};
}

LatentField field_from_wire(const std::string& b64, const Shape& shape) {
  auto values = decode_f32_base64(b64);
  if (values.size() != shape.count()) {
    throw ShapeError("bridge: payload holds " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  }
  return LatentField(shape, std::move(values));
}

[[noreturn]] void raise_http(int status, const std::string& path, const std::string& body) {
  const std::string what = "bridge " + path + ": HTTP " + std::to_string(status) + ": " + body;
  if (status == 400) throw ShapeError(what);
  if (status == 422) throw UnsupportedConditionError(what);
  throw TransportError(what);
}

}  // namespace

BridgeClient::BridgeClient(std::string url, double timeout_seconds)
    : url_(std::move(url)), timeout_seconds_(timeout_seconds) {}

nlohmann::json BridgeClient::get(const std::string& path) const {
  httplib::Client cli(url_);
  cli.set_read_timeout(std::chrono::duration<double>(timeout_seconds_));
  auto res = cli.Get(path);
  if (!res) throw TransportError("bridge " + path + ": " + httplib::to_string(res.error()));
  if (res->status != 200) raise_http(res->status, path, res->body);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError("bridge " + path + ": malformed response: " + e.what());
  }
}

nlohmann::json BridgeClient::post(const std::string& path, const nlohmann::json& body) const {
  httplib::Client cli(url_);
  cli.set_read_timeout(std::chrono::duration<double>(timeout_seconds_));
  auto res = cli.Post(path, body.dump(), "application/json");
  if (!res) throw TransportError("bridge " + path + ": " + httplib::to_string(res.error()));
  if (res->status != 200) raise_http(res->status, path, res->body);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError("bridge " + path + ": malformed response: " + e.what());
  }
}

BridgeInfo BridgeClient::info() const {
  const auto j = get("/v1/info");
  try {
    BridgeInfo info;
    info.latent_shape = shape_from_json(j.at("latent_shape"));
    const auto range = j.at("alpha_range").get<std::vector<double>>();
    if (range.size() != 2 || !(range[0] < range[1])) throw TransportError("bridge: invalid alpha_range");
    info.alpha_min = range[0];
    info.alpha_max = range[1];
    info.model = j.value("model", "");
    info.parameterization = j.value("parameterization", "eps");
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("bridge /v1/info: ") + e.what());
  }
}

std::vector<DenoiseResult> BridgeClient::denoise(std::span<const DenoiseItem> items) const {
  nlohmann::json req;
  req["items"] = nlohmann::json::array();
  for (const auto& item : items) {
    const Shape& s = item.latent.shape();
    nlohmann::json ji{{"latent", encode_f32_base64(item.latent.values())},
                      {"shape", {s.channels, s.height, s.width}},
                      {"alpha", item.alpha}};
    ji["prompt"] = item.prompt ? nlohmann::json(*item.prompt) : nlohmann::json(nullptr);
    req["items"].push_back(std::move(ji));
  }
  const auto res = post("/v1/denoise", req);
  try {
    const auto& out = res.at("items");
    if (out.size() != items.size()) {
      throw TransportError("bridge: " + std::to_string(out.size()) + " responses for " +
                           std::to_string(items.size()) + " requests");
    }
    std::vector<DenoiseResult> results;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Shape shape = shape_from_json(out[i].at("shape"));
      if (shape != items[i].latent.shape()) {
        throw ShapeError("bridge: response shape " + to_string(shape) + " for request " +
                         to_string(items[i].latent.shape()));
      }
      DenoiseResult r{field_from_wire(out[i].at("eps").get<std::string>(), shape),
                      out[i].value("timestep", 0.0), std::nullopt};
      if (out[i].contains("echo")) r.echo = field_from_wire(out[i].at("echo").get<std::string>(), shape);
      results.push_back(std::move(r));
    }
    return results;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("bridge /v1/denoise: ") + e.what());
  }
}

LogProbResult BridgeClient::logprob(const std::string& masked_template,
                                    std::span<const std::string> targets) const {
  nlohmann::json req{{"template", masked_template},
                     {"targets", std::vector<std::string>(targets.begin(), targets.end())}};
  const auto res = post("/v1/logprob", req);
  try {
    LogProbResult r;
    r.log_probs = res.at("log_probs").get<std::vector<double>>();
    r.sum = res.at("sum").get<double>();
    if (r.log_probs.size() != targets.size()) throw TransportError("bridge: log_probs count mismatch");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("bridge /v1/logprob: ") + e.what());
  }
}

BridgedDenoiser::BridgedDenoiser(const BridgeClient& client) : client_(client), info_(client.info()) {}

LatentField BridgedDenoiser::predict_eps(const LatentField& x_alpha, const LogSnrPoint& point,
                                         const DenoiserCondition& condition) const {
  return predict_eps_many(x_alpha, point, std::span<const DenoiserCondition>(&condition, 1)).front();
}

std::vector<LatentField> BridgedDenoiser::predict_eps_many(
    const LatentField& x_alpha, const LogSnrPoint& point,
    std::span<const DenoiserCondition> conditions) const {
  if (x_alpha.shape() != info_.latent_shape) {
    throw ShapeError("bridge: latent " + to_string(x_alpha.shape()) + " but server serves " +
                     to_string(info_.latent_shape));
  }
  std::vector<DenoiseItem> items;
  for (const auto& c : conditions) items.push_back({x_alpha, point.alpha, prompt_text(c)});
  auto results = client_.denoise(items);
  std::vector<LatentField> out;
  for (auto& r : results) out.push_back(std::move(r.eps));
  return out;
}

}  // namespace dpid

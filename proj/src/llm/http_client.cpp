// Eigen must come before httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include "mhf/llm_client.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace mhf {

void HttpClientConfig::validate() const {
  static const std::regex url(R"(^https?://[^/]+(/.*)?$)");
  if (!std::regex_match(endpoint, url)) throw ConfigError(fmt::format("endpoint '{}' is not an http(s) URL", endpoint));
  if (model.empty()) throw ConfigError("llm model name is empty");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (backoff_ms < 0) throw ConfigError("backoff_ms must be >= 0");
  if (timeout_seconds < 1) throw ConfigError("timeout_seconds must be >= 1");
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
}

nlohmann::json HttpClientConfig::to_json() const {
  return {{"endpoint", endpoint},       {"model", model},           {"api_key_env", api_key_env},
          {"temperature", temperature}, {"max_tokens", max_tokens}, {"max_in_flight", max_in_flight},
          {"max_retries", max_retries}, {"backoff_ms", backoff_ms}, {"timeout_seconds", timeout_seconds},
          {"transcript", transcript}};
}

HttpClientConfig HttpClientConfig::from_json(const nlohmann::json& j) {
  HttpClientConfig c;
  try {
    for (const auto& [key, _] : j.items()) {
      if (!c.to_json().contains(key)) throw ConfigError(fmt::format("unknown llm client key '{}'", key));
    }
    c.endpoint = j.at("endpoint").get<std::string>();
    c.model = j.at("model").get<std::string>();
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.transcript = j.value("transcript", c.transcript);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed llm client config: {}", e.what()));
  }
  c.validate();
  return c;
}

HttpClient::HttpClient(HttpClientConfig config) : config_(std::move(config)) {
  config_.validate();
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  std::regex_match(config_.endpoint, m, url);
  base_ = m[1];
  path_ = m[2].matched ? std::string(m[2]) : "/";
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    api_key_ = key;
  } else {
    spdlog::warn("{} is not set; sending requests without an API key", config_.api_key_env);
  }
}

LlmResponse HttpClient::call(const LlmRequest& request) {
  LlmResponse out{request.id, {}, {}, 0};
  nlohmann::json body = {{"model", config_.model},
                         {"messages", {{{"role", "user"}, {"content", request.prompt}}}},
                         {"temperature", config_.temperature},
                         {"max_tokens", config_.max_tokens}};
  httplib::Client cli(base_);
  cli.set_connection_timeout(config_.timeout_seconds);
  cli.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);

  int delay = config_.backoff_ms;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    out.attempts = attempt + 1;
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    bool retry = false;
    if (!res) {
      out.error = fmt::format("transport error: {}", httplib::to_string(res.error()));
      retry = true;
    } else if (res->status == 200) {
      try {
        out.text = nlohmann::json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
        out.error.clear();
        return out;
      } catch (const nlohmann::json::exception& e) {
        out.error = fmt::format("malformed completion body: {}", e.what());
        return out;
      }
    } else {
      out.error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 200));
      retry = res->status == 429 || res->status >= 500;
    }
    if (!retry || attempt == config_.max_retries) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    delay *= 2;
  }
  return out;
}

void HttpClient::log(const LlmRequest& request, const LlmResponse& response) {
  if (config_.transcript.empty()) return;
  nlohmann::json rec = {{"id", request.id},          {"model", config_.model},  {"prompt", request.prompt},
                        {"response", response.text}, {"error", response.error}, {"attempts", response.attempts}};
  std::lock_guard lock(transcript_mutex_);
  std::ofstream out(config_.transcript, std::ios::app);
  out << rec.dump() << "\n";
}

std::string HttpClient::complete(const std::string& prompt) {
  LlmRequest req{"single", prompt};
  auto resp = call(req);
  log(req, resp);
  if (!resp.ok()) throw Error(resp.error);
  return resp.text;
}

std::vector<LlmResponse> HttpClient::complete_all(std::span<const LlmRequest> requests) {
  std::vector<LlmResponse> out(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      out[i] = call(requests[i]);
      log(requests[i], out[i]);
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(config_.max_in_flight), requests.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace mhf

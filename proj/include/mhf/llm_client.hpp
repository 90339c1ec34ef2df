#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhf/eval.hpp"
#include "mhf/llm.hpp"

namespace mhf {

struct LlmRequest {
  std::string id;
  std::string prompt;
};

struct LlmResponse {
  std::string id;
  std::string text;
  std::string error;  // empty on success
  int attempts = 0;
  bool ok() const { return error.empty(); }
};

class LLMClient {
 public:
  virtual ~LLMClient() = default;
  virtual std::string name() const = 0;
  // Throws mhf::Error when no response could be obtained.
  virtual std::string complete(const std::string& prompt) = 0;
  // Responses come back in request order and carry the request id. The
  // default runs complete() sequentially.
  virtual std::vector<LlmResponse> complete_all(std::span<const LlmRequest> requests);
};

// Rule-based and deterministic. Few-shot prompts get the label of the
// nearest example table, statistical prompts the nearest class mean,
// everything else "Normal".
class MockClient : public LLMClient {
 public:
  std::string name() const override { return "mock"; }
  std::string complete(const std::string& prompt) override;
};

struct HttpClientConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  std::string api_key_env = "MHF_LLM_API_KEY";
  double temperature = 0.0;
  int max_tokens = 16;
  int max_in_flight = 4;
  int max_retries = 3;
  int backoff_ms = 250;  // doubled after each failed attempt
  int timeout_seconds = 60;
  std::string transcript;  // JSON-lines log; empty disables

  void validate() const;
  nlohmann::json to_json() const;
  static HttpClientConfig from_json(const nlohmann::json& j);
};

// OpenAI-compatible chat-completions client.
class HttpClient : public LLMClient {
 public:
  explicit HttpClient(HttpClientConfig config);
  std::string name() const override { return config_.model; }
  std::string complete(const std::string& prompt) override;
  std::vector<LlmResponse> complete_all(std::span<const LlmRequest> requests) override;

 private:
  LlmResponse call(const LlmRequest& request);
  void log(const LlmRequest& request, const LlmResponse& response);

  HttpClientConfig config_;
  std::string base_;
  std::string path_;
  std::optional<std::string> api_key_;
  std::mutex transcript_mutex_;
};

// Serves responses from an HttpClient transcript, matched by request id.
class ReplayClient : public LLMClient {
 public:
  explicit ReplayClient(const std::filesystem::path& transcript);
  std::string name() const override { return "replay"; }
  std::string complete(const std::string& prompt) override;
  std::vector<LlmResponse> complete_all(std::span<const LlmRequest> requests) override;

 private:
  struct Entry {
    std::string prompt;
    std::string response;
    std::string error;
  };
  std::map<std::string, Entry> by_id_;
};

struct LlmTrace {
  std::string id;
  std::string user;
  Severity gold = Severity::kNormal;
  std::string prompt;
  std::string response;
  Prediction prediction;
  std::string error;  // transport failure or unparseable response

  nlohmann::json to_json() const;
};

struct LlmEvaluation {
  EvalReport report;
  std::vector<LlmTrace> traces;

  std::string traces_jsonl() const;
};

LlmEvaluation evaluate_llm(const PromptBuilder& builder, LLMClient& client, Strategy strategy, const Dataset& dataset,
                           std::span<const std::size_t> test, int num_days = kForecastObservedDays);

// Forecaster view for the evaluation protocols. The builder and client must
// outlive it.
class LlmForecaster : public Forecaster {
 public:
  LlmForecaster(const PromptBuilder& builder, LLMClient& client, Strategy strategy)
      : builder_(builder), client_(client), strategy_(strategy) {}
  std::vector<Prediction> predict(const Dataset& dataset, std::span<const std::size_t> indices,
                                  int num_days) const override;

 private:
  const PromptBuilder& builder_;
  LLMClient& client_;
  Strategy strategy_;
};

}  // namespace mhf

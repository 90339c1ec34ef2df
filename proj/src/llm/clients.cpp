#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mhf/llm_client.hpp"

namespace mhf {

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::string join_table(const std::vector<std::string>& lines, std::size_t from, std::size_t* end) {
  std::string t;
  std::size_t i = from;
  for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '|'; ++i) t += lines[i] + "\n";
  if (end) *end = i;
  return t;
}

std::string answer(Severity s) { return fmt::format("The likely state is {}.", severity_name(s)); }

// Nearest few-shot example by squared distance between tables.
std::optional<Severity> nearest_example(const std::string& context, const Eigen::MatrixXd& target) {
  auto lines = lines_of(context);
  std::optional<Severity> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].rfind("### Example", 0) != 0) continue;
    std::size_t end = 0;
    auto table = parse_table(join_table(lines, i + 1, &end));
    if (end >= lines.size() || lines[end].rfind("Level: ", 0) != 0) continue;
    auto label = severity_from_name(lines[end].substr(7));
    if (!label || table.values.rows() != target.rows() || table.values.cols() != target.cols()) continue;
    double d = (table.values - target).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = label;
    }
  }
  return best;
}

// Nearest class mean of a "mean (variance)" table, each feature scaled by
// its pooled variance across the listed classes.
std::optional<Severity> nearest_class_mean(const std::string& context, const Eigen::MatrixXd& target) {
  auto lines = lines_of(context);
  std::size_t i = 0;
  while (i < lines.size() && lines[i].rfind("| Feature |", 0) != 0) ++i;
  if (i + 1 >= lines.size()) return std::nullopt;
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 1;
    while (start < line.size()) {
      auto bar = line.find('|', start);
      if (bar == std::string::npos) break;
      auto c = line.substr(start, bar - start);
      auto b = c.find_first_not_of(' ');
      auto e = c.find_last_not_of(' ');
      cells.push_back(b == std::string::npos ? "" : c.substr(b, e - b + 1));
      start = bar + 1;
    }
    return cells;
  };
  auto header = split(lines[i]);
  std::vector<Severity> classes;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto s = severity_from_name(header[c]);
    if (!s) return std::nullopt;
    classes.push_back(*s);
  }
  const Eigen::RowVectorXd x = target.colwise().mean();
  const auto K = static_cast<Eigen::Index>(classes.size());
  Eigen::MatrixXd mean(K, x.size()), var(K, x.size());
  Eigen::Index f = 0;
  for (std::size_t r = i + 2; r < lines.size() && !lines[r].empty() && lines[r][0] == '|'; ++r, ++f) {
    if (f >= x.size()) return std::nullopt;
    auto cells = split(lines[r]);
    if (static_cast<Eigen::Index>(cells.size()) != K + 1) return std::nullopt;
    for (Eigen::Index k = 0; k < K; ++k) {
      double m = 0, v = 0;
      if (std::sscanf(cells[static_cast<std::size_t>(k) + 1].c_str(), "%lf (%lf)", &m, &v) != 2) return std::nullopt;
      mean(k, f) = m;
      var(k, f) = v;
    }
  }
  if (f != x.size() || K == 0) return std::nullopt;
  Eigen::RowVectorXd pooled = var.colwise().mean().array() + 1e-6;
  std::optional<Severity> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < K; ++k) {
    double d = ((mean.row(k) - x).array().square() / pooled.array()).sum();
    if (d < best_d) {
      best_d = d;
      best = classes[static_cast<std::size_t>(k)];
    }
  }
  return best;
}

}  // namespace

std::vector<LlmResponse> LLMClient::complete_all(std::span<const LlmRequest> requests) {
  std::vector<LlmResponse> out;
  for (const auto& r : requests) {
    LlmResponse resp{r.id, {}, {}, 1};
    try {
      resp.text = complete(r.prompt);
    } catch (const std::exception& e) {
      resp.error = e.what();
    }
    out.push_back(std::move(resp));
  }
  return out;
}

std::string MockClient::complete(const std::string& prompt) {
  auto bundle = PromptBundle::parse(prompt);
  const Eigen::MatrixXd target = parse_table(bundle.behavior_table).values;
  if (bundle.context_block.find("### Example") != std::string::npos) {
    if (auto s = nearest_example(bundle.context_block, target)) return answer(*s);
  }
  if (bundle.context_block.find("| Feature |") != std::string::npos) {
    if (auto s = nearest_class_mean(bundle.context_block, target)) return answer(*s);
  }
  return answer(Severity::kNormal);
}

ReplayClient::ReplayClient(const std::filesystem::path& transcript) {
  std::ifstream in(transcript);
  if (!in) throw ConfigError(fmt::format("cannot open transcript {}", transcript.string()));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      // Later entries (retries of a failed run) replace earlier ones.
      by_id_[j.at("id").get<std::string>()] = {j.at("prompt").get<std::string>(), j.value("response", ""),
                                               j.value("error", "")};
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("{}:{}: {}", transcript.string(), n, e.what()));
    }
  }
}

std::string ReplayClient::complete(const std::string& prompt) {
  for (const auto& [id, e] : by_id_) {
    if (e.prompt == prompt && e.error.empty()) return e.response;
  }
  throw Error("transcript has no successful response for this prompt");
}

std::vector<LlmResponse> ReplayClient::complete_all(std::span<const LlmRequest> requests) {
  std::vector<LlmResponse> out;
  for (const auto& r : requests) {
    LlmResponse resp{r.id, {}, {}, 0};
    auto it = by_id_.find(r.id);
    if (it == by_id_.end()) {
      resp.error = "not in transcript";
    } else if (it->second.prompt != r.prompt) {
      resp.error = "transcript prompt differs from the rebuilt prompt";
    } else {
      resp.text = it->second.response;
      resp.error = it->second.error;
    }
    out.push_back(std::move(resp));
  }
  return out;
}

nlohmann::json LlmTrace::to_json() const {
  return {{"id", id},
          {"user", user},
          {"gold", severity_name(gold)},
          {"prompt", prompt},
          {"response", response},
          {"prediction", prediction ? nlohmann::json(severity_name(*prediction)) : nlohmann::json(nullptr)},
          {"error", error}};
}

std::string LlmEvaluation::traces_jsonl() const {
  std::string out;
  for (const auto& t : traces) out += t.to_json().dump() + "\n";
  return out;
}

LlmEvaluation evaluate_llm(const PromptBuilder& builder, LLMClient& client, Strategy strategy, const Dataset& dataset,
                           std::span<const std::size_t> test, int num_days) {
  std::vector<LlmRequest> requests;
  LlmEvaluation ev;
  for (auto i : test) {
    const auto& w = dataset[i];
    auto prompt = builder.build(strategy, w, num_days).render();
    requests.push_back({fmt::format("{}#{}#{}", strategy_name(strategy), num_days, window_id(w)), prompt});
    ev.traces.push_back({requests.back().id, w.participant_id(), w.label(), prompt, {}, std::nullopt, {}});
  }
  auto responses = client.complete_all(requests);
  std::map<std::string, const LlmResponse*> by_id;
  for (const auto& r : responses) by_id[r.id] = &r;
  std::vector<Prediction> predictions;
  for (auto& t : ev.traces) {
    auto it = by_id.find(t.id);
    if (it == by_id.end()) {
      t.error = "no response";
    } else if (!it->second->ok()) {
      t.error = it->second->error;
    } else {
      t.response = it->second->text;
      try {
        t.prediction = parse_response(t.response);
      } catch (const UnparseableResponse&) {
        t.error = "unparseable";
        spdlog::warn("unparseable response for {}: {}", t.id, t.response);
      }
    }
    predictions.push_back(t.prediction);
  }
  ev.report = score(std::span<const Prediction>(predictions), gold_labels(dataset, test));
  return ev;
}

std::vector<Prediction> LlmForecaster::predict(const Dataset& dataset, std::span<const std::size_t> indices,
                                               int num_days) const {
  auto ev = evaluate_llm(builder_, client_, strategy_, dataset, indices, num_days);
  std::vector<Prediction> out;
  for (const auto& t : ev.traces) out.push_back(t.prediction);
  return out;
}

}  // namespace mhf

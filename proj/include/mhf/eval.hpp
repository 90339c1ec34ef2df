#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhf/core.hpp"

namespace mhf {

// A model output; empty when an LLM response could not be parsed.
using Prediction = std::optional<Severity>;

// Test protocol: observe the first week, forecast the label at the end of
// the second week.
inline constexpr int kForecastObservedDays = 7;

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
};

struct EvalReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  double accuracy = 0;
  // Unweighted mean F1 over classes with nonzero gold support.
  double macro_f1 = 0;
  std::size_t total = 0;
  std::size_t unparseable = 0;
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};  // [gold][pred]

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Zero denominators give 0. Unparseable predictions count against the gold
// class and are tallied separately.
EvalReport score(std::span<const Prediction> predictions, std::span<const Severity> gold);
EvalReport score(std::span<const Severity> predictions, std::span<const Severity> gold);

// Aligned-column table: Model | Config | per-class Pre/Rec/F1 | Acc | Macro-F1.
struct ReportRow {
  std::string model;
  std::string config;
  EvalReport report;
};
std::string format_report_table(const std::vector<ReportRow>& rows);

struct EarlyCurve {
  std::vector<std::pair<int, EvalReport>> points;  // (observed days, report)
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Uniform prediction surface over every model family. Implementations see
// the first `num_days` days of each window only.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::vector<Prediction> predict(const Dataset& dataset, std::span<const std::size_t> indices,
                                          int num_days) const = 0;
};

std::vector<Severity> gold_labels(const Dataset& dataset, std::span<const std::size_t> indices);

// Truncates every test window to its first `observed_days` days; labels
// stay those of the full window.
EvalReport forecast_eval(const Forecaster& model, const Dataset& dataset, std::span<const std::size_t> test,
                         int observed_days = kForecastObservedDays);

// Expanding observation windows T = first..last with a fixed target.
EarlyCurve early_curve(const Forecaster& model, const Dataset& dataset, std::span<const std::size_t> test,
                       int first = kForecastObservedDays, int last = kWindowDays);

}  // namespace mhf

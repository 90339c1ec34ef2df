#include "mhf/eval.hpp"

#include <fmt/format.h>

namespace mhf {

namespace {

double safe_div(double a, double b) { return b > 0 ? a / b : 0.0; }

nlohmann::json class_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support},
          {"predicted", m.predicted}};
}

}  // namespace

EvalReport score(std::span<const Prediction> predictions, std::span<const Severity> gold) {
  if (predictions.size() != gold.size()) {
    throw ValidationError(
        fmt::format("score: {} predictions for {} gold labels", predictions.size(), gold.size()));
  }
  EvalReport r;
  r.total = gold.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    int g = rank(gold[i]);
    ++r.per_class[g].support;
    if (!predictions[i]) {
      ++r.unparseable;
      continue;
    }
    int p = rank(*predictions[i]);
    ++r.per_class[p].predicted;
    ++r.confusion[g][p];
    if (p == g) ++correct;
  }
  double f1_sum = 0;
  int present = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    auto& m = r.per_class[k];
    double tp = static_cast<double>(r.confusion[k][k]);
    m.precision = safe_div(tp, static_cast<double>(m.predicted));
    m.recall = safe_div(tp, static_cast<double>(m.support));
    m.f1 = safe_div(2 * m.precision * m.recall, m.precision + m.recall);
    if (m.support > 0) {
      f1_sum += m.f1;
      ++present;
    }
  }
  r.accuracy = safe_div(static_cast<double>(correct), static_cast<double>(r.total));
  r.macro_f1 = present > 0 ? f1_sum / present : 0.0;
  return r;
}

EvalReport score(std::span<const Severity> predictions, std::span<const Severity> gold) {
  std::vector<Prediction> p(predictions.begin(), predictions.end());
  return score(std::span<const Prediction>(p), gold);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json classes = nlohmann::json::object();
  for (int k = 0; k < kNumClasses; ++k) classes[std::string(severity_name(severity_from_rank(k)))] = class_json(per_class[k]);
  return {{"per_class", classes}, {"accuracy", accuracy}, {"macro_f1", macro_f1}, {"total", total},
          {"unparseable", unparseable}, {"confusion", confusion}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  for (int k = 0; k < kNumClasses; ++k) {
    const auto& c = j.at("per_class").at(std::string(severity_name(severity_from_rank(k))));
    r.per_class[k] = {c.at("precision").get<double>(), c.at("recall").get<double>(), c.at("f1").get<double>(),
                      c.at("support").get<std::size_t>(), c.at("predicted").get<std::size_t>()};
  }
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.total = j.at("total").get<std::size_t>();
  r.unparseable = j.at("unparseable").get<std::size_t>();
  r.confusion = j.at("confusion").get<decltype(r.confusion)>();
  return r;
}

std::string format_report_table(const std::vector<ReportRow>& rows) {
  std::size_t model_w = 5, config_w = 6;
  for (const auto& r : rows) {
    model_w = std::max(model_w, r.model.size());
    config_w = std::max(config_w, r.config.size());
  }
  std::string out = fmt::format("{:<{}}  {:<{}}", "Model", model_w, "Config", config_w);
  for (auto s : kAllSeverities) out += fmt::format("  {:^20}", severity_name(s));
  out += fmt::format("  {:>6}  {:>8}\n", "Acc", "Macro-F1");
  out += fmt::format("{:<{}}  {:<{}}", "", model_w, "", config_w);
  for (int k = 0; k < kNumClasses; ++k) out += fmt::format("  {:>6} {:>6} {:>6}", "Pre", "Rec", "F1");
  out += "\n";
  for (const auto& r : rows) {
    out += fmt::format("{:<{}}  {:<{}}", r.model, model_w, r.config, config_w);
    for (const auto& m : r.report.per_class) {
      out += fmt::format("  {:>6.4f} {:>6.4f} {:>6.4f}", m.precision, m.recall, m.f1);
    }
    out += fmt::format("  {:>6.4f}  {:>8.4f}\n", r.report.accuracy, r.report.macro_f1);
  }
  return out;
}

std::string EarlyCurve::to_csv() const {
  std::string out = "T,accuracy,macro_f1";
  for (auto s : kAllSeverities) out += fmt::format(",{}_f1", severity_name(s));
  out += ",unparseable\n";
  for (const auto& [t, r] : points) {
    out += fmt::format("{},{:.6f},{:.6f}", t, r.accuracy, r.macro_f1);
    for (const auto& m : r.per_class) out += fmt::format(",{:.6f}", m.f1);
    out += fmt::format(",{}\n", r.unparseable);
  }
  return out;
}

nlohmann::json EarlyCurve::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [t, r] : points) arr.push_back({{"T", t}, {"report", r.to_json()}});
  return arr;
}

std::vector<Severity> gold_labels(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<Severity> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(dataset[i].label());
  return out;
}

EvalReport forecast_eval(const Forecaster& model, const Dataset& dataset, std::span<const std::size_t> test,
                         int observed_days) {
  if (observed_days < 1 || observed_days > kWindowDays) {
    throw ValidationError(fmt::format("observed_days {} outside [1, {}]", observed_days, kWindowDays));
  }
  auto preds = model.predict(dataset, test, observed_days);
  return score(std::span<const Prediction>(preds), gold_labels(dataset, test));
}

EarlyCurve early_curve(const Forecaster& model, const Dataset& dataset, std::span<const std::size_t> test,
                       int first, int last) {
  EarlyCurve curve;
  for (int t = first; t <= last; ++t) curve.points.emplace_back(t, forecast_eval(model, dataset, test, t));
  return curve;
}

}  // namespace mhf

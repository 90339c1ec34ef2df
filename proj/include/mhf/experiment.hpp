#pragma once

// Config-driven experiment grid: expansion into cells, per-cell training and
// evaluation, the on-disk result store, and reports built from it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhf/classical.hpp"
#include "mhf/core.hpp"
#include "mhf/eval.hpp"
#include "mhf/features.hpp"
#include "mhf/losses.hpp"
#include "mhf/syngen.hpp"
#include "mhf/user_index.hpp"

namespace mhf {

// Classical model behind the Forecaster surface. Flattened inputs only
// accept the number of days the model was trained on.
class ClassicalForecaster : public Forecaster {
 public:
  ClassicalForecaster(const ClassicalModel& model, FeaturePipeline pipeline, std::optional<UserIndex> users,
                      int trained_days = kWindowDays);
  std::vector<Prediction> predict(const Dataset& dataset, std::span<const std::size_t> indices,
                                  int num_days) const override;

 private:
  const ClassicalModel& model_;
  FeaturePipeline pipeline_;
  std::optional<UserIndex> users_;
  int trained_days_;
};

// forecast: first week observed. early_curve: T = 7..14. full_window: all
// 14 days, as seen during training.
enum class Protocol { kForecast, kEarlyCurve, kFullWindow };
std::string_view protocol_name(Protocol p);
Protocol protocol_from_name(std::string_view name);

enum class ModelFamily { kClassical, kNeural, kLlm };
std::string_view family_name(ModelFamily f);

struct DatasetSource {
  std::optional<GeneratorConfig> generate;
  std::filesystem::path import_path;
  nlohmann::json to_json() const;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSource dataset;
  // Entries may omit "layout"; it is then chosen per model family.
  std::vector<nlohmann::json> features;
  // Each entry has "family": classical | neural | llm, plus that family's spec.
  std::vector<nlohmann::json> models;
  std::vector<std::string> personalization = {"agnostic"};  // agnostic | user_aware
  std::vector<LossSpec> losses = {LossSpec{}};                // neural models only
  std::vector<Protocol> protocols = {Protocol::kForecast};
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output = "results";
  // Optional CategoryMap JSON replacing the default 35 -> 5 mapping.
  std::filesystem::path category_map;

  // Unknown keys, empty seeds and invalid (model, layout) pairings raise ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  std::string hash() const;
};

struct Cell {
  ModelFamily family = ModelFamily::kClassical;
  nlohmann::json model;  // resolved spec, personalization and seed included
  FeatureConfig features;
  std::vector<Protocol> protocols;
  std::uint64_t seed = 0;
  std::string model_label;
  nlohmann::json categories;  // CategoryMap JSON; null for the default map

  nlohmann::json to_json() const;
  static Cell from_json(const nlohmann::json& j);
  // Content hash over the cell, the dataset and the code version.
  std::string key(const std::string& dataset_fingerprint) const;
};

// models x features x personalization x losses x seeds, duplicates removed.
std::vector<Cell> expand_grid(const ExperimentConfig& config);

std::string code_version();

// Generates or imports the dataset and writes it to `<out>/dataset.csv`.
Dataset materialize_dataset(const ExperimentConfig& config, const std::filesystem::path& out);

struct CellContext {
  const Dataset& dataset;
  const SplitAssignment& split;
  std::string dataset_fingerprint;
  std::string config_hash;
  std::filesystem::path artifact_dir;
};

// Trains (or builds prompts), evaluates every protocol and returns the
// result record. Throws on failure.
nlohmann::json run_cell(const Cell& cell, const CellContext& ctx);

struct RunOptions {
  int workers = 1;
  // With workers > 1, cells run in child processes of this executable
  // ("<exe> run-cell <file>"); otherwise in this process.
  std::filesystem::path executable;
  std::optional<std::vector<Protocol>> protocols_override;
};

struct RunSummary {
  std::size_t total = 0;
  std::size_t executed = 0;
  std::size_t skipped = 0;  // completed in an earlier run
  std::size_t failed = 0;
};

// Results go to config.output: dataset.csv, manifest.jsonl (append-only),
// records/<key>.json and artifacts/<key>/.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Worker-process entry: runs one cell file and writes its record. Returns
// 0 on success, 1 if the cell failed.
int run_cell_file(const std::filesystem::path& cell_file);

std::vector<nlohmann::json> load_records(const std::filesystem::path& out);

struct ReportTable {
  Protocol protocol = Protocol::kForecast;
  std::vector<ReportRow> rows;          // metrics averaged over seeds
  std::vector<std::size_t> seed_count;  // per row
};

// One table per protocol with one row per (model, config). Early curves
// are summarized at their last point; see early_curve_csv for the full curve.
std::vector<ReportTable> build_report(const std::vector<nlohmann::json>& records);
std::string render_report(const std::vector<ReportTable>& tables);
nlohmann::json report_json(const std::vector<ReportTable>& tables);
// Seed-averaged early curve per (model, config): model,config,days,accuracy,macro_f1.
std::string early_curve_csv(const std::vector<nlohmann::json>& records);

}  // namespace mhf

#pragma once

// Text side of the LLM pipeline: behavior tables, prompt strategies,
// response parsing and instruction-tuning corpora.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mhf/core.hpp"
#include "mhf/eval.hpp"
#include "mhf/features.hpp"

namespace mhf {

enum class Strategy {
  kZeroShot,
  kFewShotRecency,
  kFewShotSimilarity,
  kStatisticalIndividual,
  kStatisticalPopulation,
  kPattern,
};
inline constexpr std::array<Strategy, 6> kAllStrategies = {
    Strategy::kZeroShot,          Strategy::kFewShotRecency,        Strategy::kFewShotSimilarity,
    Strategy::kStatisticalIndividual, Strategy::kStatisticalPopulation, Strategy::kPattern};
std::string_view strategy_name(Strategy s);
Strategy strategy_from_name(std::string_view name);

// Column headers shown to the model, keyed by feature name (35-D) or
// category name (5-D).
class RenameSchema {
 public:
  RenameSchema() = default;
  explicit RenameSchema(std::map<std::string, std::string> headers);
  // "<display name> (<unit>)" for every feature; categories are z-scores.
  static RenameSchema defaults(const FeatureSchema& schema = FeatureSchema::canonical());
  static RenameSchema from_json(const nlohmann::json& j);

  const std::string& header(const std::string& key) const;  // ConfigError when missing
  // Headers for the columns of a representation, in column order.
  std::vector<std::string> columns(const FeatureConfig& config) const;
  nlohmann::json to_json() const { return headers_; }

 private:
  std::map<std::string, std::string> headers_;
};

// Values as shown in prompts: raw units for 35-D (week means when weekly),
// z-scored category means for 5-D. One row per time step.
Eigen::MatrixXd table_values(const SampleWindow& window, const FeaturePipeline& pipeline, int num_days = kWindowDays);

std::string render_table(const std::vector<std::string>& row_labels, const std::vector<std::string>& headers,
                         const Eigen::MatrixXd& values);

std::string serialize_window(const SampleWindow& window, const FeaturePipeline& pipeline, const RenameSchema& rename,
                             int num_days = kWindowDays);

struct ParsedTable {
  std::vector<std::string> headers;  // without the leading label column
  std::vector<std::string> row_labels;
  Eigen::MatrixXd values;
};
ParsedTable parse_table(std::string_view text);

struct PromptBundle {
  std::string system_instruction;
  std::string context_block;
  std::string behavior_table;
  std::string answer_format_instruction;
  std::optional<std::string> participant;  // user-aware prompts only

  std::string render() const;
  static PromptBundle parse(std::string_view text);
  bool operator==(const PromptBundle&) const = default;
};

// Last label word in the text wins; none raises UnparseableResponse.
Severity parse_response(std::string_view text);

enum class StatsLevel { kIndividual, kPopulation };

struct ClassMoments {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd variance;  // population variance
  std::size_t count = 0;
};

// Per-class mean and variance of the window-mean vectors (table units).
struct ClassStatistics {
  StatsLevel level = StatsLevel::kPopulation;
  std::string user;  // individual level only
  std::array<std::optional<ClassMoments>, kNumClasses> classes;

  std::string render(const std::vector<std::string>& headers) const;
};

ClassStatistics compute_class_statistics(const Dataset& dataset, std::span<const std::size_t> train,
                                         const FeaturePipeline& pipeline, StatsLevel level,
                                         const std::string& user = {});

struct PatternKnowledge {
  std::array<std::string, kNumClasses> summaries;  // empty when unknown
  std::string provenance;

  nlohmann::json to_json() const;
  static PatternKnowledge from_json(const nlohmann::json& j);
};

// Deterministic stand-in for an LLM summarizer: names the features whose
// class means differ most from the reference level.
PatternKnowledge summarize_patterns(const ClassStatistics& stats, const std::vector<std::string>& headers,
                                    int top_features = 3);

// Pattern knowledge keyed by participant; "*" applies to everyone else.
using PatternLibrary = std::map<std::string, PatternKnowledge>;
PatternLibrary load_pattern_library(const std::filesystem::path& path);

struct PromptOptions {
  int k = 3;
  bool user_aware = false;
};

// Builds prompts for any window from a fixed history (the training split).
// Nothing outside that history ever reaches a context block.
class PromptBuilder {
 public:
  PromptBuilder(const Dataset& dataset, std::vector<std::size_t> history, FeaturePipeline pipeline,
                RenameSchema rename = RenameSchema::defaults(), PromptOptions options = {},
                PatternLibrary patterns = {});

  PromptBundle build(Strategy strategy, const SampleWindow& target, int num_days = kForecastObservedDays) const;

  // History windows of the target's participant, excluding the target itself.
  std::vector<std::size_t> eligible_history(const SampleWindow& target) const;
  // Latest k by start_day, returned in chronological order.
  std::vector<std::size_t> select_recent(const SampleWindow& target, int k) const;
  // Top k by cosine similarity of normalized, flattened first-num_days
  // sequences; most similar first, ties to the earlier window.
  std::vector<std::size_t> select_similar(const SampleWindow& target, int k, int num_days) const;
  Eigen::RowVectorXd similarity_vector(const SampleWindow& window, int num_days) const;

  const ClassStatistics& population_statistics() const { return population_; }
  const FeaturePipeline& pipeline() const { return pipeline_; }
  const Dataset& dataset() const { return dataset_; }
  const PromptOptions& options() const { return options_; }

 private:
  std::string examples_block(const std::vector<std::size_t>& chosen, int num_days) const;
  const PatternKnowledge& patterns_for(const std::string& user) const;

  const Dataset& dataset_;
  std::vector<std::size_t> history_;
  FeaturePipeline pipeline_;
  RenameSchema rename_;
  PromptOptions options_;
  std::vector<std::string> headers_;
  ClassStatistics population_;
  std::map<std::string, ClassStatistics> individual_;
  PatternLibrary patterns_;
};

struct PeftRecord {
  std::string id;
  std::string user;
  std::string prompt;
  std::string completion;

  nlohmann::json to_json() const;
};

// One record per window; the completion is the window's label word.
std::vector<PeftRecord> build_peft_corpus(const PromptBuilder& builder, std::span<const std::size_t> windows,
                                          Strategy strategy = Strategy::kZeroShot,
                                          int num_days = kForecastObservedDays);
void write_jsonl(const std::filesystem::path& path, std::span<const PeftRecord> records);

// "<participant>@<start_day>"
std::string window_id(const SampleWindow& w);

}  // namespace mhf

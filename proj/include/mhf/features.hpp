#pragma once

#include <span>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mhf/core.hpp"
#include "mhf/schema.hpp"

namespace mhf {

enum class Dimension { kD35, kD5 };
enum class Granularity { kDaily, kWeekly };
enum class Layout { kSequence, kAggregated, kFlattened };

struct FeatureConfig {
  Dimension dimension = Dimension::kD35;
  Granularity granularity = Granularity::kDaily;
  Layout layout = Layout::kSequence;

  int dim() const { return dimension == Dimension::kD35 ? kNumFeatures : kNumCategories; }
  // Time steps produced from `num_days` days of input.
  int time_steps(int num_days) const;
  std::string label() const;  // e.g. "35D-daily-aggregated"
  nlohmann::json to_json() const;
  static FeatureConfig from_json(const nlohmann::json& j);
  bool operator==(const FeatureConfig&) const = default;
};

std::string_view dimension_name(Dimension d);
std::string_view granularity_name(Granularity g);
std::string_view layout_name(Layout l);

// Values plus the configuration that produced them. Sequence tensors are
// (time_steps x dim); aggregated and flattened tensors are single rows.
struct RepresentationTensor {
  Eigen::MatrixXd values;
  FeatureConfig config;
};

// Per-feature z-score with statistics from the training split only. A
// zero-variance feature is centered and passed through unscaled.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(Eigen::RowVectorXd mean, Eigen::RowVectorXd stddev);

  // Each row of `rows` is one observation.
  static Normalizer fit(const Eigen::MatrixXd& rows);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  const Eigen::RowVectorXd& mean() const { return mean_; }
  const Eigen::RowVectorXd& stddev() const { return stddev_; }
  int dim() const { return static_cast<int>(mean_.size()); }

 private:
  Eigen::RowVectorXd mean_;
  Eigen::RowVectorXd stddev_;
};

// Fits on every day of the given (training) windows.
Normalizer fit_normalizer(const Dataset& dataset, std::span<const std::size_t> train_indices);

// Mean of the z-normalized member features of each category. Accepts one
// day per row.
Eigen::MatrixXd to_5d(const Eigen::MatrixXd& normalized_days, const CategoryMap& map);

// Averages consecutive blocks of 7 rows; a trailing partial week averages
// whatever days remain.
Eigen::MatrixXd to_weekly(const Eigen::MatrixXd& days);

// Column-wise mean over time steps, as a single row.
Eigen::RowVectorXd statistical_aggregate(const Eigen::MatrixXd& sequence);

// Day-major, feature-minor concatenation.
Eigen::RowVectorXd sequential_flatten(const Eigen::MatrixXd& sequence);
Eigen::MatrixXd unflatten(const Eigen::RowVectorXd& flat, int time_steps, int dim);

// Normalizer + category map + configuration: turns raw windows into model
// inputs. Immutable once built.
class FeaturePipeline {
 public:
  FeaturePipeline(FeatureConfig config, Normalizer normalizer, CategoryMap categories);

  static FeaturePipeline fit(FeatureConfig config, const Dataset& dataset,
                             std::span<const std::size_t> train_indices,
                             const CategoryMap& categories = CategoryMap::default_map());

  const FeatureConfig& config() const { return config_; }
  const Normalizer& normalizer() const { return normalizer_; }
  const CategoryMap& categories() const { return categories_; }
  FeaturePipeline with_layout(Layout layout) const;

  // Normalized (and optionally category-reduced, week-averaged) sequence of
  // the first `num_days` days.
  Eigen::MatrixXd sequence(const SampleWindow& window, int num_days = kWindowDays) const;
  // Sequence reduced according to the configured layout.
  RepresentationTensor represent(const SampleWindow& window, int num_days = kWindowDays) const;
  // One row per window; requires a non-sequence layout.
  Eigen::MatrixXd design_matrix(const Dataset& dataset, std::span<const std::size_t> indices,
                                int num_days = kWindowDays) const;

 private:
  FeatureConfig config_;
  Normalizer normalizer_;
  CategoryMap categories_;
};

}  // namespace mhf

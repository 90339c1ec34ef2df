#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mhf/core.hpp"

namespace mhf {

// Mean pairwise cosine similarity between and within severity classes. Each
// window becomes its day-major flattened vector after per-feature z-scoring
// with statistics over every day of the dataset.
struct SimilarityMatrix {
  std::array<std::array<double, kNumClasses>, kNumClasses> values{};  // NaN when undefined
  std::array<std::size_t, kNumClasses> counts{};
  std::vector<std::string> flags;  // why entries are undefined

  bool defined(int a, int b) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// `brute_force` switches from the O(n d) unit-sum identity to the O(n^2 d)
// pairwise scan.
SimilarityMatrix class_similarity_matrix(const Dataset& dataset, bool brute_force = false);

// Day-major flattened, z-normalized windows (one row each).
Eigen::MatrixXd normalized_window_vectors(const Dataset& dataset);

struct ImportanceParams {
  int n_estimators = 50;
  int max_depth = 3;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

struct UserImportance {
  std::string user;
  std::vector<double> importance;  // per feature, sums to 1; empty when skipped
  std::optional<std::string> skipped;  // reason
};

// Gain importances of a boosted-tree ensemble fit on one participant's
// window means.
UserImportance per_user_feature_importance(const Dataset& dataset, const std::string& user,
                                           const ImportanceParams& params = {});

struct FeatureSpread {
  std::string feature;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double range() const { return max - min; }
};

struct ImportanceDispersion {
  std::vector<UserImportance> users;
  std::vector<FeatureSpread> features;  // schema order

  std::string to_csv() const;           // box-plot table
  std::string per_user_csv() const;     // user, feature..., one row per user
  double max_range() const;
  // Features ordered by median importance, highest first.
  std::vector<FeatureSpread> top(std::size_t n) const;
};

// Users are processed in parallel; skipped users do not contribute.
ImportanceDispersion importance_dispersion(const Dataset& dataset, const ImportanceParams& params = {});

}  // namespace mhf

#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include <nlohmann/json.hpp>

#include "mhf/core.hpp"
#include "mhf/dataset_io.hpp"
#include "mhf/schema.hpp"

namespace mhf {

// Class proportions of the reference cohort: 15477 / 6524 / 1795 / 982 of 24778 windows.
inline constexpr std::array<double, kNumClasses> kReferenceClassCounts = {15477, 6524, 1795, 982};
std::array<double, kNumClasses> reference_class_proportions();

struct GeneratorConfig {
  int num_users = 215;
  std::pair<int, int> samples_per_user = {61, 432};
  std::array<double, kNumClasses> class_proportions = reference_class_proportions();
  // Severe-minus-Normal shift along each feature's relevance weight, in
  // units of the feature's stddev.
  double separability = 1.0;
  // Stddev of each user's per-feature baseline offset.
  double user_heterogeneity = 0.5;
  // Fraction of features whose class relevance is redrawn per user.
  double user_feature_saliency = 0.3;
  double noise_std = 1.0;
  std::uint64_t seed = 42;

  // Fixtures without an empirical basis; kept configurable.
  double ar_coefficient = 0.3;
  double label_persistence = 0.7;
  int window_stride_days = kWindowDays;

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

// Ground truth the generator used; exposed so tests can compare analyses
// against what was planted.
struct GeneratorTruth {
  std::array<double, kNumFeatures> global_relevance{};
  std::vector<std::string> users;
  std::vector<std::array<double, kNumFeatures>> user_offsets;
  std::vector<std::array<double, kNumFeatures>> user_relevance;
};

Dataset generate(const GeneratorConfig& config, const FeatureSchema& schema = FeatureSchema::canonical(),
                 GeneratorTruth* truth = nullptr);

std::string participant_name(int user_index);

}  // namespace mhf

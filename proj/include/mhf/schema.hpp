#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhf/core.hpp"

namespace mhf {

enum class FeatureKind { kDuration, kProportion, kCount, kTimeOfDay, kDistance };

struct FeatureSpec {
  std::string name;
  std::string display_name;  // human-readable term used in LLM prompts
  std::string unit;
  FeatureKind kind = FeatureKind::kDuration;
  double min = 0.0;
  double max = 0.0;
  // Generator fixtures; plausible values, not measurements.
  double mean = 0.0;
  double stddev = 1.0;
};

// The 35 daily features in canonical column order.
class FeatureSchema {
 public:
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  static const FeatureSchema& canonical();

  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& operator[](int i) const { return features_[i]; }
  int index_of(std::string_view name) const;  // -1 when absent
  std::vector<std::string> names() const;

  // Range check for one day of values.
  void validate(const FeatureVector& values) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
  static FeatureSchema load(const std::string& path);

 private:
  std::vector<FeatureSpec> features_;
};

enum class Category : int { kLeisure = 0, kMeTime, kPhoneTime, kSleep, kSocialTime };
inline constexpr int kNumCategories = 5;
std::string_view category_name(Category c);
Category category_from_name(std::string_view name);

// Assignment of each of the 35 features to one behavioral category.
class CategoryMap {
 public:
  CategoryMap(const FeatureSchema& schema, const std::vector<std::pair<std::string, Category>>& entries);

  // Keyword rules: sleep_* -> sleep, unlock_* -> phone time, loc_social_* and
  // loc_other_dorm_* -> social time, loc_leisure_*, loc_workout_*, act_running
  // and act_on_bike -> leisure, everything else -> me time.
  static CategoryMap default_map(const FeatureSchema& schema = FeatureSchema::canonical());

  Category category(int feature) const { return by_feature_[feature]; }
  const std::vector<int>& members(Category c) const { return members_[static_cast<int>(c)]; }

  nlohmann::json to_json(const FeatureSchema& schema) const;
  static CategoryMap from_json(const FeatureSchema& schema, const nlohmann::json& j);
  static CategoryMap load(const FeatureSchema& schema, const std::string& path);

 private:
  std::array<Category, kNumFeatures> by_feature_{};
  std::array<std::vector<int>, kNumCategories> members_;
};

std::string_view feature_kind_name(FeatureKind k);
FeatureKind feature_kind_from_name(std::string_view name);

}  // namespace mhf

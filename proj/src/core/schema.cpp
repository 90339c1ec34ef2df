#include "mhf/schema.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

namespace mhf {

namespace {

constexpr double kMinutesPerDay = 1440.0;

FeatureSpec minutes(std::string name, std::string display, double mean, double sd) {
  return {std::move(name), std::move(display), "minutes", FeatureKind::kDuration, 0.0, kMinutesPerDay, mean, sd};
}
FeatureSpec count(std::string name, std::string display, double mean, double sd) {
  return {std::move(name), std::move(display), "count", FeatureKind::kCount, 0.0, 1e6, mean, sd};
}
FeatureSpec proportion(std::string name, std::string display, double mean, double sd) {
  return {std::move(name), std::move(display), "proportion", FeatureKind::kProportion, 0.0, 1.0, mean, sd};
}

std::vector<FeatureSpec> canonical_features() {
  return {
      minutes("sleep_duration", "Sleep duration", 420, 70),
      {"sleep_start", "Sleep onset", "minutes after 6pm", FeatureKind::kTimeOfDay, 0, kMinutesPerDay, 390, 60},
      {"sleep_end", "Wake time", "minutes after midnight", FeatureKind::kTimeOfDay, 0, kMinutesPerDay, 480, 70},
      minutes("act_still", "Time stationary", 900, 120),
      minutes("act_walking", "Time walking", 60, 25),
      minutes("act_running", "Time running", 8, 10),
      minutes("act_on_bike", "Time cycling", 5, 8),
      minutes("act_on_foot", "Time on foot", 75, 30),
      minutes("act_in_vehicle", "Time in vehicle", 30, 20),
      count("unlock_num", "Phone unlocks", 80, 25),
      minutes("unlock_duration", "Screen time", 240, 80),
      minutes("loc_home_dur", "Time at home", 600, 150),
      count("loc_home_unlock_num", "Phone unlocks at home", 35, 12),
      minutes("loc_home_unlock_duration", "Screen time at home", 110, 45),
      proportion("loc_home_audio_voice", "Voice activity at home", 0.25, 0.1),
      minutes("loc_study_dur", "Time at study places", 180, 80),
      count("loc_study_unlock_num", "Phone unlocks at study places", 15, 8),
      minutes("loc_study_unlock_duration", "Screen time at study places", 45, 25),
      proportion("loc_study_audio_voice", "Voice activity at study places", 0.15, 0.08),
      minutes("loc_social_dur", "Time at social places", 90, 50),
      count("loc_social_unlock_num", "Phone unlocks at social places", 8, 5),
      minutes("loc_social_unlock_duration", "Screen time at social places", 20, 12),
      proportion("loc_social_audio_voice", "Voice activity at social places", 0.4, 0.15),
      minutes("loc_other_dorm_dur", "Time at other dorms", 60, 45),
      count("loc_other_dorm_unlock_num", "Phone unlocks at other dorms", 5, 4),
      minutes("loc_other_dorm_unlock_duration", "Screen time at other dorms", 12, 10),
      minutes("loc_self_dorm_dur", "Time at own dorm", 480, 150),
      count("loc_self_dorm_unlock_num", "Phone unlocks at own dorm", 30, 10),
      minutes("loc_self_dorm_unlock_duration", "Screen time at own dorm", 100, 40),
      minutes("loc_leisure_dur", "Time at leisure places", 45, 35),
      count("loc_leisure_unlock_num", "Phone unlocks at leisure places", 4, 3),
      minutes("loc_workout_dur", "Time at workout places", 25, 25),
      count("loc_workout_unlock_num", "Phone unlocks at workout places", 2, 2),
      count("loc_visit_num", "Places visited", 6, 2.5),
      {"loc_dist_traveled", "Distance traveled", "km", FeatureKind::kDistance, 0, 1e4, 5, 3},
  };
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {"leisure", "me_time", "phone_time",
                                                                         "sleep", "social_time"};
constexpr std::array<std::string_view, 5> kKindNames = {"duration", "proportion", "count", "time_of_day",
                                                        "distance"};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

}  // namespace

std::string_view feature_kind_name(FeatureKind k) { return kKindNames[static_cast<int>(k)]; }

FeatureKind feature_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<FeatureKind>(i);
  }
  throw ConfigError(fmt::format("unknown feature kind '{}'", name));
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
  if (features_.size() != static_cast<std::size_t>(kNumFeatures)) {
    throw ConfigError(fmt::format("feature schema has {} features, expected {}", features_.size(), kNumFeatures));
  }
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (f.name.empty() || !seen.insert(f.name).second) {
      throw ConfigError(fmt::format("feature name '{}' is empty or duplicated", f.name));
    }
    if (!(f.min <= f.max) || !(f.stddev > 0)) {
      throw ConfigError(fmt::format("feature '{}' has an invalid range or stddev", f.name));
    }
    if (f.kind == FeatureKind::kProportion && (f.min < 0 || f.max > 1)) {
      throw ConfigError(fmt::format("proportion feature '{}' must lie within [0, 1]", f.name));
    }
  }
}

const FeatureSchema& FeatureSchema::canonical() {
  static const FeatureSchema schema(canonical_features());
  return schema;
}

int FeatureSchema::index_of(std::string_view name) const {
  for (int i = 0; i < kNumFeatures; ++i) {
    if (features_[i].name == name) return i;
  }
  return -1;
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

void FeatureSchema::validate(const FeatureVector& values) const {
  for (int i = 0; i < kNumFeatures; ++i) {
    const auto& f = features_[i];
    if (!(values[i] >= f.min && values[i] <= f.max)) {
      throw ValidationError(fmt::format("feature {} = {} outside [{}, {}]", f.name, values[i], f.min, f.max));
    }
  }
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : features_) {
    arr.push_back({{"name", f.name},
                   {"display_name", f.display_name},
                   {"unit", f.unit},
                   {"kind", feature_kind_name(f.kind)},
                   {"min", f.min},
                   {"max", f.max},
                   {"mean", f.mean},
                   {"stddev", f.stddev}});
  }
  return {{"features", arr}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  std::vector<FeatureSpec> out;
  try {
    for (const auto& e : j.at("features")) {
      out.push_back({e.at("name").get<std::string>(), e.at("display_name").get<std::string>(),
                     e.at("unit").get<std::string>(),
                     feature_kind_from_name(e.at("kind").get<std::string>()), e.at("min").get<double>(),
                     e.at("max").get<double>(), e.at("mean").get<double>(), e.at("stddev").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed feature schema: {}", e.what()));
  }
  return FeatureSchema(std::move(out));
}

FeatureSchema FeatureSchema::load(const std::string& path) { return from_json(read_json_file(path)); }

std::string_view category_name(Category c) { return kCategoryNames[static_cast<int>(c)]; }

Category category_from_name(std::string_view name) {
  for (int i = 0; i < kNumCategories; ++i) {
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  }
  throw ConfigError(fmt::format("unknown category '{}'", name));
}

CategoryMap::CategoryMap(const FeatureSchema& schema,
                         const std::vector<std::pair<std::string, Category>>& entries) {
  std::array<bool, kNumFeatures> assigned{};
  for (const auto& [name, cat] : entries) {
    int idx = schema.index_of(name);
    if (idx < 0) throw ConfigError(fmt::format("category map names unknown feature '{}'", name));
    if (assigned[idx]) throw ConfigError(fmt::format("feature '{}' mapped twice", name));
    assigned[idx] = true;
    by_feature_[idx] = cat;
  }
  for (int i = 0; i < kNumFeatures; ++i) {
    if (!assigned[i]) throw ConfigError(fmt::format("feature '{}' is not mapped to a category", schema[i].name));
    members_[static_cast<int>(by_feature_[i])].push_back(i);
  }
  for (int c = 0; c < kNumCategories; ++c) {
    if (members_[c].empty()) {
      throw ConfigError(fmt::format("category '{}' has no member features", kCategoryNames[c]));
    }
  }
}

CategoryMap CategoryMap::default_map(const FeatureSchema& schema) {
  std::vector<std::pair<std::string, Category>> entries;
  for (const auto& f : schema.features()) {
    const std::string& n = f.name;
    Category c = Category::kMeTime;
    if (starts_with(n, "sleep_")) {
      c = Category::kSleep;
    } else if (starts_with(n, "unlock_")) {
      c = Category::kPhoneTime;
    } else if (starts_with(n, "loc_social_") || starts_with(n, "loc_other_dorm_")) {
      c = Category::kSocialTime;
    } else if (starts_with(n, "loc_leisure_") || starts_with(n, "loc_workout_") || n == "act_running" ||
               n == "act_on_bike") {
      c = Category::kLeisure;
    }
    entries.emplace_back(n, c);
  }
  return CategoryMap(schema, entries);
}

nlohmann::json CategoryMap::to_json(const FeatureSchema& schema) const {
  nlohmann::json j = nlohmann::json::object();
  for (int i = 0; i < kNumFeatures; ++i) j[schema[i].name] = category_name(by_feature_[i]);
  return {{"categories", j}};
}

CategoryMap CategoryMap::from_json(const FeatureSchema& schema, const nlohmann::json& j) {
  std::vector<std::pair<std::string, Category>> entries;
  try {
    for (const auto& [name, cat] : j.at("categories").items()) {
      entries.emplace_back(name, category_from_name(cat.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed category map: {}", e.what()));
  }
  return CategoryMap(schema, entries);
}

CategoryMap CategoryMap::load(const FeatureSchema& schema, const std::string& path) {
  return from_json(schema, read_json_file(path));
}

}  // namespace mhf

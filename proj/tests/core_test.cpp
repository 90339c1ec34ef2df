#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "mhf/core.hpp"
#include "mhf/dataset_io.hpp"
#include "mhf/schema.hpp"
#include "mhf/syngen.hpp"
#include "test_util.hpp"

namespace mhf {
namespace {

using testing::constant_window;
using testing::score_for;

TEST(Phq4, BracketBoundaries) {
  EXPECT_EQ(phq4_to_severity(0), Severity::kNormal);
  EXPECT_EQ(phq4_to_severity(3), Severity::kNormal);
  EXPECT_EQ(phq4_to_severity(4), Severity::kMild);
  EXPECT_EQ(phq4_to_severity(6), Severity::kMild);
  EXPECT_EQ(phq4_to_severity(7), Severity::kModerate);
  EXPECT_EQ(phq4_to_severity(9), Severity::kModerate);
  EXPECT_EQ(phq4_to_severity(10), Severity::kSevere);
  EXPECT_EQ(phq4_to_severity(12), Severity::kSevere);
}

TEST(Phq4, TotalAndMonotone) {
  int prev = -1;
  for (int s = 0; s <= 12; ++s) {
    int r = rank(phq4_to_severity(s));
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(Phq4, OutOfRangeNamesValue) {
  try {
    phq4_to_severity(13);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("13"), std::string::npos);
  }
  EXPECT_THROW(phq4_to_severity(-1), ValidationError);
}

TEST(Severity, NamesRoundTripCaseInsensitive) {
  for (auto s : kAllSeverities) EXPECT_EQ(severity_from_name(severity_name(s)), s);
  EXPECT_EQ(severity_from_name("mODERATE"), Severity::kModerate);
  EXPECT_FALSE(severity_from_name("moderately").has_value());
}

TEST(SampleWindow, RejectsWrongDayCount) {
  std::vector<FeatureVector> days(13);
  EXPECT_THROW(SampleWindow("u1", 0, days, 2), ValidationError);
}

TEST(Dataset, OrdersByUserThenStartDay) {
  Dataset d({constant_window("b", 14, 1), constant_window("a", 28, 1), constant_window("a", 0, 5)},
            Provenance::kSynthetic);
  ASSERT_EQ(d.users(), (std::vector<std::string>{"a", "b"}));
  const auto& a = d.user_samples("a");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_LT(d[a[0]].start_day(), d[a[1]].start_day());
}

TEST(Dataset, RejectsDuplicateStartDay) {
  EXPECT_THROW(Dataset({constant_window("a", 0, 1), constant_window("a", 0, 2)}, Provenance::kSynthetic),
               ValidationError);
}

TEST(ClassCounts, EmptyAndSingle) {
  Dataset empty;
  auto c0 = class_counts(empty);
  EXPECT_EQ(c0, (std::array<std::size_t, 4>{0, 0, 0, 0}));
  Dataset one({constant_window("a", 0, 8)}, Provenance::kSynthetic);
  EXPECT_EQ(class_counts(one), (std::array<std::size_t, 4>{0, 0, 1, 0}));
}

TEST(Split, BucketSizeExamples) {
  EXPECT_EQ(bucket_sizes(206), (BucketSizes{144, 20, 42}));
  EXPECT_EQ(bucket_sizes(10), (BucketSizes{7, 1, 2}));
  // Promotion keeps the validation bucket nonempty for small users.
  EXPECT_EQ(bucket_sizes(3), (BucketSizes{1, 1, 1}));
  EXPECT_EQ(bucket_sizes(9), (BucketSizes{5, 1, 3}));
}

TEST(Split, EveryBucketNonemptyFromThreeSamples) {
  // Exhaustive over user sizes; the floor rule alone first yields a
  // nonempty validation bucket at n = 10.
  int first_unpromoted = -1;
  for (std::size_t n = 3; n <= 500; ++n) {
    auto b = bucket_sizes(n);
    EXPECT_GE(b.train, 1u) << n;
    EXPECT_GE(b.val, 1u) << n;
    EXPECT_GE(b.test, 1u) << n;
    EXPECT_EQ(b.train + b.val + b.test, n);
    if (first_unpromoted < 0 && static_cast<std::size_t>(std::floor(0.1 * n + 1e-9)) >= 1) {
      first_unpromoted = static_cast<int>(n);
    }
  }
  EXPECT_EQ(first_unpromoted, 10);
}

TEST(Split, TemporalOrderPerUser) {
  auto ds = generate(testing::small_config());
  auto split = split_user_temporal(ds);
  for (const auto& user : ds.users()) {
    int max_train = -1, min_val = 1 << 30, max_val = -1, min_test = 1 << 30;
    for (auto i : ds.user_samples(user)) {
      int day = ds[i].start_day();
      switch (split[i]) {
        case Split::kTrain: max_train = std::max(max_train, day); break;
        case Split::kVal:
          min_val = std::min(min_val, day);
          max_val = std::max(max_val, day);
          break;
        case Split::kTest: min_test = std::min(min_test, day); break;
      }
    }
    EXPECT_LT(max_train, min_val);
    EXPECT_LT(max_val, min_test);
  }
  EXPECT_EQ(split.train().size() + split.val().size() + split.test().size(), ds.size());
}

TEST(Split, SmallUserIsAnErrorListingTheUser) {
  Dataset d({constant_window("tiny", 0, 1), constant_window("tiny", 14, 1), constant_window("ok", 0, 1),
             constant_window("ok", 14, 1), constant_window("ok", 28, 1)},
            Provenance::kSynthetic);
  try {
    split_user_temporal(d);
    FAIL() << "expected SplitError";
  } catch (const SplitError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("ok"), std::string::npos);
  }
}

TEST(Schema, CanonicalHas35ValidFeatures) {
  const auto& s = FeatureSchema::canonical();
  EXPECT_EQ(s.features().size(), 35u);
  EXPECT_EQ(s.index_of("sleep_duration"), 0);
  EXPECT_EQ(s.index_of("nope"), -1);
  auto j = s.to_json();
  auto back = FeatureSchema::from_json(j);
  EXPECT_EQ(back.to_json(), j);
}

TEST(CategoryMap, DefaultRulesAreTotalAndNonempty) {
  const auto& s = FeatureSchema::canonical();
  auto map = CategoryMap::default_map(s);
  EXPECT_EQ(map.category(s.index_of("sleep_duration")), Category::kSleep);
  EXPECT_EQ(map.category(s.index_of("unlock_num")), Category::kPhoneTime);
  EXPECT_EQ(map.category(s.index_of("loc_social_unlock_num")), Category::kSocialTime);
  EXPECT_EQ(map.category(s.index_of("loc_other_dorm_dur")), Category::kSocialTime);
  EXPECT_EQ(map.category(s.index_of("act_running")), Category::kLeisure);
  EXPECT_EQ(map.category(s.index_of("loc_workout_dur")), Category::kLeisure);
  EXPECT_EQ(map.category(s.index_of("loc_home_dur")), Category::kMeTime);
  std::size_t total = 0;
  for (int c = 0; c < kNumCategories; ++c) {
    EXPECT_FALSE(map.members(static_cast<Category>(c)).empty());
    total += map.members(static_cast<Category>(c)).size();
  }
  EXPECT_EQ(total, 35u);
}

TEST(CategoryMap, UnmappedFeatureIsConfigError) {
  auto j = CategoryMap::default_map().to_json(FeatureSchema::canonical());
  j["categories"].erase("sleep_end");
  EXPECT_THROW(CategoryMap::from_json(FeatureSchema::canonical(), j), ConfigError);
}

TEST(DatasetCsv, RoundTripIsExact) {
  auto ds = generate(testing::small_config(11));
  auto csv = dataset_to_csv(ds);
  auto back = dataset_from_csv(csv, Provenance::kSynthetic);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(dataset_to_csv(back), csv);
}

TEST(DatasetCsv, FileRoundTripWithManifest) {
  auto dir = std::filesystem::temp_directory_path() / "mhf_core_test";
  std::filesystem::create_directories(dir);
  auto ds = generate(testing::small_config(3));
  write_dataset(ds, dir / "data.csv");
  EXPECT_TRUE(std::filesystem::exists(dir / "data.manifest.json"));
  EXPECT_EQ(read_dataset(dir / "data.csv"), ds);
}

TEST(DatasetCsv, MissingColumnIsNamed) {
  auto csv = dataset_to_csv(Dataset({constant_window("a", 0, 1)}, Provenance::kSynthetic));
  auto pos = csv.find("act_walking");
  csv.replace(pos, std::string("act_walking").size(), "act_wobbling");
  try {
    import_csv_text(csv, Provenance::kCesImport);
    FAIL() << "expected ImportError";
  } catch (const ImportError& e) {
    EXPECT_NE(std::string(e.what()).find("act_walking"), std::string::npos);
  }
}

TEST(DatasetCsv, IncompleteWindowIsSkippedAndReported) {
  auto csv = dataset_to_csv(Dataset({constant_window("a", 0, 1), constant_window("a", 14, 5)},
                                    Provenance::kSynthetic));
  // Drop the last row, i.e. day 13 of the second window.
  csv.pop_back();
  csv.erase(csv.rfind('\n') + 1);
  auto result = import_csv_text(csv, Provenance::kCesImport);
  EXPECT_EQ(result.dataset.size(), 1u);
  ASSERT_EQ(result.skipped.size(), 1u);
  EXPECT_EQ(result.skipped[0].participant_id, "a");
  EXPECT_EQ(result.skipped[0].start_day, 14);
  EXPECT_NE(result.skipped[0].reason.find("13 of 14"), std::string::npos);
  EXPECT_THROW(dataset_from_csv(csv, Provenance::kCesImport), ImportError);
}

TEST(DatasetCsv, BadValueReportsRowNumber) {
  auto csv = dataset_to_csv(Dataset({constant_window("a", 0, score_for(Severity::kMild))}, Provenance::kSynthetic));
  // Corrupt the first feature of data row 3 (file line 4).
  std::size_t line_start = 0;
  for (int i = 0; i < 3; ++i) line_start = csv.find('\n', line_start) + 1;
  std::size_t field = line_start;
  for (int i = 0; i < 3; ++i) field = csv.find(',', field) + 1;
  csv.replace(field, csv.find(',', field) - field, "oops");
  try {
    import_csv_text(csv, Provenance::kCesImport);
    FAIL() << "expected ImportError";
  } catch (const ImportError& e) {
    EXPECT_NE(std::string(e.what()).find("row 4"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace mhf

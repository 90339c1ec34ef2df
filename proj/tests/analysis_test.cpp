#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <omp.h>

#include "mhf/analysis.hpp"
#include "mhf/kernels.hpp"
#include "test_util.hpp"

namespace mhf {
namespace {

using testing::score_for;

// Every day of the window sits at the schema mean except features 0 and 1,
// which are nudged by (d0, d1) stddevs.
SampleWindow nudged_window(const std::string& pid, int start, Severity s, double d0, double d1) {
  const auto& schema = FeatureSchema::canonical();
  FeatureVector day{};
  for (int f = 0; f < kNumFeatures; ++f) day[f] = schema[f].mean;
  day[0] += 0.1 * d0 * schema[0].stddev;
  day[1] += 0.1 * d1 * schema[1].stddev;
  return SampleWindow(pid, start, std::vector<FeatureVector>(kWindowDays, day), score_for(s));
}

// Four classes at the corners (+x, +y, -x, -y) so the dataset mean is zero
// on both axes after z-scoring.
Dataset compass_dataset(int per_class) {
  std::vector<SampleWindow> w;
  const double dirs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int k = 0; k < kNumClasses; ++k) {
    for (int i = 0; i < per_class; ++i) {
      w.push_back(nudged_window("u", (k * per_class + i) * kWindowDays, severity_from_rank(k), dirs[k][0], dirs[k][1]));
    }
  }
  return Dataset(std::move(w), Provenance::kSynthetic);
}

TEST(Similarity, IdenticalWindowsAreFullySimilarWithinClass) {
  auto m = class_similarity_matrix(compass_dataset(3));
  for (int k = 0; k < kNumClasses; ++k) EXPECT_NEAR(m.values[k][k], 1.0, 1e-12);
}

TEST(Similarity, OrthogonalClassesHaveZeroInterSimilarity) {
  auto m = class_similarity_matrix(compass_dataset(3));
  EXPECT_NEAR(m.values[0][1], 0.0, 1e-12);
  EXPECT_NEAR(m.values[1][2], 0.0, 1e-12);
  EXPECT_NEAR(m.values[0][2], -1.0, 1e-12);
  EXPECT_NEAR(m.values[1][3], -1.0, 1e-12);
}

TEST(Similarity, UnitSumPathMatchesPairwiseScan) {
  auto ds = generate(testing::small_config(3));
  auto fast = class_similarity_matrix(ds);
  auto slow = class_similarity_matrix(ds, true);
  for (int a = 0; a < kNumClasses; ++a) {
    for (int b = 0; b < kNumClasses; ++b) {
      ASSERT_EQ(fast.defined(a, b), slow.defined(a, b));
      if (fast.defined(a, b)) {
        EXPECT_NEAR(fast.values[a][b], slow.values[a][b], 1e-10);
      }
    }
  }
}

TEST(Similarity, PairwiseScanMatchesDirectAverage) {
  // Independent oracle: loop over every pair of windows by hand.
  auto ds = generate(testing::small_config(5));
  Eigen::MatrixXd v = normalized_window_vectors(ds);
  auto m = class_similarity_matrix(ds);
  for (int a = 0; a < kNumClasses; ++a) {
    for (int b = a; b < kNumClasses; ++b) {
      double sum = 0;
      long n = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.size(); ++j) {
          if (rank(ds[i].label()) != a || rank(ds[j].label()) != b) continue;
          if (a == b && j <= i) continue;
          auto vi = v.row(static_cast<Eigen::Index>(i));
          auto vj = v.row(static_cast<Eigen::Index>(j));
          sum += vi.dot(vj) / (vi.norm() * vj.norm());
          ++n;
        }
      }
      if (n == 0) {
        EXPECT_FALSE(m.defined(a, b));
      } else {
        EXPECT_NEAR(m.values[a][b], sum / static_cast<double>(n), 1e-10) << a << "," << b;
      }
    }
  }
}

TEST(Similarity, SymmetricAndBounded) {
  auto m = class_similarity_matrix(generate(testing::small_config(11)));
  for (int a = 0; a < kNumClasses; ++a) {
    for (int b = 0; b < kNumClasses; ++b) {
      if (!m.defined(a, b)) continue;
      EXPECT_DOUBLE_EQ(m.values[a][b], m.values[b][a]);
      EXPECT_GE(m.values[a][b], -1.0 - 1e-12);
      EXPECT_LE(m.values[a][b], 1.0 + 1e-12);
    }
  }
}

TEST(Similarity, SmallClassesAreFlagged) {
  std::vector<SampleWindow> w;
  w.push_back(nudged_window("u", 0, Severity::kNormal, 1, 0));
  w.push_back(nudged_window("u", 14, Severity::kNormal, 0, 1));
  w.push_back(nudged_window("u", 28, Severity::kMild, 1, 1));
  auto m = class_similarity_matrix(Dataset(std::move(w), Provenance::kSynthetic));
  EXPECT_TRUE(m.defined(0, 0));
  EXPECT_FALSE(m.defined(1, 1));
  EXPECT_TRUE(m.defined(0, 1));
  EXPECT_FALSE(m.defined(2, 0));
  EXPECT_FALSE(m.defined(3, 3));
  EXPECT_EQ(m.flags.size(), 3u);
  EXPECT_NE(m.to_csv().find("NA"), std::string::npos);
  EXPECT_TRUE(m.to_json()["values"][3][3].is_null());
  EXPECT_TRUE(m.to_json().contains("normalization"));
}

TEST(Similarity, SeparableDataIsCloserWithinAbnormalClassesThanToNormal) {
  GeneratorConfig c;
  c.num_users = 30;
  c.samples_per_user = {30, 40};
  c.separability = 2.0;
  c.seed = 9;
  auto m = class_similarity_matrix(generate(c));
  for (int k = 1; k < kNumClasses; ++k) EXPECT_GT(m.values[k][k], m.values[k][0]) << k;
}

// One participant; feature `signal` carries the label, everything else is noise.
Dataset planted_user(std::uint64_t seed, int signal, int n) {
  std::mt19937_64 rng(seed);
  const auto& schema = FeatureSchema::canonical();
  std::vector<SampleWindow> w;
  for (int i = 0; i < n; ++i) {
    auto s = severity_from_rank(i % kNumClasses);
    auto base = testing::random_window("solo", i * kWindowDays, score_for(s), rng);
    std::vector<FeatureVector> days = base.days();
    if (signal >= 0) {
      for (auto& d : days) d[signal] = schema[signal].mean + (rank(s) - 1.5) * 0.5 * schema[signal].stddev;
    }
    w.emplace_back("solo", i * kWindowDays, std::move(days), score_for(s));
  }
  return Dataset(std::move(w), Provenance::kSynthetic);
}

TEST(Importance, PlantedFeatureDominates) {
  constexpr int kSignal = 12;
  auto ds = planted_user(1, kSignal, 120);
  auto r = per_user_feature_importance(ds, "solo");
  ASSERT_FALSE(r.skipped);
  ASSERT_EQ(r.importance.size(), static_cast<std::size_t>(kNumFeatures));
  auto top = std::max_element(r.importance.begin(), r.importance.end()) - r.importance.begin();
  EXPECT_EQ(top, kSignal);
  EXPECT_GT(r.importance[kSignal], 0.5);
  EXPECT_NEAR(std::accumulate(r.importance.begin(), r.importance.end(), 0.0), 1.0, 1e-6);
}

TEST(Importance, NoiseHasNoDominantFeature) {
  std::vector<double> maxima;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto r = per_user_feature_importance(planted_user(seed, -1, 120), "solo");
    ASSERT_FALSE(r.skipped);
    EXPECT_NEAR(std::accumulate(r.importance.begin(), r.importance.end(), 0.0), 1.0, 1e-6);
    maxima.push_back(*std::max_element(r.importance.begin(), r.importance.end()));
  }
  std::nth_element(maxima.begin(), maxima.begin() + 2, maxima.end());
  EXPECT_LT(maxima[2], 0.3);
}

TEST(Importance, SingleClassUserIsSkipped) {
  std::vector<SampleWindow> w;
  for (int i = 0; i < 5; ++i) w.push_back(nudged_window("flat", i * kWindowDays, Severity::kMild, i, 0));
  auto r = per_user_feature_importance(Dataset(std::move(w), Provenance::kSynthetic), "flat");
  EXPECT_TRUE(r.skipped);
  EXPECT_TRUE(r.importance.empty());
}

TEST(Dispersion, SingleUserCollapses) {
  auto d = importance_dispersion(planted_user(2, 5, 80));
  ASSERT_EQ(d.features.size(), static_cast<std::size_t>(kNumFeatures));
  for (const auto& f : d.features) {
    EXPECT_DOUBLE_EQ(f.min, f.median);
    EXPECT_DOUBLE_EQ(f.median, f.max);
  }
  EXPECT_EQ(d.top(1)[0].feature, FeatureSchema::canonical().names()[5]);
  const auto csv = d.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), kNumFeatures + 1);
}

TEST(Dispersion, SkippedUsersDoNotContribute) {
  std::vector<SampleWindow> w = planted_user(3, 5, 40).samples();
  for (int i = 0; i < 4; ++i) w.push_back(nudged_window("zz_flat", i * kWindowDays, Severity::kNormal, i, 0));
  auto d = importance_dispersion(Dataset(std::move(w), Provenance::kSynthetic));
  ASSERT_EQ(d.users.size(), 2u);
  EXPECT_TRUE(d.users[1].skipped);
  for (const auto& f : d.features) EXPECT_DOUBLE_EQ(f.min, f.max);
  EXPECT_NE(d.per_user_csv().find("zz_flat"), std::string::npos);
}

GeneratorConfig dispersion_config(double saliency) {
  GeneratorConfig c;
  c.num_users = 12;
  c.samples_per_user = {80, 100};
  c.class_proportions = {0.25, 0.25, 0.25, 0.25};
  c.separability = 2.0;
  c.user_feature_saliency = saliency;
  c.seed = 21;
  return c;
}

double mean_range(const ImportanceDispersion& d) {
  double s = 0;
  for (const auto& f : d.features) s += f.range();
  return s / static_cast<double>(d.features.size());
}

TEST(Dispersion, HeterogeneousUsersDisagree) {
  auto hetero = importance_dispersion(generate(dispersion_config(0.3)));
  auto homo = importance_dispersion(generate(dispersion_config(0.0)));
  EXPECT_GT(hetero.max_range(), 0.2);
  EXPECT_LT(mean_range(homo), mean_range(hetero));
}

TEST(Dispersion, ParallelMatchesSingleThread) {
  auto ds = generate(dispersion_config(0.3));
  auto a = importance_dispersion(ds);
  int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  auto b = importance_dispersion(ds);
  omp_set_num_threads(saved);
  EXPECT_EQ(a.to_csv(), b.to_csv());
}

}  // namespace
}  // namespace mhf

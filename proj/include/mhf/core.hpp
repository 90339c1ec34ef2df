#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mhf/error.hpp"

namespace mhf {

inline constexpr int kNumClasses = 4;
inline constexpr int kNumFeatures = 35;
inline constexpr int kWindowDays = 14;
inline constexpr int kDaysPerWeek = 7;
inline constexpr int kMaxPhq4 = 12;

// PHQ-4 severity bracket. The enumerator value is the ordinal rank.
enum class Severity : int { kNormal = 0, kMild = 1, kModerate = 2, kSevere = 3 };

inline constexpr std::array<Severity, kNumClasses> kAllSeverities = {
    Severity::kNormal, Severity::kMild, Severity::kModerate, Severity::kSevere};

inline int rank(Severity s) { return static_cast<int>(s); }
Severity severity_from_rank(int rank);
std::string_view severity_name(Severity s);
// Case-insensitive match against the four level words.
std::optional<Severity> severity_from_name(std::string_view name);

// Normal 0-3, Mild 4-6, Moderate 7-9, Severe 10-12.
Severity phq4_to_severity(int score);

using FeatureVector = std::array<double, kNumFeatures>;

struct DailySensingRecord {
  std::string participant_id;
  int day_index = 0;  // days since the participant's first record
  FeatureVector features{};
};

// Fourteen consecutive days of sensing plus the PHQ-4 score reported at the
// end of the window. The severity label is always derived from the score.
class SampleWindow {
 public:
  SampleWindow(std::string participant_id, int start_day, std::vector<FeatureVector> days,
               int phq4_score);

  const std::string& participant_id() const { return participant_id_; }
  int start_day() const { return start_day_; }
  int phq4_score() const { return phq4_score_; }
  Severity label() const { return label_; }
  const std::vector<FeatureVector>& days() const { return days_; }
  DailySensingRecord record(int offset) const;

  // First `num_days` days as a (num_days x 35) matrix, one row per day.
  Eigen::MatrixXd matrix(int num_days = kWindowDays) const;

  bool operator==(const SampleWindow& other) const = default;

 private:
  std::string participant_id_;
  int start_day_;
  std::vector<FeatureVector> days_;
  int phq4_score_;
  Severity label_;
};

enum class Provenance { kSynthetic, kCesImport };
std::string_view provenance_name(Provenance p);
Provenance provenance_from_name(std::string_view name);

// Immutable collection of windows, ordered by (participant_id, start_day).
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<SampleWindow> samples, Provenance provenance);

  const std::vector<SampleWindow>& samples() const { return samples_; }
  const SampleWindow& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  Provenance provenance() const { return provenance_; }

  // Sorted participant ids.
  const std::vector<std::string>& users() const { return users_; }
  // Sample indices of one participant in start_day order.
  const std::vector<std::size_t>& user_samples(const std::string& user) const;

  bool operator==(const Dataset& other) const {
    return provenance_ == other.provenance_ && samples_ == other.samples_;
  }

 private:
  std::vector<SampleWindow> samples_;
  Provenance provenance_ = Provenance::kSynthetic;
  std::vector<std::string> users_;
  std::map<std::string, std::vector<std::size_t>> by_user_;
};

std::array<std::size_t, kNumClasses> class_counts(const Dataset& dataset);
std::array<std::size_t, kNumClasses> class_counts(const Dataset& dataset,
                                                  std::span<const std::size_t> indices);

enum class Split { kTrain, kVal, kTest };

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct BucketSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  bool operator==(const BucketSizes&) const = default;
};

// Per-user bucket sizes: floor for train and val, remainder to test, and one
// window promoted from train to val when the val floor is zero.
BucketSizes bucket_sizes(std::size_t n, const SplitRatios& ratios = {});

class SplitAssignment {
 public:
  SplitAssignment() = default;
  explicit SplitAssignment(std::vector<Split> assignment);

  Split operator[](std::size_t i) const { return assignment_[i]; }
  std::size_t size() const { return assignment_.size(); }
  const std::vector<std::size_t>& indices(Split s) const;
  const std::vector<std::size_t>& train() const { return indices(Split::kTrain); }
  const std::vector<std::size_t>& val() const { return indices(Split::kVal); }
  const std::vector<std::size_t>& test() const { return indices(Split::kTest); }

 private:
  std::vector<Split> assignment_;
  std::array<std::vector<std::size_t>, 3> buckets_;
};

SplitAssignment split_user_temporal(const Dataset& dataset, const SplitRatios& ratios = {});

}  // namespace mhf

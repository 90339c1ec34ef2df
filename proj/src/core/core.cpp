#include "mhf/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>

namespace mhf {

namespace {
constexpr std::array<std::string_view, kNumClasses> kSeverityNames = {"Normal", "Mild", "Moderate",
                                                                       "Severe"};
}  // namespace

Severity severity_from_rank(int r) {
  if (r < 0 || r >= kNumClasses) throw ValidationError(fmt::format("invalid severity rank {}", r));
  return static_cast<Severity>(r);
}

std::string_view severity_name(Severity s) { return kSeverityNames[rank(s)]; }

std::optional<Severity> severity_from_name(std::string_view name) {
  for (int k = 0; k < kNumClasses; ++k) {
    const auto& ref = kSeverityNames[k];
    if (ref.size() != name.size()) continue;
    bool same = std::equal(ref.begin(), ref.end(), name.begin(), [](char a, char b) {
      return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
    });
    if (same) return static_cast<Severity>(k);
  }
  return std::nullopt;
}

Severity phq4_to_severity(int score) {
  if (score < 0 || score > kMaxPhq4) {
    throw ValidationError(fmt::format("PHQ-4 score {} outside [0, {}]", score, kMaxPhq4));
  }
  if (score <= 3) return Severity::kNormal;
  if (score <= 6) return Severity::kMild;
  if (score <= 9) return Severity::kModerate;
  return Severity::kSevere;
}

SampleWindow::SampleWindow(std::string participant_id, int start_day,
                           std::vector<FeatureVector> days, int phq4_score)
    : participant_id_(std::move(participant_id)),
      start_day_(start_day),
      days_(std::move(days)),
      phq4_score_(phq4_score),
      label_(phq4_to_severity(phq4_score)) {
  if (participant_id_.empty()) throw ValidationError("empty participant id");
  if (start_day_ < 0) throw ValidationError(fmt::format("negative start_day {}", start_day_));
  if (days_.size() != static_cast<std::size_t>(kWindowDays)) {
    throw ValidationError(fmt::format("window {}@{} has {} days, expected {}", participant_id_,
                                      start_day_, days_.size(), kWindowDays));
  }
  for (const auto& day : days_) {
    for (double v : day) {
      if (!std::isfinite(v)) {
        throw ValidationError(
            fmt::format("non-finite feature value in window {}@{}", participant_id_, start_day_));
      }
    }
  }
}

DailySensingRecord SampleWindow::record(int offset) const {
  return DailySensingRecord{participant_id_, start_day_ + offset, days_.at(offset)};
}

Eigen::MatrixXd SampleWindow::matrix(int num_days) const {
  if (num_days < 1 || num_days > kWindowDays) {
    throw ValidationError(fmt::format("cannot take {} days of a {}-day window", num_days, kWindowDays));
  }
  Eigen::MatrixXd m(num_days, kNumFeatures);
  for (int t = 0; t < num_days; ++t) {
    for (int f = 0; f < kNumFeatures; ++f) m(t, f) = days_[t][f];
  }
  return m;
}

std::string_view provenance_name(Provenance p) {
  return p == Provenance::kSynthetic ? "synthetic" : "ces-import";
}

Provenance provenance_from_name(std::string_view name) {
  if (name == "synthetic") return Provenance::kSynthetic;
  if (name == "ces-import") return Provenance::kCesImport;
  throw ValidationError(fmt::format("unknown provenance '{}'", name));
}

Dataset::Dataset(std::vector<SampleWindow> samples, Provenance provenance)
    : samples_(std::move(samples)), provenance_(provenance) {
  std::stable_sort(samples_.begin(), samples_.end(), [](const SampleWindow& a, const SampleWindow& b) {
    if (a.participant_id() != b.participant_id()) return a.participant_id() < b.participant_id();
    return a.start_day() < b.start_day();
  });
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    auto& list = by_user_[samples_[i].participant_id()];
    if (!list.empty() && samples_[list.back()].start_day() == samples_[i].start_day()) {
      throw ValidationError(fmt::format("duplicate window {}@{}", samples_[i].participant_id(),
                                        samples_[i].start_day()));
    }
    list.push_back(i);
  }
  users_.reserve(by_user_.size());
  for (const auto& [user, _] : by_user_) users_.push_back(user);
}

const std::vector<std::size_t>& Dataset::user_samples(const std::string& user) const {
  auto it = by_user_.find(user);
  if (it == by_user_.end()) throw ValidationError(fmt::format("unknown participant '{}'", user));
  return it->second;
}

std::array<std::size_t, kNumClasses> class_counts(const Dataset& dataset) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& s : dataset.samples()) ++counts[rank(s.label())];
  return counts;
}

std::array<std::size_t, kNumClasses> class_counts(const Dataset& dataset,
                                                  std::span<const std::size_t> indices) {
  std::array<std::size_t, kNumClasses> counts{};
  for (auto i : indices) ++counts[rank(dataset[i].label())];
  return counts;
}

BucketSizes bucket_sizes(std::size_t n, const SplitRatios& ratios) {
  // The small epsilon keeps products such as 0.7 * 10 from flooring to 6.
  constexpr double kEps = 1e-9;
  BucketSizes b;
  b.train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n) + kEps));
  b.val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n) + kEps));
  if (b.val == 0 && b.train > 1) {
    --b.train;
    b.val = 1;
  }
  b.test = n - b.train - b.val;
  return b;
}

SplitAssignment::SplitAssignment(std::vector<Split> assignment) : assignment_(std::move(assignment)) {
  for (std::size_t i = 0; i < assignment_.size(); ++i) {
    buckets_[static_cast<int>(assignment_[i])].push_back(i);
  }
}

const std::vector<std::size_t>& SplitAssignment::indices(Split s) const {
  return buckets_[static_cast<int>(s)];
}

SplitAssignment split_user_temporal(const Dataset& dataset, const SplitRatios& ratios) {
  double total = ratios.train + ratios.val + ratios.test;
  if (std::abs(total - 1.0) > 1e-9 || ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
    throw SplitError(fmt::format("split ratios ({}, {}, {}) must be positive and sum to 1",
                                 ratios.train, ratios.val, ratios.test));
  }
  std::vector<std::string> too_small;
  for (const auto& user : dataset.users()) {
    if (dataset.user_samples(user).size() < 3) too_small.push_back(user);
  }
  if (!too_small.empty()) {
    throw SplitError(fmt::format("participants with fewer than 3 windows: {}",
                                 fmt::join(too_small, ", ")));
  }

  std::vector<Split> assignment(dataset.size(), Split::kTrain);
  for (const auto& user : dataset.users()) {
    const auto& idx = dataset.user_samples(user);
    BucketSizes b = bucket_sizes(idx.size(), ratios);
    if (b.train == 0 || b.val == 0 || b.test == 0) {
      throw SplitError(fmt::format("participant {} with {} windows leaves an empty bucket", user,
                                   idx.size()));
    }
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Split s = k < b.train ? Split::kTrain : (k < b.train + b.val ? Split::kVal : Split::kTest);
      assignment[idx[k]] = s;
    }
  }
  return SplitAssignment(std::move(assignment));
}

}  // namespace mhf

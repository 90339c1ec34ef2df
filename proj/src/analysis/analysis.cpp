#include "mhf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "mhf/classical.hpp"
#include "mhf/features.hpp"
#include "mhf/kernels.hpp"
#include "mhf/schema.hpp"

namespace mhf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string fmt_value(double v) { return std::isnan(v) ? "NA" : fmt::format("{:.6f}", v); }

}  // namespace

bool SimilarityMatrix::defined(int a, int b) const { return !std::isnan(values[a][b]); }

std::string SimilarityMatrix::to_csv() const {
  std::string out = "class";
  for (auto s : kAllSeverities) out += fmt::format(",{}", severity_name(s));
  out += "\n";
  for (int a = 0; a < kNumClasses; ++a) {
    out += severity_name(severity_from_rank(a));
    for (int b = 0; b < kNumClasses; ++b) out += "," + fmt_value(values[a][b]);
    out += "\n";
  }
  return out;
}

nlohmann::json SimilarityMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : values) {
    nlohmann::json row = nlohmann::json::array();
    for (double v : r) row.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    rows.push_back(row);
  }
  return {{"classes", {"Normal", "Mild", "Moderate", "Severe"}},
          {"values", rows},
          {"counts", counts},
          {"flags", flags},
          {"normalization", "per-feature z-score over all days of the dataset; windows flattened day-major"}};
}

Eigen::MatrixXd normalized_window_vectors(const Dataset& dataset) {
  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  auto norm = fit_normalizer(dataset, all);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(dataset.size()), kWindowDays * kNumFeatures);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = sequential_flatten(norm.apply(dataset[i].matrix()));
  }
  return out;
}

SimilarityMatrix class_similarity_matrix(const Dataset& dataset, bool brute_force) {
  if (dataset.empty()) throw ValidationError("class_similarity_matrix: empty dataset");
  Eigen::MatrixXd vectors = normalized_window_vectors(dataset);
  std::array<std::vector<int>, kNumClasses> members;
  for (std::size_t i = 0; i < dataset.size(); ++i) members[rank(dataset[i].label())].push_back(static_cast<int>(i));

  std::array<Eigen::MatrixXd, kNumClasses> rows;
  std::array<kernels::UnitSums, kNumClasses> sums;
  SimilarityMatrix m;
  for (int k = 0; k < kNumClasses; ++k) {
    m.counts[k] = members[k].size();
    rows[k] = vectors(members[k], Eigen::all);
    if (!brute_force) sums[k] = kernels::unit_sums(rows[k]);
    const auto name = severity_name(severity_from_rank(k));
    if (members[k].empty()) {
      m.flags.push_back(fmt::format("{}: no windows; row undefined", name));
    } else if (members[k].size() < 2) {
      m.flags.push_back(fmt::format("{}: 1 window; intra-class entry undefined", name));
    }
  }
  for (int a = 0; a < kNumClasses; ++a) {
    for (int b = a; b < kNumClasses; ++b) {
      double v = kNaN;
      if (a == b) {
        if (m.counts[a] >= 2) {
          v = brute_force ? kernels::parallel::mean_pairwise_cosine_within(rows[a]) : kernels::mean_cosine_within(sums[a]);
        }
      } else if (m.counts[a] > 0 && m.counts[b] > 0) {
        v = brute_force ? kernels::parallel::mean_pairwise_cosine(rows[a], rows[b]) : kernels::mean_cosine(sums[a], sums[b]);
      }
      m.values[a][b] = m.values[b][a] = v;
    }
  }
  return m;
}

UserImportance per_user_feature_importance(const Dataset& dataset, const std::string& user,
                                           const ImportanceParams& params) {
  UserImportance out;
  out.user = user;
  const auto& idx = dataset.user_samples(user);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), kNumFeatures);
  std::vector<Severity> y;
  std::set<Severity> classes;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = statistical_aggregate(dataset[idx[i]].matrix());
    y.push_back(dataset[idx[i]].label());
    classes.insert(y.back());
  }
  if (classes.size() < 2) {
    out.skipped = fmt::format("only {} severity class present", classes.size());
    return out;
  }
  ClassicalSpec spec;
  spec.kind = ClassicalKind::kXgboostStyleGbdt;
  spec.hyperparameters = {{"n_estimators", params.n_estimators},
                          {"max_depth", params.max_depth},
                          {"learning_rate", params.learning_rate}};
  spec.seed = params.seed;
  auto model = fit_classical(spec, X, y);
  auto gain = model->feature_importance();
  double total = std::accumulate(gain.begin(), gain.end(), 0.0);
  if (!(total > 0)) {
    out.skipped = "no split improved the fit";
    return out;
  }
  for (auto& g : gain) g /= total;
  out.importance = std::move(gain);
  return out;
}

std::string ImportanceDispersion::to_csv() const {
  std::string out = "feature,min,q1,median,q3,max\n";
  for (const auto& f : features) {
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", f.feature, f.min, f.q1, f.median, f.q3, f.max);
  }
  return out;
}

std::string ImportanceDispersion::per_user_csv() const {
  const auto names = FeatureSchema::canonical().names();
  std::string out = "user";
  for (const auto& n : names) out += "," + n;
  out += ",skipped\n";
  for (const auto& u : users) {
    out += u.user;
    for (std::size_t f = 0; f < names.size(); ++f) out += "," + (u.importance.empty() ? std::string("") : fmt::format("{:.6f}", u.importance[f]));
    out += "," + u.skipped.value_or("") + "\n";
  }
  return out;
}

double ImportanceDispersion::max_range() const {
  double best = 0;
  for (const auto& f : features) best = std::max(best, f.range());
  return best;
}

std::vector<FeatureSpread> ImportanceDispersion::top(std::size_t n) const {
  auto sorted = features;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.median > b.median; });
  sorted.resize(std::min(n, sorted.size()));
  return sorted;
}

ImportanceDispersion importance_dispersion(const Dataset& dataset, const ImportanceParams& params) {
  ImportanceDispersion out;
  const auto& users = dataset.users();
  out.users.resize(users.size());
  const int n = static_cast<int>(users.size());
#pragma omp parallel for schedule(dynamic)
  for (int u = 0; u < n; ++u) out.users[u] = per_user_feature_importance(dataset, users[u], params);

  const auto names = FeatureSchema::canonical().names();
  for (int f = 0; f < kNumFeatures; ++f) {
    std::vector<double> v;
    for (const auto& u : out.users) {
      if (!u.importance.empty()) v.push_back(u.importance[f]);
    }
    FeatureSpread s;
    s.feature = names[f];
    if (!v.empty()) {
      s.min = *std::min_element(v.begin(), v.end());
      s.max = *std::max_element(v.begin(), v.end());
      s.q1 = quantile(v, 0.25);
      s.median = quantile(v, 0.5);
      s.q3 = quantile(v, 0.75);
    }
    out.features.push_back(s);
  }
  return out;
}

}  // namespace mhf

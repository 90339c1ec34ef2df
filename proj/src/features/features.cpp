#include "mhf/features.hpp"

#include <cmath>

#include <fmt/format.h>

namespace mhf {

std::string_view dimension_name(Dimension d) { return d == Dimension::kD35 ? "35D" : "5D"; }
std::string_view granularity_name(Granularity g) { return g == Granularity::kDaily ? "daily" : "weekly"; }
std::string_view layout_name(Layout l) {
  switch (l) {
    case Layout::kSequence: return "sequence";
    case Layout::kAggregated: return "aggregated";
    case Layout::kFlattened: return "flattened";
  }
  return "?";
}

int FeatureConfig::time_steps(int num_days) const {
  return granularity == Granularity::kDaily ? num_days : (num_days + kDaysPerWeek - 1) / kDaysPerWeek;
}

std::string FeatureConfig::label() const {
  return fmt::format("{}-{}-{}", dimension_name(dimension), granularity_name(granularity), layout_name(layout));
}

nlohmann::json FeatureConfig::to_json() const {
  return {{"dimension", dimension_name(dimension)},
          {"granularity", granularity_name(granularity)},
          {"layout", layout_name(layout)}};
}

FeatureConfig FeatureConfig::from_json(const nlohmann::json& j) {
  FeatureConfig c;
  try {
    auto dim = j.value("dimension", std::string("35D"));
    if (dim == "35D" || dim == "35") {
      c.dimension = Dimension::kD35;
    } else if (dim == "5D" || dim == "5") {
      c.dimension = Dimension::kD5;
    } else {
      throw ConfigError(fmt::format("unknown dimension '{}'", dim));
    }
    auto gran = j.value("granularity", std::string("daily"));
    if (gran == "daily") {
      c.granularity = Granularity::kDaily;
    } else if (gran == "weekly") {
      c.granularity = Granularity::kWeekly;
    } else {
      throw ConfigError(fmt::format("unknown granularity '{}'", gran));
    }
    auto layout = j.value("layout", std::string("sequence"));
    if (layout == "sequence") {
      c.layout = Layout::kSequence;
    } else if (layout == "aggregated") {
      c.layout = Layout::kAggregated;
    } else if (layout == "flattened") {
      c.layout = Layout::kFlattened;
    } else {
      throw ConfigError(fmt::format("unknown layout '{}'", layout));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed feature config: {}", e.what()));
  }
  return c;
}

Normalizer::Normalizer(Eigen::RowVectorXd mean, Eigen::RowVectorXd stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() != stddev_.size()) throw ValidationError("normalizer mean/stddev size mismatch");
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw ValidationError("cannot fit a normalizer on zero rows");
  Eigen::RowVectorXd mean = rows.colwise().mean();
  Eigen::RowVectorXd sd = ((rows.rowwise() - mean).array().square().colwise().sum() /
                           static_cast<double>(rows.rows()))
                              .sqrt();
  // Round-off on a constant column leaves a tiny spread; treat it as zero.
  for (Eigen::Index c = 0; c < sd.size(); ++c) {
    if (sd[c] <= 1e-12 * (1.0 + std::abs(mean[c]))) sd[c] = 0;
  }
  return Normalizer(std::move(mean), std::move(sd));
}

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean_.size()) {
    throw ValidationError(fmt::format("normalizer fitted on {} columns, got {}", mean_.size(), rows.cols()));
  }
  Eigen::MatrixXd out = rows.rowwise() - mean_;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    if (stddev_[c] > 0) out.col(c) /= stddev_[c];
  }
  return out;
}

Normalizer fit_normalizer(const Dataset& dataset, std::span<const std::size_t> train_indices) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(train_indices.size()) * kWindowDays, kNumFeatures);
  Eigen::Index r = 0;
  for (auto i : train_indices) {
    rows.middleRows(r, kWindowDays) = dataset[i].matrix();
    r += kWindowDays;
  }
  return Normalizer::fit(rows);
}

Eigen::MatrixXd to_5d(const Eigen::MatrixXd& normalized_days, const CategoryMap& map) {
  if (normalized_days.cols() != kNumFeatures) {
    throw ConfigError(fmt::format("5-D reduction expects {} features, got {}", kNumFeatures, normalized_days.cols()));
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(normalized_days.rows(), kNumCategories);
  for (int c = 0; c < kNumCategories; ++c) {
    const auto& members = map.members(static_cast<Category>(c));
    for (int f : members) out.col(c) += normalized_days.col(f);
    out.col(c) /= static_cast<double>(members.size());
  }
  return out;
}

Eigen::MatrixXd to_weekly(const Eigen::MatrixXd& days) {
  if (days.rows() == 0) throw ValidationError("cannot average an empty day sequence into weeks");
  const Eigen::Index weeks = (days.rows() + kDaysPerWeek - 1) / kDaysPerWeek;
  Eigen::MatrixXd out(weeks, days.cols());
  for (Eigen::Index w = 0; w < weeks; ++w) {
    Eigen::Index start = w * kDaysPerWeek;
    Eigen::Index n = std::min<Eigen::Index>(kDaysPerWeek, days.rows() - start);
    out.row(w) = days.middleRows(start, n).colwise().mean();
  }
  return out;
}

Eigen::RowVectorXd statistical_aggregate(const Eigen::MatrixXd& sequence) {
  if (sequence.rows() == 0) throw ValidationError("cannot aggregate an empty sequence");
  return sequence.colwise().mean();
}

Eigen::RowVectorXd sequential_flatten(const Eigen::MatrixXd& sequence) {
  Eigen::RowVectorXd out(sequence.size());
  for (Eigen::Index t = 0; t < sequence.rows(); ++t) {
    out.segment(t * sequence.cols(), sequence.cols()) = sequence.row(t);
  }
  return out;
}

Eigen::MatrixXd unflatten(const Eigen::RowVectorXd& flat, int time_steps, int dim) {
  if (flat.size() != static_cast<Eigen::Index>(time_steps) * dim) {
    throw ValidationError(fmt::format("cannot reshape {} values into ({} x {})", flat.size(), time_steps, dim));
  }
  Eigen::MatrixXd out(time_steps, dim);
  for (int t = 0; t < time_steps; ++t) out.row(t) = flat.segment(static_cast<Eigen::Index>(t) * dim, dim);
  return out;
}

FeaturePipeline::FeaturePipeline(FeatureConfig config, Normalizer normalizer, CategoryMap categories)
    : config_(config), normalizer_(std::move(normalizer)), categories_(std::move(categories)) {
  if (normalizer_.dim() != kNumFeatures) {
    throw ConfigError(fmt::format("pipeline normalizer must cover {} features", kNumFeatures));
  }
}

FeaturePipeline FeaturePipeline::fit(FeatureConfig config, const Dataset& dataset,
                                     std::span<const std::size_t> train_indices, const CategoryMap& categories) {
  return FeaturePipeline(config, fit_normalizer(dataset, train_indices), categories);
}

FeaturePipeline FeaturePipeline::with_layout(Layout layout) const {
  FeatureConfig c = config_;
  c.layout = layout;
  return FeaturePipeline(c, normalizer_, categories_);
}

Eigen::MatrixXd FeaturePipeline::sequence(const SampleWindow& window, int num_days) const {
  Eigen::MatrixXd days = normalizer_.apply(window.matrix(num_days));
  if (config_.dimension == Dimension::kD5) days = to_5d(days, categories_);
  if (config_.granularity == Granularity::kWeekly) days = to_weekly(days);
  return days;
}

RepresentationTensor FeaturePipeline::represent(const SampleWindow& window, int num_days) const {
  Eigen::MatrixXd seq = sequence(window, num_days);
  switch (config_.layout) {
    case Layout::kSequence: return {std::move(seq), config_};
    case Layout::kAggregated: return {statistical_aggregate(seq), config_};
    case Layout::kFlattened: return {sequential_flatten(seq), config_};
  }
  throw ConfigError("unknown layout");
}

Eigen::MatrixXd FeaturePipeline::design_matrix(const Dataset& dataset, std::span<const std::size_t> indices,
                                               int num_days) const {
  if (config_.layout == Layout::kSequence) {
    throw LayoutMismatchError("design_matrix needs an aggregated or flattened layout");
  }
  const int width = config_.layout == Layout::kAggregated ? config_.dim()
                                                          : config_.dim() * config_.time_steps(num_days);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), width);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = represent(dataset[indices[r]], num_days).values;
  }
  return out;
}

}  // namespace mhf

#pragma once

#include <array>
#include <optional>
#include <span>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mhf/core.hpp"

namespace mhf {

enum class LossKind { kCrossEntropy, kWeightedCe, kFocal };
std::string_view loss_kind_name(LossKind k);
LossKind loss_kind_from_name(std::string_view name);

struct LossSpec {
  LossKind kind = LossKind::kCrossEntropy;
  double gamma = 2.0;                                  // focal only
  std::optional<std::array<double, kNumClasses>> alpha;  // focal only; default inverse frequency

  void validate() const;
  nlohmann::json to_json() const;
  static LossSpec from_json(const nlohmann::json& j);
};

struct LossValue {
  double value = 0;
  Eigen::MatrixXd grad;  // d value / d logits, B x K
};

// Mean over the batch of alpha_y * (1 - p_y)^gamma * (-log p_y).
LossValue classification_loss_value(const Eigen::MatrixXd& logits, std::span<const int> labels,
                                    std::span<const double> alpha, double gamma);

LossValue cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels);
// w_c = N / (K n_c); a zero count raises ValidationError.
LossValue weighted_ce(const Eigen::MatrixXd& logits, std::span<const int> labels,
                      const std::array<std::size_t, kNumClasses>& class_counts);
LossValue focal(const Eigen::MatrixXd& logits, std::span<const int> labels, double gamma,
                const std::array<double, kNumClasses>& alpha);

std::array<double, kNumClasses> class_weights_from_counts(const std::array<std::size_t, kNumClasses>& counts);

// Per-class alpha and gamma the loss op uses for this spec, given training
// class counts.
struct LossParams {
  std::array<double, kNumClasses> alpha{};
  double gamma = 0;
};
LossParams resolve_loss(const LossSpec& spec, const std::array<std::size_t, kNumClasses>& train_counts);

}  // namespace mhf

#include "mhf/losses.hpp"

#include <cmath>

#include <fmt/format.h>

namespace mhf {

std::string_view loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::kCrossEntropy:
      return "cross_entropy";
    case LossKind::kWeightedCe:
      return "weighted_ce";
    case LossKind::kFocal:
      return "focal";
  }
  return "?";
}

LossKind loss_kind_from_name(std::string_view name) {
  for (auto k : {LossKind::kCrossEntropy, LossKind::kWeightedCe, LossKind::kFocal}) {
    if (loss_kind_name(k) == name) return k;
  }
  throw ConfigError(fmt::format("unknown loss '{}' (expected cross_entropy, weighted_ce or focal)", name));
}

void LossSpec::validate() const {
  if (!(gamma >= 0) || !std::isfinite(gamma)) throw ConfigError(fmt::format("focal gamma must be >= 0, got {}", gamma));
  if (alpha) {
    for (double a : *alpha) {
      if (!(a >= 0) || !std::isfinite(a)) throw ConfigError("focal alpha entries must be finite and >= 0");
    }
  }
}

nlohmann::json LossSpec::to_json() const {
  nlohmann::json j = {{"kind", loss_kind_name(kind)}};
  if (kind == LossKind::kFocal) {
    j["gamma"] = gamma;
    j["alpha"] = alpha ? nlohmann::json(*alpha) : nlohmann::json("inverse_frequency");
  }
  return j;
}

LossSpec LossSpec::from_json(const nlohmann::json& j) {
  LossSpec s;
  if (j.is_string()) {
    s.kind = loss_kind_from_name(j.get<std::string>());
    return s;
  }
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "gamma" && key != "alpha") throw ConfigError(fmt::format("loss: unknown key '{}'", key));
  }
  s.kind = loss_kind_from_name(j.at("kind").get<std::string>());
  s.gamma = j.value("gamma", 2.0);
  if (j.contains("alpha") && !(j["alpha"].is_string() && j["alpha"] == "inverse_frequency")) {
    s.alpha = j["alpha"].get<std::array<double, kNumClasses>>();
  }
  s.validate();
  return s;
}

LossValue classification_loss_value(const Eigen::MatrixXd& logits, std::span<const int> labels,
                                    std::span<const double> alpha, double gamma) {
  const auto B = logits.rows(), K = logits.cols();
  if (static_cast<std::size_t>(B) != labels.size()) {
    throw ValidationError(fmt::format("loss: {} logit rows for {} labels", B, labels.size()));
  }
  if (static_cast<std::size_t>(K) != alpha.size()) throw ValidationError("loss: alpha size differs from class count");
  LossValue out;
  out.grad = Eigen::MatrixXd::Zero(B, K);
  if (B == 0) return out;
  double total = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    int y = labels[i];
    double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    double z = e.sum();
    Eigen::RowVectorXd p = e / z;
    double log_p = logits(i, y) - mx - std::log(z);
    double py = p(y);
    double q = 1.0 - py;
    double a = alpha[y];
    double mod = gamma == 0 ? 1.0 : std::pow(q, gamma);
    total += -a * mod * log_p;
    // dL/dz_j = -a [(1-p)^g - g (1-p)^(g-1) p log p] (delta_jy - p_j)
    double extra = 0;
    if (gamma != 0 && q > 0) extra = gamma * std::pow(q, gamma - 1) * py * log_p;
    double coef = -a * (mod - extra);
    for (Eigen::Index j = 0; j < K; ++j) out.grad(i, j) = coef * ((j == y ? 1.0 : 0.0) - p(j));
  }
  out.value = total / static_cast<double>(B);
  out.grad /= static_cast<double>(B);
  return out;
}

LossValue cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels) {
  std::array<double, kNumClasses> ones;
  ones.fill(1.0);
  return classification_loss_value(logits, labels, ones, 0.0);
}

std::array<double, kNumClasses> class_weights_from_counts(const std::array<std::size_t, kNumClasses>& counts) {
  double n = 0;
  for (auto c : counts) n += static_cast<double>(c);
  std::array<double, kNumClasses> w{};
  for (int k = 0; k < kNumClasses; ++k) {
    if (counts[k] == 0) {
      throw ValidationError(fmt::format("class '{}' has no training samples; cannot weight it",
                                        severity_name(severity_from_rank(k))));
    }
    w[k] = n / (kNumClasses * static_cast<double>(counts[k]));
  }
  return w;
}

LossValue weighted_ce(const Eigen::MatrixXd& logits, std::span<const int> labels,
                      const std::array<std::size_t, kNumClasses>& class_counts) {
  auto w = class_weights_from_counts(class_counts);
  return classification_loss_value(logits, labels, w, 0.0);
}

LossValue focal(const Eigen::MatrixXd& logits, std::span<const int> labels, double gamma,
                const std::array<double, kNumClasses>& alpha) {
  return classification_loss_value(logits, labels, alpha, gamma);
}

LossParams resolve_loss(const LossSpec& spec, const std::array<std::size_t, kNumClasses>& train_counts) {
  spec.validate();
  LossParams p;
  p.alpha.fill(1.0);
  switch (spec.kind) {
    case LossKind::kCrossEntropy:
      break;
    case LossKind::kWeightedCe:
      p.alpha = class_weights_from_counts(train_counts);
      break;
    case LossKind::kFocal: {
      p.gamma = spec.gamma;
      if (spec.alpha) {
        p.alpha = *spec.alpha;
      } else {
        // Absent classes never appear as targets, so their alpha is moot.
        double n = 0;
        for (auto c : train_counts) n += static_cast<double>(c);
        for (int k = 0; k < kNumClasses; ++k) {
          p.alpha[k] = train_counts[k] > 0 ? n / (kNumClasses * static_cast<double>(train_counts[k])) : 0.0;
        }
      }
      break;
    }
  }
  return p;
}

}  // namespace mhf

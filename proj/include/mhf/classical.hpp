#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mhf/checkpoint.hpp"
#include "mhf/core.hpp"
#include "mhf/user_index.hpp"

namespace mhf {

enum class ClassicalKind {
  kLogisticRegression,
  kSvm,
  kDecisionTree,
  kRandomForest,
  kXgboostStyleGbdt,
  kLightgbmStyleGbdt,
};
inline constexpr std::array<ClassicalKind, 6> kAllClassicalKinds = {
    ClassicalKind::kLogisticRegression, ClassicalKind::kSvm,          ClassicalKind::kDecisionTree,
    ClassicalKind::kRandomForest,       ClassicalKind::kXgboostStyleGbdt, ClassicalKind::kLightgbmStyleGbdt};

std::string_view classical_kind_name(ClassicalKind k);
ClassicalKind classical_kind_from_name(std::string_view name);

enum class Personalization { kAgnostic, kUserAware };
std::string_view personalization_name(Personalization p);
Personalization personalization_from_name(std::string_view name);

enum class ClassWeighting { kNone, kInverseFrequency };

struct ClassicalSpec {
  ClassicalKind kind = ClassicalKind::kXgboostStyleGbdt;
  nlohmann::json hyperparameters = nlohmann::json::object();
  Personalization personalization = Personalization::kAgnostic;
  ClassWeighting class_weighting = ClassWeighting::kNone;
  std::uint64_t seed = 0;

  // Unknown keys or out-of-range values raise ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static ClassicalSpec from_json(const nlohmann::json& j);
};

// Small documented grid per kind, searched on the validation split.
std::vector<nlohmann::json> default_grid(ClassicalKind kind);

// N / (K * n_c) per class present in `labels`; absent classes get 0.
std::array<double, kNumClasses> inverse_frequency_weights(std::span<const Severity> labels);

class ClassicalModel {
 public:
  virtual ~ClassicalModel() = default;

  virtual ClassicalKind kind() const = 0;
  // Rows sum to 1. Kinds without native probabilities derive them from
  // margins (see native_probabilities()).
  virtual Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const = 0;
  virtual bool native_probabilities() const = 0;
  std::vector<Severity> predict(const Eigen::MatrixXd& X) const;

  int input_dim() const { return input_dim_; }
  // Gain-based importances for the boosted kinds; empty otherwise.
  virtual std::vector<double> feature_importance() const { return {}; }

  virtual void save_payload(BinaryWriter& w) const = 0;

 protected:
  void check_input(const Eigen::MatrixXd& X) const;
  int input_dim_ = 0;
};

std::unique_ptr<ClassicalModel> fit_classical(const ClassicalSpec& spec, const Eigen::MatrixXd& X,
                                              std::span<const Severity> y);

struct TunedClassical {
  std::unique_ptr<ClassicalModel> model;
  ClassicalSpec spec;  // with the chosen hyperparameters
  double val_macro_f1 = 0;
};

// Fits one model per grid entry and keeps the best validation macro-F1.
// Ties go to the earlier grid entry.
TunedClassical tune_classical(const ClassicalSpec& base, const std::vector<nlohmann::json>& grid,
                              const Eigen::MatrixXd& X_train, std::span<const Severity> y_train,
                              const Eigen::MatrixXd& X_val, std::span<const Severity> y_val);

void save_classical(const std::filesystem::path& path, const ClassicalModel& model, const ClassicalSpec& spec,
                    const std::string& train_fingerprint);
struct LoadedClassical {
  std::unique_ptr<ClassicalModel> model;
  ClassicalSpec spec;
  std::string train_fingerprint;
};
LoadedClassical load_classical(const std::filesystem::path& path);

// Appends a one-hot block of width index.size(). Unseen participants get an
// all-zero block and a logged warning.
Eigen::MatrixXd attach_user_onehot(const Eigen::MatrixXd& inputs, std::span<const std::string> participant_ids,
                                   const UserIndex& index);

}  // namespace mhf

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mhf/core.hpp"
#include "mhf/eval.hpp"
#include "mhf/features.hpp"
#include "mhf/losses.hpp"
#include "mhf/nn.hpp"
#include "mhf/user_index.hpp"

namespace mhf {

enum class NeuralKind { kMlp, kTcn, kLstmAttention, kTransformerEncoder };
inline constexpr std::array<NeuralKind, 4> kAllNeuralKinds = {NeuralKind::kMlp, NeuralKind::kTcn,
                                                              NeuralKind::kLstmAttention,
                                                              NeuralKind::kTransformerEncoder};
std::string_view neural_kind_name(NeuralKind k);
NeuralKind neural_kind_from_name(std::string_view name);

struct OptimizerSettings {
  double learning_rate = 2e-3;
  double weight_decay = 0.0;
  int batch_size = 32;
  int max_epochs = 40;
  int patience = 8;         // epochs without val macro-F1 improvement
  double grad_clip = 5.0;   // global norm; 0 disables
};

struct NeuralSpec {
  NeuralKind kind = NeuralKind::kTransformerEncoder;
  int width = 32;          // hidden size / model width / channels
  int depth = 2;           // layers or residual blocks
  int heads = 2;           // transformer only
  int kernel_size = 3;     // tcn only
  double dropout = 0.1;
  int ff_multiplier = 2;   // transformer feed-forward width = multiplier * width
  int max_steps = kWindowDays;  // transformer position table length
  bool user_embedding = false;
  int embedding_dim = 8;
  LossSpec loss;
  OptimizerSettings optimizer;
  std::uint64_t seed = 0;

  // Throws ConfigError, naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static NeuralSpec from_json(const nlohmann::json& j);
};

// One minibatch. Sequence models read `x` as (B*T) x D with row b*T + t;
// the MLP reads (B x D) aggregated rows (steps == 1).
struct Batch {
  Eigen::MatrixXd x;
  int size = 0;
  int steps = 1;
  std::vector<int> lengths;  // valid steps per sample, <= steps
  std::vector<int> users;    // embedding rows; -1 for unseen participants
};

// Stacks per-sample (T_i x D) inputs, zero-padding to the longest.
Batch make_batch(std::span<const Eigen::MatrixXd> inputs, std::span<const int> users);

class NeuralModel {
 public:
  virtual ~NeuralModel() = default;

  const NeuralSpec& spec() const { return spec_; }
  int input_dim() const { return input_dim_; }
  int num_users() const { return num_users_; }
  // Aggregated for the MLP, sequence for everything else.
  Layout input_layout() const;

  // Logits (B x 4). Dropout is active only when `rng` is given.
  virtual nn::Var forward(nn::Graph& g, const Batch& batch, std::mt19937_64* rng) const = 0;

  Eigen::MatrixXd predict_proba(const Batch& batch) const;

  std::vector<nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;

 protected:
  NeuralModel(NeuralSpec spec, int input_dim, int num_users);
  nn::Parameter& add_param(std::string name, Eigen::MatrixXd init);
  nn::Parameter& weight(const std::string& name, int rows, int cols, std::mt19937_64& rng);
  nn::Parameter& zeros(const std::string& name, int rows, int cols);
  nn::Parameter& ones(const std::string& name, int rows, int cols);
  // Concatenates the user embedding to every step (or to the aggregated row).
  nn::Var personalize(nn::Graph& g, nn::Var x, const Batch& batch) const;
  int personalized_dim() const;

  NeuralSpec spec_;
  int input_dim_;
  int num_users_;
  nn::Parameter* embedding_ = nullptr;

 private:
  std::vector<std::unique_ptr<nn::Parameter>> params_;
};

// Deterministic in `spec.seed`. With user_embedding, num_users must be > 0.
std::unique_ptr<NeuralModel> build_model(const NeuralSpec& spec, int input_dim, int num_users);

// Inputs already in the model's layout.
struct TrainingData {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<int> users;
  std::vector<Severity> labels;
};

TrainingData make_training_data(const FeaturePipeline& pipeline, const Dataset& dataset,
                                std::span<const std::size_t> indices, const UserIndex& users,
                                int num_days = kWindowDays);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_macro_f1 = 0;
  double val_accuracy = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_macro_f1 = 0;
  std::string to_csv() const;
};

// Minibatch Adam with early stopping on validation macro-F1; the model ends
// at its best-validation weights. A non-finite loss raises TrainingError.
TrainHistory train(NeuralModel& model, const TrainingData& train_data, const TrainingData& val_data);

// Class probabilities for already-prepared inputs, in batches.
Eigen::MatrixXd predict_proba(const NeuralModel& model, const TrainingData& data);

void save_neural(const std::filesystem::path& path, const NeuralModel& model, const UserIndex& users,
                 const std::string& train_fingerprint);
struct LoadedNeural {
  std::unique_ptr<NeuralModel> model;
  UserIndex users;
  std::string train_fingerprint;
};
LoadedNeural load_neural(const std::filesystem::path& path);

// Model + its feature pipeline + user index behind the Forecaster surface.
class NeuralForecaster : public Forecaster {
 public:
  NeuralForecaster(const NeuralModel& model, FeaturePipeline pipeline, UserIndex users);
  std::vector<Prediction> predict(const Dataset& dataset, std::span<const std::size_t> indices,
                                  int num_days) const override;

 private:
  const NeuralModel& model_;
  FeaturePipeline pipeline_;
  UserIndex users_;
};

}  // namespace mhf

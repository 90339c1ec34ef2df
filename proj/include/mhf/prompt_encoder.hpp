#pragma once

// Soft-prompt encoder pretrained by masked-cell reconstruction. The linear
// projector into the language model's embedding space is left untrained.

#include <memory>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mhf/core.hpp"
#include "mhf/features.hpp"
#include "mhf/nn.hpp"

namespace mhf {

struct PromptEncoderConfig {
  double mask_fraction = 0.15;
  int epochs = 20;
  int width = 32;
  int depth = 2;
  int heads = 2;
  int ff_multiplier = 2;
  int projector_dim = 64;  // stand-in for the LLM embedding width
  double learning_rate = 2e-3;
  int batch_size = 32;
  double grad_clip = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
};

class PromptEncoder {
 public:
  PromptEncoder(const PromptEncoderConfig& config, int input_dim, int max_steps);

  // (B*T x D) inputs with masked cells zeroed; `mask` marks them with 1.
  nn::Var encode(nn::Graph& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd& mask, int batch, int steps) const;
  nn::Var reconstruct(nn::Graph& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd& mask, int batch, int steps) const;
  // Soft-prompt tokens for one sequence: (T x projector_dim).
  Eigen::MatrixXd soft_prompt(const Eigen::MatrixXd& sequence) const;

  std::vector<nn::Parameter*> parameters();
  int input_dim() const { return input_dim_; }

 private:
  nn::Parameter& add(const std::string& name, nn::Mat value);

  PromptEncoderConfig config_;
  int input_dim_;
  int max_steps_;
  std::vector<std::unique_ptr<nn::Parameter>> params_;
  struct Layer {
    nn::Parameter *ln1_g, *ln1_b, *qkv_w, *qkv_b, *o_w, *o_b, *ln2_g, *ln2_b, *ff1_w, *ff1_b, *ff2_w, *ff2_b;
  };
  nn::Parameter *in_w_, *in_b_, *pos_, *lnf_g_, *lnf_b_, *head_w_, *head_b_, *proj_w_, *proj_b_;
  std::vector<Layer> layers_;
};

// Random cell masks, shared between the encoder and the baseline so both
// are scored on the same cells.
Eigen::MatrixXd random_mask(Eigen::Index rows, Eigen::Index cols, double fraction, std::mt19937_64& rng);

struct PretrainResult {
  std::unique_ptr<PromptEncoder> encoder;
  std::vector<double> epoch_loss;  // mean masked MSE per epoch
};

// Sequences come from `pipeline` (normalized, full windows).
PretrainResult pretrain_prompt_encoder(const FeaturePipeline& pipeline, const Dataset& dataset,
                                       std::span<const std::size_t> train, const PromptEncoderConfig& config);

struct ReconstructionScore {
  double encoder_mse = 0;
  double baseline_mse = 0;  // predicts the per-feature training mean
  std::size_t masked_cells = 0;
};

ReconstructionScore score_reconstruction(const PromptEncoder& encoder, const FeaturePipeline& pipeline,
                                         const Dataset& dataset, std::span<const std::size_t> train,
                                         std::span<const std::size_t> heldout, double mask_fraction,
                                         std::uint64_t seed);

}  // namespace mhf

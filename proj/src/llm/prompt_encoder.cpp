#include "mhf/prompt_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace mhf {

using nn::Graph;
using nn::Mat;
using nn::Var;

void PromptEncoderConfig::validate() const {
  if (!(mask_fraction > 0 && mask_fraction < 1)) {
    throw ValidationError(fmt::format("mask_fraction must be in (0, 1), got {}", mask_fraction));
  }
  if (epochs < 1 || width < 1 || depth < 1 || heads < 1 || ff_multiplier < 1 || projector_dim < 1 || batch_size < 1) {
    throw ValidationError("prompt encoder sizes and epochs must be positive");
  }
  if (width % heads != 0) throw ValidationError(fmt::format("width {} is not divisible by {} heads", width, heads));
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be positive");
}

nn::Parameter& PromptEncoder::add(const std::string& name, Mat value) {
  params_.push_back(std::make_unique<nn::Parameter>(name, std::move(value)));
  return *params_.back();
}

PromptEncoder::PromptEncoder(const PromptEncoderConfig& config, int input_dim, int max_steps)
    : config_(config), input_dim_(input_dim), max_steps_(max_steps) {
  config_.validate();
  std::mt19937_64 rng(config.seed ^ 0x5eedf00dULL);
  const int d = config.width, ff = config.ff_multiplier * d;
  in_w_ = &add("enc.in.w", nn::glorot(2 * input_dim, d, rng));
  in_b_ = &add("enc.in.b", Mat::Zero(1, d));
  std::normal_distribution<double> n(0, 0.02);
  Mat pos(max_steps, d);
  for (Eigen::Index j = 0; j < pos.cols(); ++j) {
    for (Eigen::Index i = 0; i < pos.rows(); ++i) pos(i, j) = n(rng);
  }
  pos_ = &add("enc.pos", pos);
  for (int l = 0; l < config.depth; ++l) {
    Layer L;
    L.ln1_g = &add(fmt::format("enc.{}.ln1.g", l), Mat::Ones(1, d));
    L.ln1_b = &add(fmt::format("enc.{}.ln1.b", l), Mat::Zero(1, d));
    L.qkv_w = &add(fmt::format("enc.{}.qkv.w", l), nn::glorot(d, 3 * d, rng));
    L.qkv_b = &add(fmt::format("enc.{}.qkv.b", l), Mat::Zero(1, 3 * d));
    L.o_w = &add(fmt::format("enc.{}.o.w", l), nn::glorot(d, d, rng));
    L.o_b = &add(fmt::format("enc.{}.o.b", l), Mat::Zero(1, d));
    L.ln2_g = &add(fmt::format("enc.{}.ln2.g", l), Mat::Ones(1, d));
    L.ln2_b = &add(fmt::format("enc.{}.ln2.b", l), Mat::Zero(1, d));
    L.ff1_w = &add(fmt::format("enc.{}.ff1.w", l), nn::glorot(d, ff, rng));
    L.ff1_b = &add(fmt::format("enc.{}.ff1.b", l), Mat::Zero(1, ff));
    L.ff2_w = &add(fmt::format("enc.{}.ff2.w", l), nn::glorot(ff, d, rng));
    L.ff2_b = &add(fmt::format("enc.{}.ff2.b", l), Mat::Zero(1, d));
    layers_.push_back(L);
  }
  lnf_g_ = &add("enc.lnf.g", Mat::Ones(1, d));
  lnf_b_ = &add("enc.lnf.b", Mat::Zero(1, d));
  head_w_ = &add("enc.head.w", nn::glorot(d, input_dim, rng));
  head_b_ = &add("enc.head.b", Mat::Zero(1, input_dim));
  proj_w_ = &add("proj.w", nn::glorot(d, config.projector_dim, rng));
  proj_b_ = &add("proj.b", Mat::Zero(1, config.projector_dim));
}

namespace {
Var linear(Graph& g, Var x, nn::Parameter& w, nn::Parameter& b) {
  return nn::add_row(nn::matmul(x, g.param(w)), g.param(b));
}
}  // namespace

Var PromptEncoder::encode(Graph& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd& mask, int batch,
                          int steps) const {
  if (steps > max_steps_) throw ValidationError(fmt::format("{} steps exceed the encoder's {}", steps, max_steps_));
  if (x.cols() != input_dim_ || x.rows() != static_cast<Eigen::Index>(batch) * steps) {
    throw ValidationError("prompt encoder input has the wrong shape");
  }
  const int d = config_.width;
  Mat input(x.rows(), 2 * input_dim_);
  input << x.cwiseProduct((1.0 - mask.array()).matrix()), mask;
  std::vector<int> order(steps);
  std::iota(order.begin(), order.end(), 0);
  Var h = nn::add_tiled(linear(g, g.constant(std::move(input)), *in_w_, *in_b_), nn::select_rows(g.param(*pos_), order));
  std::vector<int> lengths(batch, steps);
  for (const auto& L : layers_) {
    Var a = nn::layer_norm(h, g.param(*L.ln1_g), g.param(*L.ln1_b));
    Var qkv = linear(g, a, *L.qkv_w, *L.qkv_b);
    Var att = nn::attention(nn::slice_cols(qkv, 0, d), nn::slice_cols(qkv, d, d), nn::slice_cols(qkv, 2 * d, d), batch,
                            steps, config_.heads, lengths);
    h = nn::add(h, linear(g, att, *L.o_w, *L.o_b));
    Var f = nn::layer_norm(h, g.param(*L.ln2_g), g.param(*L.ln2_b));
    h = nn::add(h, linear(g, nn::relu(linear(g, f, *L.ff1_w, *L.ff1_b)), *L.ff2_w, *L.ff2_b));
  }
  return nn::layer_norm(h, g.param(*lnf_g_), g.param(*lnf_b_));
}

Var PromptEncoder::reconstruct(Graph& g, const Eigen::MatrixXd& x, const Eigen::MatrixXd& mask, int batch,
                               int steps) const {
  return linear(g, encode(g, x, mask, batch, steps), *head_w_, *head_b_);
}

Eigen::MatrixXd PromptEncoder::soft_prompt(const Eigen::MatrixXd& sequence) const {
  Graph g;
  Var h = encode(g, sequence, Mat::Zero(sequence.rows(), sequence.cols()), 1, static_cast<int>(sequence.rows()));
  return linear(g, h, *proj_w_, *proj_b_).value();
}

std::vector<nn::Parameter*> PromptEncoder::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

Eigen::MatrixXd random_mask(Eigen::Index rows, Eigen::Index cols, double fraction, std::mt19937_64& rng) {
  std::bernoulli_distribution pick(fraction);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = pick(rng) ? 1.0 : 0.0;
  }
  return m;
}

namespace {

Mat stack_sequences(const FeaturePipeline& pipeline, const Dataset& dataset, std::span<const std::size_t> idx) {
  const int T = pipeline.config().time_steps(kWindowDays), D = pipeline.config().dim();
  Mat x(static_cast<Eigen::Index>(idx.size()) * T, D);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    x.middleRows(static_cast<Eigen::Index>(b) * T, T) = pipeline.sequence(dataset[idx[b]]);
  }
  return x;
}

}  // namespace

PretrainResult pretrain_prompt_encoder(const FeaturePipeline& pipeline, const Dataset& dataset,
                                       std::span<const std::size_t> train, const PromptEncoderConfig& config) {
  config.validate();
  if (train.empty()) throw ValidationError("prompt encoder pretraining needs training windows");
  const int T = pipeline.config().time_steps(kWindowDays), D = pipeline.config().dim();
  PretrainResult result;
  result.encoder = std::make_unique<PromptEncoder>(config, D, T);
  auto params = result.encoder->parameters();
  // The projector is not part of the reconstruction objective.
  params.erase(std::remove_if(params.begin(), params.end(), [](auto* p) { return p->name.rfind("proj.", 0) == 0; }),
               params.end());
  nn::Adam opt(params, config.learning_rate);
  std::mt19937_64 shuffle_rng(config.seed * 2654435761ULL + 1), mask_rng(config.seed * 2654435761ULL + 2);
  std::vector<std::size_t> order(train.begin(), train.end());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - start);
      std::span<const std::size_t> chunk(order.data() + start, n);
      Mat x = stack_sequences(pipeline, dataset, chunk);
      Mat mask = random_mask(x.rows(), x.cols(), config.mask_fraction, mask_rng);
      Graph g;
      Var loss = nn::masked_mse(result.encoder->reconstruct(g, x, mask, static_cast<int>(n), T), x, mask);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) throw TrainingError(fmt::format("prompt encoder diverged in epoch {}", epoch + 1));
      opt.zero_grad();
      g.backward(loss);
      if (!std::isfinite(opt.clip_grad_norm(config.grad_clip))) {
        throw TrainingError(fmt::format("non-finite prompt encoder gradient in epoch {}", epoch + 1));
      }
      opt.step();
      total += value;
      ++batches;
    }
    result.epoch_loss.push_back(total / static_cast<double>(batches));
    spdlog::debug("prompt encoder epoch {}: masked mse {:.4f}", epoch + 1, result.epoch_loss.back());
  }
  return result;
}

ReconstructionScore score_reconstruction(const PromptEncoder& encoder, const FeaturePipeline& pipeline,
                                         const Dataset& dataset, std::span<const std::size_t> train,
                                         std::span<const std::size_t> heldout, double mask_fraction,
                                         std::uint64_t seed) {
  if (!(mask_fraction > 0 && mask_fraction < 1)) throw ValidationError("mask_fraction must be in (0, 1)");
  if (train.empty() || heldout.empty()) throw ValidationError("reconstruction scoring needs train and held-out windows");
  const int T = pipeline.config().time_steps(kWindowDays);
  const Eigen::RowVectorXd train_mean = stack_sequences(pipeline, dataset, train).colwise().mean();
  Mat x = stack_sequences(pipeline, dataset, heldout);
  std::mt19937_64 rng(seed);
  Mat mask = random_mask(x.rows(), x.cols(), mask_fraction, rng);
  ReconstructionScore s;
  s.masked_cells = static_cast<std::size_t>(mask.sum());
  if (s.masked_cells == 0) throw ValidationError("no cells were masked; raise mask_fraction or use more windows");
  Graph g;
  Mat pred = encoder.reconstruct(g, x, mask, static_cast<int>(heldout.size()), T).value();
  const double n = static_cast<double>(s.masked_cells);
  s.encoder_mse = (pred - x).cwiseProduct(mask).squaredNorm() / n;
  Mat base = x.rowwise() - train_mean;
  s.baseline_mse = base.cwiseProduct(mask).squaredNorm() / n;
  return s;
}

}  // namespace mhf

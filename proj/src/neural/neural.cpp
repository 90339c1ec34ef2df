#include "mhf/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mhf/checkpoint.hpp"

namespace mhf {

using nn::Graph;
using nn::Mat;
using nn::Var;

namespace {

constexpr std::array<std::string_view, 4> kNeuralNames = {"mlp", "tcn", "lstm_attention", "transformer_encoder"};

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), 0x6e6eu};
  return std::mt19937_64(seq);
}

Var linear(Graph& g, Var x, nn::Parameter& w, nn::Parameter& b) {
  return nn::add_row(nn::matmul(x, g.param(w)), g.param(b));
}

Var maybe_dropout(Var x, double p, std::mt19937_64* rng) { return rng ? nn::dropout(x, p, *rng) : x; }

class Mlp : public NeuralModel {
 public:
  Mlp(const NeuralSpec& spec, int input_dim, int num_users) : NeuralModel(spec, input_dim, num_users) {
    auto rng = derived_rng(spec.seed, 10);
    int in = personalized_dim();
    for (int l = 0; l < spec.depth; ++l) {
      layers_.push_back({&weight(fmt::format("mlp.{}.w", l), in, spec.width, rng),
                         &zeros(fmt::format("mlp.{}.b", l), 1, spec.width)});
      in = spec.width;
    }
    out_w_ = &weight("mlp.out.w", in, kNumClasses, rng);
    out_b_ = &zeros("mlp.out.b", 1, kNumClasses);
  }

  Var forward(Graph& g, const Batch& batch, std::mt19937_64* rng) const override {
    Var h = personalize(g, g.constant(batch.x), batch);
    for (const auto& [w, b] : layers_) h = maybe_dropout(nn::relu(linear(g, h, *w, *b)), spec_.dropout, rng);
    return linear(g, h, *out_w_, *out_b_);
  }

 private:
  std::vector<std::pair<nn::Parameter*, nn::Parameter*>> layers_;
  nn::Parameter* out_w_;
  nn::Parameter* out_b_;
};

// Residual blocks of two dilated causal convolutions; the readout takes the
// last valid step of each sample.
class Tcn : public NeuralModel {
 public:
  Tcn(const NeuralSpec& spec, int input_dim, int num_users) : NeuralModel(spec, input_dim, num_users) {
    auto rng = derived_rng(spec.seed, 11);
    int in = personalized_dim();
    const int k = spec.kernel_size, w = spec.width;
    for (int l = 0; l < spec.depth; ++l) {
      Block b;
      b.dilation = 1 << l;
      b.w1 = &weight(fmt::format("tcn.{}.conv1.w", l), k * in, w, rng);
      b.b1 = &zeros(fmt::format("tcn.{}.conv1.b", l), 1, w);
      b.w2 = &weight(fmt::format("tcn.{}.conv2.w", l), k * w, w, rng);
      b.b2 = &zeros(fmt::format("tcn.{}.conv2.b", l), 1, w);
      if (in != w) b.res = &weight(fmt::format("tcn.{}.res.w", l), in, w, rng);
      blocks_.push_back(b);
      in = w;
    }
    out_w_ = &weight("tcn.out.w", in, kNumClasses, rng);
    out_b_ = &zeros("tcn.out.b", 1, kNumClasses);
  }

  Var forward(Graph& g, const Batch& batch, std::mt19937_64* rng) const override {
    const int B = batch.size, T = batch.steps, k = spec_.kernel_size;
    Var x = personalize(g, g.constant(batch.x), batch);
    for (const auto& b : blocks_) {
      Var h = nn::relu(linear(g, nn::causal_patches(x, B, T, k, b.dilation), *b.w1, *b.b1));
      h = maybe_dropout(h, spec_.dropout, rng);
      h = nn::relu(linear(g, nn::causal_patches(h, B, T, k, b.dilation), *b.w2, *b.b2));
      h = maybe_dropout(h, spec_.dropout, rng);
      Var res = b.res ? nn::matmul(x, g.param(*b.res)) : x;
      x = nn::relu(nn::add(h, res));
    }
    std::vector<int> last(B);
    for (int i = 0; i < B; ++i) last[i] = i * T + batch.lengths[i] - 1;
    return linear(g, nn::select_rows(x, std::move(last)), *out_w_, *out_b_);
  }

 private:
  struct Block {
    int dilation = 1;
    nn::Parameter *w1 = nullptr, *b1 = nullptr, *w2 = nullptr, *b2 = nullptr, *res = nullptr;
  };
  std::vector<Block> blocks_;
  nn::Parameter* out_w_;
  nn::Parameter* out_b_;
};

// Stacked LSTM with additive attention pooling over the hidden states of
// the valid steps.
class LstmAttention : public NeuralModel {
 public:
  LstmAttention(const NeuralSpec& spec, int input_dim, int num_users) : NeuralModel(spec, input_dim, num_users) {
    auto rng = derived_rng(spec.seed, 12);
    int in = personalized_dim();
    const int H = spec.width;
    for (int l = 0; l < spec.depth; ++l) {
      Layer layer;
      layer.wx = &weight(fmt::format("lstm.{}.wx", l), in, 4 * H, rng);
      layer.wh = &weight(fmt::format("lstm.{}.wh", l), H, 4 * H, rng);
      Mat bias = Mat::Zero(1, 4 * H);
      bias.middleCols(H, H).setOnes();  // forget gate starts open
      layer.b = &add_param(fmt::format("lstm.{}.b", l), bias);
      layers_.push_back(layer);
      in = H;
    }
    att_w_ = &weight("lstm.att.w", H, H, rng);
    att_b_ = &zeros("lstm.att.b", 1, H);
    att_v_ = &weight("lstm.att.v", H, 1, rng);
    out_w_ = &weight("lstm.out.w", H, kNumClasses, rng);
    out_b_ = &zeros("lstm.out.b", 1, kNumClasses);
  }

  Var forward(Graph& g, const Batch& batch, std::mt19937_64* rng) const override {
    const int B = batch.size, T = batch.steps, H = spec_.width;
    Var seq = personalize(g, g.constant(batch.x), batch);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      Var xw = linear(g, seq, *layer.wx, *layer.b);
      Var wh = g.param(*layer.wh);
      Var h = g.constant(Mat::Zero(B, H));
      Var c = g.constant(Mat::Zero(B, H));
      std::vector<Var> states;
      for (int t = 0; t < T; ++t) {
        std::vector<int> rows(B);
        for (int i = 0; i < B; ++i) rows[i] = i * T + t;
        Var gates = nn::add(nn::select_rows(xw, std::move(rows)), nn::matmul(h, wh));
        Var ig = nn::sigmoid(nn::slice_cols(gates, 0, H));
        Var fg = nn::sigmoid(nn::slice_cols(gates, H, H));
        Var gg = nn::tanh(nn::slice_cols(gates, 2 * H, H));
        Var og = nn::sigmoid(nn::slice_cols(gates, 3 * H, H));
        c = nn::add(nn::mul(fg, c), nn::mul(ig, gg));
        h = nn::mul(og, nn::tanh(c));
        states.push_back(h);
      }
      seq = nn::stack_steps(states);
      if (l + 1 < layers_.size()) seq = maybe_dropout(seq, spec_.dropout, rng);
    }
    Var u = nn::tanh(linear(g, seq, *att_w_, *att_b_));
    Var w = nn::segment_softmax(nn::matmul(u, g.param(*att_v_)), B, T, batch.lengths);
    Var ctx = maybe_dropout(nn::time_weighted_sum(seq, w, B, T), spec_.dropout, rng);
    return linear(g, ctx, *out_w_, *out_b_);
  }

 private:
  struct Layer {
    nn::Parameter *wx, *wh, *b;
  };
  std::vector<Layer> layers_;
  nn::Parameter *att_w_, *att_b_, *att_v_, *out_w_, *out_b_;
};

// Pre-norm encoder with learned positions and masked mean pooling.
class TransformerEncoder : public NeuralModel {
 public:
  TransformerEncoder(const NeuralSpec& spec, int input_dim, int num_users) : NeuralModel(spec, input_dim, num_users) {
    auto rng = derived_rng(spec.seed, 13);
    const int d = spec.width, ff = spec.ff_multiplier * spec.width;
    in_w_ = &weight("tf.in.w", personalized_dim(), d, rng);
    in_b_ = &zeros("tf.in.b", 1, d);
    std::normal_distribution<double> n(0, 0.02);
    Mat pos(spec.max_steps, d);
    for (Eigen::Index j = 0; j < pos.cols(); ++j) {
      for (Eigen::Index i = 0; i < pos.rows(); ++i) pos(i, j) = n(rng);
    }
    pos_ = &add_param("tf.pos", pos);
    for (int l = 0; l < spec.depth; ++l) {
      Layer L;
      L.ln1_g = &ones(fmt::format("tf.{}.ln1.g", l), 1, d);
      L.ln1_b = &zeros(fmt::format("tf.{}.ln1.b", l), 1, d);
      L.qkv_w = &weight(fmt::format("tf.{}.qkv.w", l), d, 3 * d, rng);
      L.qkv_b = &zeros(fmt::format("tf.{}.qkv.b", l), 1, 3 * d);
      L.o_w = &weight(fmt::format("tf.{}.o.w", l), d, d, rng);
      L.o_b = &zeros(fmt::format("tf.{}.o.b", l), 1, d);
      L.ln2_g = &ones(fmt::format("tf.{}.ln2.g", l), 1, d);
      L.ln2_b = &zeros(fmt::format("tf.{}.ln2.b", l), 1, d);
      L.ff1_w = &weight(fmt::format("tf.{}.ff1.w", l), d, ff, rng);
      L.ff1_b = &zeros(fmt::format("tf.{}.ff1.b", l), 1, ff);
      L.ff2_w = &weight(fmt::format("tf.{}.ff2.w", l), ff, d, rng);
      L.ff2_b = &zeros(fmt::format("tf.{}.ff2.b", l), 1, d);
      layers_.push_back(L);
    }
    lnf_g_ = &ones("tf.lnf.g", 1, d);
    lnf_b_ = &zeros("tf.lnf.b", 1, d);
    out_w_ = &weight("tf.out.w", d, kNumClasses, rng);
    out_b_ = &zeros("tf.out.b", 1, kNumClasses);
  }

  Var forward(Graph& g, const Batch& batch, std::mt19937_64* rng) const override {
    const int B = batch.size, T = batch.steps, d = spec_.width;
    if (T > spec_.max_steps) {
      throw ValidationError(fmt::format("transformer: {} steps exceed the position table ({})", T, spec_.max_steps));
    }
    Var x = personalize(g, g.constant(batch.x), batch);
    std::vector<int> steps(T);
    std::iota(steps.begin(), steps.end(), 0);
    Var h = nn::add_tiled(linear(g, x, *in_w_, *in_b_), nn::select_rows(g.param(*pos_), steps));
    h = maybe_dropout(h, spec_.dropout, rng);
    for (const auto& L : layers_) {
      Var a = nn::layer_norm(h, g.param(*L.ln1_g), g.param(*L.ln1_b));
      Var qkv = linear(g, a, *L.qkv_w, *L.qkv_b);
      Var att = nn::attention(nn::slice_cols(qkv, 0, d), nn::slice_cols(qkv, d, d), nn::slice_cols(qkv, 2 * d, d), B,
                              T, spec_.heads, batch.lengths);
      h = nn::add(h, maybe_dropout(linear(g, att, *L.o_w, *L.o_b), spec_.dropout, rng));
      Var f = nn::layer_norm(h, g.param(*L.ln2_g), g.param(*L.ln2_b));
      f = linear(g, nn::relu(linear(g, f, *L.ff1_w, *L.ff1_b)), *L.ff2_w, *L.ff2_b);
      h = nn::add(h, maybe_dropout(f, spec_.dropout, rng));
    }
    h = nn::layer_norm(h, g.param(*lnf_g_), g.param(*lnf_b_));
    return linear(g, nn::masked_mean(h, B, T, batch.lengths), *out_w_, *out_b_);
  }

 private:
  struct Layer {
    nn::Parameter *ln1_g, *ln1_b, *qkv_w, *qkv_b, *o_w, *o_b, *ln2_g, *ln2_b, *ff1_w, *ff1_b, *ff2_w, *ff2_b;
  };
  nn::Parameter *in_w_, *in_b_, *pos_;
  std::vector<Layer> layers_;
  nn::Parameter *lnf_g_, *lnf_b_, *out_w_, *out_b_;
};

std::vector<int> int_labels(std::span<const Severity> y) {
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = rank(y[i]);
  return out;
}

Batch slice_batch(const TrainingData& data, std::span<const std::size_t> order, std::size_t begin, std::size_t end) {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<int> users;
  for (std::size_t i = begin; i < end; ++i) {
    inputs.push_back(data.inputs[order[i]]);
    users.push_back(data.users[order[i]]);
  }
  return make_batch(inputs, users);
}

std::vector<Severity> argmax_rows(const Eigen::MatrixXd& P) {
  std::vector<Severity> out(P.rows());
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    Eigen::Index k;
    P.row(i).maxCoeff(&k);
    out[i] = severity_from_rank(static_cast<int>(k));
  }
  return out;
}

void check_int(const nlohmann::json& j, const char* key, int& field) {
  if (j.contains(key)) field = j.at(key).get<int>();
}
void check_double(const nlohmann::json& j, const char* key, double& field) {
  if (j.contains(key)) field = j.at(key).get<double>();
}

}  // namespace

std::string_view neural_kind_name(NeuralKind k) { return kNeuralNames[static_cast<int>(k)]; }

NeuralKind neural_kind_from_name(std::string_view name) {
  for (auto k : kAllNeuralKinds) {
    if (neural_kind_name(k) == name) return k;
  }
  throw ConfigError(fmt::format("unknown neural model kind '{}'", name));
}

void NeuralSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw ConfigError(fmt::format("{}: {}", neural_kind_name(kind), what));
  };
  if (width < 1) fail(fmt::format("width must be >= 1, got {}", width));
  if (depth < 1) fail(fmt::format("depth must be >= 1, got {}", depth));
  if (!(dropout >= 0 && dropout < 1)) fail(fmt::format("dropout must be in [0, 1), got {}", dropout));
  if (kind == NeuralKind::kTransformerEncoder) {
    if (heads < 1 || width % heads != 0) fail(fmt::format("heads ({}) must divide width ({})", heads, width));
    if (ff_multiplier < 1) fail("ff_multiplier must be >= 1");
    if (max_steps < 1) fail("max_steps must be >= 1");
  }
  if (kind == NeuralKind::kTcn && kernel_size < 1) fail("kernel_size must be >= 1");
  if (user_embedding && embedding_dim < 1) fail("embedding_dim must be >= 1");
  const auto& o = optimizer;
  if (!(o.learning_rate > 0)) fail("optimizer.learning_rate must be > 0");
  if (!(o.weight_decay >= 0)) fail("optimizer.weight_decay must be >= 0");
  if (o.batch_size < 1) fail("optimizer.batch_size must be >= 1");
  if (o.max_epochs < 1) fail("optimizer.max_epochs must be >= 1");
  if (o.patience < 1) fail("optimizer.patience must be >= 1");
  if (!(o.grad_clip >= 0)) fail("optimizer.grad_clip must be >= 0");
  loss.validate();
}

nlohmann::json NeuralSpec::to_json() const {
  return {{"kind", neural_kind_name(kind)},
          {"width", width},
          {"depth", depth},
          {"heads", heads},
          {"kernel_size", kernel_size},
          {"dropout", dropout},
          {"ff_multiplier", ff_multiplier},
          {"max_steps", max_steps},
          {"personalization", user_embedding ? nlohmann::json{{"user_embedding", embedding_dim}}
                                             : nlohmann::json("agnostic")},
          {"loss", loss.to_json()},
          {"optimizer",
           {{"learning_rate", optimizer.learning_rate},
            {"weight_decay", optimizer.weight_decay},
            {"batch_size", optimizer.batch_size},
            {"max_epochs", optimizer.max_epochs},
            {"patience", optimizer.patience},
            {"grad_clip", optimizer.grad_clip}}},
          {"seed", seed}};
}

NeuralSpec NeuralSpec::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"kind",          "width",     "depth",           "heads",
                                              "kernel_size",   "dropout",   "ff_multiplier",   "max_steps",
                                              "personalization", "loss",    "optimizer",       "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(fmt::format("neural spec: unknown key '{}'", key));
  }
  NeuralSpec s;
  s.kind = neural_kind_from_name(j.at("kind").get<std::string>());
  check_int(j, "width", s.width);
  check_int(j, "depth", s.depth);
  check_int(j, "heads", s.heads);
  check_int(j, "kernel_size", s.kernel_size);
  check_double(j, "dropout", s.dropout);
  check_int(j, "ff_multiplier", s.ff_multiplier);
  check_int(j, "max_steps", s.max_steps);
  if (j.contains("personalization")) {
    const auto& p = j["personalization"];
    if (p.is_string() && p == "agnostic") {
      s.user_embedding = false;
    } else if (p.is_string() && p == "user_embedding") {
      s.user_embedding = true;
    } else if (p.is_object() && p.contains("user_embedding")) {
      s.user_embedding = true;
      s.embedding_dim = p["user_embedding"].get<int>();
    } else {
      throw ConfigError(fmt::format("neural spec: personalization must be \"agnostic\" or {{\"user_embedding\": dim}}, got {}",
                                    p.dump()));
    }
  }
  if (j.contains("loss")) s.loss = LossSpec::from_json(j["loss"]);
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    static const std::set<std::string> okeys = {"learning_rate", "weight_decay", "batch_size",
                                                "max_epochs",    "patience",     "grad_clip"};
    for (const auto& [key, _] : o.items()) {
      if (!okeys.contains(key)) throw ConfigError(fmt::format("neural spec: unknown optimizer key '{}'", key));
    }
    check_double(o, "learning_rate", s.optimizer.learning_rate);
    check_double(o, "weight_decay", s.optimizer.weight_decay);
    check_int(o, "batch_size", s.optimizer.batch_size);
    check_int(o, "max_epochs", s.optimizer.max_epochs);
    check_int(o, "patience", s.optimizer.patience);
    check_double(o, "grad_clip", s.optimizer.grad_clip);
  }
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  s.validate();
  return s;
}

Batch make_batch(std::span<const Eigen::MatrixXd> inputs, std::span<const int> users) {
  if (inputs.size() != users.size()) throw ValidationError("make_batch: inputs and users differ in length");
  if (inputs.empty()) throw ValidationError("make_batch: empty batch");
  Batch b;
  b.size = static_cast<int>(inputs.size());
  const auto D = inputs[0].cols();
  for (const auto& m : inputs) {
    if (m.cols() != D) throw ValidationError("make_batch: inputs differ in width");
    if (m.rows() < 1) throw ValidationError("make_batch: input with no time steps");
    b.steps = std::max(b.steps, static_cast<int>(m.rows()));
  }
  b.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b.size) * b.steps, D);
  for (int i = 0; i < b.size; ++i) {
    b.x.middleRows(static_cast<Eigen::Index>(i) * b.steps, inputs[i].rows()) = inputs[i];
    b.lengths.push_back(static_cast<int>(inputs[i].rows()));
  }
  b.users.assign(users.begin(), users.end());
  return b;
}

NeuralModel::NeuralModel(NeuralSpec spec, int input_dim, int num_users)
    : spec_(std::move(spec)), input_dim_(input_dim), num_users_(num_users) {
  if (spec_.user_embedding) {
    if (num_users_ < 1) throw ConfigError("user_embedding needs at least one training user");
    auto rng = derived_rng(spec_.seed, 1);
    std::normal_distribution<double> n(0, 0.1);
    Mat table(num_users_, spec_.embedding_dim);
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
      for (Eigen::Index i = 0; i < table.rows(); ++i) table(i, j) = n(rng);
    }
    embedding_ = &add_param("user_embedding", table);
  }
}

Layout NeuralModel::input_layout() const {
  return spec_.kind == NeuralKind::kMlp ? Layout::kAggregated : Layout::kSequence;
}

nn::Parameter& NeuralModel::add_param(std::string name, Eigen::MatrixXd init) {
  params_.push_back(std::make_unique<nn::Parameter>(std::move(name), std::move(init)));
  return *params_.back();
}

nn::Parameter& NeuralModel::weight(const std::string& name, int rows, int cols, std::mt19937_64& rng) {
  return add_param(name, nn::glorot(rows, cols, rng));
}

nn::Parameter& NeuralModel::zeros(const std::string& name, int rows, int cols) {
  return add_param(name, Mat::Zero(rows, cols));
}

nn::Parameter& NeuralModel::ones(const std::string& name, int rows, int cols) {
  return add_param(name, Mat::Ones(rows, cols));
}

int NeuralModel::personalized_dim() const { return input_dim_ + (spec_.user_embedding ? spec_.embedding_dim : 0); }

Var NeuralModel::personalize(Graph& g, Var x, const Batch& batch) const {
  if (x.cols() != input_dim_) {
    throw ValidationError(fmt::format("{}: input width {} != model input {}", neural_kind_name(spec_.kind), x.cols(),
                                      input_dim_));
  }
  if (!embedding_) return x;
  Var e = nn::gather_rows(g.param(*embedding_), batch.users);
  if (batch.steps > 1) e = nn::repeat_rows(e, batch.steps);
  return nn::concat_cols({x, e});
}

std::vector<nn::Parameter*> NeuralModel::parameters() const {
  std::vector<nn::Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t NeuralModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Eigen::MatrixXd NeuralModel::predict_proba(const Batch& batch) const {
  Graph g;
  Mat logits = forward(g, batch, nullptr).value();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

std::unique_ptr<NeuralModel> build_model(const NeuralSpec& spec, int input_dim, int num_users) {
  spec.validate();
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  switch (spec.kind) {
    case NeuralKind::kMlp:
      return std::make_unique<Mlp>(spec, input_dim, num_users);
    case NeuralKind::kTcn:
      return std::make_unique<Tcn>(spec, input_dim, num_users);
    case NeuralKind::kLstmAttention:
      return std::make_unique<LstmAttention>(spec, input_dim, num_users);
    case NeuralKind::kTransformerEncoder:
      return std::make_unique<TransformerEncoder>(spec, input_dim, num_users);
  }
  throw ConfigError("unreachable neural kind");
}

TrainingData make_training_data(const FeaturePipeline& pipeline, const Dataset& dataset,
                                std::span<const std::size_t> indices, const UserIndex& users, int num_days) {
  TrainingData out;
  for (auto i : indices) {
    const auto& w = dataset[i];
    out.inputs.push_back(pipeline.represent(w, num_days).values);
    out.users.push_back(users.lookup(w.participant_id()));
    out.labels.push_back(w.label());
  }
  return out;
}

Eigen::MatrixXd predict_proba(const NeuralModel& model, const TrainingData& data) {
  Eigen::MatrixXd P(static_cast<Eigen::Index>(data.inputs.size()), kNumClasses);
  std::vector<std::size_t> order(data.inputs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = 256;
  for (std::size_t s = 0; s < order.size(); s += bs) {
    std::size_t e = std::min(order.size(), s + bs);
    P.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e - s)) =
        model.predict_proba(slice_batch(data, order, s, e));
  }
  return P;
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_macro_f1,val_accuracy\n";
  for (const auto& e : epochs) {
    out += fmt::format("{},{:.8f},{:.8f},{:.6f},{:.6f}\n", e.epoch, e.train_loss, e.val_loss, e.val_macro_f1,
                       e.val_accuracy);
  }
  return out;
}

TrainHistory train(NeuralModel& model, const TrainingData& train_data, const TrainingData& val_data) {
  const auto& spec = model.spec();
  const auto& opt = spec.optimizer;
  if (train_data.inputs.empty()) throw ValidationError("train: empty training split");
  std::array<std::size_t, kNumClasses> counts{};
  for (auto s : train_data.labels) ++counts[rank(s)];
  auto loss = resolve_loss(spec.loss, counts);
  auto train_labels = int_labels(train_data.labels);
  auto val_labels = int_labels(val_data.labels);

  auto params = model.parameters();
  nn::Adam adam(params, opt.learning_rate, opt.weight_decay);
  auto shuffle_rng = derived_rng(spec.seed, 100);
  auto dropout_rng = derived_rng(spec.seed, 101);

  std::vector<std::size_t> order(train_data.inputs.size());
  std::iota(order.begin(), order.end(), 0);
  TrainHistory history;
  history.best_val_macro_f1 = -1;
  std::vector<Mat> best;
  int since_best = 0;

  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    int batch_index = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(opt.batch_size), ++batch_index) {
      std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(opt.batch_size));
      Batch batch = slice_batch(train_data, order, s, e);
      std::vector<int> labels(e - s);
      for (std::size_t i = s; i < e; ++i) labels[i - s] = train_labels[order[i]];
      Graph g;
      Var logits = model.forward(g, batch, &dropout_rng);
      Var l = nn::classification_loss(logits, labels, loss.alpha, loss.gamma);
      double value = l.value()(0, 0);
      if (!std::isfinite(value)) {
        throw TrainingError(fmt::format("{}: non-finite training loss ({}) at epoch {}, batch {}",
                                        neural_kind_name(spec.kind), value, epoch, batch_index));
      }
      adam.zero_grad();
      g.backward(l);
      double norm = adam.clip_grad_norm(opt.grad_clip);
      if (!std::isfinite(norm)) {
        throw TrainingError(fmt::format("{}: non-finite gradient norm at epoch {}, batch {}",
                                        neural_kind_name(spec.kind), epoch, batch_index));
      }
      adam.step();
      loss_sum += value * static_cast<double>(e - s);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val_data.inputs.empty()) {
      Mat P = predict_proba(model, val_data);
      Mat logp = P.array().max(1e-300).log();
      rec.val_loss = classification_loss_value(logp, val_labels, loss.alpha, loss.gamma).value;
      auto report = score(argmax_rows(P), val_data.labels);
      rec.val_macro_f1 = report.macro_f1;
      rec.val_accuracy = report.accuracy;
    }
    history.epochs.push_back(rec);
    spdlog::debug("{} epoch {}: train loss {:.4f}, val macro-F1 {:.4f}", neural_kind_name(spec.kind), epoch,
                  rec.train_loss, rec.val_macro_f1);

    if (rec.val_macro_f1 > history.best_val_macro_f1) {
      history.best_val_macro_f1 = rec.val_macro_f1;
      history.best_epoch = epoch;
      best.clear();
      for (auto* p : params) best.push_back(p->value);
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return history;
}

void save_neural(const std::filesystem::path& path, const NeuralModel& model, const UserIndex& users,
                 const std::string& train_fingerprint) {
  Checkpoint ckpt;
  ckpt.header = {{"format", "mhf-neural"},
                 {"spec", model.spec().to_json()},
                 {"input_dim", model.input_dim()},
                 {"num_users", model.num_users()},
                 {"users", users.users()},
                 {"train_fingerprint", train_fingerprint}};
  BinaryWriter w;
  auto params = model.parameters();
  w.put<std::uint64_t>(params.size());
  for (const auto* p : params) {
    w.put_string(p->name);
    w.put_matrix(p->value);
  }
  ckpt.payload = w.bytes();
  write_checkpoint(path, ckpt);
}

LoadedNeural load_neural(const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.header.value("format", "") != "mhf-neural") {
    throw Error(fmt::format("{}: not a neural model checkpoint", path.string()));
  }
  LoadedNeural out;
  auto spec = NeuralSpec::from_json(ckpt.header.at("spec"));
  out.model = build_model(spec, ckpt.header.at("input_dim").get<int>(), ckpt.header.at("num_users").get<int>());
  out.users = UserIndex(ckpt.header.at("users").get<std::vector<std::string>>());
  out.train_fingerprint = ckpt.header.at("train_fingerprint").get<std::string>();
  BinaryReader r(ckpt.payload);
  auto params = out.model->parameters();
  auto n = r.get<std::uint64_t>();
  if (n != params.size()) {
    throw Error(fmt::format("{}: checkpoint has {} tensors, model expects {}", path.string(), n, params.size()));
  }
  for (auto* p : params) {
    auto name = r.get_string();
    auto value = r.get_matrix();
    if (name != p->name || value.rows() != p->value.rows() || value.cols() != p->value.cols()) {
      throw Error(fmt::format("{}: tensor '{}' does not match model tensor '{}'", path.string(), name, p->name));
    }
    p->value = std::move(value);
  }
  if (!r.done()) throw Error(fmt::format("{}: trailing bytes in checkpoint payload", path.string()));
  return out;
}

NeuralForecaster::NeuralForecaster(const NeuralModel& model, FeaturePipeline pipeline, UserIndex users)
    : model_(model), pipeline_(pipeline.with_layout(model.input_layout())), users_(std::move(users)) {}

std::vector<Prediction> NeuralForecaster::predict(const Dataset& dataset, std::span<const std::size_t> indices,
                                                  int num_days) const {
  if (indices.empty()) return {};
  auto data = make_training_data(pipeline_, dataset, indices, users_, num_days);
  auto labels = argmax_rows(mhf::predict_proba(model_, data));
  return {labels.begin(), labels.end()};
}

}  // namespace mhf

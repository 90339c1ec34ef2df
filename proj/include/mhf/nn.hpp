#pragma once

// Minimal reverse-mode autodiff over dense double matrices. A Graph is built
// per forward pass and discarded after backward(); Parameters outlive it.
//
// Sequence batches are stored as (B*T) x D matrices, row b*T + t holding
// step t of sample b.

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mhf::nn {

using Mat = Eigen::MatrixXd;

struct Parameter {
  Parameter(std::string name, Mat init);
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;
};

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, int self)>;

  Var constant(Mat value);
  Var param(Parameter& p);

  const Mat& value(int id) const { return nodes_[id].value; }
  // Zero-initialized on first use.
  Mat& grad(int id);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Records an op. `back` runs only when some parent needs a gradient.
  Var push(Mat value, std::initializer_list<int> parents, Backward back);
  Var push(Mat value, const std::vector<int>& parents, Backward back);

  // d(out)/d(out) = 1 for a 1x1 `out`; gradients accumulate into
  // Parameter::grad.
  void backward(Var out);

 private:
  struct Node {
    Mat value;
    Mat grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
    Backward back;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // row: 1 x cols, broadcast over rows
Var mul(Var a, Var b);        // elementwise
Var scale(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);  // per row
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var select_rows(Var a, std::vector<int> rows);
// Embedding lookup; index -1 yields the mean of all table rows.
Var gather_rows(Var table, std::vector<int> rows);
// (B x d) -> (B*T x d), each row repeated T times.
Var repeat_rows(Var a, int times);
// Adds a (T x d) block to every sample of a (B*T x d) batch.
Var add_tiled(Var a, Var block);
// Inverted dropout; identity when p == 0.
Var dropout(Var a, double p, std::mt19937_64& rng);

// Causal patches: row (b,t) concatenates steps t-(k-1)d, ..., t-d, t of
// sample b, zero-filled before the first step. Output (B*T) x (k*D).
Var causal_patches(Var x, int batch, int steps, int kernel, int dilation);

// Scaled dot-product attention per sample and head over (B*T x d) inputs.
// Keys at t >= lengths[b] are masked.
Var attention(Var q, Var k, Var v, int batch, int steps, int heads, std::span<const int> lengths);

// Softmax over the valid steps of each sample for a (B*T x 1) score column;
// masked steps get weight 0.
Var segment_softmax(Var scores, int batch, int steps, std::span<const int> lengths);
// (B*T x d) states, (B*T x 1) weights -> (B x d) weighted sums.
Var time_weighted_sum(Var states, Var weights, int batch, int steps);
// Mean over the valid steps of each sample -> (B x d).
Var masked_mean(Var states, int batch, int steps, std::span<const int> lengths);
// (T of B x d) -> (B*T x d).
Var stack_steps(const std::vector<Var>& steps);

// Mean over the batch of alpha_y * (1 - p_y)^gamma * (-log p_y), p =
// softmax(logits). Covers plain, weighted and focal cross-entropy.
Var classification_loss(Var logits, std::span<const int> labels, std::span<const double> alpha, double gamma);

// Mean of (pred - target)^2 over entries where mask is 1.
Var masked_mse(Var pred, const Mat& target, const Mat& mask);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double learning_rate, double weight_decay = 0.0, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void zero_grad();
  // Rescales gradients to `max_norm` (when > 0) and returns the norm before
  // clipping.
  double clip_grad_norm(double max_norm);
  void step();

 private:
  std::vector<Parameter*> params_;
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
};

// Glorot-uniform initial weights.
Mat glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

}  // namespace mhf::nn

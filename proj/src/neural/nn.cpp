#include "mhf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <fmt/format.h>

#include "mhf/losses.hpp"

namespace mhf::nn {

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(fmt::format("nn::{}: {}", op, what));
}

std::string shape(const Mat& m) { return fmt::format("{}x{}", m.rows(), m.cols()); }

}  // namespace

Parameter::Parameter(std::string n, Mat init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(Mat::Zero(value.rows(), value.cols())),
      adam_m(Mat::Zero(value.rows(), value.cols())),
      adam_v(Mat::Zero(value.rows(), value.cols())) {}

const Mat& Var::value() const { return graph->value(id); }

Var Graph::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, &p, true, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Mat& Graph::grad(int id) {
  auto& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::push(Mat value, std::initializer_list<int> parents, Backward back) {
  return push(std::move(value), std::vector<int>(parents), std::move(back));
}

Var Graph::push(Mat value, const std::vector<int>& parents, Backward back) {
  bool needs = false;
  for (int p : parents) needs = needs || nodes_[p].needs_grad;
  nodes_.push_back(Node{std::move(value), {}, nullptr, needs, needs ? std::move(back) : Backward{}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var out) {
  require(out.graph == this, "backward", "variable from another graph");
  require(value(out.id).size() == 1, "backward", "output must be a scalar, got " + shape(value(out.id)));
  grad(out.id).setOnes();
  for (int i = out.id; i >= 0; --i) {
    auto& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, i);
    if (n.param) n.param->grad += n.grad;
  }
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", shape(a.value()) + " * " + shape(b.value()));
  Graph& g = *a.graph;
  return g.push(a.value() * b.value(), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.needs_grad(a)) g.grad(a).noalias() += gy * g.value(b).transpose();
    if (g.needs_grad(b)) g.grad(b).noalias() += g.value(a).transpose() * gy;
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", shape(a.value()) + " + " + shape(b.value()));
  Graph& g = *a.graph;
  return g.push(a.value() + b.value(), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, int self) {
    if (g.needs_grad(a)) g.grad(a) += g.grad(self);
    if (g.needs_grad(b)) g.grad(b) += g.grad(self);
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", shape(a.value()) + " + " + shape(row.value()));
  Graph& g = *a.graph;
  Mat out = a.value().rowwise() + row.value().row(0);
  return g.push(std::move(out), {a.id, row.id}, [a = a.id, r = row.id](Graph& g, int self) {
    if (g.needs_grad(a)) g.grad(a) += g.grad(self);
    if (g.needs_grad(r)) g.grad(r) += g.grad(self).colwise().sum();
  });
}

Var mul(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul", shape(a.value()) + " .* " + shape(b.value()));
  Graph& g = *a.graph;
  return g.push(a.value().cwiseProduct(b.value()), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, int self) {
    if (g.needs_grad(a)) g.grad(a) += g.grad(self).cwiseProduct(g.value(b));
    if (g.needs_grad(b)) g.grad(b) += g.grad(self).cwiseProduct(g.value(a));
  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph;
  return g.push(a.value() * s, {a.id}, [a = a.id, s](Graph& g, int self) { g.grad(a) += s * g.grad(self); });
}

Var relu(Var a) {
  Graph& g = *a.graph;
  return g.push(a.value().cwiseMax(0.0), {a.id}, [a = a.id](Graph& g, int self) {
    g.grad(a) += (g.value(a).array() > 0).cast<double>().matrix().cwiseProduct(g.grad(self));
  });
}

Var tanh(Var a) {
  Graph& g = *a.graph;
  return g.push(a.value().array().tanh().matrix(), {a.id}, [a = a.id](Graph& g, int self) {
    const Mat& y = g.value(self);
    g.grad(a) += ((1.0 - y.array().square()) * g.grad(self).array()).matrix();
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph;
  Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return g.push(std::move(y), {a.id}, [a = a.id](Graph& g, int self) {
    const Mat& y = g.value(self);
    g.grad(a) += (y.array() * (1.0 - y.array()) * g.grad(self).array()).matrix();
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  const Eigen::Index d = a.cols();
  require(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d, "layer_norm",
          "gain/bias must be 1x" + std::to_string(d));
  Graph& g = *a.graph;
  const Mat& x = a.value();
  auto xhat = std::make_shared<Mat>(x.rows(), d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mu = x.row(i).mean();
    double var = (x.row(i).array() - mu).square().mean();
    (*inv_std)(i) = 1.0 / std::sqrt(var + eps);
    xhat->row(i) = (x.row(i).array() - mu) * (*inv_std)(i);
  }
  Mat y = (xhat->array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return g.push(std::move(y), {a.id, gain.id, bias.id},
                [a = a.id, ga = gain.id, be = bias.id, xhat, inv_std](Graph& g, int self) {
                  const Mat& gy = g.grad(self);
                  if (g.needs_grad(ga)) g.grad(ga) += (gy.cwiseProduct(*xhat)).colwise().sum();
                  if (g.needs_grad(be)) g.grad(be) += gy.colwise().sum();
                  if (g.needs_grad(a)) {
                    Mat dxhat = gy.array().rowwise() * g.value(ga).row(0).array();
                    const double d = static_cast<double>(dxhat.cols());
                    Mat& ga_ = g.grad(a);
                    for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                      double m1 = dxhat.row(i).sum() / d;
                      double m2 = dxhat.row(i).dot(xhat->row(i)) / d;
                      ga_.row(i) += (*inv_std)(i) * (dxhat.row(i).array() - m1 - xhat->row(i).array() * m2).matrix();
                    }
                  }
                });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  Graph& g = *parts[0].graph;
  Eigen::Index rows = parts[0].rows(), cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols", "row count mismatch");
    offsets.push_back(cols);
    cols += p.cols();
    ids.push_back(p.id);
  }
  Mat out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
  return g.push(std::move(out), ids, [ids, offsets](Graph& g, int self) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (g.needs_grad(ids[i])) g.grad(ids[i]) += g.grad(self).middleCols(offsets[i], g.value(ids[i]).cols());
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols", "range outside " + shape(a.value()));
  Graph& g = *a.graph;
  return g.push(a.value().middleCols(start, count), {a.id}, [a = a.id, start, count](Graph& g, int self) {
    g.grad(a).middleCols(start, count) += g.grad(self);
  });
}

Var select_rows(Var a, std::vector<int> rows) {
  Graph& g = *a.graph;
  Mat out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(), "select_rows", "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  return g.push(std::move(out), {a.id}, [a = a.id, rows = std::move(rows)](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    Mat& ga = g.grad(a);
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += gy.row(static_cast<Eigen::Index>(i));
  });
}

Var gather_rows(Var table, std::vector<int> rows) {
  Graph& g = *table.graph;
  const Mat& t = table.value();
  Eigen::RowVectorXd mean = t.colwise().mean();
  Mat out(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= -1 && rows[i] < t.rows(), "gather_rows", "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = rows[i] < 0 ? mean : Eigen::RowVectorXd(t.row(rows[i]));
  }
  return g.push(std::move(out), {table.id}, [a = table.id, rows = std::move(rows)](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    Mat& ga = g.grad(a);
    const double n = static_cast<double>(ga.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= 0) {
        ga.row(rows[i]) += gy.row(static_cast<Eigen::Index>(i));
      } else {
        ga.rowwise() += gy.row(static_cast<Eigen::Index>(i)) / n;
      }
    }
  });
}

Var repeat_rows(Var a, int times) {
  Graph& g = *a.graph;
  const Mat& x = a.value();
  Mat out(x.rows() * times, x.cols());
  for (Eigen::Index b = 0; b < x.rows(); ++b) out.middleRows(b * times, times).rowwise() = x.row(b);
  return g.push(std::move(out), {a.id}, [a = a.id, times](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    Mat& ga = g.grad(a);
    for (Eigen::Index b = 0; b < ga.rows(); ++b) ga.row(b) += gy.middleRows(b * times, times).colwise().sum();
  });
}

Var add_tiled(Var a, Var block) {
  const Eigen::Index steps = block.rows();
  require(block.cols() == a.cols() && steps > 0 && a.rows() % steps == 0, "add_tiled",
          shape(a.value()) + " + tiles of " + shape(block.value()));
  Graph& g = *a.graph;
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); r += steps) out.middleRows(r, steps) += block.value();
  return g.push(std::move(out), {a.id, block.id}, [a = a.id, bl = block.id, steps](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.needs_grad(a)) g.grad(a) += gy;
    if (g.needs_grad(bl)) {
      Mat& gb = g.grad(bl);
      for (Eigen::Index r = 0; r < gy.rows(); r += steps) gb += gy.middleRows(r, steps);
    }
  });
}

Var dropout(Var a, double p, std::mt19937_64& rng) {
  if (p <= 0) return a;
  Graph& g = *a.graph;
  std::bernoulli_distribution keep(1.0 - p);
  auto mask = std::make_shared<Mat>(a.rows(), a.cols());
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < mask->cols(); ++j) {
    for (Eigen::Index i = 0; i < mask->rows(); ++i) (*mask)(i, j) = keep(rng) ? s : 0.0;
  }
  return g.push(a.value().cwiseProduct(*mask), {a.id}, [a = a.id, mask](Graph& g, int self) {
    g.grad(a) += g.grad(self).cwiseProduct(*mask);
  });
}

Var causal_patches(Var x, int batch, int steps, int kernel, int dilation) {
  require(x.rows() == static_cast<Eigen::Index>(batch) * steps, "causal_patches", "rows != batch*steps");
  Graph& g = *x.graph;
  const Eigen::Index d = x.cols();
  Mat out = Mat::Zero(x.rows(), d * kernel);
  const Mat& v = x.value();
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < steps; ++t) {
      for (int j = 0; j < kernel; ++j) {
        int src = t - (kernel - 1 - j) * dilation;
        if (src >= 0) out.block(b * steps + t, j * d, 1, d) = v.row(b * steps + src);
      }
    }
  }
  return g.push(std::move(out), {x.id}, [a = x.id, batch, steps, kernel, dilation, d](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    Mat& ga = g.grad(a);
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < steps; ++t) {
        for (int j = 0; j < kernel; ++j) {
          int src = t - (kernel - 1 - j) * dilation;
          if (src >= 0) ga.row(b * steps + src) += gy.block(b * steps + t, j * d, 1, d);
        }
      }
    }
  });
}

Var attention(Var q, Var k, Var v, int batch, int steps, int heads, std::span<const int> lengths) {
  const Eigen::Index dm = q.cols();
  require(k.cols() == dm && v.cols() == dm && dm % heads == 0, "attention", "width must split evenly into heads");
  require(q.rows() == static_cast<Eigen::Index>(batch) * steps, "attention", "rows != batch*steps");
  require(static_cast<int>(lengths.size()) == batch, "attention", "one length per sample");
  Graph& g = *q.graph;
  const Eigen::Index dh = dm / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  // Softmax weights per (sample, head), kept for backward.
  auto probs = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(batch) * heads);
  std::vector<int> lens(lengths.begin(), lengths.end());
  Mat out(q.rows(), dm);
  for (int b = 0; b < batch; ++b) {
    const int L = lens[b];
    require(L >= 1 && L <= steps, "attention", "length outside [1, steps]");
    for (int h = 0; h < heads; ++h) {
      auto Q = q.value().block(b * steps, h * dh, steps, dh);
      auto K = k.value().block(b * steps, h * dh, L, dh);
      auto V = v.value().block(b * steps, h * dh, L, dh);
      Mat S = (Q * K.transpose()) * inv;
      for (Eigen::Index i = 0; i < S.rows(); ++i) {
        double mx = S.row(i).maxCoeff();
        S.row(i) = (S.row(i).array() - mx).exp().matrix();
        S.row(i) /= S.row(i).sum();
      }
      out.block(b * steps, h * dh, steps, dh) = S * V;
      (*probs)[static_cast<std::size_t>(b) * heads + h] = std::move(S);
    }
  }
  return g.push(std::move(out), {q.id, k.id, v.id},
                [qi = q.id, ki = k.id, vi = v.id, batch, steps, heads, dh, inv, probs, lens](Graph& g, int self) {
                  const Mat& gy = g.grad(self);
                  const bool nq = g.needs_grad(qi), nk = g.needs_grad(ki), nv = g.needs_grad(vi);
                  for (int b = 0; b < batch; ++b) {
                    const int L = lens[b];
                    for (int h = 0; h < heads; ++h) {
                      const Mat& P = (*probs)[static_cast<std::size_t>(b) * heads + h];
                      auto dO = gy.block(b * steps, h * dh, steps, dh);
                      auto Q = g.value(qi).block(b * steps, h * dh, steps, dh);
                      auto K = g.value(ki).block(b * steps, h * dh, L, dh);
                      auto V = g.value(vi).block(b * steps, h * dh, L, dh);
                      if (nv) g.grad(vi).block(b * steps, h * dh, L, dh) += P.transpose() * dO;
                      Mat dP = dO * V.transpose();
                      Eigen::VectorXd rs = (dP.cwiseProduct(P)).rowwise().sum();
                      Mat dS = P.cwiseProduct(dP.colwise() - rs) * inv;
                      if (nq) g.grad(qi).block(b * steps, h * dh, steps, dh) += dS * K;
                      if (nk) g.grad(ki).block(b * steps, h * dh, L, dh) += dS.transpose() * Q;
                    }
                  }
                });
}

Var segment_softmax(Var scores, int batch, int steps, std::span<const int> lengths) {
  require(scores.cols() == 1 && scores.rows() == static_cast<Eigen::Index>(batch) * steps, "segment_softmax",
          "expected a (batch*steps) x 1 column");
  Graph& g = *scores.graph;
  std::vector<int> lens(lengths.begin(), lengths.end());
  Mat out = Mat::Zero(scores.rows(), 1);
  for (int b = 0; b < batch; ++b) {
    auto s = scores.value().block(b * steps, 0, lens[b], 1);
    double mx = s.maxCoeff();
    Eigen::VectorXd e = (s.array() - mx).exp();
    out.block(b * steps, 0, lens[b], 1) = e / e.sum();
  }
  return g.push(std::move(out), {scores.id}, [a = scores.id, batch, steps, lens](Graph& g, int self) {
    const Mat& w = g.value(self);
    const Mat& gy = g.grad(self);
    Mat& ga = g.grad(a);
    for (int b = 0; b < batch; ++b) {
      auto wb = w.block(b * steps, 0, lens[b], 1);
      auto gb = gy.block(b * steps, 0, lens[b], 1);
      double dot = wb.cwiseProduct(gb).sum();
      ga.block(b * steps, 0, lens[b], 1) += wb.cwiseProduct((gb.array() - dot).matrix());
    }
  });
}

Var time_weighted_sum(Var states, Var weights, int batch, int steps) {
  require(weights.cols() == 1 && weights.rows() == states.rows() &&
              states.rows() == static_cast<Eigen::Index>(batch) * steps,
          "time_weighted_sum", "shape mismatch");
  Graph& g = *states.graph;
  Mat out(batch, states.cols());
  for (int b = 0; b < batch; ++b) {
    out.row(b) = weights.value().block(b * steps, 0, steps, 1).transpose() * states.value().middleRows(b * steps, steps);
  }
  return g.push(std::move(out), {states.id, weights.id}, [s = states.id, w = weights.id, batch, steps](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    for (int b = 0; b < batch; ++b) {
      if (g.needs_grad(s)) {
        g.grad(s).middleRows(b * steps, steps) += g.value(w).block(b * steps, 0, steps, 1) * gy.row(b);
      }
      if (g.needs_grad(w)) {
        g.grad(w).block(b * steps, 0, steps, 1) += g.value(s).middleRows(b * steps, steps) * gy.row(b).transpose();
      }
    }
  });
}

Var masked_mean(Var states, int batch, int steps, std::span<const int> lengths) {
  require(states.rows() == static_cast<Eigen::Index>(batch) * steps, "masked_mean", "rows != batch*steps");
  Graph& g = *states.graph;
  std::vector<int> lens(lengths.begin(), lengths.end());
  Mat out(batch, states.cols());
  for (int b = 0; b < batch; ++b) out.row(b) = states.value().middleRows(b * steps, lens[b]).colwise().mean();
  return g.push(std::move(out), {states.id}, [a = states.id, steps, lens](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    Mat& ga = g.grad(a);
    for (std::size_t b = 0; b < lens.size(); ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      ga.middleRows(bi * steps, lens[b]).rowwise() += gy.row(bi) / static_cast<double>(lens[b]);
    }
  });
}

Var stack_steps(const std::vector<Var>& steps) {
  require(!steps.empty(), "stack_steps", "no inputs");
  Graph& g = *steps[0].graph;
  const int T = static_cast<int>(steps.size());
  const Eigen::Index B = steps[0].rows(), d = steps[0].cols();
  Mat out(B * T, d);
  std::vector<int> ids;
  for (int t = 0; t < T; ++t) {
    require(steps[t].rows() == B && steps[t].cols() == d, "stack_steps", "step shape mismatch");
    for (Eigen::Index b = 0; b < B; ++b) out.row(b * T + t) = steps[t].value().row(b);
    ids.push_back(steps[t].id);
  }
  return g.push(std::move(out), ids, [ids, T, B](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    for (int t = 0; t < T; ++t) {
      if (!g.needs_grad(ids[t])) continue;
      Mat& gt = g.grad(ids[t]);
      for (Eigen::Index b = 0; b < B; ++b) gt.row(b) += gy.row(b * T + t);
    }
  });
}

Var classification_loss(Var logits, std::span<const int> labels, std::span<const double> alpha, double gamma) {
  Graph& g = *logits.graph;
  auto lv = classification_loss_value(logits.value(), labels, alpha, gamma);
  Mat out(1, 1);
  out(0, 0) = lv.value;
  auto grad = std::make_shared<Mat>(std::move(lv.grad));
  return g.push(std::move(out), {logits.id}, [a = logits.id, grad](Graph& g, int self) {
    g.grad(a) += g.grad(self)(0, 0) * *grad;
  });
}

Var masked_mse(Var pred, const Mat& target, const Mat& mask) {
  Graph& g = *pred.graph;
  if (target.rows() != pred.rows() || target.cols() != pred.cols() || mask.rows() != pred.rows() ||
      mask.cols() != pred.cols()) {
    throw std::invalid_argument("masked_mse: shape mismatch");
  }
  const double n = std::max(1.0, mask.sum());
  auto diff = std::make_shared<Mat>((pred.value() - target).cwiseProduct(mask));
  Mat out(1, 1);
  out(0, 0) = diff->squaredNorm() / n;
  return g.push(std::move(out), {pred.id}, [a = pred.id, diff, n](Graph& g, int self) {
    g.grad(a) += (2.0 * g.grad(self)(0, 0) / n) * *diff;
  });
}

Adam::Adam(std::vector<Parameter*> params, double learning_rate, double weight_decay, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(learning_rate), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::zero_grad() {
  for (auto* p : params_) p->grad.setZero();
}

double Adam::clip_grad_norm(double max_norm) {
  double sq = 0;
  for (auto* p : params_) sq += p->grad.squaredNorm();
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    double s = max_norm / norm;
    for (auto* p : params_) p->grad *= s;
  }
  return norm;
}

void Adam::step() {
  ++t_;
  const double c1 = 1 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(b2_, static_cast<double>(t_));
  for (auto* p : params_) {
    Mat gr = p->grad;
    if (wd_ > 0) gr += wd_ * p->value;
    p->adam_m = b1_ * p->adam_m + (1 - b1_) * gr;
    p->adam_v = b2_ * p->adam_v + (1 - b2_) * gr.cwiseProduct(gr);
    p->value.array() -= lr_ * (p->adam_m.array() / c1) / ((p->adam_v.array() / c2).sqrt() + eps_);
  }
}

Mat glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  }
  return m;
}

}  // namespace mhf::nn

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "mhf/losses.hpp"
#include "mhf/nn.hpp"

namespace mhf::nn {
namespace {

Mat random_mat(int r, int c, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> n(0, s);
  Mat m(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) m(i, j) = n(rng);
  }
  return m;
}

// Central finite differences against backward() for every parameter entry.
// `build` maps parameter vars to a scalar.
double max_grad_error(std::vector<Parameter*> params, const std::function<Var(Graph&, std::vector<Var>&)>& build) {
  auto eval = [&] {
    Graph g;
    std::vector<Var> vars;
    for (auto* p : params) vars.push_back(g.param(*p));
    return build(g, vars).value()(0, 0);
  };
  for (auto* p : params) p->grad.setZero();
  {
    Graph g;
    std::vector<Var> vars;
    for (auto* p : params) vars.push_back(g.param(*p));
    g.backward(build(g, vars));
  }
  double worst = 0;
  const double h = 1e-6;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double orig = p->value.data()[i];
      p->value.data()[i] = orig + h;
      double up = eval();
      p->value.data()[i] = orig - h;
      double down = eval();
      p->value.data()[i] = orig;
      double numeric = (up - down) / (2 * h);
      double analytic = p->grad.data()[i];
      double err = std::abs(numeric - analytic) / std::max(1.0, std::abs(numeric) + std::abs(analytic));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Reduces any matrix to a scalar with fixed random weights so every output
// entry matters.
Var weighted_sum(Graph& g, Var x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Var w = g.constant(random_mat(static_cast<int>(x.cols()), 1, rng));
  Var ones = g.constant(Mat::Ones(1, x.rows()));
  return matmul(ones, matmul(x, w));
}

TEST(Grad, ElementwiseAndLinear) {
  std::mt19937_64 rng(1);
  Parameter a("a", random_mat(5, 4, rng)), b("b", random_mat(4, 3, rng)), c("c", random_mat(5, 3, rng)),
      r("r", random_mat(1, 3, rng));
  double err = max_grad_error({&a, &b, &c, &r}, [](Graph& g, std::vector<Var>& v) {
    Var x = add_row(matmul(v[0], v[1]), v[3]);
    Var y = add(mul(tanh(x), sigmoid(v[2])), scale(relu(v[2]), 0.7));
    return weighted_sum(g, y);
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Grad, LayerNorm) {
  std::mt19937_64 rng(2);
  Parameter x("x", random_mat(6, 5, rng)), ga("g", random_mat(1, 5, rng)), be("b", random_mat(1, 5, rng));
  double err = max_grad_error({&x, &ga, &be}, [](Graph& g, std::vector<Var>& v) {
    return weighted_sum(g, layer_norm(v[0], v[1], v[2]));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Grad, ShapeOps) {
  std::mt19937_64 rng(3);
  Parameter a("a", random_mat(6, 3, rng)), b("b", random_mat(6, 2, rng)), t("t", random_mat(4, 2, rng)),
      blk("blk", random_mat(3, 5, rng));
  double err = max_grad_error({&a, &b, &t, &blk}, [](Graph& g, std::vector<Var>& v) {
    Var cat = concat_cols({v[0], v[1]});
    Var sl = slice_cols(cat, 1, 3);
    Var sel = select_rows(sl, {5, 0, 0, 2});
    Var emb = gather_rows(v[2], {1, -1, 3, 1});
    Var rep = repeat_rows(concat_cols({sel, emb}), 3);  // 12 x 5
    Var tiled = add_tiled(rep, v[3]);
    return weighted_sum(g, tiled);
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Grad, CausalPatchesAndStacking) {
  std::mt19937_64 rng(4);
  Parameter x("x", random_mat(2 * 5, 3, rng)), w("w", random_mat(9, 2, rng));
  double err = max_grad_error({&x, &w}, [](Graph& g, std::vector<Var>& v) {
    Var conv = matmul(causal_patches(v[0], 2, 5, 3, 2), v[1]);
    std::vector<Var> steps;
    for (int t = 0; t < 5; ++t) steps.push_back(select_rows(conv, {t, 5 + t}));
    return weighted_sum(g, stack_steps(steps));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Grad, AttentionWithMask) {
  std::mt19937_64 rng(5);
  const int B = 2, T = 4, d = 6;
  Parameter q("q", random_mat(B * T, d, rng)), k("k", random_mat(B * T, d, rng)), v("v", random_mat(B * T, d, rng));
  std::vector<int> lengths = {4, 2};
  double err = max_grad_error({&q, &k, &v}, [&](Graph& g, std::vector<Var>& p) {
    Var att = attention(p[0], p[1], p[2], B, T, 2, lengths);
    return weighted_sum(g, masked_mean(att, B, T, lengths));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Grad, SegmentSoftmaxPooling) {
  std::mt19937_64 rng(6);
  const int B = 3, T = 4;
  Parameter s("s", random_mat(B * T, 1, rng)), h("h", random_mat(B * T, 3, rng));
  std::vector<int> lengths = {4, 1, 3};
  double err = max_grad_error({&s, &h}, [&](Graph& g, std::vector<Var>& p) {
    Var w = segment_softmax(p[0], B, T, lengths);
    return weighted_sum(g, time_weighted_sum(p[1], w, B, T));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Grad, LossOps) {
  std::mt19937_64 rng(7);
  Parameter z("z", random_mat(8, 4, rng, 2.0));
  std::vector<int> labels = {0, 1, 2, 3, 3, 2, 1, 0};
  std::vector<double> alpha = {0.4003, 0.9496, 3.4510, 6.3080};
  for (double gamma : {0.0, 0.5, 2.0}) {
    double err = max_grad_error({&z}, [&](Graph&, std::vector<Var>& v) {
      return classification_loss(v[0], labels, alpha, gamma);
    });
    EXPECT_LT(err, 1e-6) << "gamma " << gamma;
  }
}

TEST(Grad, MaskedMse) {
  std::mt19937_64 rng(8);
  Parameter p("p", random_mat(6, 5, rng));
  Mat target = random_mat(6, 5, rng);
  Mat mask = (random_mat(6, 5, rng).array() > 0).cast<double>().matrix();
  double err = max_grad_error({&p}, [&](Graph&, std::vector<Var>& v) { return masked_mse(v[0], target, mask); });
  EXPECT_LT(err, 1e-6);

  Graph g;
  double expected = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] > 0) expected += std::pow(p.value.data()[i] - target.data()[i], 2);
  }
  EXPECT_NEAR(masked_mse(g.param(p), target, mask).value()(0, 0), expected / mask.sum(), 1e-12);
}

TEST(Ops, AttentionIgnoresMaskedKeys) {
  std::mt19937_64 rng(8);
  const int T = 5;
  Mat q = random_mat(T, 4, rng), k = random_mat(T, 4, rng), v = random_mat(T, 4, rng);
  std::vector<int> len = {3};
  Graph g1;
  Mat a = attention(g1.constant(q), g1.constant(k), g1.constant(v), 1, T, 2, len).value();
  k.bottomRows(2).setRandom();
  v.bottomRows(2).setRandom();
  Graph g2;
  Mat b = attention(g2.constant(q), g2.constant(k), g2.constant(v), 1, T, 2, len).value();
  EXPECT_TRUE(a.isApprox(b, 1e-14));
}

TEST(Ops, GatherUnseenIsMeanRow) {
  Mat t(3, 2);
  t << 1, 2, 3, 4, 5, 9;
  Graph g;
  Mat out = gather_rows(g.constant(t), {-1, 2}).value();
  EXPECT_DOUBLE_EQ(out(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(out(1, 1), 9.0);
}

TEST(Ops, DropoutZeroIsIdentity) {
  std::mt19937_64 rng(1);
  Graph g;
  Var x = g.constant(Mat::Ones(3, 3));
  EXPECT_EQ(dropout(x, 0.0, rng).id, x.id);
}

TEST(Adam, MinimizesQuadratic) {
  Parameter p("p", Mat::Constant(1, 3, 5.0));
  Adam opt({&p}, 0.1);
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    Graph g;
    Var v = g.param(p);
    Var loss = matmul(mul(v, v), g.constant(Mat::Ones(3, 1)));
    g.backward(loss);
    opt.step();
  }
  EXPECT_LT(p.value.norm(), 1e-2);
}

TEST(Adam, ClipGradNorm) {
  Parameter p("p", Mat::Zero(1, 2));
  p.grad << 3, 4;
  Adam opt({&p}, 0.1);
  EXPECT_DOUBLE_EQ(opt.clip_grad_norm(1.0), 5.0);
  EXPECT_NEAR(p.grad.norm(), 1.0, 1e-12);
}

}  // namespace
}  // namespace mhf::nn

namespace mhf {
namespace {

Eigen::MatrixXd random_logits(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 2);
  Eigen::MatrixXd z(n, kNumClasses);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < kNumClasses; ++k) z(i, k) = d(rng);
  }
  return z;
}

std::vector<int> random_labels(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, kNumClasses - 1);
  std::vector<int> y(n);
  for (auto& v : y) v = d(rng);
  return y;
}

// Plain cross-entropy written out independently.
double oracle_ce(const Eigen::MatrixXd& z, const std::vector<int>& y) {
  double s = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double lse = std::log(z.row(i).array().exp().sum());
    s += lse - z(i, y[i]);
  }
  return s / static_cast<double>(z.rows());
}

TEST(Losses, CrossEntropyMatchesOracle) {
  auto z = random_logits(20, 1);
  auto y = random_labels(20, 2);
  EXPECT_NEAR(cross_entropy(z, y).value, oracle_ce(z, y), 1e-12);
}

TEST(Losses, FocalReducesToCrossEntropy) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto z = random_logits(16, s);
    auto y = random_labels(16, s + 100);
    std::array<double, kNumClasses> ones{1, 1, 1, 1};
    auto f = focal(z, y, 0.0, ones);
    auto c = cross_entropy(z, y);
    EXPECT_NEAR(f.value, c.value, 1e-9);
    EXPECT_LT((f.grad - c.grad).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Losses, UniformWeightedReducesToCrossEntropy) {
  auto z = random_logits(16, 3);
  auto y = random_labels(16, 4);
  auto w = weighted_ce(z, y, {25, 25, 25, 25});
  EXPECT_NEAR(w.value, cross_entropy(z, y).value, 1e-9);
}

TEST(Losses, ReferenceWeights) {
  auto w = class_weights_from_counts({15477, 6524, 1795, 982});
  EXPECT_NEAR(w[0], 0.4003, 1e-3);
  EXPECT_NEAR(w[1], 0.9496, 1e-3);
  EXPECT_NEAR(w[2], 3.4510, 1e-3);
  EXPECT_NEAR(w[3], 6.3080, 1e-3);
  EXPECT_THROW(class_weights_from_counts({3, 0, 1, 1}), ValidationError);
}

TEST(Losses, FocalHandExample) {
  // p_y = 0.5 with two equal logits and two at -inf-ish.
  Eigen::MatrixXd z(1, 4);
  z << 0, 0, -1000, -1000;
  std::vector<int> y = {0};
  auto f = focal(z, y, 2.0, {1, 1, 1, 1});
  EXPECT_NEAR(f.value, 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(f.value, 0.17329, 1e-5);
}

TEST(Losses, ConfidentCorrectIsZero) {
  Eigen::MatrixXd z(1, 4);
  z << 1000, 0, 0, 0;
  std::vector<int> y = {0};
  EXPECT_NEAR(cross_entropy(z, y).value, 0.0, 1e-12);
  EXPECT_NEAR(focal(z, y, 2.0, {1, 1, 1, 1}).value, 0.0, 1e-12);
}

TEST(Losses, FiniteDifferenceGradients) {
  const double h = 1e-6;
  std::array<double, kNumClasses> alpha{0.4003, 0.9496, 3.4510, 6.3080};
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto z = random_logits(6, 10 + s);
    auto y = random_labels(6, 20 + s);
    auto check = [&](const std::function<LossValue(const Eigen::MatrixXd&)>& f) {
      auto base = f(z);
      double worst = 0;
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        Eigen::MatrixXd up = z, down = z;
        up.data()[i] += h;
        down.data()[i] -= h;
        double num = (f(up).value - f(down).value) / (2 * h);
        double ana = base.grad.data()[i];
        worst = std::max(worst, std::abs(num - ana) / std::max(std::abs(num) + std::abs(ana), 1e-8));
      }
      return worst;
    };
    EXPECT_LT(check([&](const Eigen::MatrixXd& m) { return focal(m, y, 2.0, alpha); }), 1e-4);
    EXPECT_LT(check([&](const Eigen::MatrixXd& m) { return weighted_ce(m, y, {15477, 6524, 1795, 982}); }), 1e-4);
  }
}

TEST(Losses, SpecJsonAndValidation) {
  LossSpec s;
  s.kind = LossKind::kFocal;
  s.gamma = -1;
  EXPECT_THROW(s.validate(), ConfigError);
  s.gamma = 1.5;
  auto j = s.to_json();
  EXPECT_EQ(j["alpha"], "inverse_frequency");
  auto back = LossSpec::from_json(j);
  EXPECT_EQ(back.kind, LossKind::kFocal);
  EXPECT_EQ(back.gamma, 1.5);
  EXPECT_FALSE(back.alpha.has_value());
  EXPECT_EQ(LossSpec::from_json("weighted_ce").kind, LossKind::kWeightedCe);
  EXPECT_THROW(LossSpec::from_json("hinge"), ConfigError);
}

TEST(Losses, ResolveDefaults) {
  LossSpec focal_spec;
  focal_spec.kind = LossKind::kFocal;
  auto p = resolve_loss(focal_spec, {15477, 6524, 1795, 982});
  EXPECT_EQ(p.gamma, 2.0);
  EXPECT_NEAR(p.alpha[3], 6.3080, 1e-3);
  auto ce = resolve_loss(LossSpec{}, {1, 0, 0, 1});
  EXPECT_EQ(ce.gamma, 0.0);
  EXPECT_EQ(ce.alpha[1], 1.0);
}

}  // namespace
}  // namespace mhf

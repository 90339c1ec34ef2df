#include <gtest/gtest.h>
#include <omp.h>

#include <numeric>
#include <random>

#include "mhf/kernels.hpp"

namespace mhf::kernels {
namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed, bool ties = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd X(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) X(i, j) = ties ? std::round(n(rng) * 2) : n(rng);
  }
  return X;
}

struct Grads {
  std::vector<double> g, h;
};

Grads random_grads(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0, 1);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Grads out;
  for (int i = 0; i < n; ++i) {
    out.g.push_back(nd(rng));
    out.h.push_back(u(rng));
  }
  return out;
}

// Independent brute force: every midpoint of every feature, gain recomputed
// from scratch. Only strictly positive gains count as splits.
SplitCandidate brute_exact(const Eigen::MatrixXd& X, const std::vector<int>& rows, const Grads& gr,
                           const SplitParams& p) {
  SplitCandidate best;
  for (int f = 0; f < X.cols(); ++f) {
    std::vector<double> vals;
    for (int r : rows) vals.push_back(X(r, f));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t v = 0; v + 1 < vals.size(); ++v) {
      double t = 0.5 * (vals[v] + vals[v + 1]);
      GradStats l, r;
      for (int row : rows) {
        auto& s = X(row, f) <= t ? l : r;
        s.grad += gr.g[row];
        s.hess += gr.h[row];
        ++s.count;
      }
      if (l.hess < p.min_child_weight || r.hess < p.min_child_weight) continue;
      if (l.count < p.min_child_count || r.count < p.min_child_count) continue;
      double G = l.grad + r.grad, H = l.hess + r.hess;
      double gain = 0.5 * (l.grad * l.grad / (l.hess + p.lambda) + r.grad * r.grad / (r.hess + p.lambda) -
                           G * G / (H + p.lambda)) -
                    p.gamma;
      if (gain > best.gain) best = {f, t, gain};
    }
  }
  return best;
}

TEST(SplitGain, MatchesFormula) {
  GradStats l{-4, 2, 3}, r{6, 3, 4};
  SplitParams p{1.0, 0.5, 0, 1};
  double expected = 0.5 * (16.0 / 3.0 + 36.0 / 4.0 - 4.0 / 6.0) - 0.5;
  EXPECT_NEAR(split_gain(l, r, p), expected, 1e-12);
}

TEST(Binning, CodesRespectCuts) {
  auto X = random_matrix(500, 4, 1, true);
  auto B = bin_matrix(X, 16);
  for (int f = 0; f < 4; ++f) {
    EXPECT_LE(B.num_bins(f), 16);
    EXPECT_TRUE(std::is_sorted(B.cuts[f].begin(), B.cuts[f].end()));
    for (int r = 0; r < 500; ++r) {
      int c = B.code(r, f);
      for (int b = 0; b < static_cast<int>(B.cuts[f].size()); ++b) {
        EXPECT_EQ(X(r, f) <= B.cuts[f][b], c <= b);
      }
    }
  }
}

TEST(Binning, ConstantColumnSingleBin) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Constant(50, 1, 3.0);
  auto B = bin_matrix(X, 32);
  EXPECT_LE(B.num_bins(0), 2);
  for (int r = 0; r < 50; ++r) EXPECT_EQ(B.code(r, 0), B.code(0, 0));
}

class ParallelEquality : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { omp_set_num_threads(GetParam()); }
  void TearDown() override { omp_set_num_threads(1); }
};

TEST_P(ParallelEquality, Histogram) {
  auto X = random_matrix(800, 9, 2);
  auto B = bin_matrix(X, 32);
  auto gr = random_grads(800, 3);
  std::vector<int> rows;
  for (int i = 0; i < 800; i += 3) rows.push_back(i);
  auto hs = serial::build_histogram(B, rows, gr.g, gr.h);
  auto hp = parallel::build_histogram(B, rows, gr.g, gr.h);
  ASSERT_EQ(hs.bins.size(), hp.bins.size());
  for (std::size_t i = 0; i < hs.bins.size(); ++i) {
    EXPECT_EQ(hs.bins[i].grad, hp.bins[i].grad);
    EXPECT_EQ(hs.bins[i].hess, hp.bins[i].hess);
    EXPECT_EQ(hs.bins[i].count, hp.bins[i].count);
  }
  SplitParams p;
  auto ss = serial::best_histogram_split(B, hs, p);
  auto sp = parallel::best_histogram_split(B, hp, p);
  EXPECT_EQ(ss.feature, sp.feature);
  EXPECT_EQ(ss.threshold, sp.threshold);
  EXPECT_EQ(ss.gain, sp.gain);
}

TEST_P(ParallelEquality, ExactSplit) {
  for (bool ties : {false, true}) {
    auto X = random_matrix(300, 7, 4 + ties, ties);
    auto gr = random_grads(300, 5);
    std::vector<int> rows(300);
    std::iota(rows.begin(), rows.end(), 0);
    SplitParams p{1.0, 0.0, 0.5, 3};
    auto ss = serial::best_exact_split(X, rows, gr.g, gr.h, p);
    auto sp = parallel::best_exact_split(X, rows, gr.g, gr.h, p);
    EXPECT_EQ(ss.feature, sp.feature);
    EXPECT_EQ(ss.threshold, sp.threshold);
    EXPECT_EQ(ss.gain, sp.gain);
  }
}

TEST_P(ParallelEquality, Cosine) {
  auto A = random_matrix(120, 6, 6);
  auto Bm = random_matrix(90, 6, 7);
  EXPECT_NEAR(serial::mean_pairwise_cosine(A, Bm), parallel::mean_pairwise_cosine(A, Bm), 1e-12);
  EXPECT_NEAR(serial::mean_pairwise_cosine_within(A), parallel::mean_pairwise_cosine_within(A), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Threads, ParallelEquality, ::testing::Values(1, 2, 4));

TEST(ExactSplit, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto X = random_matrix(60, 4, 100 + seed, seed % 2 == 0);
    auto gr = random_grads(60, 200 + seed);
    std::vector<int> rows;
    for (int i = 0; i < 60; ++i) {
      if ((i + seed) % 4 != 0) rows.push_back(i);
    }
    SplitParams p{1.0, 0.1, 0.2, 2};
    auto got = serial::best_exact_split(X, rows, gr.g, gr.h, p);
    auto want = brute_exact(X, rows, gr, p);
    ASSERT_EQ(got.valid(), want.valid());
    if (!want.valid()) continue;
    EXPECT_NEAR(got.gain, want.gain, 1e-9);
  }
}

TEST(ExactSplit, PerfectSeparationFound) {
  Eigen::MatrixXd X(6, 2);
  X << 5, 1, 6, 2, 7, 3, 5, 10, 6, 11, 7, 12;
  std::vector<double> g = {-1, -1, -1, 1, 1, 1}, h(6, 1.0);
  std::vector<int> rows = {0, 1, 2, 3, 4, 5};
  auto s = serial::best_exact_split(X, rows, g, h, SplitParams{});
  EXPECT_EQ(s.feature, 1);
  EXPECT_DOUBLE_EQ(s.threshold, 6.5);
}

TEST(UnitSums, MatchesBruteForce) {
  auto A = random_matrix(70, 5, 8);
  auto B = random_matrix(40, 5, 9);
  A.row(3).setZero();
  auto sa = unit_sums(A), sb = unit_sums(B);
  EXPECT_NEAR(mean_cosine(sa, sb), serial::mean_pairwise_cosine(A, B), 1e-10);
  EXPECT_NEAR(mean_cosine_within(sa), serial::mean_pairwise_cosine_within(A), 1e-10);
  EXPECT_EQ(sa.count, 70);
}

}  // namespace
}  // namespace mhf::kernels

#pragma once

// Data-parallel inner loops. Every kernel has a `serial` reference and a
// `parallel` OpenMP variant with identical results; the references are kept
// for tests and the benchmark target.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mhf::kernels {

// Feature values quantized to per-feature bins. Bin b covers values in
// (cuts[b-1], cuts[b]]; the last bin holds everything above the last cut.
struct BinnedMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> codes;          // column-major, rows * cols
  std::vector<std::vector<double>> cuts;    // per feature, ascending

  std::uint8_t code(int row, int col) const { return codes[static_cast<std::size_t>(col) * rows + row]; }
  int num_bins(int col) const { return static_cast<int>(cuts[col].size()) + 1; }
};

// Quantile cut points from `X`, at most `max_bins` bins per feature (<= 256).
BinnedMatrix bin_matrix(const Eigen::MatrixXd& X, int max_bins);
// Applies existing cut points to new data.
std::uint8_t bin_value(const std::vector<double>& cuts, double x);

struct GradStats {
  double grad = 0;
  double hess = 0;
  int count = 0;
};

// Per-feature gradient histograms, laid out feature-major with `stride`
// slots per feature.
struct Histogram {
  int stride = 0;
  std::vector<GradStats> bins;
  GradStats& at(int feature, int bin) { return bins[static_cast<std::size_t>(feature) * stride + bin]; }
  const GradStats& at(int feature, int bin) const { return bins[static_cast<std::size_t>(feature) * stride + bin]; }
};

struct SplitParams {
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1e-3;
  int min_child_count = 1;
};

struct SplitCandidate {
  int feature = -1;
  double threshold = 0;
  double gain = 0;  // loss reduction, already net of gamma
  bool valid() const { return feature >= 0; }
};

// Second-order split gain: 1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)] - gamma.
double split_gain(const GradStats& left, const GradStats& right, const SplitParams& p);

namespace serial {

Histogram build_histogram(const BinnedMatrix& X, std::span<const int> rows, std::span<const double> grad,
                          std::span<const double> hess);
SplitCandidate best_histogram_split(const BinnedMatrix& X, const Histogram& h, const SplitParams& p);
// Exact greedy search over sorted feature values.
SplitCandidate best_exact_split(const Eigen::MatrixXd& X, std::span<const int> rows, std::span<const double> grad,
                                std::span<const double> hess, const SplitParams& p);

// Brute-force mean cosine similarity over every cross pair (a in A, b in B).
double mean_pairwise_cosine(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);
// Brute-force mean over distinct pairs within A.
double mean_pairwise_cosine_within(const Eigen::MatrixXd& A);

}  // namespace serial

namespace parallel {

Histogram build_histogram(const BinnedMatrix& X, std::span<const int> rows, std::span<const double> grad,
                          std::span<const double> hess);
SplitCandidate best_histogram_split(const BinnedMatrix& X, const Histogram& h, const SplitParams& p);
SplitCandidate best_exact_split(const Eigen::MatrixXd& X, std::span<const int> rows, std::span<const double> grad,
                                std::span<const double> hess, const SplitParams& p);

double mean_pairwise_cosine(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);
double mean_pairwise_cosine_within(const Eigen::MatrixXd& A);

}  // namespace parallel

// Sum of L2-normalized rows and the sum of their squared norms (1 per
// nonzero row, 0 for an all-zero row). Mean pairwise cosines follow from
// these in O(n d) instead of O(n^2 d).
struct UnitSums {
  Eigen::RowVectorXd sum;
  double squared_norms = 0;
  int count = 0;
};
UnitSums unit_sums(const Eigen::MatrixXd& rows);
double mean_cosine(const UnitSums& a, const UnitSums& b);
double mean_cosine_within(const UnitSums& a);  // requires count >= 2

}  // namespace mhf::kernels

#include "mhf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mhf::kernels {

namespace {

// Ascending unique values of one column; cut points are midpoints between
// neighbours, thinned to quantiles when there are too many.
std::vector<double> cut_points(const Eigen::VectorXd& col, int max_bins) {
  std::vector<double> v(col.data(), col.data() + col.size());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> cuts;
  if (v.size() <= 1) return cuts;
  if (static_cast<int>(v.size()) <= max_bins) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i) cuts.push_back(0.5 * (v[i] + v[i + 1]));
    return cuts;
  }
  std::vector<double> sorted(col.data(), col.data() + col.size());
  std::sort(sorted.begin(), sorted.end());
  for (int b = 1; b < max_bins; ++b) {
    std::size_t pos = static_cast<std::size_t>(static_cast<double>(b) * sorted.size() / max_bins);
    pos = std::min(pos, sorted.size() - 1);
    // Cut halfway to the next distinct value so ties stay in one bin.
    auto next = std::upper_bound(sorted.begin(), sorted.end(), sorted[pos]);
    if (next == sorted.end()) break;
    double c = 0.5 * (sorted[pos] + *next);
    if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
  }
  return cuts;
}

SplitCandidate scan_feature_histogram(const BinnedMatrix& X, const Histogram& h, int f, const SplitParams& p) {
  SplitCandidate best;
  GradStats total;
  const int nb = X.num_bins(f);
  for (int b = 0; b < nb; ++b) {
    total.grad += h.at(f, b).grad;
    total.hess += h.at(f, b).hess;
    total.count += h.at(f, b).count;
  }
  GradStats left;
  for (int b = 0; b + 1 < nb; ++b) {
    left.grad += h.at(f, b).grad;
    left.hess += h.at(f, b).hess;
    left.count += h.at(f, b).count;
    GradStats right{total.grad - left.grad, total.hess - left.hess, total.count - left.count};
    if (left.count < p.min_child_count || right.count < p.min_child_count) continue;
    if (left.hess < p.min_child_weight || right.hess < p.min_child_weight) continue;
    double gain = split_gain(left, right, p);
    if (gain > best.gain) best = {f, X.cuts[f][b], gain};
  }
  return best;
}

SplitCandidate scan_feature_exact(const Eigen::MatrixXd& X, std::span<const int> rows, std::span<const double> grad,
                                  std::span<const double> hess, int f, const SplitParams& p) {
  std::vector<int> order(rows.begin(), rows.end());
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double va = X(a, f), vb = X(b, f);
    return va < vb || (va == vb && a < b);
  });
  GradStats total;
  for (int r : order) {
    total.grad += grad[r];
    total.hess += hess[r];
  }
  total.count = static_cast<int>(order.size());
  SplitCandidate best;
  GradStats left;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    int r = order[i];
    left.grad += grad[r];
    left.hess += hess[r];
    ++left.count;
    double v = X(r, f), next = X(order[i + 1], f);
    if (v == next) continue;
    GradStats right{total.grad - left.grad, total.hess - left.hess, total.count - left.count};
    if (left.count < p.min_child_count || right.count < p.min_child_count) continue;
    if (left.hess < p.min_child_weight || right.hess < p.min_child_weight) continue;
    double gain = split_gain(left, right, p);
    if (gain > best.gain) best = {f, 0.5 * (v + next), gain};
  }
  return best;
}

// Lowest feature index wins ties, matching a left-to-right serial scan.
SplitCandidate pick_best(const std::vector<SplitCandidate>& per_feature) {
  SplitCandidate best;
  for (const auto& c : per_feature) {
    if (c.valid() && c.gain > best.gain) best = c;
  }
  return best;
}

Histogram empty_histogram(const BinnedMatrix& X) {
  Histogram h;
  h.stride = 0;
  for (int f = 0; f < X.cols; ++f) h.stride = std::max(h.stride, X.num_bins(f));
  h.bins.assign(static_cast<std::size_t>(h.stride) * X.cols, GradStats{});
  return h;
}

void fill_feature_histogram(const BinnedMatrix& X, std::span<const int> rows, std::span<const double> grad,
                            std::span<const double> hess, int f, Histogram& h) {
  const std::uint8_t* codes = X.codes.data() + static_cast<std::size_t>(f) * X.rows;
  for (int r : rows) {
    auto& s = h.at(f, codes[r]);
    s.grad += grad[r];
    s.hess += hess[r];
    ++s.count;
  }
}

double cosine(const Eigen::MatrixXd& A, Eigen::Index i, const Eigen::MatrixXd& B, Eigen::Index j) {
  double na = A.row(i).norm(), nb = B.row(j).norm();
  if (na == 0 || nb == 0) return 0.0;
  return A.row(i).dot(B.row(j)) / (na * nb);
}

}  // namespace

double split_gain(const GradStats& l, const GradStats& r, const SplitParams& p) {
  auto score = [&](double g, double h) { return g * g / (h + p.lambda); };
  return 0.5 * (score(l.grad, l.hess) + score(r.grad, r.hess) - score(l.grad + r.grad, l.hess + r.hess)) - p.gamma;
}

std::uint8_t bin_value(const std::vector<double>& cuts, double x) {
  return static_cast<std::uint8_t>(std::lower_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

BinnedMatrix bin_matrix(const Eigen::MatrixXd& X, int max_bins) {
  max_bins = std::clamp(max_bins, 2, 256);
  BinnedMatrix out;
  out.rows = static_cast<int>(X.rows());
  out.cols = static_cast<int>(X.cols());
  out.codes.resize(static_cast<std::size_t>(out.rows) * out.cols);
  out.cuts.resize(out.cols);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < out.cols; ++f) {
    out.cuts[f] = cut_points(X.col(f), max_bins);
    for (int r = 0; r < out.rows; ++r) {
      out.codes[static_cast<std::size_t>(f) * out.rows + r] = bin_value(out.cuts[f], X(r, f));
    }
  }
  return out;
}

namespace serial {

Histogram build_histogram(const BinnedMatrix& X, std::span<const int> rows, std::span<const double> grad,
                          std::span<const double> hess) {
  Histogram h = empty_histogram(X);
  for (int f = 0; f < X.cols; ++f) fill_feature_histogram(X, rows, grad, hess, f, h);
  return h;
}

SplitCandidate best_histogram_split(const BinnedMatrix& X, const Histogram& h, const SplitParams& p) {
  std::vector<SplitCandidate> per(X.cols);
  for (int f = 0; f < X.cols; ++f) per[f] = scan_feature_histogram(X, h, f, p);
  return pick_best(per);
}

SplitCandidate best_exact_split(const Eigen::MatrixXd& X, std::span<const int> rows, std::span<const double> grad,
                                std::span<const double> hess, const SplitParams& p) {
  std::vector<SplitCandidate> per(X.cols());
  for (int f = 0; f < X.cols(); ++f) per[f] = scan_feature_exact(X, rows, grad, hess, f, p);
  return pick_best(per);
}

double mean_pairwise_cosine(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  double sum = 0;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) sum += cosine(A, i, B, j);
  }
  return sum / (static_cast<double>(A.rows()) * static_cast<double>(B.rows()));
}

double mean_pairwise_cosine_within(const Eigen::MatrixXd& A) {
  double sum = 0;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < A.rows(); ++j) sum += cosine(A, i, A, j);
  }
  double n = static_cast<double>(A.rows());
  return sum / (n * (n - 1) / 2.0);
}

}  // namespace serial

namespace parallel {

Histogram build_histogram(const BinnedMatrix& X, std::span<const int> rows, std::span<const double> grad,
                          std::span<const double> hess) {
  Histogram h = empty_histogram(X);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < X.cols; ++f) fill_feature_histogram(X, rows, grad, hess, f, h);
  return h;
}

SplitCandidate best_histogram_split(const BinnedMatrix& X, const Histogram& h, const SplitParams& p) {
  std::vector<SplitCandidate> per(X.cols);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < X.cols; ++f) per[f] = scan_feature_histogram(X, h, f, p);
  return pick_best(per);
}

SplitCandidate best_exact_split(const Eigen::MatrixXd& X, std::span<const int> rows, std::span<const double> grad,
                                std::span<const double> hess, const SplitParams& p) {
  const int cols = static_cast<int>(X.cols());
  std::vector<SplitCandidate> per(cols);
#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < cols; ++f) per[f] = scan_feature_exact(X, rows, grad, hess, f, p);
  return pick_best(per);
}

double mean_pairwise_cosine(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows();
  std::vector<double> partial(n, 0.0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0;
    for (Eigen::Index j = 0; j < B.rows(); ++j) s += cosine(A, i, B, j);
    partial[i] = s;
  }
  double sum = std::accumulate(partial.begin(), partial.end(), 0.0);
  return sum / (static_cast<double>(A.rows()) * static_cast<double>(B.rows()));
}

double mean_pairwise_cosine_within(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  std::vector<double> partial(n, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0;
    for (Eigen::Index j = i + 1; j < n; ++j) s += cosine(A, i, A, j);
    partial[i] = s;
  }
  double sum = std::accumulate(partial.begin(), partial.end(), 0.0);
  double dn = static_cast<double>(n);
  return sum / (dn * (dn - 1) / 2.0);
}

}  // namespace parallel

UnitSums unit_sums(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows(), d = rows.cols();
  Eigen::VectorXd inv_norm(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double norm = rows.row(i).norm();
    inv_norm[i] = norm > 0 ? 1.0 / norm : 0.0;
  }
  UnitSums out;
  out.sum = Eigen::RowVectorXd::Zero(d);
  out.count = static_cast<int>(n);
  // Column-parallel so every column is summed in a fixed row order.
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < d; ++c) {
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) s += rows(i, c) * inv_norm[i];
    out.sum[c] = s;
  }
  for (Eigen::Index i = 0; i < n; ++i) out.squared_norms += inv_norm[i] > 0 ? 1.0 : 0.0;
  return out;
}

double mean_cosine(const UnitSums& a, const UnitSums& b) {
  return a.sum.dot(b.sum) / (static_cast<double>(a.count) * static_cast<double>(b.count));
}

double mean_cosine_within(const UnitSums& a) {
  double n = static_cast<double>(a.count);
  return (a.sum.squaredNorm() - a.squared_norms) / (n * (n - 1));
}

}  // namespace mhf::kernels

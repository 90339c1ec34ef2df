// Serial reference kernels against their OpenMP variants.
//   ./kernel_bench --benchmark_filter=Histogram

#include <numeric>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "mhf/kernels.hpp"

namespace k = mhf::kernels;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

struct GbdtInputs {
  Eigen::MatrixXd X;
  k::BinnedMatrix binned;
  std::vector<int> rows;
  std::vector<double> grad, hess;

  explicit GbdtInputs(int n, int d = 35) : X(random_matrix(n, d, 1)), binned(k::bin_matrix(X, 64)), rows(n) {
    std::iota(rows.begin(), rows.end(), 0);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0, 1);
    for (int i = 0; i < n; ++i) {
      grad.push_back(g(rng));
      hess.push_back(0.25);
    }
  }
};

template <bool Parallel>
void BM_Histogram(benchmark::State& state) {
  GbdtInputs in(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto h = Parallel ? k::parallel::build_histogram(in.binned, in.rows, in.grad, in.hess)
                      : k::serial::build_histogram(in.binned, in.rows, in.grad, in.hess);
    benchmark::DoNotOptimize(h.bins.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_HistogramSplit(benchmark::State& state) {
  GbdtInputs in(static_cast<int>(state.range(0)));
  auto h = k::serial::build_histogram(in.binned, in.rows, in.grad, in.hess);
  for (auto _ : state) {
    auto s = Parallel ? k::parallel::best_histogram_split(in.binned, h, {}) : k::serial::best_histogram_split(in.binned, h, {});
    benchmark::DoNotOptimize(s);
  }
}

template <bool Parallel>
void BM_ExactSplit(benchmark::State& state) {
  GbdtInputs in(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto s = Parallel ? k::parallel::best_exact_split(in.X, in.rows, in.grad, in.hess, {})
                      : k::serial::best_exact_split(in.X, in.rows, in.grad, in.hess, {});
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_PairwiseCosine(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto A = random_matrix(n, 490, 3), B = random_matrix(n, 490, 4);
  for (auto _ : state) {
    double v = Parallel ? k::parallel::mean_pairwise_cosine(A, B) : k::serial::mean_pairwise_cosine(A, B);
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_UnitSumCosine(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto A = random_matrix(n, 490, 3), B = random_matrix(n, 490, 4);
  for (auto _ : state) {
    double v = k::mean_cosine(k::unit_sums(A), k::unit_sums(B));
    benchmark::DoNotOptimize(v);
  }
}

}  // namespace

BENCHMARK(BM_Histogram<false>)->Name("Histogram/serial")->Arg(1000)->Arg(20000);
BENCHMARK(BM_Histogram<true>)->Name("Histogram/parallel")->Arg(1000)->Arg(20000);
BENCHMARK(BM_HistogramSplit<false>)->Name("HistogramSplit/serial")->Arg(20000);
BENCHMARK(BM_HistogramSplit<true>)->Name("HistogramSplit/parallel")->Arg(20000);
BENCHMARK(BM_ExactSplit<false>)->Name("ExactSplit/serial")->Arg(1000)->Arg(5000);
BENCHMARK(BM_ExactSplit<true>)->Name("ExactSplit/parallel")->Arg(1000)->Arg(5000);
BENCHMARK(BM_PairwiseCosine<false>)->Name("PairwiseCosine/serial")->Arg(200)->Arg(400);
BENCHMARK(BM_PairwiseCosine<true>)->Name("PairwiseCosine/parallel")->Arg(200)->Arg(400);
BENCHMARK(BM_UnitSumCosine)->Name("UnitSumCosine")->Arg(200)->Arg(400);

BENCHMARK_MAIN();

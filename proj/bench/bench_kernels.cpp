// Serial vs OpenMP kernels. Parallel variants take the thread count as
// the benchmark argument; serial ones ignore it.
#include <benchmark/benchmark.h>

#include <omp.h>

#include <numeric>
#include <random>

#include "uhead/head.hpp"
#include "uhead/kernels.hpp"
#include "uhead/matrix.hpp"

using namespace uhead;

namespace {

Matrix<float> gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> dist;
  Matrix<float> m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m(i, j) = dist(gen);
  return m;
}

Matrix<double> widen(const Matrix<float> &m) {
  Matrix<double> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out(i, j) = m(i, j);
  return out;
}

// Row-normalized Gaussian kernel as a stand-in for tSNE affinities.
Matrix<double> affinities(const Matrix<double> &y) {
  auto p = kernels::squared_distances_serial(y);
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      p(i, j) = i == j ? 0.0 : std::exp(-p(i, j));
      total += p(i, j);
    }
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j)
      p(i, j) /= total;
  return p;
}

void set_threads(const benchmark::State &state) { omp_set_num_threads(static_cast<int>(state.range(0))); }

constexpr std::size_t kRows = 4000, kDim = 64;

template <bool Parallel> void BM_NearestCosine(benchmark::State &state) {
  set_threads(state);
  const auto x = gaussian(kRows, kDim, 1);
  std::vector<std::size_t> all(kRows);
  std::iota(all.begin(), all.end(), 0);
  for (auto _ : state) {
    auto nn = Parallel ? kernels::nearest_cosine_parallel(x, x, all, true)
                       : kernels::nearest_cosine_serial(x, x, all, true);
    benchmark::DoNotOptimize(nn.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kRows * kRows));
}

template <bool Parallel> void BM_TsneGradient(benchmark::State &state) {
  set_threads(state);
  const std::size_t n = 1000;
  const auto y = widen(gaussian(n, 2, 2));
  const auto p = affinities(y);
  Matrix<double> grad(n, 2);
  for (auto _ : state) {
    const double z = Parallel ? kernels::tsne_gradient_parallel(p, y, 1.0, grad.view())
                              : kernels::tsne_gradient_serial(p, y, 1.0, grad.view());
    benchmark::DoNotOptimize(z);
  }
}

template <bool Parallel> void BM_SquaredDistances(benchmark::State &state) {
  set_threads(state);
  const auto y = widen(gaussian(2000, 16, 3));
  for (auto _ : state) {
    auto d = Parallel ? kernels::squared_distances_parallel(y) : kernels::squared_distances_serial(y);
    benchmark::DoNotOptimize(d.data().data());
  }
}

template <bool Parallel> void BM_HeadPredict(benchmark::State &state) {
  set_threads(state);
  const auto head = head_init(kDim, 512, 4);
  const auto x = gaussian(8192, kDim, 5);
  for (auto _ : state) {
    auto u = Parallel ? kernels::head_predict_parallel(head, x) : kernels::head_predict_serial(head, x);
    benchmark::DoNotOptimize(u.data());
  }
  state.SetItemsProcessed(state.iterations() * 8192);
}

void thread_args(benchmark::internal::Benchmark *b) {
  for (int t : {1, 2, 4, 8})
    b->Arg(t);
  b->Unit(benchmark::kMillisecond)->UseRealTime();
}

} // namespace

BENCHMARK(BM_NearestCosine<false>)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_NearestCosine<true>)->Apply(thread_args);
BENCHMARK(BM_TsneGradient<false>)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_TsneGradient<true>)->Apply(thread_args);
BENCHMARK(BM_SquaredDistances<false>)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SquaredDistances<true>)->Apply(thread_args);
BENCHMARK(BM_HeadPredict<false>)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_HeadPredict<true>)->Apply(thread_args);

BENCHMARK_MAIN();

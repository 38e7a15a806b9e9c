// Serial reference vs OpenMP kernels. Second argument is the OpenMP thread
// count for the parallel variants.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>
#include <vector>

#include "dkgp/compute.hpp"
#include "dkgp/features.hpp"

namespace {

using dkgp::Matrix;
namespace compute = dkgp::compute;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = u(rng);
  return M;
}

void set_threads(const benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(1)));
}

void BM_PairwiseSerial(benchmark::State& state) {
  const Matrix A = random_matrix(state.range(0), 8, 1);
  for (auto _ : state) benchmark::DoNotOptimize(compute::serial::pairwise_sqdist(A, A));
}

void BM_PairwiseOmp(benchmark::State& state) {
  set_threads(state);
  const Matrix A = random_matrix(state.range(0), 8, 1);
  for (auto _ : state) benchmark::DoNotOptimize(compute::pairwise_sqdist(A, A, true));
}

void BM_SiluSerial(benchmark::State& state) {
  const Matrix X = random_matrix(state.range(0), 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(compute::serial::silu(X));
}

void BM_SiluOmp(benchmark::State& state) {
  set_threads(state);
  const Matrix X = random_matrix(state.range(0), 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(compute::silu(X));
}

const std::vector<double>& knots() {
  static const std::vector<double> k = dkgp::features::uniform_knots(5, 3, -1.0, 1.0);
  return k;
}

void BM_BsplineSerial(benchmark::State& state) {
  const Matrix X = random_matrix(state.range(0), 16, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute::serial::bspline_design(X, knots(), 3, -1.0, 1.0, true));
  }
}

void BM_BsplineOmp(benchmark::State& state) {
  set_threads(state);
  const Matrix X = random_matrix(state.range(0), 16, 3);
  for (auto _ : state) benchmark::DoNotOptimize(compute::bspline_design(X, knots(), 3, -1.0, 1.0, true));
}

// Four nonzeros per row, as in a 1-D cubic interpolation matrix.
struct Csr {
  std::vector<std::size_t> offsets, cols;
  std::vector<double> values, v, y;
};

Csr make_csr(std::size_t n) {
  Csr c;
  const std::size_t m = n / 4 + 4;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> start(0, m - 4);
  c.offsets.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = start(rng);
    for (std::size_t k = 0; k < 4; ++k) {
      c.cols.push_back(s + k);
      c.values.push_back(0.25);
    }
    c.offsets.push_back(c.cols.size());
  }
  c.v.assign(m, 1.0);
  c.y.assign(n, 0.0);
  return c;
}

void BM_CsrSerial(benchmark::State& state) {
  Csr c = make_csr(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    compute::serial::csr_matvec(c.offsets, c.cols, c.values, c.v, c.y);
    benchmark::ClobberMemory();
  }
}

void BM_CsrOmp(benchmark::State& state) {
  set_threads(state);
  Csr c = make_csr(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    compute::csr_matvec(c.offsets, c.cols, c.values, c.v, c.y);
    benchmark::ClobberMemory();
  }
}

void serial_args(benchmark::internal::Benchmark* b, std::vector<std::int64_t> sizes) {
  for (std::int64_t n : sizes) b->Args({n, 1});
}

void omp_args(benchmark::internal::Benchmark* b, std::vector<std::int64_t> sizes) {
  const int max_threads = omp_get_num_procs();
  for (std::int64_t n : sizes) {
    for (int t = 1; t <= max_threads; t *= 2) b->Args({n, t});
  }
}

}  // namespace

BENCHMARK(BM_PairwiseSerial)->Apply([](auto* b) { serial_args(b, {256, 1024}); })->UseRealTime();
BENCHMARK(BM_PairwiseOmp)->Apply([](auto* b) { omp_args(b, {256, 1024}); })->UseRealTime();
BENCHMARK(BM_SiluSerial)->Apply([](auto* b) { serial_args(b, {1024, 16384}); })->UseRealTime();
BENCHMARK(BM_SiluOmp)->Apply([](auto* b) { omp_args(b, {1024, 16384}); })->UseRealTime();
BENCHMARK(BM_BsplineSerial)->Apply([](auto* b) { serial_args(b, {1024, 16384}); })->UseRealTime();
BENCHMARK(BM_BsplineOmp)->Apply([](auto* b) { omp_args(b, {1024, 16384}); })->UseRealTime();
BENCHMARK(BM_CsrSerial)->Apply([](auto* b) { serial_args(b, {10000, 1000000}); })->UseRealTime();
BENCHMARK(BM_CsrOmp)->Apply([](auto* b) { omp_args(b, {10000, 1000000}); })->UseRealTime();

BENCHMARK_MAIN();

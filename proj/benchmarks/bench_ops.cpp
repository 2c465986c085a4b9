#include <benchmark/benchmark.h>

#include <gcagc/agcm.hpp>
#include <gcagc/ops.hpp>
#include <gcagc/rng.hpp>

using namespace gcagc;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

// Full adjacency for one image: n nodes projected to rank r, then normalized.
void BM_Adjacency(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor q = random_tensor({n, 32}, 3), k = random_tensor({n, 32}, 4);
  for (auto _ : state) {
    const Tensor a = normalize_adjacency(sigmoid_outer(q, k));
    benchmark::DoNotOptimize(a.data().data());
  }
}
BENCHMARK(BM_Adjacency)->Arg(256)->Arg(1280);

void BM_AdjacencyBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    const Tensor q = random_tensor({n, 32}, 3).clone(true);
    const Tensor k = random_tensor({n, 32}, 4).clone(true);
    reduce_sum(normalize_adjacency(sigmoid_outer(q, k))).backward();
    benchmark::DoNotOptimize(q.grad().data());
  }
}
BENCHMARK(BM_AdjacencyBackward)->Arg(256)->Arg(1280);

void BM_KernelMatvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 48;
  Rng rng(5);
  std::vector<double> z(n * d), w(n), v(n);
  for (auto& x : z) x = rng.normal();
  for (auto& x : w) x = rng.uniform(0.05, 1.0);
  for (auto& x : v) x = rng.normal();
  const KernelOperator op(z, n, d, w);
  for (auto _ : state) benchmark::DoNotOptimize(op.apply(v).data());
}
BENCHMARK(BM_KernelMatvec)->Arg(1280)->Arg(20480);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({5, c, 32, 32}, 6), w = random_tensor({c, c, 3, 3}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, Tensor(), 1, 1).data().data());
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "encattack/attack.hpp"
#include "encattack/dataset.hpp"
#include "encattack/encoder.hpp"
#include "encattack/matching.hpp"
#include "encattack/nn.hpp"
#include "encattack/rng.hpp"

using namespace encattack;

namespace {

Matrix2D random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix2D m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

void BM_SolveAssignment(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const CostMatrix c = random_matrix(n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(c));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SolveAssignment)->RangeMultiplier(2)->Range(16, 512)->Complexity();

void BM_ISimMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  EmbeddingSet raw, enc;
  for (std::size_t i = 0; i < n; ++i) {
    raw.push_back(random_matrix(16, 32, 2 * i));
    enc.push_back(random_matrix(16, 32, 2 * i + 1));
  }
  for (auto _ : state) benchmark::DoNotOptimize(i_sim_matrix(raw, enc, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_ISimMatrix)->Arg(25)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_EncodeImage(benchmark::State& state) {
  ImageSpec spec;
  spec.depth = static_cast<std::size_t>(state.range(0));
  const EncoderKey key = sample_key(spec, 3);
  const auto images = generate_lowfreq(spec, 1, 4);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(encode_image(key, images[0], ++seed));
}
BENCHMARK(BM_EncodeImage)->Arg(2)->Arg(7)->Arg(15);

void BM_ForwardBatch(benchmark::State& state) {
  const std::vector<std::size_t> dims = {64, 128, 128, 32};
  const MlpParams p = init_mlp(dims, 1.0, 5);
  const Matrix2D x = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 6);
  for (auto _ : state) benchmark::DoNotOptimize(forward_batch(p, x));
}
BENCHMARK(BM_ForwardBatch)->Arg(64)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();

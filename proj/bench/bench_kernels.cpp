// Parallel kernels against their serial references.
//   BLURCAST_THREADS=N ./blurcast_bench

#include <benchmark/benchmark.h>

#include <vector>

#include "blurcast/data.hpp"
#include "blurcast/kernels.hpp"
#include "blurcast/rng.hpp"
#include "blurcast/train.hpp"

using namespace blurcast;

namespace {

void fill(std::vector<double>& v, std::uint64_t seed) {
  auto rng = make_rng({seed});
  std::normal_distribution<double> d;
  for (auto& x : v) x = d(rng);
}

void BM_Matmul(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  std::vector<double> a(n * n), b(n * n), c(n * n);
  fill(a, 1);
  fill(b, 2);
  for (auto _ : st) {
    kernels::matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_MatmulReference(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  std::vector<double> a(n * n), b(n * n), c(n * n);
  fill(a, 1);
  fill(b, 2);
  for (auto _ : st) {
    kernels::matmul_reference(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
}

struct GradFixture {
  pipeline::TrainConfig cfg;
  data::PreparedData data;
  pipeline::ModelParams params;
  std::vector<std::size_t> idx;

  GradFixture() {
    cfg.variant = pipeline::Variant::DG;
    data::WindowConfig wc{48, 12, 1};
    data = data::prepare({data::synth_series(data::SynthKind::SineMix, 200 + 59, 0, 0.1)}, wc, true);
    params = pipeline::init_model(cfg.variant, cfg.hyper, cfg.seed);
    for (std::size_t i = 0; i < 64; ++i) idx.push_back(i);
  }
};

void BM_BatchGradient(benchmark::State& st) {
  static GradFixture f;
  for (auto _ : st) benchmark::DoNotOptimize(pipeline::batch_gradient(f.params, f.data.split.train, f.idx, 0, f.cfg));
}

void BM_BatchGradientReference(benchmark::State& st) {
  static GradFixture f;
  for (auto _ : st)
    benchmark::DoNotOptimize(pipeline::batch_gradient_reference(f.params, f.data.split.train, f.idx, 0, f.cfg));
}

}  // namespace

BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulReference)->Arg(64)->Arg(256);
BENCHMARK(BM_BatchGradient)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradientReference)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  kernels::apply_thread_cap_from_env();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  return 0;
}

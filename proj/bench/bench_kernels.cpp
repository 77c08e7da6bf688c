// SPDX-License-Identifier: Apache-2.0
// Serial reference against OpenMP kernels. Each benchmark first checks that
// both backends agree bit for bit on its input.

#include <benchmark/benchmark.h>

#include <cstring>

#include "freqvfx/denoiser.hpp"
#include "freqvfx/kernels.hpp"
#include "freqvfx/rng.hpp"

using namespace freqvfx;
using kernels::Backend;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

Backend backend_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Backend::serial : Backend::parallel;
}

void require_equal(benchmark::State& state, const std::vector<float>& a, const std::vector<float>& b) {
  if (std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0) state.SkipWithError("backends disagree");
}

void BM_Blur(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(1));
  const kernels::PlaneDims dims{64, side, side};
  const std::vector<float> in = noise(dims.planes * side * side, 1);
  const std::vector<double> w = kernels::gaussian_weights(0.9375);
  std::vector<float> out(in.size()), ref(in.size());
  kernels::blur_planes(in.data(), ref.data(), dims, w, Backend::serial);
  kernels::blur_planes(in.data(), out.data(), dims, w, Backend::parallel);
  require_equal(state, out, ref);
  for (auto _ : state) {
    kernels::blur_planes(in.data(), out.data(), dims, w, backend_of(state));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * in.size()));
}

void BM_Gemm(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(1));
  const kernels::GemmDims dims{.batch = 4, .m = n, .k = n, .n = n, .trans_b = true};
  const std::vector<float> a = noise(4 * n * n, 2), b = noise(4 * n * n, 3);
  std::vector<float> c(4 * n * n), ref(4 * n * n);
  kernels::gemm(a.data(), b.data(), ref.data(), dims, Backend::serial);
  kernels::gemm(a.data(), b.data(), c.data(), dims, Backend::parallel);
  require_equal(state, c, ref);
  for (auto _ : state) {
    kernels::gemm(a.data(), b.data(), c.data(), dims, backend_of(state));
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 8 * n * n * n));
}

void BM_SumSq(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(1));
  const Shape shape{16, 8, side, side};
  const std::vector<float> x = noise(16 * 8 * side * side, 4);
  const std::vector<bool> reduce{false, false, true, true};
  std::vector<float> out(16 * 8), ref(16 * 8);
  kernels::sum_sq_axes(x.data(), shape, reduce, ref.data(), Backend::serial);
  kernels::sum_sq_axes(x.data(), shape, reduce, out.data(), Backend::parallel);
  require_equal(state, out, ref);
  for (auto _ : state) {
    kernels::sum_sq_axes(x.data(), shape, reduce, out.data(), backend_of(state));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * x.size()));
}

void BM_DenoiseStep(benchmark::State& state) {
  const diffusion::DenoiserConfig c;
  const auto model = diffusion::init_model<float>(c, 1);
  Rng rng(5);
  TensorF z(c.latent_shape(4));
  for (float& v : z.values()) v = static_cast<float>(rng.normal());
  diffusion::Conditioning<float> cond{TensorF(Shape{4, c.channels, c.height, c.width}, 0.5f),
                                      TensorF(Shape{4, c.text_tokens, c.model_dim}, 0.1f)};
  const std::vector<std::size_t> ts{100, 300, 500, 700};
  kernels::set_default_backend(backend_of(state));
  for (auto _ : state) benchmark::DoNotOptimize(diffusion::denoise_step(model, z, ts, cond));
  kernels::set_default_backend(Backend::parallel);
}

}  // namespace

// First argument: 0 = serial, 1 = OpenMP.
BENCHMARK(BM_Blur)->ArgsProduct({{0, 1}, {8, 64, 256}});
BENCHMARK(BM_Gemm)->ArgsProduct({{0, 1}, {64, 256}});
BENCHMARK(BM_SumSq)->ArgsProduct({{0, 1}, {8, 128}});
BENCHMARK(BM_DenoiseStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "freqvfx/sampler.hpp"
#include "freqvfx/train.hpp"
#include "test_util.hpp"

using namespace freqvfx;
using namespace freqvfx::diffusion;
using fvtest::random_tensor;

namespace {

template <typename T>
Conditioning<T> random_conditioning(const DenoiserConfig& c, std::size_t batch, Rng& rng) {
  return {random_tensor<T>(Shape{batch, c.channels, c.height, c.width}, rng),
          random_tensor<T>(Shape{batch, c.text_tokens, c.model_dim}, rng)};
}

/// Gives every adapter and the router nonzero values so all paths carry gradient.
template <typename T>
void randomize_trainable(Model<T>& m, Rng& rng) {
  for (auto& [name, t] : m.adapters.entries()) t = random_tensor<T>(t.shape(), rng, 0.1);
  for (auto& [name, t] : m.router.entries()) {
    if (t.rank() > 0) t = random_tensor<T>(t.shape(), rng, 0.5);
  }
}

double loss_value(const Model<double>& m, const NoisyBatch<double>& batch, const Conditioning<double>& cond) {
  ad::Tape<double> tape;
  const VarMap<double> vars = bind_model(tape, m, {});
  return diffusion_loss(tape, batch, model_predictor(vars, m, cond)).value().item();
}

}  // namespace

TEST(Schedule, VariancePreservingAndMonotone) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  EXPECT_EQ(s.size(), 1000u);
  EXPECT_EQ(s.alpha(0), 1.0);
  for (std::size_t t = 0; t < s.size(); ++t) {
    EXPECT_NEAR(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0, 1e-6);
    if (t > 0) {
      EXPECT_LE(s.alpha(t), s.alpha(t - 1));
    }
  }
  EXPECT_THROW(s.alpha(1000), ParameterError);
  EXPECT_THROW(NoiseSchedule({0.5, 0.9}), ParameterError);
  EXPECT_THROW(NoiseSchedule({1.2}), ParameterError);
}

TEST(Schedule, SamplingGrid) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const auto grid = s.sampling_timesteps(30);
  ASSERT_EQ(grid.size(), 30u);
  EXPECT_EQ(grid.front(), 966u);
  EXPECT_EQ(grid.back(), 0u);
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_LT(grid[i], grid[i - 1]);
  EXPECT_THROW(s.sampling_timesteps(0), ParameterError);
  EXPECT_THROW(s.sampling_timesteps(1001), ParameterError);
}

TEST(ForwardNoise, Endpoints) {
  const NoiseSchedule s({1.0, 0.5, 0.0});
  Rng rng(1);
  const TensorD z0 = random_tensor(Shape{1, 2, 1, 2, 2}, rng), eps = random_tensor(z0.shape(), rng);
  EXPECT_TRUE(bit_equal(forward_noise(z0, 0, eps, s), z0));
  EXPECT_TRUE(bit_equal(forward_noise(z0, 2, eps, s), eps));
  EXPECT_THROW(forward_noise(z0, 3, eps, s), ParameterError);
  EXPECT_THROW(forward_noise(z0, 0, TensorD(Shape{2}), s), ShapeError);
}

TEST(ForwardNoise, MonteCarloVariance) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  Rng rng(2);
  const TensorD z0 = random_tensor(Shape{10000}, rng), eps = random_tensor(Shape{10000}, rng);
  for (const std::size_t t : {0u, 250u, 500u, 750u, 999u}) {
    const TensorD z = forward_noise(z0, t, eps, s);
    double mean = 0, sq = 0;
    for (const double v : z.values()) mean += v / 1e4;
    for (const double v : z.values()) sq += (v - mean) * (v - mean) / 1e4;
    EXPECT_NEAR(sq, 1.0, 0.05) << "t = " << t;
  }
}

TEST(Denoiser, DegenerateNetworkGivesBias) {
  const DenoiserConfig c;
  Model<double> m = init_model<double>(c, 3);
  for (auto& [name, t] : m.backbone.entries()) t = TensorD(t.shape());
  Rng rng(4);
  TensorD& b = m.backbone.get("patch_out.b");
  b = random_tensor(b.shape(), rng);
  const TensorD z = random_tensor(c.latent_shape(2), rng);
  const TensorD out = denoise_step(m, z, {10, 500}, random_conditioning<double>(c, 2, rng));
  // Output patch channel ch*p*p + dy*p + dx lands at (ch, y*p + dy, x*p + dx).
  const std::size_t p = c.patch;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t x = i % c.width, y = (i / c.width) % c.height, ch = (i / (c.width * c.height)) % c.channels;
    EXPECT_EQ(out[i], b[ch * p * p + (y % p) * p + x % p]);
  }
}

TEST(Denoiser, ZeroDownProjectionIsBaseModel) {
  const DenoiserConfig c;
  Rng rng(5);
  const Model<float> base = init_model<float>(c, 6);
  Model<float> adapted = base;
  for (auto& [name, t] : adapted.adapters.entries()) {
    t = name.ends_with(".a") ? TensorF(t.shape()) : random_tensor<float>(t.shape(), rng);
  }
  for (auto& [name, t] : adapted.router.entries()) t = random_tensor<float>(t.shape(), rng);
  const TensorF z = random_tensor<float>(c.latent_shape(2), rng);
  const auto cond = random_conditioning<float>(c, 2, rng);
  EXPECT_TRUE(bit_equal(denoise_step(base, z, {3, 700}, cond), denoise_step(adapted, z, {3, 700}, cond)));
}

TEST(Denoiser, Deterministic) {
  const DenoiserConfig c;
  const Model<float> a = init_model<float>(c, 9), b = init_model<float>(c, 9);
  EXPECT_EQ(a.backbone.hash(), b.backbone.hash());
  EXPECT_EQ(a.adapters.hash(), b.adapters.hash());
  EXPECT_NE(a.backbone.hash(), init_model<float>(c, 10).backbone.hash());
  Rng rng(1);
  const TensorF z = random_tensor<float>(c.latent_shape(1), rng);
  const auto cond = random_conditioning<float>(c, 1, rng);
  EXPECT_TRUE(bit_equal(denoise_step(a, z, {100}, cond), denoise_step(b, z, {100}, cond)));
}

TEST(Denoiser, InitContracts) {
  const DenoiserConfig c;
  const Model<double> m = init_model<double>(c, 1);
  for (const auto& [name, t] : m.adapters.entries()) {
    if (name.ends_with(".b")) {
      for (const double v : t.values()) EXPECT_EQ(v, 0.0);
    }
  }
  for (const double v : m.router.get("router.w2").values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(m.adapters.size(), kBlocks * 4 * c.moe.experts * 2);
}

TEST(Denoiser, ShapeErrors) {
  const DenoiserConfig c;
  const Model<float> m = init_model<float>(c, 1);
  Rng rng(2);
  const TensorF z = random_tensor<float>(c.latent_shape(1), rng);
  Conditioning<float> bad = random_conditioning<float>(c, 1, rng);
  bad.text = random_tensor<float>(Shape{1, 2, 32}, rng);
  EXPECT_THROW(denoise_step(m, z, {1}, bad), ShapeError);
  Conditioning<float> bad_image = random_conditioning<float>(c, 1, rng);
  bad_image.image = random_tensor<float>(Shape{1, 4, 4, 4}, rng);
  EXPECT_THROW(denoise_step(m, z, {1}, bad_image), ShapeError);
  const TensorF emb = random_tensor<float>(Shape{4, 16}, rng);
  EXPECT_THROW(denoise_step(m, z, {1}, random_conditioning<float>(c, 1, rng), &emb), ShapeError);
  EXPECT_THROW(denoise_step(m, z, {1, 2}, random_conditioning<float>(c, 1, rng)), ShapeError);
}

TEST(DiffusionLoss, PerfectAndZeroPredictors) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  Rng rng(3);
  const NoisyBatch<double> batch = sample_noisy_batch(random_tensor(Shape{4, 8, 4, 8, 8}, rng), s, rng);
  ad::Tape<double> tape;
  const Predictor<double> perfect = [&](ad::Tape<double>& t, ad::Var<double>, const std::vector<std::size_t>&) {
    return t.constant(batch.eps);
  };
  EXPECT_EQ(diffusion_loss(tape, batch, perfect).value().item(), 0.0);
  const Predictor<double> zero = [&](ad::Tape<double>& t, ad::Var<double>, const std::vector<std::size_t>&) {
    return t.constant(TensorD(batch.eps.shape()));
  };
  EXPECT_EQ(batch.eps.size(), 8192u);
  const NoisyBatch<double> big = sample_noisy_batch(random_tensor(Shape{10000}, rng).reshaped({5, 2000}), s, rng);
  const Predictor<double> zero_big = [&](ad::Tape<double>& t, ad::Var<double>, const std::vector<std::size_t>&) {
    return t.constant(TensorD(big.eps.shape()));
  };
  EXPECT_NEAR(diffusion_loss(tape, big, zero_big).value().item(), 1.0, 0.05);
  EXPECT_NEAR(diffusion_loss(tape, batch, zero).value().item(), 1.0, 0.1);
  EXPECT_THROW(sample_noisy_batch(TensorD(Shape{0, 3}), s, rng), ParameterError);
  NoisyBatch<double> empty{TensorD(Shape{0, 3}), {}, {}, {}};
  EXPECT_THROW(diffusion_loss(tape, empty, zero), ParameterError);
}

TEST(DiffusionLoss, GradientMatchesFiniteDifferences) {
  const DenoiserConfig c;
  Rng rng(7);
  Model<double> m = init_model<double>(c, 2);
  randomize_trainable(m, rng);
  const NoiseSchedule s = NoiseSchedule::cosine();
  const NoisyBatch<double> batch = sample_noisy_batch(random_tensor(c.latent_shape(2), rng), s, rng);
  const Conditioning<double> cond = random_conditioning<double>(c, 2, rng);

  ad::Tape<double> tape;
  const VarMap<double> vars = bind_model(tape, m, {.router = true, .adapters = true});
  const ad::Var<double> loss = diffusion_loss(tape, batch, model_predictor(vars, m, cond));
  const ad::Gradients<double> grads = tape.backward(loss, {.verify_replay = true});

  // Relative error of each parameter group as a whole: max |a - n| / max |n|.
  for (ParamSet<double>* set : {&m.router, &m.adapters}) {
    double scale = 1e-300, diff = 0.0;
    for (auto& [name, value] : set->entries()) {
      const std::vector<std::size_t> coords = fvtest::sample_coords(value.size(), 3, rng);
      const auto f = [&](const TensorD& probe) {
        const TensorD keep = value;
        value = probe;
        const double out = loss_value(m, batch, cond);
        value = keep;
        return out;
      };
      const TensorD numeric = oracle::numeric_gradient(f, value, 1e-5, coords);
      const TensorD& analytic = grads[vars[name]];
      for (const std::size_t i : coords) {
        scale = std::max(scale, std::fabs(numeric[i]));
        diff = std::max(diff, std::fabs(analytic[i] - numeric[i]));
      }
    }
    EXPECT_LE(diff / scale, 1e-5);
    EXPECT_GT(scale, 1e-6);
  }
}

TEST(Stage1, LearningRateZeroKeepsParameters) {
  const synth::SynthDataset ds = synth::build_dataset(synth::two_class_spec(4), 1);
  Model<float> m = init_model<float>(DenoiserConfig{}, 1);
  const auto router = m.router.hash(), adapters = m.adapters.hash(), backbone = m.backbone.hash();
  Stage1Config cfg;
  cfg.steps = 1;
  cfg.adam.lr = 0.0;
  train_stage1(m, ds, NoiseSchedule::cosine(), cfg);
  EXPECT_EQ(m.router.hash(), router);
  EXPECT_EQ(m.adapters.hash(), adapters);
  EXPECT_EQ(m.backbone.hash(), backbone);
}

TEST(Stage1, FreezesBackboneAndLogs) {
  const synth::SynthDataset ds = synth::build_dataset(synth::two_class_spec(4), 1);
  Model<float> m = init_model<float>(DenoiserConfig{}, 1);
  const auto router = m.router.hash(), adapters = m.adapters.hash(), backbone = m.backbone.hash();
  Stage1Config cfg;
  cfg.steps = 4;
  cfg.warmup = 1;
  std::size_t calls = 0;
  const auto log = train_stage1(m, ds, NoiseSchedule::cosine(), cfg, [&](const StepRecord&) { ++calls; });
  EXPECT_EQ(calls, 4u);
  ASSERT_EQ(log.size(), 4u);
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i].step, i);
    EXPECT_EQ(log[i].class_id, i % 2);
    EXPECT_TRUE(std::isfinite(log[i].loss));
    double total = 0;
    for (const double p : log[i].pi_mean) total += p;
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
  EXPECT_EQ(m.backbone.hash(), backbone);
  EXPECT_NE(m.router.hash(), router);
  EXPECT_NE(m.adapters.hash(), adapters);
}

TEST(Stage1, Reproducible) {
  const synth::SynthDataset ds = synth::build_dataset(synth::two_class_spec(4), 1);
  Model<float> a = init_model<float>(DenoiserConfig{}, 1), b = a;
  Stage1Config cfg;
  cfg.steps = 3;
  const auto la = train_stage1(a, ds, NoiseSchedule::cosine(), cfg);
  const auto lb = train_stage1(b, ds, NoiseSchedule::cosine(), cfg);
  EXPECT_EQ(a.adapters.hash(), b.adapters.hash());
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i].loss, lb[i].loss);
}

TEST(Stage1, DivergenceRaisesWithStep) {
  const synth::SynthDataset ds = synth::build_dataset(synth::two_class_spec(2), 1);
  Model<float> m = init_model<float>(DenoiserConfig{}, 1);
  for (auto& [name, t] : m.adapters.entries()) {
    for (float& v : t.values()) v = 1e30f;
  }
  Stage1Config cfg;
  cfg.steps = 2;
  try {
    train_stage1(m, ds, NoiseSchedule::cosine(), cfg);
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 0u);
  }
}

TEST(Stage1, ErrorsAndSchedule) {
  Model<float> m = init_model<float>(DenoiserConfig{}, 1);
  EXPECT_THROW(train_stage1(m, synth::SynthDataset{}, NoiseSchedule::cosine(), {}), ParameterError);
  Stage1Config cfg;
  cfg.steps = 1000;
  cfg.warmup = 100;
  cfg.adam.lr = 1.0;
  EXPECT_NEAR(stage1_lr(cfg, 0), 0.01, 1e-3);
  EXPECT_LT(stage1_lr(cfg, 10), stage1_lr(cfg, 50));
  EXPECT_NEAR(stage1_lr(cfg, 999), 0.1, 1e-12);
  for (std::size_t s = 100; s < 999; ++s) EXPECT_GE(stage1_lr(cfg, s), stage1_lr(cfg, s + 1));
}

TEST(Smoothing, Ends) {
  const SmoothedEnds e = smoothed_ends({1, 2, 3, 4, 5, 6}, 2);
  EXPECT_DOUBLE_EQ(e.initial, 1.5);
  EXPECT_DOUBLE_EQ(e.final, 5.5);
  EXPECT_THROW(smoothed_ends({}, 2), ParameterError);
}

TEST(AdamW, MatchesHandComputedStep) {
  optim::AdamW<double> opt({.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.01});
  TensorD p(Shape{2}, std::vector<double>{1.0, -2.0});
  const TensorD g(Shape{2}, std::vector<double>{0.5, -0.25});
  opt.step({{"p", p, g}});
  // First step: m_hat = g, v_hat = g^2, so the moment step is lr * sign(g).
  EXPECT_NEAR(p[0], 1.0 - 0.1 * 0.01 * 1.0 - 0.1, 1e-7);
  EXPECT_NEAR(p[1], -2.0 + 0.1 * 0.01 * 2.0 + 0.1, 1e-7);
  EXPECT_THROW(opt.step({{"p", p, TensorD(Shape{3})}}), ShapeError);
  EXPECT_THROW(optim::AdamW<double>({.lr = -1.0}), ParameterError);
}

TEST(Sampler, DeterministicAndGuidanceIdentity) {
  const DenoiserConfig c;
  Rng rng(8);
  Model<float> m = init_model<float>(c, 4);
  randomize_trainable(m, rng);
  const NoiseSchedule s = NoiseSchedule::cosine();
  const auto cond = random_conditioning<float>(c, 2, rng);
  SampleConfig cfg;
  cfg.steps = 6;
  cfg.seed = 21;
  const SampleResult<float> a = sample(m, cond, s, cfg), b = sample(m, cond, s, cfg);
  EXPECT_TRUE(bit_equal(a.video, b.video));
  ASSERT_EQ(a.trajectory.size(), 6u);
  for (const auto& step : a.trajectory) {
    EXPECT_EQ(step.descriptor.shape(), (Shape{2, 6}));
    EXPECT_TRUE(bit_equal(step.pi_cond, step.pi_uncond));
  }
  cfg.cfg_scale = 1.0;
  const SampleResult<float> unit = sample(m, cond, s, cfg);
  cfg.guidance = false;
  const SampleResult<float> plain = sample(m, cond, s, cfg);
  EXPECT_TRUE(bit_equal(unit.video, plain.video));
  EXPECT_TRUE(plain.trajectory[0].pi_uncond.empty());
  cfg.cfg_scale = -0.5;
  EXPECT_THROW(sample(m, cond, s, cfg), ParameterError);
  cfg.cfg_scale = 7.5;
  cfg.steps = 0;
  EXPECT_THROW(sample(m, cond, s, cfg), ParameterError);
}

TEST(Sampler, GuidanceChangesOutput) {
  const DenoiserConfig c;
  Rng rng(9);
  const Model<float> m = init_model<float>(c, 4);
  const auto cond = random_conditioning<float>(c, 1, rng);
  SampleConfig cfg;
  cfg.steps = 3;
  const SampleResult<float> guided = sample(m, cond, NoiseSchedule::cosine(), cfg);
  cfg.guidance = false;
  EXPECT_FALSE(bit_equal(guided.video, sample(m, cond, NoiseSchedule::cosine(), cfg).video));
}

TEST(Sampler, DdimRecoversCleanLatent) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  Rng rng(10);
  const TensorD z0 = random_tensor(Shape{1, 2, 1, 4, 4}, rng), eps = random_tensor(z0.shape(), rng);
  const TensorD x0 = ddim_update(forward_noise(z0, 600, eps, s), eps, 600, std::nullopt, s);
  const TensorD z300 = ddim_update(forward_noise(z0, 600, eps, s), eps, 600, std::size_t{300}, s);
  const TensorD want = forward_noise(z0, 300, eps, s);
  for (std::size_t i = 0; i < z0.size(); ++i) {
    EXPECT_NEAR(x0[i], z0[i], 1e-12);
    EXPECT_NEAR(z300[i], want[i], 1e-12);
  }
  EXPECT_THROW(ddim_update(z0, eps, 999, std::nullopt, NoiseSchedule({1.0, 0.0})), ParameterError);
  EXPECT_THROW(ddim_update(z0, eps, 1, std::nullopt, NoiseSchedule({1.0, 0.0})), NumericGuardError);
}

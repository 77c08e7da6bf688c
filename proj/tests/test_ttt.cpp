// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "freqvfx/ttt.hpp"
#include "test_util.hpp"

using namespace freqvfx;
using namespace freqvfx::ttt;
using diffusion::Conditioning;
using diffusion::DenoiserConfig;
using diffusion::Model;
using diffusion::NoiseSchedule;
using fvtest::random_tensor;

namespace {

constexpr double kS1 = 0.46875, kS2 = 0.9375, kEps = 1e-8;

template <typename T>
Conditioning<T> random_conditioning(const DenoiserConfig& c, std::size_t batch, Rng& rng) {
  return {random_tensor<T>(Shape{batch, c.channels, c.height, c.width}, rng),
          random_tensor<T>(Shape{batch, c.text_tokens, c.model_dim}, rng)};
}

template <typename T>
AdaptProblem<T> random_problem(const DenoiserConfig& c, Rng& rng) {
  Conditioning<T> cond = random_conditioning<T>(c, 1, rng);
  const Tensor<T> source = static_source(cond.image, c.frames);
  return {random_tensor<T>(c.latent_shape(1), rng), source, std::move(cond), std::nullopt};
}

/// Static clip (every frame equal) and a clip whose frames alternate sign.
TensorD static_clip(Rng& rng) {
  const TensorD frame = random_tensor(Shape{1, 1, 2, 6, 6}, rng);
  TensorD out(Shape{1, 5, 2, 6, 6});
  for (std::size_t t = 0; t < 5; ++t) std::copy_n(frame.data(), frame.size(), out.data() + t * frame.size());
  return out;
}

TensorD flicker_clip(Rng& rng) {
  TensorD out = random_tensor(Shape{1, 5, 2, 6, 6}, rng);
  const std::size_t frame = 72;
  for (std::size_t t = 1; t < 5; t += 2)
    for (std::size_t i = 0; i < frame; ++i) out[t * frame + i] = -out[(t - 1) * frame + i] * 3.0;
  return out;
}

}  // namespace

TEST(FreqLoss, IdentityAndSymmetry) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const TensorD a = random_tensor(Shape{2, 4, 2, 5, 5}, rng), b = random_tensor(a.shape(), rng, 2.0);
    EXPECT_EQ(freq_constraint_loss(a, a), 0.0);
    EXPECT_EQ(freq_constraint_loss(a, b), freq_constraint_loss(b, a));
    const double l = freq_constraint_loss(a, b);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 4.0);
  }
  EXPECT_THROW(freq_constraint_loss(TensorD(Shape{1, 2, 1, 3, 3}), TensorD(Shape{1, 3, 1, 3, 3})), ShapeError);
}

TEST(FreqLoss, AppearanceHalfIsScaleInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const TensorD z = random_tensor(Shape{1, 8, 4, 8, 8}, rng);
    const TensorD base = spectral::joint_descriptor(z);
    for (const double s : {0.1, 0.5, 2.0, 10.0}) {
      TensorD scaled = z;
      for (double& v : scaled.values()) v *= s;
      const TensorD d = spectral::joint_descriptor(scaled);
      double app = 0.0;
      for (std::size_t k = 0; k < 3; ++k) app += std::abs(d[k] - base[k]);
      EXPECT_LE(app, 1e-4) << "s = " << s;
    }
  }
}

// log(1 + x) in the motion proxy is not homogeneous, so the full loss drifts
// under rescaling of unit-variance latents.
TEST(FreqLoss, MotionHalfDriftsUnderScaling) {
  Rng rng(2);
  const TensorD z = random_tensor(Shape{1, 8, 4, 8, 8}, rng);
  TensorD scaled = z;
  for (double& v : scaled.values()) v *= 10.0;
  EXPECT_GT(freq_constraint_loss(scaled, z), 1e-2);
}

TEST(FreqLoss, StaticVersusMotionMatchesOracle) {
  Rng rng(3);
  const TensorD gen = static_clip(rng), ref = flicker_clip(rng);
  const double got = freq_constraint_loss(gen, ref);
  EXPECT_NEAR(got, static_cast<double>(oracle::freq_loss(gen, ref, kS1, kS2, kEps)), 1e-6);
  EXPECT_GT(got, 0.5);
}

TEST(FreqLoss, TapeValueAndGradient) {
  Rng rng(4);
  const TensorD gen = random_tensor(Shape{2, 3, 2, 5, 5}, rng), ref = random_tensor(gen.shape(), rng);
  ad::Tape<double> tape;
  EXPECT_NEAR(freq_constraint_loss(tape.constant(gen), ref).value().item(), freq_constraint_loss(gen, ref), 1e-12);
  const auto f = [&](ad::Tape<double>&, ad::Var<double> x) { return freq_constraint_loss(x, ref); };
  EXPECT_LE(fvtest::gradient_error(f, gen, 1e-5), 1e-5);
}

TEST(ReferenceLatents, EndpointAndSharedNoise) {
  Rng rng(5);
  const NoiseSchedule clean({1.0, 0.6});
  const TensorD ref = random_tensor(Shape{1, 4, 2, 4, 4}, rng), eps = random_tensor(ref.shape(), rng);
  EXPECT_TRUE(bit_equal(reference_latents(ref, 0, eps, clean), ref));

  // With shared eps the noise part of the appearance proxy is the same in both branches.
  const TensorD gen = random_tensor(ref.shape(), rng);
  const double a = clean.alpha(1);
  const auto noise_part = [&](const TensorD& x) {
    TensorD scaled = x;
    for (double& v : scaled.values()) v *= a;
    const TensorD full = spectral::appearance_proxy(reference_latents(x, 1, eps, clean)).values;
    const TensorD base = spectral::appearance_proxy(scaled).values;
    TensorD out(full.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = full[i] - base[i];
    return out;
  };
  const TensorD pg = noise_part(gen), pr = noise_part(ref);
  for (std::size_t i = 0; i < pg.size(); ++i) EXPECT_NEAR(pg[i], pr[i], 1e-12);
}

TEST(ReferenceLatents, HeavyNoiseApproachesPureNoise) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  const TensorF ref = synth::gen_highfreq_particles(3, {});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed, 77);
    const TensorF eps = random_tensor<float>(ref.shape(), rng);
    EXPECT_LE(freq_constraint_loss(reference_latents(ref, 999, eps, s), eps), 0.05) << "seed " << seed;
  }
}

TEST(GenLatents, PerfectPredictorReproducesForwardNoise) {
  const NoiseSchedule s = NoiseSchedule::cosine();
  Rng rng(6);
  const TensorD z0 = random_tensor(Shape{1, 4, 2, 4, 4}, rng), eps = random_tensor(z0.shape(), rng);
  ad::Tape<double> tape;
  const diffusion::Predictor<double> perfect = [&](ad::Tape<double>& t, ad::Var<double>,
                                                   const std::vector<std::size_t>&) { return t.constant(eps); };
  const GenLatents<double> gen = gen_latents_for_adapt(tape, z0, 400, eps, s, perfect);
  const TensorD want = diffusion::forward_noise(z0, 400, eps, s);
  for (std::size_t i = 0; i < z0.size(); ++i) {
    EXPECT_NEAR(gen.x0.value()[i], z0[i], 1e-12);
    EXPECT_NEAR(gen.z_t.value()[i], want[i], 1e-12);
  }
  EXPECT_THROW(gen_latents_for_adapt(tape, z0, 1, eps, NoiseSchedule({1.0, 1e-5}), perfect), NumericGuardError);
}

TEST(GenLatents, EmbeddingGradientMatchesFiniteDifferences) {
  const DenoiserConfig c;
  Rng rng(7);
  const Model<double> m = diffusion::init_model<double>(c, 3);
  const AdaptProblem<double> p = random_problem<double>(c, rng);
  const NoiseSchedule s = NoiseSchedule::cosine();
  const TensorD eps = random_tensor(p.source.shape(), rng);
  const TensorD ref_t = reference_latents(p.reference, 500, eps, s);
  const TensorD emb = random_tensor(Shape{4, c.model_dim}, rng);
  const auto f = [&](ad::Tape<double>& tape, ad::Var<double> e) {
    const VarMap<double> vars = diffusion::bind_model(tape, m, {});
    const GenLatents<double> gen =
        gen_latents_for_adapt(tape, p.source, 500, eps, s, embedding_predictor(vars, m, p.cond, e));
    return freq_constraint_loss(gen.z_t, ref_t);
  };
  EXPECT_LE(fvtest::gradient_error(f, emb, 1e-5, fvtest::sample_coords(emb.size(), 40, rng)), 1e-5);
}

TEST(GenLatents, BlockedEmbeddingGetsZeroGradient) {
  const DenoiserConfig c;
  Rng rng(8);
  Model<float> m = diffusion::init_model<float>(c, 3);
  m.backbone.get("cross.o.w") = TensorF(m.backbone.get("cross.o.w").shape());
  for (auto& [name, t] : m.adapters.entries()) t = random_tensor<float>(t.shape(), rng, 0.1);
  const AdaptProblem<float> p = random_problem<float>(c, rng);
  const NoiseSchedule s = NoiseSchedule::cosine();
  const TensorF eps = random_tensor<float>(p.source.shape(), rng);
  ad::Tape<float> tape;
  const VarMap<float> vars = diffusion::bind_model(tape, m, {});
  const ad::Var<float> emb = tape.parameter(random_tensor<float>(Shape{4, c.model_dim}, rng));
  const GenLatents<float> gen = gen_latents_for_adapt(tape, p.source, 500, eps, s, embedding_predictor(vars, m, p.cond, emb));
  const ad::Var<float> loss = freq_constraint_loss(gen.z_t, reference_latents(p.reference, 500, eps, s));
  EXPECT_GT(loss.value().item(), 0.0f);
  const auto grads = tape.backward(loss);
  for (const float g : grads[emb].values()) EXPECT_EQ(g, 0.0f);
}

TEST(Adapt, LearningRateZeroAndIsolation) {
  const DenoiserConfig c;
  Rng rng(9);
  const Model<float> m = diffusion::init_model<float>(c, 5);
  const auto hashes = std::make_tuple(m.backbone.hash(), m.router.hash(), m.adapters.hash());
  const AdaptProblem<float> p = random_problem<float>(c, rng);
  AdaptConfig cfg;
  cfg.steps = 3;
  cfg.lr = 0.0;
  const TensorF emb = init_embedding<float>(cfg, c.model_dim);
  const AdaptResult<float> r = adapt(m, p, emb, NoiseSchedule::cosine(), cfg);
  EXPECT_TRUE(bit_equal(r.embedding, emb));
  ASSERT_EQ(r.trace.size(), 3u);
  for (const AdaptRecord& rec : r.trace) {
    EXPECT_GE(rec.t, 250u);
    EXPECT_LT(rec.t, 750u);
  }
  EXPECT_EQ(hashes, std::make_tuple(m.backbone.hash(), m.router.hash(), m.adapters.hash()));

  cfg.timesteps = {400};
  AdaptProblem<float> fixed = p;
  fixed.noise = random_tensor<float>(p.source.shape(), rng);
  const AdaptResult<float> flat = adapt(m, fixed, emb, NoiseSchedule::cosine(), cfg);
  for (const AdaptRecord& rec : flat.trace) EXPECT_EQ(rec.loss, flat.trace[0].loss);
}

TEST(Adapt, ChangesOnlyTheEmbedding) {
  const DenoiserConfig c;
  Rng rng(10);
  const Model<float> m = diffusion::init_model<float>(c, 5);
  const AdaptProblem<float> p = random_problem<float>(c, rng);
  AdaptConfig cfg;
  cfg.steps = 2;
  const TensorF emb = init_embedding<float>(cfg, c.model_dim);
  const Model<float> before = m;
  const AdaptResult<float> r = adapt(m, p, emb, NoiseSchedule::cosine(), cfg);
  EXPECT_FALSE(bit_equal(r.embedding, emb));
  EXPECT_EQ(before.backbone.hash(), m.backbone.hash());
  EXPECT_EQ(before.router.hash(), m.router.hash());
  EXPECT_EQ(before.adapters.hash(), m.adapters.hash());
  const AdaptResult<float> again = adapt(m, p, emb, NoiseSchedule::cosine(), cfg);
  EXPECT_TRUE(bit_equal(r.embedding, again.embedding));
}

TEST(Adapt, SelfReferenceFixpoint) {
  const DenoiserConfig c;
  Rng rng(11);
  const Model<float> m = diffusion::init_model<float>(c, 5);
  AdaptProblem<float> p = random_problem<float>(c, rng);
  const NoiseSchedule s = NoiseSchedule::cosine();
  AdaptConfig cfg;
  cfg.steps = 5;
  cfg.timesteps = {500};
  const TensorF emb = init_embedding<float>(cfg, c.model_dim);
  p.noise = random_tensor<float>(p.source.shape(), rng);
  ad::Tape<float> tape;
  const VarMap<float> vars = diffusion::bind_model(tape, m, {});
  const GenLatents<float> gen = gen_latents_for_adapt(
      tape, p.source, 500, *p.noise, s, embedding_predictor(vars, m, p.cond, tape.constant(emb)));
  p.reference = gen.x0.value();

  const AdaptResult<float> r = adapt(m, p, emb, s, cfg);
  for (const AdaptRecord& rec : r.trace) EXPECT_LE(rec.loss, 1e-3);
  EXPECT_TRUE(bit_equal(r.embedding, emb));
}

TEST(Adapt, Errors) {
  const DenoiserConfig c;
  Rng rng(12);
  const Model<float> m = diffusion::init_model<float>(c, 5);
  const AdaptProblem<float> p = random_problem<float>(c, rng);
  const NoiseSchedule s = NoiseSchedule::cosine();
  AdaptConfig cfg;
  cfg.steps = 2;
  TensorF huge(Shape{4, c.model_dim}, 1e30f);
  try {
    adapt(m, p, huge, s, cfg);
    FAIL() << "expected an adaptation error";
  } catch (const AdaptationError& e) {
    EXPECT_EQ(e.step(), 0u);
  }
  cfg.timesteps = {1000};
  EXPECT_THROW(adapt(m, p, init_embedding<float>(cfg, c.model_dim), s, cfg), ParameterError);
  cfg.timesteps = {};
  cfg.steps = 0;
  EXPECT_THROW(adapt(m, p, init_embedding<float>(cfg, c.model_dim), s, cfg), ParameterError);
  EXPECT_EQ(adapt_timesteps({}, s).size(), 500u);
}

TEST(Adapt, IndependentNoiseAndDenoisingTerm) {
  const DenoiserConfig c;
  Rng rng(13);
  const Model<float> m = diffusion::init_model<float>(c, 5);
  const AdaptProblem<float> p = random_problem<float>(c, rng);
  AdaptConfig cfg;
  cfg.steps = 1;
  cfg.timesteps = {300};
  const TensorF emb = init_embedding<float>(cfg, c.model_dim);
  const double shared = adapt(m, p, emb, NoiseSchedule::cosine(), cfg).trace[0].loss;
  cfg.diffusion_weight = 1.0;
  EXPECT_GT(adapt(m, p, emb, NoiseSchedule::cosine(), cfg).trace[0].loss, shared);
  cfg.diffusion_weight = 0.0;
  cfg.shared_noise = false;
  EXPECT_NE(adapt(m, p, emb, NoiseSchedule::cosine(), cfg).trace[0].loss, shared);
}

TEST(InitEmbedding, BiasTiling) {
  AdaptConfig cfg;
  cfg.tokens = 5;
  cfg.init_std = 0.0;
  TensorD bias(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const TensorD e = init_embedding<double>(cfg, 3, &bias);
  EXPECT_EQ(e.shape(), (Shape{5, 3}));
  EXPECT_EQ(e[0], 1.0);
  EXPECT_EQ(e[5], 6.0);
  EXPECT_EQ(e[6], 1.0);
  cfg.tokens = 0;
  EXPECT_THROW(init_embedding<double>(cfg, 3), ParameterError);
}

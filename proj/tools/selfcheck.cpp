// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>
#include <sstream>

#include "cli.hpp"
#include "freqvfx/artifacts.hpp"
#include "freqvfx/freqmoe.hpp"
#include "freqvfx/report.hpp"
#include "freqvfx/rng.hpp"
#include "freqvfx/spectral.hpp"

namespace freqvfx::cli {

namespace {

using diffusion::DenoiserConfig;
using diffusion::Model;
using diffusion::NoiseSchedule;

template <typename T>
Tensor<T> normal_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(shape);
  for (T& v : t.values()) v = static_cast<T>(scale * rng.normal());
  return t;
}

/// Throws with a message when `cond` is false.
void expect(bool cond, const std::string& what) {
  if (!cond) throw InternalError(what);
}

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void check_telescoping(Rng& rng) {
  for (int trial = 0; trial < 20; ++trial) {
    const TensorF x = normal_tensor<float>(Shape{2, 3, 9, 7}, rng);
    const double s1 = 0.2 + rng.uniform(), s2 = s1 + 0.1 + rng.uniform();
    const auto c = spectral::decompose(x, s1, s2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double err = std::abs(static_cast<double>(c.coarse[i]) + c.band[i] + c.detail[i] - x[i]);
      expect(err <= 1e-6, "reconstruction error " + num(err));
    }
  }
}

void check_descriptor(Rng& rng) {
  for (int trial = 0; trial < 20; ++trial) {
    const TensorD z = normal_tensor<double>(Shape{2, 4, 3, 8, 8}, rng, 0.1 + 3.0 * rng.uniform());
    const TensorD d = spectral::joint_descriptor(z);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t half = 0; half < 2; ++half) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
          const double v = d[b * 6 + half * 3 + k];
          expect(v >= 0.0, "negative descriptor entry");
          sum += v;
        }
        expect(sum <= 1.0 + 1e-12 && sum >= 1.0 - 1e-6, "descriptor half sums to " + num(sum));
      }
    }
  }
}

void check_routing(Rng& rng) {
  for (const std::size_t m : {1, 2, 4, 8}) {
    moe::MoeConfig c;
    c.experts = m;
    c.top_k = std::min<std::size_t>(3, m);
    const auto adapter = moe::make_adapter<float>(64, 64, c, rng);
    expect(moe::adapter_param_count(adapter) == c.total_rank * 128,
           "adapter with " + std::to_string(m) + " experts has the wrong parameter count");
    auto router = moe::make_router<double>(c, rng);
    router.w2 = normal_tensor<double>(router.w2.shape(), rng);
    const TensorD desc = normal_tensor<double>(Shape{16, 6}, rng).cast<double>();
    const TensorD pi = moe::route(desc, router, c.top_k);
    const TensorD logits = moe::router_logits(desc, router);
    for (std::size_t r = 0; r < 16; ++r) {
      double sum = 0.0;
      std::size_t nonzero = 0, best = 0, best_logit = 0;
      for (std::size_t j = 0; j < m; ++j) {
        const double w = pi[r * m + j];
        expect(w >= 0.0, "negative routing weight");
        sum += w;
        nonzero += w > 0.0 ? 1 : 0;
        if (w > pi[r * m + best]) best = j;
        if (logits[r * m + j] > logits[r * m + best_logit]) best_logit = j;
      }
      expect(std::abs(sum - 1.0) <= 1e-6, "routing weights sum to " + num(sum));
      expect(nonzero <= c.top_k, "more than top_k experts active");
      expect(best == best_logit, "largest weight is not at the largest logit");
    }
  }
}

void check_container(Rng& rng) {
  const io::Bytes golden = io::write_container({{"example.grid", TensorF(Shape{2, 2}, std::vector<float>{1, 2, 3, 4})}});
  expect(golden == golden_container(), "golden container bytes differ");
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<io::Entry> entries;
    const std::size_t n = rng.below(5);
    for (std::size_t i = 0; i < n; ++i) {
      Shape shape(rng.below(4));
      for (std::size_t& d : shape) d = 1 + rng.below(4);
      if (rng.below(2) == 0) {
        entries.push_back({"t" + std::to_string(i), normal_tensor<float>(shape, rng)});
      } else {
        entries.push_back({"t" + std::to_string(i), normal_tensor<double>(shape, rng)});
      }
    }
    const io::Bytes bytes = io::write_container(entries);
    const auto back = io::read_container(bytes);
    expect(back.size() == entries.size(), "round trip lost entries");
    for (std::size_t i = 0; i < n; ++i) expect(io::bit_equal(back[i], entries[i]), "round trip changed an entry");
    io::Bytes bad = bytes;
    bad[rng.below(bad.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    bool caught = false;
    try {
      io::read_container(bad);
    } catch (const DecodeError&) {
      caught = true;
    }
    expect(caught, "single-byte corruption went unnoticed");
  }
}

void check_report(Rng& rng) {
  std::vector<io::SpectralRow> rows(5);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].t = 1000 - 200 * i;
    for (double& e : rows[i].e) e = rng.uniform();
  }
  const auto back = io::parse_spectral_report(io::emit_spectral_report(rows));
  expect(back.size() == rows.size(), "report row count changed");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    expect(back[i].t == rows[i].t, "report timestep changed");
    for (std::size_t k = 0; k < 6; ++k) expect(std::abs(back[i].e[k] - rows[i].e[k]) <= 1e-5, "report value drifted");
  }
}

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.frames = 3;
  c.channels = 2;
  c.height = 4;
  c.width = 4;
  c.model_dim = 16;
  c.moe.total_rank = 8;
  return c;
}

template <typename T>
Model<T> perturbed_model(const DenoiserConfig& c, Rng& rng) {
  Model<T> m = diffusion::init_model<T>(c, rng.next_u64());
  for (auto* set : {&m.router, &m.adapters}) {
    for (auto& [name, t] : set->entries()) t = normal_tensor<T>(t.shape(), rng, 0.1);
  }
  return m;
}

void check_embedding_gradient(Rng& rng) {
  const DenoiserConfig c = small_config();
  const Model<double> m = perturbed_model<double>(c, rng);
  const NoiseSchedule s = NoiseSchedule::cosine();
  const diffusion::Conditioning<double> cond{normal_tensor<double>(Shape{1, c.channels, c.height, c.width}, rng),
                                             normal_tensor<double>(Shape{1, c.text_tokens, c.model_dim}, rng)};
  const TensorD source = ttt::static_source(cond.image, c.frames);
  const TensorD eps = normal_tensor<double>(source.shape(), rng);
  const TensorD ref = ttt::reference_latents(normal_tensor<double>(source.shape(), rng), 400, eps, s);
  const auto loss = [&](ad::Tape<double>& tape, ad::Var<double> e) {
    const VarMap<double> vars = diffusion::bind_model(tape, m, {});
    const auto gen = ttt::gen_latents_for_adapt(tape, source, 400, eps, s, ttt::embedding_predictor(vars, m, cond, e));
    return ttt::freq_constraint_loss(gen.z_t, ref);
  };
  const TensorD emb = normal_tensor<double>(Shape{2, c.model_dim}, rng);
  ad::Tape<double> tape;
  const ad::Var<double> p = tape.parameter(emb);
  const TensorD analytic = tape.backward(loss(tape, p))[p];
  double worst = 0.0, scale = 0.0;
  for (int k = 0; k < 8; ++k) {
    const std::size_t i = rng.below(emb.size());
    const double h = 1e-5;
    TensorD plus = emb, minus = emb;
    plus[i] += h;
    minus[i] -= h;
    ad::Tape<double> tp, tm;
    const double numeric =
        (loss(tp, tp.constant(plus)).value().item() - loss(tm, tm.constant(minus)).value().item()) / (2 * h);
    worst = std::max(worst, std::abs(numeric - analytic[i]));
    scale = std::max(scale, std::abs(numeric));
  }
  expect(scale > 0.0, "embedding gradient vanished");
  expect(worst <= 1e-5 * scale, "embedding gradient relative error " + num(worst / scale));
}

void check_sampling(Rng& rng) {
  const DenoiserConfig c = small_config();
  const Model<float> m = perturbed_model<float>(c, rng);
  const NoiseSchedule s = NoiseSchedule::cosine();
  const diffusion::Conditioning<float> cond{normal_tensor<float>(Shape{2, c.channels, c.height, c.width}, rng),
                                            normal_tensor<float>(Shape{2, c.text_tokens, c.model_dim}, rng)};
  diffusion::SampleConfig cfg{.steps = 4, .cfg_scale = 7.5, .guidance = true, .seed = rng.next_u64()};
  const auto a = diffusion::sample(m, cond, s, cfg), b = diffusion::sample(m, cond, s, cfg);
  expect(bit_equal(a.video, b.video), "sampling is not deterministic");
  for (const auto& step : a.trajectory) expect(bit_equal(step.pi_cond, step.pi_uncond), "branches routed differently");
  cfg.cfg_scale = 1.0;
  const auto guided = diffusion::sample(m, cond, s, cfg);
  cfg.guidance = false;
  const auto plain = diffusion::sample(m, cond, s, cfg);
  expect(bit_equal(guided.video, plain.video), "cfg scale 1 differs from conditional sampling");
}

void check_freeze(Rng& rng) {
  const DenoiserConfig c = small_config();
  const Model<float> m = perturbed_model<float>(c, rng);
  const auto hashes = [](const Model<float>& x) {
    return std::vector<std::uint64_t>{x.backbone.hash(), x.router.hash(), x.adapters.hash()};
  };
  const auto before = hashes(m);
  diffusion::Conditioning<float> cond{normal_tensor<float>(Shape{1, c.channels, c.height, c.width}, rng),
                                      normal_tensor<float>(Shape{1, c.text_tokens, c.model_dim}, rng)};
  const TensorF source = ttt::static_source(cond.image, c.frames);
  const ttt::AdaptProblem<float> problem{normal_tensor<float>(source.shape(), rng), source, cond, std::nullopt};
  ttt::AdaptConfig cfg;
  cfg.steps = 3;
  cfg.tokens = 2;
  const TensorF emb = ttt::init_embedding<float>(cfg, c.model_dim);
  const auto r = ttt::adapt(m, problem, emb, NoiseSchedule::cosine(), cfg);
  expect(hashes(m) == before, "adaptation touched model parameters");
  expect(!bit_equal(r.embedding, emb), "adaptation left the embedding unchanged");
}

}  // namespace

const std::vector<std::uint8_t>& golden_container() {
  static const std::vector<std::uint8_t> bytes = {
      0x46, 0x56, 0x4C, 0x31, 0x01, 0x00, 0x01, 0x00, 0x0C, 0x00, 0x65, 0x78, 0x61,
      0x6D, 0x70, 0x6C, 0x65, 0x2E, 0x67, 0x72, 0x69, 0x64, 0x01, 0x02, 0x02, 0x00,
      0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00,
      0x40, 0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x80, 0x40, 0xD6, 0x7D, 0x97, 0xC3};
  return bytes;
}

std::vector<Check> selfcheck(std::uint64_t seed) {
  const std::vector<std::pair<std::string, std::function<void(Rng&)>>> suite = {
      {"telescoping decomposition", check_telescoping},
      {"descriptor normalization", check_descriptor},
      {"routing contracts", check_routing},
      {"container round trip", check_container},
      {"spectral report round trip", check_report},
      {"embedding gradient", check_embedding_gradient},
      {"sampling contracts", check_sampling},
      {"adaptation freeze", check_freeze},
  };
  std::vector<Check> out;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    Rng rng(seed, i);
    Check c{suite[i].first, true, ""};
    try {
      suite[i].second(rng);
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = e.what();
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace freqvfx::cli

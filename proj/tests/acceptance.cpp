// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one pass/fail line per criterion, plus a JSON manifest of
// thresholds and measured values.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>

#include "cli.hpp"
#include "freqvfx/artifacts.hpp"
#include "freqvfx/oracle/oracle.hpp"
#include "test_util.hpp"

using namespace freqvfx;
using diffusion::Conditioning;
using diffusion::DenoiserConfig;
using diffusion::Model;
using diffusion::NoiseSchedule;
using fvtest::random_tensor;
using io::Json;

namespace {

constexpr double kS1 = 0.46875, kS2 = 0.9375, kEps = 1e-8;

struct Outcome {
  bool pass = false;
  std::string detail;
  Json measured = Json::object();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Shared state for criteria 6, 7 and 9.
struct Desk {
  synth::SynthDataset data = synth::build_dataset(synth::two_class_spec(64), 7);
  NoiseSchedule schedule = NoiseSchedule::cosine();
  std::optional<Model<float>> trained;
  std::vector<diffusion::StepRecord> records;

  const Model<float>& stage1() {
    if (!trained) {
      trained = diffusion::init_model<float>(DenoiserConfig{}, 1);
      diffusion::Stage1Config cfg;
      cfg.seed = 3;
      records = diffusion::train_stage1(*trained, data, schedule, cfg);
    }
    return *trained;
  }
};

// 1. f32 spectral pipeline against the double-precision scalar oracles.
Outcome oracle_equivalence() {
  Rng rng(101);
  double proxy = 0, decomp = 0, energy = 0, norm = 0, joint = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const TensorF z = random_tensor<float>(Shape{2, 6, 3, 8, 8}, rng);
    const TensorD zd = z.cast<double>();
    const auto app = spectral::appearance_proxy(z), vfx = spectral::vfx_proxy(z);
    proxy = std::max({proxy, max_abs_diff(app.values.cast<double>(), oracle::appearance_proxy(zd)),
                      max_abs_diff(vfx.values.cast<double>(), oracle::vfx_proxy(zd))});
    for (const auto* p : {&app, &vfx}) {
      const auto c = spectral::decompose(p->values, kS1, kS2);
      const oracle::Bands ref = oracle::decompose(p->values.cast<double>(), kS1, kS2);
      decomp = std::max({decomp, max_abs_diff(c.coarse.cast<double>(), ref.coarse),
                         max_abs_diff(c.band.cast<double>(), ref.band), max_abs_diff(c.detail.cast<double>(), ref.detail)});
      const TensorD e = spectral::band_energies(c).cast<double>(), e_ref = oracle::band_energies(ref);
      for (std::size_t i = 0; i < e.size(); ++i) {
        energy = std::max(energy, std::abs(e[i] - e_ref[i]) / std::max(1.0, std::abs(e_ref[i])));
      }
      const TensorF ef = spectral::band_energies(c);
      norm = std::max(norm, max_abs_diff(spectral::normalize_energies(ef, kEps).cast<double>(),
                                         oracle::normalize_energies(ef.cast<double>(), kEps)));
    }
    joint = std::max(joint, max_abs_diff(spectral::joint_descriptor(z).cast<double>(),
                                         oracle::joint_descriptor(zd, kS1, kS2, kEps)));
  }
  Outcome o;
  o.measured = {{"proxy", proxy}, {"decompose", decomp}, {"energy_rel", energy}, {"normalize", norm}, {"joint", joint}};
  o.pass = std::max({proxy, decomp, energy, norm, joint}) <= 1e-6;
  o.detail = "max err proxy " + fmt("%.2e", proxy) + ", bands " + fmt("%.2e", decomp) + ", energy (rel) " +
             fmt("%.2e", energy) + ", normalize " + fmt("%.2e", norm) + ", joint " + fmt("%.2e", joint);
  return o;
}

// 2. coarse + band + detail == input.
Outcome telescoping() {
  Rng rng(102);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    double s1 = kS1, s2 = kS2;
    if (trial > 0) {
      s1 = rng.uniform(0.1, 2.0);
      s2 = s1 + rng.uniform(0.05, 2.0);
    }
    const TensorF x = random_tensor<float>(Shape{2, 3, 8, 8}, rng);
    const auto c = spectral::decompose(x, s1, s2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(c.coarse[i]) + c.band[i] + c.detail[i] - x[i]));
    }
  }
  return {worst <= 1e-6, "max reconstruction error " + fmt("%.2e", worst), {{"max_error", worst}}};
}

/// Max relative error of a parameter group, max |a - n| / max |n| over sampled coordinates.
struct GroupError {
  double diff = 0.0;
  double scale = 0.0;
  double rel() const { return diff / std::max(scale, 1e-300); }
};

// 3. Analytic gradients against central differences in double precision.
Outcome gradients() {
  const DenoiserConfig c;
  Rng rng(103);
  Model<double> m = diffusion::init_model<double>(c, 2);
  for (auto* set : {&m.router, &m.adapters}) {
    for (auto& [name, t] : set->entries()) t = random_tensor<double>(t.shape(), rng, 0.1);
  }
  const NoiseSchedule s = NoiseSchedule::cosine();
  const Conditioning<double> cond{random_tensor<double>(Shape{2, c.channels, c.height, c.width}, rng),
                                  random_tensor<double>(Shape{2, c.text_tokens, c.model_dim}, rng)};
  const auto batch = diffusion::sample_noisy_batch(random_tensor<double>(c.latent_shape(2), rng), s, rng);
  const auto stage1_loss = [&] {
    ad::Tape<double> tape;
    const VarMap<double> vars = diffusion::bind_model(tape, m, {});
    return diffusion::diffusion_loss(tape, batch, diffusion::model_predictor(vars, m, cond)).value().item();
  };
  ad::Tape<double> tape;
  const VarMap<double> vars = diffusion::bind_model(tape, m, {.router = true, .adapters = true});
  const auto grads = tape.backward(diffusion::diffusion_loss(tape, batch, diffusion::model_predictor(vars, m, cond)),
                                   {.verify_replay = true});
  GroupError router, adapters;
  for (auto [set, err] : {std::pair{&m.router, &router}, std::pair{&m.adapters, &adapters}}) {
    for (auto& [name, value] : set->entries()) {
      const auto coords = fvtest::sample_coords(value.size(), 3, rng);
      const auto f = [&](const TensorD& probe) {
        const TensorD keep = value;
        value = probe;
        const double out = stage1_loss();
        value = keep;
        return out;
      };
      const TensorD numeric = oracle::numeric_gradient(f, value, 1e-5, coords);
      for (const std::size_t i : coords) {
        err->scale = std::max(err->scale, std::abs(numeric[i]));
        err->diff = std::max(err->diff, std::abs(grads[vars[name]][i] - numeric[i]));
      }
    }
  }

  // Frequency loss, alone and with the denoising term, w.r.t. the embedding.
  const Conditioning<double> one{random_tensor<double>(Shape{1, c.channels, c.height, c.width}, rng),
                                 random_tensor<double>(Shape{1, c.text_tokens, c.model_dim}, rng)};
  const TensorD source = ttt::static_source(one.image, c.frames);
  const TensorD eps = random_tensor<double>(source.shape(), rng);
  const TensorD ref = ttt::reference_latents(random_tensor<double>(source.shape(), rng), 500, eps, s);
  const TensorD emb = random_tensor<double>(Shape{16, c.model_dim}, rng, 0.5);
  const auto coords = fvtest::sample_coords(emb.size(), 40, rng);
  std::vector<double> ttt_rel;
  for (const double weight : {0.0, 1.0}) {
    const fvtest::GraphFn f = [&](ad::Tape<double>& t, ad::Var<double> e) {
      const VarMap<double> v = diffusion::bind_model(t, m, {});
      const auto gen = ttt::gen_latents_for_adapt(t, source, 500, eps, s, ttt::embedding_predictor(v, m, one, e));
      ad::Var<double> loss = ttt::freq_constraint_loss(gen.z_t, ref);
      if (weight != 0.0) {
        loss = ad::add(loss, ad::scale(ad::mean(ad::square(ad::sub(t.constant(eps), gen.eps_hat))), weight));
      }
      return loss;
    };
    ad::Tape<double> t;
    const ad::Var<double> p = t.parameter(emb);
    const TensorD analytic = t.backward(f(t, p))[p];
    const TensorD numeric = oracle::numeric_gradient(
        [&](const TensorD& probe) {
          ad::Tape<double> t2;
          return f(t2, t2.constant(probe)).value().item();
        },
        emb, 1e-5, coords);
    GroupError e;
    for (const std::size_t i : coords) {
      e.scale = std::max(e.scale, std::abs(numeric[i]));
      e.diff = std::max(e.diff, std::abs(analytic[i] - numeric[i]));
    }
    ttt_rel.push_back(e.rel());
  }
  const double worst = std::max({router.rel(), adapters.rel(), ttt_rel[0], ttt_rel[1]});
  Outcome o;
  o.pass = worst <= 1e-5 && router.scale > 1e-6 && adapters.scale > 1e-6;
  o.measured = {{"router", router.rel()}, {"experts", adapters.rel()}, {"embedding_freq", ttt_rel[0]},
                {"embedding_freq_plus_denoise", ttt_rel[1]}};
  o.detail = "rel err router " + fmt("%.2e", router.rel()) + ", experts " + fmt("%.2e", adapters.rel()) +
             ", embedding " + fmt("%.2e", ttt_rel[0]) + " / " + fmt("%.2e", ttt_rel[1]);
  return o;
}

// 4. Routing weights and the rank budget.
Outcome routing() {
  Rng rng(104);
  bool ok = true;
  double worst_sum = 0.0;
  std::size_t rows = 0;
  for (const std::size_t m : {1, 2, 4, 8}) {
    moe::MoeConfig cfg;
    cfg.experts = m;
    cfg.top_k = std::min<std::size_t>(3, m);
    const auto adapter = moe::make_adapter<float>(64, 48, cfg, rng);
    ok = ok && moe::adapter_param_count(adapter) == cfg.total_rank * (64 + 48);
    for (const std::size_t top_k : {cfg.top_k, m}) {
      auto router = moe::make_router<double>(cfg, rng);
      router.w2 = random_tensor<double>(router.w2.shape(), rng);
      router.b2 = random_tensor<double>(router.b2.shape(), rng);
      const TensorD desc = fvtest::uniform_tensor(Shape{64, 6}, rng, 0.0, 1.0);
      const TensorD pi = moe::route(desc, router, top_k);
      const TensorD logits = moe::router_logits(desc, router);
      for (const double tau : {0.05, 0.5, 3.0, 40.0}) {
        auto scaled = router;
        scaled.tau = tau;
        const TensorD pi_tau = moe::route(desc, scaled, top_k);
        for (std::size_t r = 0; r < 64; ++r) {
          std::size_t a = 0, b = 0, l = 0, nonzero = 0;
          double sum = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            ok = ok && pi[r * m + j] >= 0.0;
            sum += pi[r * m + j];
            nonzero += pi[r * m + j] > 0.0 ? 1 : 0;
            if (pi[r * m + j] > pi[r * m + a]) a = j;
            if (pi_tau[r * m + j] > pi_tau[r * m + b]) b = j;
            if (logits[r * m + j] > logits[r * m + l]) l = j;
          }
          worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
          ok = ok && nonzero <= top_k && a == l && b == l;
          ++rows;
        }
      }
    }
  }
  ok = ok && worst_sum <= 1e-6;
  return {ok, std::to_string(rows) + " routed rows, max |sum - 1| " + fmt("%.2e", worst_sum),
          {{"max_sum_error", worst_sum}, {"rows", rows}}};
}

// 5. Stage-1 touches only router and experts; Stage-2 only the embedding.
Outcome freeze() {
  const synth::SynthDataset ds = synth::build_dataset(synth::two_class_spec(4), 5);
  Model<float> m = diffusion::init_model<float>(DenoiserConfig{}, 1);
  const auto bb = m.backbone.hash(), router = m.router.hash(), adapters = m.adapters.hash();
  diffusion::Stage1Config cfg;
  cfg.steps = 20;
  cfg.warmup = 2;
  diffusion::train_stage1(m, ds, NoiseSchedule::cosine(), cfg);
  const bool stage1 = m.backbone.hash() == bb && m.router.hash() != router && m.adapters.hash() != adapters;

  const auto before = std::vector{m.backbone.hash(), m.router.hash(), m.adapters.hash()};
  const Conditioning<float> cond = diffusion::dataset_conditioning(ds.sample(0), ds.text, {ds.labels[0]});
  const ttt::AdaptProblem<float> problem{ds.sample(5), ttt::static_source(cond.image, 8), cond, std::nullopt};
  ttt::AdaptConfig ac;
  ac.steps = 10;
  const TensorF emb = ttt::init_embedding<float>(ac, 64);
  const auto r = ttt::adapt(m, problem, emb, NoiseSchedule::cosine(), ac);
  const bool stage2 = std::vector{m.backbone.hash(), m.router.hash(), m.adapters.hash()} == before &&
                      !bit_equal(r.embedding, emb);
  return {stage1 && stage2,
          std::string("stage-1 backbone ") + (stage1 ? "frozen" : "CHANGED") + ", stage-2 model " +
              (stage2 ? "frozen" : "CHANGED"),
          {{"stage1_frozen", stage1}, {"stage2_frozen", stage2}}};
}

// 6. 2000 Stage-1 steps: loss halves and routing differs by class.
Outcome stage1_run(Desk& desk) {
  const Model<float>& m = desk.stage1();
  std::vector<double> losses;
  for (const auto& r : desk.records) losses.push_back(r.loss);
  const auto ends = diffusion::smoothed_ends(losses, 50);
  std::vector<std::size_t> ts;
  for (std::size_t t = 0; t < 1000; t += 100) ts.push_back(t);
  const auto by_class = diffusion::routing_by_class(m, desk.data, desk.schedule, ts, 99);
  double l1 = 0.0;
  for (std::size_t j = 0; j < by_class[0].size(); ++j) l1 += std::abs(by_class[0][j] - by_class[1][j]);
  const double ratio = ends.final / ends.initial;
  return {ratio <= 0.5 && l1 >= 0.1,
          "smoothed loss " + fmt("%.4f", ends.initial) + " -> " + fmt("%.4f", ends.final) + " (ratio " +
              fmt("%.3f", ratio) + ", need <= 0.5), class routing L1 " + fmt("%.3f", l1) + " (need >= 0.1)",
          {{"smoothed_initial", ends.initial}, {"smoothed_final", ends.final}, {"ratio", ratio}, {"routing_l1", l1},
           {"steps", losses.size()}}};
}

// 7. 100 adaptation steps toward a high-frequency reference, and the self-reference fixpoint.
Outcome stage2_run(Desk& desk) {
  const Model<float>& m = desk.stage1();
  const auto hashes = std::vector{m.backbone.hash(), m.router.hash(), m.adapters.hash()};
  const Conditioning<float> cond = diffusion::dataset_conditioning(desk.data.sample(0), desk.data.text, {0});
  const ttt::AdaptProblem<float> problem{desk.data.sample(69), ttt::static_source(cond.image, 8), cond, std::nullopt};
  const TensorF bias = cond.text.reshaped(Shape{2, 64});
  ttt::AdaptConfig cfg;
  cfg.seed = 11;
  const TensorF init = ttt::init_embedding<float>(cfg, 64, &bias);
  const auto r = ttt::adapt(m, problem, init, desk.schedule, cfg);
  std::vector<double> losses;
  for (const auto& rec : r.trace) losses.push_back(rec.loss);
  const auto ends = diffusion::smoothed_ends(losses, 10);
  const double drop = 1.0 - ends.final / ends.initial;
  const bool frozen = std::vector{m.backbone.hash(), m.router.hash(), m.adapters.hash()} == hashes &&
                      !bit_equal(r.embedding, init);

  // Fixpoint: the reference is the generation branch's own x0 estimate under fixed t and noise.
  ttt::AdaptProblem<float> self = problem;
  Rng rng(12);
  self.noise = random_tensor<float>(problem.source.shape(), rng);
  {
    ad::Tape<float> tape;
    const VarMap<float> vars = diffusion::bind_model(tape, m, {});
    self.reference = ttt::gen_latents_for_adapt(tape, self.source, 500, *self.noise, desk.schedule,
                                                ttt::embedding_predictor(vars, m, cond, tape.constant(init)))
                         .x0.value();
  }
  ttt::AdaptConfig fixed = cfg;
  fixed.timesteps = {500};
  double fixpoint = 0.0;
  for (const auto& rec : ttt::adapt(m, self, init, desk.schedule, fixed).trace) fixpoint = std::max(fixpoint, rec.loss);

  return {drop >= 0.3 && frozen && fixpoint <= 1e-3,
          "smoothed L_f " + fmt("%.4f", ends.initial) + " -> " + fmt("%.4f", ends.final) + " (drop " +
              fmt("%.1f", 100 * drop) + "%, need >= 30%), only embedding changed: " + (frozen ? "yes" : "NO") +
              ", fixpoint max L_f " + fmt("%.2e", fixpoint),
          {{"smoothed_initial", ends.initial}, {"smoothed_final", ends.final}, {"drop", drop},
           {"frozen", frozen}, {"fixpoint_max", fixpoint}}};
}

// 8. L_f(s z, z) for s in {0.1, 0.5, 2, 10} on unit-variance latents.
Outcome scale_invariance() {
  Rng rng(108);
  double full = 0.0, app = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const TensorD z = random_tensor(DenoiserConfig{}.latent_shape(1), rng);
    const TensorD base = spectral::joint_descriptor(z);
    for (const double s : {0.1, 0.5, 2.0, 10.0}) {
      TensorD scaled = z;
      for (double& v : scaled.values()) v *= s;
      full = std::max(full, ttt::freq_constraint_loss(scaled, z));
      const TensorD d = spectral::joint_descriptor(scaled);
      double a = 0.0;
      for (std::size_t k = 0; k < 3; ++k) a += std::abs(d[k] - base[k]);
      app = std::max(app, a);
    }
  }
  return {full <= 1e-4,
          "max L_f " + fmt("%.3g", full) + " (need <= 1e-4); appearance half alone " + fmt("%.2e", app) +
              "; the log(1 + x) motion proxy is not scale-homogeneous",
          {{"max_loss", full}, {"max_appearance_half", app}}};
}

// 9. 30-step CFG 7.5 sampling contracts.
Outcome sampling(Desk& desk) {
  const Model<float>& m = desk.stage1();
  std::vector<std::size_t> labels;
  TensorF z0(DenoiserConfig{}.latent_shape(4));
  const std::size_t clip = z0.size() / 4;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t i = b * 37;
    std::copy_n(desk.data.latents.data() + i * clip, clip, z0.data() + b * clip);
    labels.push_back(desk.data.labels[i]);
  }
  const Conditioning<float> cond = diffusion::dataset_conditioning(z0, desk.data.text, labels);
  diffusion::SampleConfig cfg{.steps = 30, .cfg_scale = 7.5, .guidance = true, .seed = 2024};
  const auto a = diffusion::sample(m, cond, desk.schedule, cfg), b = diffusion::sample(m, cond, desk.schedule, cfg);
  const bool deterministic = bit_equal(a.video, b.video) && a.trajectory.size() == 30;
  bool shared = true;
  for (const auto& s : a.trajectory) shared = shared && bit_equal(s.pi_cond, s.pi_uncond);
  cfg.cfg_scale = 1.0;
  const auto unit = diffusion::sample(m, cond, desk.schedule, cfg);
  cfg.guidance = false;
  const auto plain = diffusion::sample(m, cond, desk.schedule, cfg);
  const bool identity = bit_equal(unit.video, plain.video);
  return {deterministic && shared && identity,
          std::string("bit-identical reruns: ") + (deterministic ? "yes" : "NO") + ", cfg 1 == conditional: " +
              (identity ? "yes" : "NO") + ", shared routing: " + (shared ? "yes" : "NO"),
          {{"deterministic", deterministic}, {"cfg1_identity", identity}, {"shared_routing", shared}}};
}

// 10. Container round trips, golden bytes, corruption detection, selfcheck.
Outcome format_cli(const std::string& fixture) {
  Rng rng(110);
  bool roundtrip = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<io::Entry> entries;
    const std::size_t n = rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      Shape shape(rng.below(5));
      for (std::size_t& d : shape) d = rng.below(5);
      if (rng.below(2) == 0) {
        entries.push_back({"e" + std::to_string(i), random_tensor<float>(shape, rng)});
      } else {
        entries.push_back({"e" + std::to_string(i), random_tensor<double>(shape, rng)});
      }
    }
    const auto back = io::read_container(io::write_container(entries));
    roundtrip = roundtrip && back.size() == entries.size();
    for (std::size_t i = 0; roundtrip && i < n; ++i) roundtrip = io::bit_equal(back[i], entries[i]);
  }
  const io::Bytes golden = io::read_file(fixture);
  const bool golden_ok =
      golden.size() == 52 &&
      io::write_container({{"example.grid", TensorF(Shape{2, 2}, std::vector<float>{1, 2, 3, 4})}}) == golden;
  std::size_t missed = 0, flips = 0;
  for (std::size_t i = 0; i < golden.size(); ++i) {
    for (const std::uint8_t mask : {0x01, 0x80, 0xFF}) {
      io::Bytes bad = golden;
      bad[i] ^= mask;
      ++flips;
      try {
        io::read_container(bad);
        ++missed;
      } catch (const DecodeError&) {
      }
    }
  }
  const int code = cli::run({"freqvfx", "selfcheck"});
  return {roundtrip && golden_ok && missed == 0 && code == 0,
          std::string("50 round trips ") + (roundtrip ? "exact" : "DIFFER") + ", golden " +
              (golden_ok ? "match" : "MISMATCH") + ", corruptions missed " + std::to_string(missed) + "/" +
              std::to_string(flips) + ", selfcheck exit " + std::to_string(code),
          {{"roundtrip", roundtrip}, {"golden", golden_ok}, {"corruptions_missed", missed}, {"selfcheck_exit", code}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> only;
  std::string out = ".";
  std::string fixture = FREQVFX_FIXTURE_DIR "/golden_2x2_f32.fvl";
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--out", out, "Directory for acceptance_manifest.json");
  app.add_option("--fixture", fixture, "Golden container file");
  CLI11_PARSE(app, argc, argv);

  Desk desk;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"telescoping identity", telescoping},
      {"gradient suite", gradients},
      {"routing contracts", routing},
      {"freeze contracts", freeze},
      {"stage-1 desk run", [&] { return stage1_run(desk); }},
      {"stage-2 desk run", [&] { return stage2_run(desk); }},
      {"scale near-invariance", scale_invariance},
      {"sampling contracts", [&] { return sampling(desk); }},
      {"format and cli", [&] { return format_cli(fixture); }},
  };
  const Json thresholds = {{"1", "max abs error <= 1e-6 (energies relative to max(1, |E|))"},
                           {"2", "max reconstruction error <= 1e-6"},
                           {"3", "max group relative error <= 1e-5"},
                           {"4", "|sum - 1| <= 1e-6, nonzero <= top_k, argmax invariant"},
                           {"5", "parameter hashes unchanged"},
                           {"6", "smoothed final / initial <= 0.5 (window 50), routing L1 >= 0.1"},
                           {"7", "smoothed L_f drop >= 30% (window 10), fixpoint L_f <= 1e-3"},
                           {"8", "L_f(s z, z) <= 1e-4"},
                           {"9", "bit-identical reruns and cfg 1 identity, shared routing"},
                           {"10", "exact round trips, golden match, no missed corruption, selfcheck exit 0"}};
  Json results = Json::object();
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what(), Json::object()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    results[std::to_string(id)] = {{"name", criteria[i].first}, {"pass", o.pass}, {"seconds", secs},
                                   {"threshold", thresholds[std::to_string(id)]}, {"measured", o.measured}};
    all = all && o.pass;
  }
  std::filesystem::create_directories(out);
  io::write_file_atomic(std::filesystem::path(out) / "acceptance_manifest.json",
                        Json{{"code_version", io::kCodeVersion}, {"criteria", results}}.dump(2) + "\n");
  return all ? 0 : 1;
}

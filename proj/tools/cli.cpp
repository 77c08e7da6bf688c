// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "freqvfx/artifacts.hpp"
#include "freqvfx/report.hpp"

namespace freqvfx::cli {

namespace {

namespace fs = std::filesystem;
using io::Json;
using io::Manifest;
using io::RunConfig;

/// Bad invocation: unknown or missing input, malformed arguments.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool out_required) {
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--config", c.config, "JSON run configuration");
  auto* out = sub->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
}

fs::path require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("no such file: " + path);
  return path;
}

RunConfig requested_config(const Common& c) {
  if (c.config.empty()) return {};
  return io::load_config(require_file(c.config));
}

fs::path out_dir(const Common& c) {
  const fs::path dir = c.out;
  fs::create_directories(dir);
  return dir;
}

Manifest new_manifest(const std::string& stage, const Common& c, const RunConfig& config) {
  Manifest m;
  m.stage = stage;
  m.seed = c.seed;
  m.config = io::config_json(config);
  return m;
}

synth::DatasetOptions dataset_options(const diffusion::DenoiserConfig& c) {
  return {{c.frames, c.channels, c.height, c.width}, c.text_tokens, c.model_dim};
}

synth::SynthDataset load_dataset(const fs::path& path, const diffusion::DenoiserConfig& model) {
  synth::SynthDataset ds = io::dataset_from_entries(io::load_container(path));
  if (ds.latents.shape()[1] != model.frames || ds.latents.shape()[2] != model.channels ||
      ds.latents.shape()[3] != model.height || ds.latents.shape()[4] != model.width ||
      ds.text.dim(1) != model.text_tokens || ds.text.dim(2) != model.model_dim) {
    throw ConfigError("dataset " + path.string() + " does not fit the model configuration");
  }
  return ds;
}

/// Model configuration of a trained checkpoint. An explicit --config must agree with it.
RunConfig checkpoint_config(const fs::path& checkpoint, const Common& c) {
  const Manifest trained = io::read_manifest(checkpoint.parent_path());
  if (trained.stage != "train") throw ConfigError(checkpoint.string() + " was not written by train");
  const auto it = trained.outputs.find("checkpoint");
  if (it == trained.outputs.end() || it->second != io::file_hash(checkpoint)) {
    throw ConfigError("checkpoint " + checkpoint.string() + " does not match its manifest");
  }
  RunConfig config = requested_config(c);
  const diffusion::DenoiserConfig stored = io::parse_config(trained.config).model;
  if (!c.config.empty() && io::model_json(config.model) != io::model_json(stored)) {
    throw ConfigError("requested model configuration conflicts with the checkpoint manifest");
  }
  config.model = stored;
  return config;
}

diffusion::Conditioning<float> sample_conditioning(const synth::SynthDataset& ds, std::size_t index) {
  if (index >= ds.size()) throw UsageError("sample index " + std::to_string(index) + " out of range");
  return diffusion::dataset_conditioning(ds.sample(index), ds.text, {ds.labels[index]});
}

std::size_t check_index(std::size_t index, const synth::SynthDataset& ds) {
  if (index >= ds.size()) throw UsageError("sample index " + std::to_string(index) + " out of range");
  return index;
}

int cmd_gen(const Common& c) {
  const RunConfig config = requested_config(c);
  const fs::path dir = out_dir(c);
  const synth::SynthDataset ds = synth::build_dataset(config.dataset, c.seed, dataset_options(config.model));
  io::save_container(dir / "dataset.fvl", io::dataset_entries(ds));
  Manifest m = new_manifest("gen", c, config);
  m.outputs["dataset"] = io::file_hash(dir / "dataset.fvl");
  for (const auto& cc : config.dataset) m.results["classes"][cc.name] = cc.count;
  io::write_manifest(dir, m);
  std::cout << "wrote " << ds.size() << " clips to " << (dir / "dataset.fvl").string() << "\n";
  return kExitOk;
}

int cmd_analyze(const Common& c, const std::string& input, const std::string& entry) {
  const RunConfig config = requested_config(c);
  const fs::path in = require_file(input);
  const auto entries = io::load_container(in);
  TensorD clips;
  for (const io::Entry& e : entries) {
    if (e.name == entry) clips = std::visit([](const auto& t) { return t.template cast<double>(); }, e.value);
  }
  if (clips.rank() != 5) throw UsageError("entry " + entry + " is missing or not a [N, T, C, h, w] tensor");
  std::vector<std::size_t> ts(clips.dim(0));
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = i;
  for (const io::Entry& e : entries) {
    const auto* t = std::get_if<TensorD>(&e.value);
    if (e.name == "timesteps" && t && t->size() == ts.size()) {
      for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = static_cast<std::size_t>((*t)[i]);
    }
  }
  const std::size_t clip = clips.size() / clips.dim(0);
  const Shape one{1, clips.dim(1), clips.dim(2), clips.dim(3), clips.dim(4)};
  std::vector<io::SpectralRow> rows;
  for (std::size_t i = 0; i < clips.dim(0); ++i) {
    TensorD z(one);
    std::copy_n(clips.data() + i * clip, clip, z.data());
    const TensorD d = spectral::joint_descriptor(z, config.model.fei);
    io::SpectralRow row{ts[i], {}};
    for (std::size_t k = 0; k < 6; ++k) row.e[k] = d[k];
    rows.push_back(row);
  }
  const fs::path dir = out_dir(c);
  io::write_file_atomic(dir / "analysis.csv", io::emit_spectral_report(rows));
  Manifest m = new_manifest("analyze", c, config);
  m.inputs["input"] = io::file_hash(in);
  m.outputs["analysis"] = io::file_hash(dir / "analysis.csv");
  io::write_manifest(dir, m);
  std::cout << "analyzed " << rows.size() << " clips\n";
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& data, std::optional<std::size_t> steps) {
  RunConfig config = requested_config(c);
  if (steps) config.stage1.steps = *steps;
  config.stage1.seed = c.seed;
  const fs::path data_path = require_file(data);
  const synth::SynthDataset ds = load_dataset(data_path, config.model);
  const diffusion::NoiseSchedule schedule = io::make_schedule(config.schedule);
  diffusion::Model<float> model = diffusion::init_model<float>(config.model, c.seed);
  const auto records = diffusion::train_stage1(model, ds, schedule, config.stage1, [](const diffusion::StepRecord& r) {
    if ((r.step + 1) % 100 == 0) std::cerr << "step " << r.step + 1 << " loss " << r.loss << "\n";
  });

  const fs::path dir = out_dir(c);
  io::save_container(dir / "checkpoint.fvl", io::model_entries(model, schedule));
  io::write_file_atomic(dir / "metrics.csv", io::emit_metrics(records));
  std::vector<double> losses;
  for (const auto& r : records) losses.push_back(r.loss);
  const auto ends = diffusion::smoothed_ends(losses, std::min<std::size_t>(50, losses.size()));
  Manifest m = new_manifest("train", c, config);
  m.inputs["dataset"] = io::file_hash(data_path);
  m.outputs["checkpoint"] = io::file_hash(dir / "checkpoint.fvl");
  m.outputs["metrics"] = io::file_hash(dir / "metrics.csv");
  m.results["smoothed_initial_loss"] = ends.initial;
  m.results["smoothed_final_loss"] = ends.final;
  io::write_manifest(dir, m);
  std::cout << "smoothed loss " << ends.initial << " -> " << ends.final << "\n";
  return kExitOk;
}

int cmd_adapt(const Common& c, const std::string& checkpoint, const std::string& data, std::size_t reference,
              std::size_t source, std::optional<std::size_t> steps) {
  const fs::path ckpt = require_file(checkpoint), data_path = require_file(data);
  RunConfig config = checkpoint_config(ckpt, c);
  if (steps) config.adapt.steps = *steps;
  config.adapt.seed = c.seed;
  const auto entries = io::load_container(ckpt);
  const diffusion::Model<float> model = io::model_from_entries(entries, config.model);
  const diffusion::NoiseSchedule schedule = io::schedule_from_entries(entries);
  const synth::SynthDataset ds = load_dataset(data_path, config.model);

  diffusion::Conditioning<float> cond = sample_conditioning(ds, source);
  const TensorF bias = cond.text.reshaped(Shape{config.model.text_tokens, config.model.model_dim});
  const TensorF init = ttt::init_embedding<float>(config.adapt, config.model.model_dim, &bias);
  const ttt::AdaptProblem<float> problem{ds.sample(check_index(reference, ds)),
                                         ttt::static_source(cond.image, config.model.frames), cond, std::nullopt};
  const ttt::AdaptResult<float> r = ttt::adapt(model, problem, init, schedule, config.adapt);

  const fs::path dir = out_dir(c);
  io::save_container(dir / "embedding.fvl", {{"embedding", r.embedding}});
  std::string trace = "step,t,loss\n";
  std::vector<double> losses;
  for (const auto& rec : r.trace) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g\n", rec.step, rec.t, rec.loss);
    trace += buf;
    losses.push_back(rec.loss);
  }
  io::write_file_atomic(dir / "trace.csv", trace);
  const auto ends = diffusion::smoothed_ends(losses, std::min<std::size_t>(10, losses.size()));
  Manifest m = new_manifest("adapt", c, config);
  m.inputs["checkpoint"] = io::file_hash(ckpt);
  m.inputs["dataset"] = io::file_hash(data_path);
  m.outputs["embedding"] = io::file_hash(dir / "embedding.fvl");
  m.outputs["trace"] = io::file_hash(dir / "trace.csv");
  m.results["reference_index"] = reference;
  m.results["source_index"] = source;
  m.results["smoothed_initial_loss"] = ends.initial;
  m.results["smoothed_final_loss"] = ends.final;
  io::write_manifest(dir, m);
  std::cout << "smoothed frequency loss " << ends.initial << " -> " << ends.final << "\n";
  return kExitOk;
}

int cmd_generate(const Common& c, const std::string& checkpoint, const std::string& embedding,
                 const std::string& data, std::size_t index) {
  const fs::path ckpt = require_file(checkpoint), data_path = require_file(data);
  RunConfig config = checkpoint_config(ckpt, c);
  config.sample.seed = c.seed;
  const auto entries = io::load_container(ckpt);
  const diffusion::Model<float> model = io::model_from_entries(entries, config.model);
  const diffusion::NoiseSchedule schedule = io::schedule_from_entries(entries);
  const synth::SynthDataset ds = load_dataset(data_path, config.model);

  std::optional<TensorF> emb;
  Manifest m = new_manifest("generate", c, config);
  m.inputs["checkpoint"] = io::file_hash(ckpt);
  m.inputs["dataset"] = io::file_hash(data_path);
  if (!embedding.empty()) {
    const fs::path emb_path = require_file(embedding);
    const Manifest adapted = io::read_manifest(emb_path.parent_path());
    const auto it = adapted.inputs.find("checkpoint");
    if (adapted.stage != "adapt" || it == adapted.inputs.end() || it->second != m.inputs["checkpoint"]) {
      throw ConfigError("embedding " + emb_path.string() + " was adapted against a different checkpoint");
    }
    emb = io::find_tensor<float>(io::load_container(emb_path), "embedding");
    m.inputs["embedding"] = io::file_hash(emb_path);
  }
  const auto result = diffusion::sample(model, sample_conditioning(ds, index), schedule, config.sample,
                                        emb ? &*emb : nullptr);

  const std::size_t steps = result.trajectory.size(), B = result.video.dim(0);
  const std::size_t M = config.model.moe.experts;
  TensorD timesteps(Shape{steps}), descriptors(Shape{steps, B, 6}), routing(Shape{steps, B, M});
  for (std::size_t i = 0; i < steps; ++i) {
    const auto& s = result.trajectory[i];
    timesteps[i] = static_cast<double>(s.t);
    for (std::size_t k = 0; k < B * 6; ++k) descriptors[i * B * 6 + k] = s.descriptor[k];
    for (std::size_t k = 0; k < B * M; ++k) routing[i * B * M + k] = s.pi_cond[k];
  }
  const fs::path dir = out_dir(c);
  io::save_container(dir / "samples.fvl", {{"video", result.video},
                                           {"timesteps", timesteps},
                                           {"descriptors", descriptors},
                                           {"routing", routing}});
  m.outputs["samples"] = io::file_hash(dir / "samples.fvl");
  m.results["index"] = index;
  io::write_manifest(dir, m);
  std::cout << "sampled " << steps << " steps\n";
  return kExitOk;
}

int cmd_report(const Common& c, const std::string& input, std::size_t sample) {
  const RunConfig config = requested_config(c);
  const fs::path in = require_file(input);
  const auto entries = io::load_container(in);
  const TensorD& timesteps = io::find_tensor<double>(entries, "timesteps");
  const TensorD& descriptors = io::find_tensor<double>(entries, "descriptors");
  if (descriptors.rank() != 3 || descriptors.dim(0) != timesteps.size() || descriptors.dim(2) != 6) {
    throw DecodeError("descriptors must be [steps, B, 6] matching the timesteps");
  }
  if (sample >= descriptors.dim(1)) throw UsageError("sample index " + std::to_string(sample) + " out of range");
  std::vector<io::SpectralRow> rows;
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    io::SpectralRow row{static_cast<std::size_t>(timesteps[i]), {}};
    for (std::size_t k = 0; k < 6; ++k) row.e[k] = descriptors[(i * descriptors.dim(1) + sample) * 6 + k];
    rows.push_back(row);
  }
  const fs::path dir = out_dir(c);
  io::write_file_atomic(dir / "spectral_report.csv", io::emit_spectral_report(rows));
  Manifest m = new_manifest("report", c, config);
  m.inputs["samples"] = io::file_hash(in);
  m.outputs["report"] = io::file_hash(dir / "spectral_report.csv");
  io::write_manifest(dir, m);
  std::cout << "wrote " << rows.size() << " rows\n";
  return kExitOk;
}

int cmd_selfcheck(const Common& c) {
  const RunConfig config = requested_config(c);
  const std::vector<Check> checks = selfcheck(c.seed);
  bool ok = true;
  Json summary = Json::object();
  for (const Check& k : checks) {
    std::cout << (k.ok ? "[ok]   " : "[FAIL] ") << k.name << (k.ok ? "" : ": " + k.detail) << "\n";
    summary[k.name] = k.ok;
    ok = ok && k.ok;
  }
  if (!c.out.empty()) {
    const fs::path dir = out_dir(c);
    io::write_file_atomic(dir / "selfcheck.json", summary.dump(2) + "\n");
    Manifest m = new_manifest("selfcheck", c, config);
    m.outputs["selfcheck"] = io::file_hash(dir / "selfcheck.json");
    m.results["passed"] = ok;
    io::write_manifest(dir, m);
  }
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Frequency-aware VFX toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string input, entry = "latents", data, checkpoint, embedding;
  std::size_t reference = 0, source = 0, index = 0, sample = 0;
  std::optional<std::size_t> steps;

  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset");
  add_common(gen, common, true);
  auto* analyze = app.add_subcommand("analyze", "Joint descriptors of every clip in a container");
  add_common(analyze, common, true);
  analyze->add_option("--input", input, "FVL1 container")->required();
  analyze->add_option("--entry", entry, "Entry holding [N, T, C, h, w] clips");
  auto* train = app.add_subcommand("train", "Stage-1 router and expert training");
  add_common(train, common, true);
  train->add_option("--data", data, "Dataset container from gen")->required();
  train->add_option("--steps", steps, "Override the step count");
  auto* adapt = app.add_subcommand("adapt", "Fit a VFX embedding to a reference clip");
  add_common(adapt, common, true);
  adapt->add_option("--checkpoint", checkpoint, "Checkpoint from train")->required();
  adapt->add_option("--data", data, "Dataset container from gen")->required();
  adapt->add_option("--reference", reference, "Dataset index of the reference clip")->required();
  adapt->add_option("--source", source, "Dataset index giving the image and text condition");
  adapt->add_option("--steps", steps, "Override the step count");
  auto* generate = app.add_subcommand("generate", "Sample a clip");
  add_common(generate, common, true);
  generate->add_option("--checkpoint", checkpoint, "Checkpoint from train")->required();
  generate->add_option("--embedding", embedding, "Embedding from adapt");
  generate->add_option("--data", data, "Dataset container supplying the condition")->required();
  generate->add_option("--index", index, "Dataset index of the condition");
  auto* report = app.add_subcommand("report", "Spectral trajectory CSV of a generate run");
  add_common(report, common, true);
  report->add_option("--input", input, "samples.fvl from generate")->required();
  report->add_option("--sample", sample, "Batch index");
  auto* check = app.add_subcommand("selfcheck", "Run the invariant suite");
  add_common(check, common, false);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(gen)) return cmd_gen(common);
    if (app.got_subcommand(analyze)) return cmd_analyze(common, input, entry);
    if (app.got_subcommand(train)) return cmd_train(common, data, steps);
    if (app.got_subcommand(adapt)) return cmd_adapt(common, checkpoint, data, reference, source, steps);
    if (app.got_subcommand(generate)) return cmd_generate(common, checkpoint, embedding, data, index);
    if (app.got_subcommand(report)) return cmd_report(common, input, sample);
    if (app.got_subcommand(check)) return cmd_selfcheck(common);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace freqvfx::cli

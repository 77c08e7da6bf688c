// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration, FVL1 layouts of the pipeline artifacts, and the JSON
// manifests written next to them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "freqvfx/container.hpp"
#include "freqvfx/denoiser.hpp"
#include "freqvfx/sampler.hpp"
#include "freqvfx/synthgen.hpp"
#include "freqvfx/train.hpp"
#include "freqvfx/ttt.hpp"
#include "json.hpp"

namespace freqvfx::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kCodeVersion = "0.1.0";

struct ScheduleConfig {
  std::size_t steps = 1000;
  double offset = 0.008;
};

/// Everything a command may read from --config. Missing keys keep defaults;
/// unknown keys raise ConfigError.
struct RunConfig {
  diffusion::DenoiserConfig model;
  ScheduleConfig schedule;
  std::vector<synth::ClassCount> dataset = synth::two_class_spec();
  diffusion::Stage1Config stage1;
  ttt::AdaptConfig adapt;
  diffusion::SampleConfig sample;
};

RunConfig parse_config(const Json& j);
RunConfig load_config(const std::filesystem::path& path);
Json model_json(const diffusion::DenoiserConfig& c);
Json config_json(const RunConfig& c);
diffusion::NoiseSchedule make_schedule(const ScheduleConfig& c);

std::vector<Entry> model_entries(const diffusion::Model<float>& model, const diffusion::NoiseSchedule& schedule);
diffusion::Model<float> model_from_entries(const std::vector<Entry>& entries, const diffusion::DenoiserConfig& config);
diffusion::NoiseSchedule schedule_from_entries(const std::vector<Entry>& entries);

/// latents, labels (f64), text, and one "class.<name>" scalar per class holding its index.
std::vector<Entry> dataset_entries(const synth::SynthDataset& dataset);
synth::SynthDataset dataset_from_entries(const std::vector<Entry>& entries);

/// FNV-1a of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

struct Manifest {
  std::string stage;
  std::uint64_t seed = 0;
  Json config;
  std::map<std::string, std::string> inputs;   // artifact path -> hash
  std::map<std::string, std::string> outputs;  // artifact path -> hash
  Json results = Json::object();
};

Json manifest_json(const Manifest& m);
Manifest parse_manifest(const Json& j);
void write_manifest(const std::filesystem::path& dir, const Manifest& m);
/// Reads <dir>/manifest.json; throws ConfigError when it is missing or malformed.
Manifest read_manifest(const std::filesystem::path& dir);

}  // namespace freqvfx::io

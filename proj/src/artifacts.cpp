// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/artifacts.hpp"

#include <fstream>
#include <functional>

#include "freqvfx/hash.hpp"

namespace freqvfx::io {

namespace {

using Setter = std::function<void(const Json&)>;

void apply(const Json& j, const std::string& section, const std::map<std::string, Setter>& fields) {
  if (!j.is_object()) throw ConfigError("config section " + section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key " + section + "." + key);
    try {
      it->second(value);
    } catch (const Json::exception& e) {
      throw ConfigError("config key " + section + "." + key + ": " + e.what());
    }
  }
}

Setter set(std::size_t& field) {
  return [&field](const Json& v) {
    if (!v.is_number_unsigned()) throw ConfigError("expected a nonnegative integer, got " + v.dump());
    field = v.get<std::size_t>();
  };
}

Setter set(double& field) {
  return [&field](const Json& v) {
    if (!v.is_number()) throw ConfigError("expected a number, got " + v.dump());
    field = v.get<double>();
  };
}

Setter set(bool& field) {
  return [&field](const Json& v) {
    if (!v.is_boolean()) throw ConfigError("expected true or false, got " + v.dump());
    field = v.get<bool>();
  };
}

Setter set(std::vector<std::size_t>& field) {
  return [&field](const Json& v) {
    if (!v.is_array()) throw ConfigError("expected an array, got " + v.dump());
    field.clear();
    for (const Json& x : v) {
      if (!x.is_number_unsigned()) throw ConfigError("expected nonnegative integers, got " + v.dump());
      field.push_back(x.get<std::size_t>());
    }
  };
}

void parse_model(const Json& j, diffusion::DenoiserConfig& c) {
  apply(j, "model",
        {{"frames", set(c.frames)},
         {"channels", set(c.channels)},
         {"height", set(c.height)},
         {"width", set(c.width)},
         {"patch", set(c.patch)},
         {"model_dim", set(c.model_dim)},
         {"text_tokens", set(c.text_tokens)},
         {"moe",
          [&](const Json& m) {
            apply(m, "model.moe",
                  {{"experts", set(c.moe.experts)},
                   {"total_rank", set(c.moe.total_rank)},
                   {"top_k", set(c.moe.top_k)},
                   {"router_hidden", set(c.moe.router_hidden)},
                   {"alpha", set(c.moe.alpha)},
                   {"tau", set(c.moe.tau)},
                   {"init_std", set(c.moe.init_std)}});
          }},
         {"fei", [&](const Json& f) {
            apply(f, "model.fei",
                  {{"sigma1", set(c.fei.sigma1)}, {"sigma2", set(c.fei.sigma2)}, {"epsilon", set(c.fei.epsilon)}});
          }}});
}

template <typename T>
void put_set(std::vector<Entry>& out, const std::string& prefix, const ParamSet<T>& set) {
  for (const auto& [name, t] : set.entries()) out.push_back({prefix + name, t});
}

void take_set(const std::vector<Entry>& entries, const std::string& prefix, ParamSet<float>& set) {
  std::size_t present = 0;
  for (const Entry& e : entries) present += e.name.starts_with(prefix) ? 1 : 0;
  if (present != set.size()) {
    throw DecodeError("checkpoint holds " + std::to_string(present) + " " + prefix + " tensors, the model needs " +
                      std::to_string(set.size()));
  }
  for (auto& [name, t] : set.entries()) {
    const TensorF& stored = find_tensor<float>(entries, prefix + name);
    if (stored.shape() != t.shape()) {
      throw DecodeError("checkpoint tensor " + prefix + name + " is " + to_string(stored.shape()) +
                        ", the model needs " + to_string(t.shape()));
    }
    t = stored;
  }
}

}  // namespace

RunConfig parse_config(const Json& j) {
  RunConfig c;
  apply(j, "config",
        {{"model", [&](const Json& m) { parse_model(m, c.model); }},
         {"schedule",
          [&](const Json& s) {
            apply(s, "schedule", {{"steps", set(c.schedule.steps)}, {"offset", set(c.schedule.offset)}});
          }},
         {"dataset",
          [&](const Json& d) {
            apply(d, "dataset", {{"classes", [&](const Json& cls) {
                                    if (!cls.is_object() || cls.empty()) {
                                      throw ConfigError("dataset.classes must map class names to counts");
                                    }
                                    c.dataset.clear();
                                    for (const auto& [name, count] : cls.items()) {
                                      if (!count.is_number_unsigned()) {
                                        throw ConfigError("dataset.classes." + name + " must be a count");
                                      }
                                      c.dataset.push_back({name, count.get<std::size_t>()});
                                    }
                                  }}});
          }},
         {"stage1",
          [&](const Json& s) {
            apply(s, "stage1",
                  {{"steps", set(c.stage1.steps)},
                   {"batch", set(c.stage1.batch)},
                   {"lr", set(c.stage1.adam.lr)},
                   {"weight_decay", set(c.stage1.adam.weight_decay)},
                   {"warmup", set(c.stage1.warmup)},
                   {"final_lr_fraction", set(c.stage1.final_lr_fraction)}});
          }},
         {"adapt",
          [&](const Json& a) {
            apply(a, "adapt",
                  {{"steps", set(c.adapt.steps)},
                   {"lr", set(c.adapt.lr)},
                   {"timesteps", set(c.adapt.timesteps)},
                   {"tokens", set(c.adapt.tokens)},
                   {"init_std", set(c.adapt.init_std)},
                   {"shared_noise", set(c.adapt.shared_noise)},
                   {"diffusion_weight", set(c.adapt.diffusion_weight)}});
          }},
         {"sample", [&](const Json& s) {
            apply(s, "sample",
                  {{"steps", set(c.sample.steps)},
                   {"cfg_scale", set(c.sample.cfg_scale)},
                   {"guidance", set(c.sample.guidance)}});
          }}});
  try {
    c.model.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  try {
    return parse_config(Json::parse(f));
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

Json model_json(const diffusion::DenoiserConfig& c) {
  return {{"frames", c.frames},
          {"channels", c.channels},
          {"height", c.height},
          {"width", c.width},
          {"patch", c.patch},
          {"model_dim", c.model_dim},
          {"text_tokens", c.text_tokens},
          {"moe",
           {{"experts", c.moe.experts},
            {"total_rank", c.moe.total_rank},
            {"top_k", c.moe.top_k},
            {"router_hidden", c.moe.router_hidden},
            {"alpha", c.moe.alpha},
            {"tau", c.moe.tau},
            {"init_std", c.moe.init_std}}},
          {"fei", {{"sigma1", c.fei.sigma1}, {"sigma2", c.fei.sigma2}, {"epsilon", c.fei.epsilon}}}};
}

Json config_json(const RunConfig& c) {
  Json classes = Json::object();
  for (const auto& cc : c.dataset) classes[cc.name] = cc.count;
  return {{"model", model_json(c.model)},
          {"schedule", {{"steps", c.schedule.steps}, {"offset", c.schedule.offset}}},
          {"dataset", {{"classes", classes}}},
          {"stage1",
           {{"steps", c.stage1.steps},
            {"batch", c.stage1.batch},
            {"lr", c.stage1.adam.lr},
            {"weight_decay", c.stage1.adam.weight_decay},
            {"warmup", c.stage1.warmup},
            {"final_lr_fraction", c.stage1.final_lr_fraction}}},
          {"adapt",
           {{"steps", c.adapt.steps},
            {"lr", c.adapt.lr},
            {"timesteps", c.adapt.timesteps},
            {"tokens", c.adapt.tokens},
            {"init_std", c.adapt.init_std},
            {"shared_noise", c.adapt.shared_noise},
            {"diffusion_weight", c.adapt.diffusion_weight}}},
          {"sample", {{"steps", c.sample.steps}, {"cfg_scale", c.sample.cfg_scale}, {"guidance", c.sample.guidance}}}};
}

diffusion::NoiseSchedule make_schedule(const ScheduleConfig& c) {
  return diffusion::NoiseSchedule::cosine(c.steps, c.offset);
}

std::vector<Entry> model_entries(const diffusion::Model<float>& model, const diffusion::NoiseSchedule& schedule) {
  std::vector<Entry> out;
  put_set(out, "backbone/", model.backbone);
  put_set(out, "router/", model.router);
  put_set(out, "adapters/", model.adapters);
  TensorD alpha(Shape{schedule.size()});
  for (std::size_t t = 0; t < schedule.size(); ++t) alpha[t] = schedule.alpha(t);
  out.push_back({"schedule/alpha", alpha});
  return out;
}

diffusion::Model<float> model_from_entries(const std::vector<Entry>& entries, const diffusion::DenoiserConfig& config) {
  diffusion::Model<float> model = diffusion::init_model<float>(config, 0);
  take_set(entries, "backbone/", model.backbone);
  take_set(entries, "router/", model.router);
  take_set(entries, "adapters/", model.adapters);
  return model;
}

diffusion::NoiseSchedule schedule_from_entries(const std::vector<Entry>& entries) {
  const TensorD& alpha = find_tensor<double>(entries, "schedule/alpha");
  if (alpha.rank() != 1) throw DecodeError("schedule/alpha must be a vector");
  return diffusion::NoiseSchedule(std::vector<double>(alpha.values().begin(), alpha.values().end()));
}

std::vector<Entry> dataset_entries(const synth::SynthDataset& dataset) {
  std::vector<Entry> out;
  out.push_back({"latents", dataset.latents});
  TensorD labels(Shape{dataset.size()});
  for (std::size_t i = 0; i < dataset.size(); ++i) labels[i] = static_cast<double>(dataset.labels[i]);
  out.push_back({"labels", labels});
  out.push_back({"text", dataset.text});
  for (std::size_t k = 0; k < dataset.classes.size(); ++k) {
    out.push_back({"class." + dataset.classes[k], TensorD(Shape{}, static_cast<double>(k))});
  }
  out.push_back({"seed", TensorD(Shape{2}, std::vector<double>{static_cast<double>(dataset.seed >> 32),
                                                            static_cast<double>(dataset.seed & 0xFFFFFFFFULL)})});
  return out;
}

synth::SynthDataset dataset_from_entries(const std::vector<Entry>& entries) {
  synth::SynthDataset ds;
  ds.latents = find_tensor<float>(entries, "latents");
  ds.text = find_tensor<float>(entries, "text");
  const TensorD& labels = find_tensor<double>(entries, "labels");
  if (ds.latents.rank() != 5 || ds.text.rank() != 3 || labels.rank() != 1 || labels.dim(0) != ds.latents.dim(0)) {
    throw DecodeError("dataset tensors have inconsistent shapes");
  }
  for (const Entry& e : entries) {
    if (!e.name.starts_with("class.")) continue;
    const TensorD& idx = find_tensor<double>(entries, e.name);
    if (idx.size() != 1 || idx[0] != static_cast<double>(ds.classes.size())) {
      throw DecodeError("class entries out of order at " + e.name);
    }
    ds.classes.push_back(e.name.substr(6));
  }
  if (ds.classes.size() != ds.text.dim(0)) throw DecodeError("class names do not match the text tokens");
  for (const double l : labels.values()) {
    if (l < 0 || l >= static_cast<double>(ds.classes.size()) || l != static_cast<double>(static_cast<std::size_t>(l))) {
      throw DecodeError("dataset label out of range");
    }
    ds.labels.push_back(static_cast<std::size_t>(l));
  }
  const TensorD& seed = find_tensor<double>(entries, "seed");
  if (seed.size() != 2) throw DecodeError("dataset seed must hold two words");
  ds.seed = (static_cast<std::uint64_t>(seed[0]) << 32) | static_cast<std::uint64_t>(seed[1]);
  return ds;
}

std::string file_hash(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  Fnv1a h;
  h.update(std::as_bytes(std::span(bytes.data(), bytes.size())));
  return hex_digest(h.digest());
}

Json manifest_json(const Manifest& m) {
  return {{"stage", m.stage},      {"seed", m.seed},       {"code_version", kCodeVersion},
          {"config", m.config},    {"inputs", m.inputs},   {"outputs", m.outputs},
          {"results", m.results}};
}

Manifest parse_manifest(const Json& j) {
  try {
    Manifest m;
    m.stage = j.at("stage").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.results = j.value("results", Json::object());
    return m;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  write_file_atomic(dir / "manifest.json", manifest_json(m).dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "manifest.json";
  std::ifstream f(path);
  if (!f) throw ConfigError("missing manifest " + path.string());
  try {
    return parse_manifest(Json::parse(f));
  } catch (const Json::parse_error& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace freqvfx::io

// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/report.hpp"

#include <cstdio>
#include <sstream>

namespace freqvfx::io {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string emit_spectral_report(const std::vector<SpectralRow>& trajectory) {
  if (trajectory.empty()) throw ParameterError("spectral report needs at least one step");
  std::string out = std::string(kSpectralHeader) + "\n";
  for (const SpectralRow& row : trajectory) {
    out += std::to_string(row.t);
    for (const double v : row.e) out += "," + fmt(v);
    out += "\n";
  }
  return out;
}

std::vector<SpectralRow> parse_spectral_report(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kSpectralHeader) throw DecodeError("spectral report header mismatch");
  std::vector<SpectralRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != 7) throw DecodeError("spectral report row has " + std::to_string(cells.size()) + " cells");
    SpectralRow row;
    try {
      std::size_t used = 0;
      row.t = std::stoull(cells[0], &used);
      if (used != cells[0].size()) throw DecodeError("bad timestep " + cells[0]);
      for (std::size_t k = 0; k < 6; ++k) {
        row.e[k] = std::stod(cells[k + 1], &used);
        if (used != cells[k + 1].size()) throw DecodeError("bad value " + cells[k + 1]);
      }
    } catch (const std::logic_error&) {
      throw DecodeError("unparsable spectral report row: " + line);
    }
    rows.push_back(row);
  }
  return rows;
}

template <typename T>
std::vector<SpectralRow> trajectory_rows(const std::vector<diffusion::SampleStep<T>>& steps, std::size_t b) {
  std::vector<SpectralRow> rows;
  for (const auto& s : steps) {
    if (s.descriptor.rank() != 2 || s.descriptor.dim(1) != 6) throw ShapeError("descriptor must be [B, 6]");
    if (b >= s.descriptor.dim(0)) throw ParameterError("sample index " + std::to_string(b) + " out of range");
    SpectralRow row{s.t, {}};
    for (std::size_t k = 0; k < 6; ++k) row.e[k] = static_cast<double>(s.descriptor[b * 6 + k]);
    rows.push_back(row);
  }
  return rows;
}

std::string emit_metrics(const std::vector<diffusion::StepRecord>& records) {
  const std::size_t m = records.empty() ? 0 : records.front().pi_mean.size();
  std::string out = "step,loss";
  for (std::size_t j = 0; j < m; ++j) out += ",pi_mean_" + std::to_string(j);
  out += ",class_id\n";
  for (const diffusion::StepRecord& r : records) {
    if (r.pi_mean.size() != m) throw ShapeError("metrics records disagree on the expert count");
    out += std::to_string(r.step) + "," + fmt(r.loss);
    for (const double p : r.pi_mean) out += "," + fmt(p);
    out += "," + std::to_string(r.class_id) + "\n";
  }
  return out;
}

template std::vector<SpectralRow> trajectory_rows<float>(const std::vector<diffusion::SampleStep<float>>&, std::size_t);
template std::vector<SpectralRow> trajectory_rows<double>(const std::vector<diffusion::SampleStep<double>>&, std::size_t);

}  // namespace freqvfx::io

// SPDX-License-Identifier: Apache-2.0
#pragma once

// CSV emitters: spectral trajectories (one joint descriptor per denoising
// step) and Stage-1 metrics logs. Numbers use 6 significant digits.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "freqvfx/sampler.hpp"
#include "freqvfx/train.hpp"

namespace freqvfx::io {

inline constexpr const char* kSpectralHeader = "t,e_app_0,e_app_1,e_app_2,e_vfx_0,e_vfx_1,e_vfx_2";

struct SpectralRow {
  std::size_t t = 0;
  std::array<double, 6> e{};
};

/// Throws ParameterError on an empty trajectory.
std::string emit_spectral_report(const std::vector<SpectralRow>& trajectory);

/// Inverse of emit_spectral_report; throws DecodeError on malformed text.
std::vector<SpectralRow> parse_spectral_report(const std::string& csv);

/// Rows for sample `b` of a sampler trajectory.
template <typename T>
std::vector<SpectralRow> trajectory_rows(const std::vector<diffusion::SampleStep<T>>& steps, std::size_t b);

/// `step,loss,pi_mean_0..pi_mean_{M-1},class_id`; M is taken from the first record.
std::string emit_metrics(const std::vector<diffusion::StepRecord>& records);

}  // namespace freqvfx::io

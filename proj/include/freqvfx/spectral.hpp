// SPDX-License-Identifier: Apache-2.0
#pragma once

// Frequency-energy indicator over latent videos z[B, T, C, h, w]:
// 2-D proxies, a telescoping coarse/band/detail split, per-sample band
// energies and their normalized 3-band and 6-component descriptors.

#include "freqvfx/autodiff.hpp"
#include "freqvfx/tensor.hpp"

namespace freqvfx::spectral {

struct FeiConfig {
  double sigma1 = 0.46875;
  double sigma2 = 0.9375;
  double epsilon = 1e-8;
};

enum class ProxyKind { appearance, vfx };

template <typename T>
struct SpatialProxy {
  Tensor<T> values;  // [B, C, h, w]
  ProxyKind kind = ProxyKind::appearance;
};

template <typename T>
struct BandComponents {
  Tensor<T> coarse;
  Tensor<T> band;
  Tensor<T> detail;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
};

/// Mean over the time axis.
template <typename T>
SpatialProxy<T> appearance_proxy(const Tensor<T>& z);

/// log(1 + mean squared frame difference). Needs T >= 2.
template <typename T>
SpatialProxy<T> vfx_proxy(const Tensor<T>& z);

/// coarse = L2 x, band = L1 x - L2 x, detail = x - L1 x with Li a Gaussian of sigma_i.
template <typename T>
BandComponents<T> decompose(const Tensor<T>& x, double sigma1, double sigma2);

/// E[B, 3]; each entry sums squares over (C, h, w).
template <typename T>
Tensor<T> band_energies(const BandComponents<T>& c);

/// E / (sum E + eps) per row.
template <typename T>
Tensor<T> normalize_energies(const Tensor<T>& energies, double epsilon);

template <typename T>
Tensor<T> fei(const Tensor<T>& x, const FeiConfig& config = {});

/// [B, 6] = [fei(appearance), fei(vfx)].
template <typename T>
Tensor<T> joint_descriptor(const Tensor<T>& z, const FeiConfig& config = {});

// Differentiable versions, used by the frequency-constraint loss.
template <typename T>
ad::Var<T> fei(ad::Var<T> x, const FeiConfig& config = {});
template <typename T>
ad::Var<T> joint_descriptor(ad::Var<T> z, const FeiConfig& config = {});

void validate(const FeiConfig& config);

}  // namespace freqvfx::spectral

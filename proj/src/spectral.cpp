// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/spectral.hpp"

#include <cmath>
#include <string>

#include "freqvfx/ops.hpp"
#include "freqvfx/tensor_ops.hpp"

namespace freqvfx::spectral {

void validate(const FeiConfig& config) {
  if (!(config.sigma1 > 0.0) || !(config.sigma1 < config.sigma2) || !std::isfinite(config.sigma2)) {
    throw ParameterError("need 0 < sigma1 < sigma2, got " + std::to_string(config.sigma1) + ", " +
                         std::to_string(config.sigma2));
  }
  if (!(config.epsilon > 0.0)) throw ParameterError("epsilon must be positive");
}

template <typename T>
SpatialProxy<T> appearance_proxy(const Tensor<T>& z) {
  return {time_mean(z), ProxyKind::appearance};
}

template <typename T>
SpatialProxy<T> vfx_proxy(const Tensor<T>& z) {
  Tensor<T> d = frame_diff_sq_mean(z);
  for (T& v : d.values()) v = std::log1p(v);
  return {std::move(d), ProxyKind::vfx};
}

template <typename T>
BandComponents<T> decompose(const Tensor<T>& x, double sigma1, double sigma2) {
  validate(FeiConfig{sigma1, sigma2, 1.0});
  const Tensor<T> fine = gaussian_blur_depthwise(x, sigma1);
  BandComponents<T> out{gaussian_blur_depthwise(x, sigma2), Tensor<T>(x.shape()),
                        Tensor<T>(x.shape()), sigma1, sigma2};
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.band[i] = fine[i] - out.coarse[i];
    out.detail[i] = x[i] - fine[i];
  }
  return out;
}

template <typename T>
Tensor<T> band_energies(const BandComponents<T>& c) {
  if (c.band.shape() != c.coarse.shape() || c.detail.shape() != c.coarse.shape()) {
    throw ShapeError("band components disagree in shape");
  }
  require_shape(c.coarse, 4, "band_energies");
  const std::size_t batch = c.coarse.dim(0);
  Tensor<T> out(Shape{batch, 3});
  const Tensor<T>* parts[3] = {&c.coarse, &c.band, &c.detail};
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor<T> e = reduce_sum_sq(*parts[k], {1, 2, 3});
    for (std::size_t b = 0; b < batch; ++b) out[b * 3 + k] = e[b];
  }
  return out;
}

template <typename T>
Tensor<T> normalize_energies(const Tensor<T>& energies, double epsilon) {
  return normalize_rows(energies, epsilon);
}

template <typename T>
Tensor<T> fei(const Tensor<T>& x, const FeiConfig& config) {
  validate(config);
  return normalize_energies(band_energies(decompose(x, config.sigma1, config.sigma2)),
                            config.epsilon);
}

template <typename T>
Tensor<T> joint_descriptor(const Tensor<T>& z, const FeiConfig& config) {
  require_shape(z, 5, "joint_descriptor");
  if (z.dim(1) < 2) throw ShapeError("joint_descriptor needs at least two frames");
  const Tensor<T> app = fei(appearance_proxy(z).values, config);
  const Tensor<T> vfx = fei(vfx_proxy(z).values, config);
  const std::size_t batch = z.dim(0);
  Tensor<T> out(Shape{batch, 6});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < 3; ++k) {
      out[b * 6 + k] = app[b * 3 + k];
      out[b * 6 + 3 + k] = vfx[b * 3 + k];
    }
  }
  return out;
}

template <typename T>
ad::Var<T> fei(ad::Var<T> x, const FeiConfig& config) {
  validate(config);
  const std::size_t batch = x.shape().at(0);
  const ad::Var<T> fine = ad::blur(x, config.sigma1);
  const ad::Var<T> coarse = ad::blur(x, config.sigma2);
  const ad::Var<T> band = ad::sub(fine, coarse);
  const ad::Var<T> detail = ad::sub(x, fine);
  std::vector<ad::Var<T>> energies;
  for (const ad::Var<T>& part : {coarse, band, detail}) {
    energies.push_back(ad::reshape(ad::reduce_sum_sq(part, {1, 2, 3}), Shape{batch, 1}));
  }
  return ad::normalize_rows(ad::concat(energies, 1), config.epsilon);
}

template <typename T>
ad::Var<T> joint_descriptor(ad::Var<T> z, const FeiConfig& config) {
  require_shape(z.value(), 5, "joint_descriptor");
  if (z.shape()[1] < 2) throw ShapeError("joint_descriptor needs at least two frames");
  const ad::Var<T> app = fei(ad::time_mean(z), config);
  const ad::Var<T> vfx = fei(ad::log1p(ad::frame_diff_sq_mean(z)), config);
  return ad::concat(std::vector<ad::Var<T>>{app, vfx}, 1);
}

#define FREQVFX_INSTANTIATE(T)                                                           \
  template SpatialProxy<T> appearance_proxy<T>(const Tensor<T>&);                        \
  template SpatialProxy<T> vfx_proxy<T>(const Tensor<T>&);                               \
  template BandComponents<T> decompose<T>(const Tensor<T>&, double, double);             \
  template Tensor<T> band_energies<T>(const BandComponents<T>&);                         \
  template Tensor<T> normalize_energies<T>(const Tensor<T>&, double);                    \
  template Tensor<T> fei<T>(const Tensor<T>&, const FeiConfig&);                         \
  template Tensor<T> joint_descriptor<T>(const Tensor<T>&, const FeiConfig&);            \
  template ad::Var<T> fei<T>(ad::Var<T>, const FeiConfig&);                              \
  template ad::Var<T> joint_descriptor<T>(ad::Var<T>, const FeiConfig&);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace freqvfx::spectral

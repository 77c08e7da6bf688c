// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "freqvfx/error.hpp"

namespace freqvfx::oracle {

using Real = long double;

namespace {

long clamp_index(long i, long n) { return std::min(std::max(i, 0L), n - 1); }

}  // namespace

TensorD blur(const TensorD& x, double sigma) {
  if (x.rank() != 4) throw ShapeError("oracle::blur expects [B, C, h, w]");
  if (!(sigma > 0.0)) throw ParameterError("oracle::blur sigma must be positive");
  const long radius = std::max(1L, static_cast<long>(std::ceil(3.0 * sigma)));
  const long side = 2 * radius + 1;
  std::vector<Real> kernel(static_cast<std::size_t>(side * side));
  Real total = 0;
  for (long dy = -radius; dy <= radius; ++dy) {
    for (long dx = -radius; dx <= radius; ++dx) {
      const Real r2 = static_cast<Real>(dx * dx + dy * dy);
      const Real v = std::exp(-r2 / (2.0L * sigma * sigma));
      kernel[static_cast<std::size_t>((dy + radius) * side + dx + radius)] = v;
      total += v;
    }
  }
  for (Real& v : kernel) v /= total;

  const long planes = static_cast<long>(x.dim(0) * x.dim(1));
  const long h = static_cast<long>(x.dim(2));
  const long w = static_cast<long>(x.dim(3));
  TensorD out(x.shape());
  for (long p = 0; p < planes; ++p) {
    const double* src = x.data() + p * h * w;
    for (long i = 0; i < h; ++i) {
      for (long j = 0; j < w; ++j) {
        Real acc = 0;
        for (long dy = -radius; dy <= radius; ++dy) {
          for (long dx = -radius; dx <= radius; ++dx) {
            const Real k = kernel[static_cast<std::size_t>((dy + radius) * side + dx + radius)];
            acc += k * src[clamp_index(i + dy, h) * w + clamp_index(j + dx, w)];
          }
        }
        out.data()[p * h * w + i * w + j] = static_cast<double>(acc);
      }
    }
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits, double tau) {
  if (!(tau > 0.0)) throw ParameterError("oracle::softmax tau must be positive");
  std::vector<Real> e(logits.size());
  Real total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<Real>(logits[i]) / tau);
    total += e[i];
  }
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(e[i] / total);
  return out;
}

TensorD reduce_sum_sq(const TensorD& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  std::vector<bool> reduce(rank, false);
  for (const std::size_t a : axes) {
    if (a >= rank) throw ShapeError("oracle::reduce_sum_sq axis out of range");
    reduce[a] = true;
  }
  Shape kept;
  for (std::size_t a = 0; a < rank; ++a) {
    if (!reduce[a]) kept.push_back(x.dim(a));
  }
  std::vector<Real> acc(std::max<std::size_t>(1, numel(kept)), 0.0L);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t a = 0; a < rank; ++a) {
      if (!reduce[a]) o = o * x.dim(a) + idx[a];
    }
    const Real v = x[flat];
    acc[o] += v * v;
    for (std::size_t a = rank; a-- > 0;) {
      if (++idx[a] < x.dim(a)) break;
      idx[a] = 0;
    }
  }
  TensorD out(kept);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(acc[i]);
  return out;
}

TensorD appearance_proxy(const TensorD& z) {
  const std::size_t B = z.dim(0), T = z.dim(1), C = z.dim(2), H = z.dim(3), W = z.dim(4);
  TensorD out(Shape{B, C, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          Real acc = 0;
          for (std::size_t t = 0; t < T; ++t) acc += z[(((b * T + t) * C + c) * H + i) * W + j];
          out[((b * C + c) * H + i) * W + j] = static_cast<double>(acc / T);
        }
  return out;
}

TensorD vfx_proxy(const TensorD& z) {
  const std::size_t B = z.dim(0), T = z.dim(1), C = z.dim(2), H = z.dim(3), W = z.dim(4);
  if (T < 2) throw ShapeError("oracle::vfx_proxy needs two frames");
  TensorD out(Shape{B, C, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          Real acc = 0;
          for (std::size_t t = 0; t + 1 < T; ++t) {
            const Real d = static_cast<Real>(z[(((b * T + t + 1) * C + c) * H + i) * W + j]) -
                           z[(((b * T + t) * C + c) * H + i) * W + j];
            acc += d * d;
          }
          out[((b * C + c) * H + i) * W + j] = static_cast<double>(std::log1p(acc / (T - 1)));
        }
  return out;
}

Bands decompose(const TensorD& x, double sigma1, double sigma2) {
  const TensorD fine = blur(x, sigma1);
  const TensorD coarse = blur(x, sigma2);
  Bands out{coarse, TensorD(x.shape()), TensorD(x.shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.band[i] = static_cast<double>(static_cast<Real>(fine[i]) - coarse[i]);
    out.detail[i] = static_cast<double>(static_cast<Real>(x[i]) - fine[i]);
  }
  return out;
}

TensorD band_energies(const Bands& bands) {
  const std::size_t B = bands.coarse.dim(0);
  const std::size_t per = bands.coarse.size() / B;
  TensorD out(Shape{B, 3});
  const TensorD* parts[3] = {&bands.coarse, &bands.band, &bands.detail};
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < 3; ++k) {
      Real acc = 0;
      for (std::size_t i = 0; i < per; ++i) {
        const Real v = (*parts[k])[b * per + i];
        acc += v * v;
      }
      out[b * 3 + k] = static_cast<double>(acc);
    }
  }
  return out;
}

TensorD normalize_energies(const TensorD& energies, double eps) {
  const std::size_t B = energies.dim(0), K = energies.dim(1);
  TensorD out(energies.shape());
  for (std::size_t b = 0; b < B; ++b) {
    Real total = eps;
    for (std::size_t k = 0; k < K; ++k) total += energies[b * K + k];
    for (std::size_t k = 0; k < K; ++k) out[b * K + k] = static_cast<double>(energies[b * K + k] / total);
  }
  return out;
}

TensorD fei(const TensorD& x, double sigma1, double sigma2, double eps) {
  return normalize_energies(band_energies(decompose(x, sigma1, sigma2)), eps);
}

TensorD joint_descriptor(const TensorD& z, double sigma1, double sigma2, double eps) {
  const TensorD app = fei(appearance_proxy(z), sigma1, sigma2, eps);
  const TensorD vfx = fei(vfx_proxy(z), sigma1, sigma2, eps);
  const std::size_t B = z.dim(0);
  TensorD out(Shape{B, 6});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < 3; ++k) {
      out[b * 6 + k] = app[b * 3 + k];
      out[b * 6 + 3 + k] = vfx[b * 3 + k];
    }
  }
  return out;
}

double freq_loss(const TensorD& gen, const TensorD& ref, double sigma1, double sigma2, double eps) {
  const TensorD a = joint_descriptor(gen, sigma1, sigma2, eps);
  const TensorD b = joint_descriptor(ref, sigma1, sigma2, eps);
  Real acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(static_cast<Real>(a[i]) - b[i]);
  return static_cast<double>(acc / gen.dim(0));
}

TensorD route(const TensorD& descriptor, const Router& router, std::size_t top_k) {
  const std::size_t B = descriptor.dim(0), D = descriptor.dim(1);
  const std::size_t H = router.w1.dim(0), M = router.w2.dim(0);
  if (top_k < 1 || top_k > M) throw ParameterError("oracle::route top_k out of range");
  TensorD out(Shape{B, M});
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<Real> hidden(H);
    for (std::size_t j = 0; j < H; ++j) {
      Real acc = router.b1[j];
      for (std::size_t i = 0; i < D; ++i) acc += static_cast<Real>(router.w1[j * D + i]) * descriptor[b * D + i];
      const Real c = 0.7978845608028654L;
      hidden[j] = 0.5L * acc * (1.0L + std::tanh(c * (acc + 0.044715L * acc * acc * acc)));
    }
    std::vector<double> logits(M);
    for (std::size_t m = 0; m < M; ++m) {
      Real acc = router.b2[m];
      for (std::size_t j = 0; j < H; ++j) acc += static_cast<Real>(router.w2[m * H + j]) * hidden[j];
      logits[m] = static_cast<double>(acc);
    }
    const std::vector<double> p = softmax(logits, router.tau);
    std::vector<std::size_t> order(M);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t c) { return p[a] > p[c]; });
    Real kept = 0;
    for (std::size_t i = 0; i < top_k; ++i) kept += p[order[i]];
    for (std::size_t i = 0; i < top_k; ++i) {
      out[b * M + order[i]] = static_cast<double>(p[order[i]] / kept);
    }
  }
  return out;
}

TensorD moe_forward(const TensorD& h, const TensorD& w, const std::vector<Expert>& experts,
                    const TensorD& pi, double scaling) {
  const std::size_t B = h.dim(0), N = h.dim(1), Din = h.dim(2), Dout = w.dim(0);
  TensorD out(Shape{B, N, Dout});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t n = 0; n < N; ++n) {
      const double* x = h.data() + (b * N + n) * Din;
      for (std::size_t o = 0; o < Dout; ++o) {
        Real acc = 0;
        for (std::size_t i = 0; i < Din; ++i) acc += static_cast<Real>(w[o * Din + i]) * x[i];
        Real delta = 0;
        for (std::size_t m = 0; m < experts.size(); ++m) {
          const Expert& e = experts[m];
          const std::size_t r = e.a.dim(0);
          Real upd = 0;
          for (std::size_t q = 0; q < r; ++q) {
            Real down = 0;
            for (std::size_t i = 0; i < Din; ++i) down += static_cast<Real>(e.a[q * Din + i]) * x[i];
            upd += static_cast<Real>(e.b[o * r + q]) * down;
          }
          delta += static_cast<Real>(pi[b * experts.size() + m]) * upd;
        }
        out[(b * N + n) * Dout + o] = static_cast<double>(acc + scaling * delta);
      }
    }
  }
  return out;
}

TensorD numeric_gradient(const std::function<double(const TensorD&)>& f, const TensorD& x,
                         double step, const std::vector<std::size_t>& coords) {
  TensorD grad(x.shape());
  TensorD probe = x;
  for (const std::size_t i : coords) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = f(probe);
    probe[i] = saved - step;
    const double down = f(probe);
    probe[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

TensorD numeric_gradient(const std::function<double(const TensorD&)>& f, const TensorD& x,
                         double step) {
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  return numeric_gradient(f, x, step, all);
}

double max_relative_error(const TensorD& analytic, const TensorD& numeric,
                          const std::vector<std::size_t>& coords) {
  if (analytic.shape() != numeric.shape()) throw ShapeError("max_relative_error shape mismatch");
  std::vector<std::size_t> idx = coords;
  if (idx.empty()) {
    idx.resize(numeric.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  double worst = 0.0, scale = 0.0;
  for (const std::size_t i : idx) {
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::fabs(numeric[i]));
  }
  return worst / std::max(scale, 1e-300);
}

}  // namespace freqvfx::oracle

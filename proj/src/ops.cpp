// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/ops.hpp"

#include <cmath>
#include <numbers>

#include "freqvfx/kernels.hpp"
#include "freqvfx/tensor_ops.hpp"

namespace freqvfx::ad {

namespace {

template <typename T>
using Inputs = typename Tape<T>::Inputs;
template <typename T>
using Slots = std::vector<Tensor<T>*>;

template <typename T>
void same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename T>
Var<T> unary(const char* name, Var<T> a, T (*f)(T), T (*df)(T, T)) {
  return a.tape->record(
      name, {a}, [f](const Inputs<T>& in) { return map(*in[0], f); },
      [df](const Inputs<T>& in, const Tensor<T>& out, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        const Tensor<T>& x = *in[0];
        for (std::size_t i = 0; i < x.size(); ++i) (*gin[0])[i] += g[i] * df(x[i], out[i]);
      });
}

template <typename T>
constexpr T gelu_c = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)

template <typename T>
T gelu_f(T x) {
  return T(0.5) * x * (T(1) + std::tanh(gelu_c<T> * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_df(T x, T) {
  const T th = std::tanh(gelu_c<T> * (x + T(0.044715) * x * x * x));
  return T(0.5) * (T(1) + th) +
         T(0.5) * x * (T(1) - th * th) * gelu_c<T> * (T(1) + T(3) * T(0.044715) * x * x);
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t ax = shape.size(); ax-- > 1;) s[ax - 1] = s[ax] * shape[ax];
  return s;
}

template <typename T>
void require_rank(Var<T> v, std::size_t rank, const char* op) {
  require_shape(v.value(), rank, op);
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_shape(a, b, "add");
  return a.tape->record(
      "add", {a, b},
      [](const Inputs<T>& in) {
        Tensor<T> out(in[0]->shape());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*in[0])[i] + (*in[1])[i];
        return out;
      },
      [](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        for (Tensor<T>* s : gin) {
          if (!s) continue;
          for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i];
        }
      });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  same_shape(a, b, "sub");
  return a.tape->record(
      "sub", {a, b},
      [](const Inputs<T>& in) {
        Tensor<T> out(in[0]->shape());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*in[0])[i] - (*in[1])[i];
        return out;
      },
      [](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (gin[0]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
        }
        if (gin[1]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
        }
      });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  same_shape(a, b, "mul");
  return a.tape->record(
      "mul", {a, b},
      [](const Inputs<T>& in) {
        Tensor<T> out(in[0]->shape());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*in[0])[i] * (*in[1])[i];
        return out;
      },
      [](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (gin[0]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*in[1])[i];
        }
        if (gin[1]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * (*in[0])[i];
        }
      });
}

template <typename T>
Var<T> scale(Var<T> a, double factor) {
  const T c = static_cast<T>(factor);
  return a.tape->record(
      "scale", {a}, [c](const Inputs<T>& in) { return map(*in[0], [c](T x) { return c * x; }); },
      [c](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += c * g[i];
      });
}

template <typename T>
Var<T> square(Var<T> a) {
  return unary<T>(
      "square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> log1p(Var<T> a) {
  return unary<T>(
      "log1p", a, [](T x) { return std::log1p(x); }, [](T x, T) { return T(1) / (T(1) + x); });
}

template <typename T>
Var<T> abs(Var<T> a) {
  return unary<T>(
      "abs", a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  return unary<T>("gelu", a, &gelu_f<T>, &gelu_df<T>);
}

template <typename T>
Var<T> sum(Var<T> a) {
  return a.tape->record(
      "sum", {a},
      [](const Inputs<T>& in) {
        T acc = 0;
        for (const T v : in[0]->values()) acc += v;
        return Tensor<T>(Shape{}, acc);
      },
      [](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        for (T& v : gin[0]->values()) v += g[0];
      });
}

template <typename T>
Var<T> mean(Var<T> a) {
  if (a.value().empty()) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

template <typename T>
Var<T> reduce_sum_sq(Var<T> a, const std::vector<std::size_t>& axes) {
  const std::vector<bool> reduce = reduction_mask(a.shape(), axes);
  return a.tape->record(
      "reduce_sum_sq", {a},
      [axes](const Inputs<T>& in) { return freqvfx::reduce_sum_sq(*in[0], axes); },
      [reduce](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        const Tensor<T>& x = *in[0];
        const Shape& shape = x.shape();
        std::vector<std::size_t> coord(shape.size(), 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
          std::size_t o = 0;
          for (std::size_t ax = 0; ax < shape.size(); ++ax) {
            if (!reduce[ax]) o = o * shape[ax] + coord[ax];
          }
          (*gin[0])[i] += T(2) * x[i] * g[o];
          for (std::size_t ax = shape.size(); ax-- > 0;) {
            if (++coord[ax] < shape[ax]) break;
            coord[ax] = 0;
          }
        }
      });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
  require_rank(w, 2, "linear weight");
  const std::size_t out_dim = w.shape()[0];
  const std::size_t in_dim = w.shape()[1];
  if (x.value().rank() == 0 || x.shape().back() != in_dim) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(w.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  const std::size_t rows = x.value().size() / in_dim;
  return x.tape->record(
      "linear", {x, w},
      [=](const Inputs<T>& in) {
        Tensor<T> out(out_shape);
        kernels::gemm(in[0]->data(), in[1]->data(), out.data(),
                      {1, rows, in_dim, out_dim, false, true, false});
        return out;
      },
      [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (gin[0]) {
          kernels::gemm(g.data(), in[1]->data(), gin[0]->data(),
                        {1, rows, out_dim, in_dim, false, false, true});
        }
        if (gin[1]) {
          kernels::gemm(g.data(), in[0]->data(), gin[1]->data(),
                        {1, out_dim, rows, in_dim, true, false, true});
        }
      });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool trans_b) {
  require_rank(a, 3, "bmm lhs");
  require_rank(b, 3, "bmm rhs");
  const std::size_t groups = a.shape()[0];
  const std::size_t m = a.shape()[1];
  const std::size_t k = a.shape()[2];
  const std::size_t n = trans_b ? b.shape()[1] : b.shape()[2];
  const std::size_t bk = trans_b ? b.shape()[2] : b.shape()[1];
  if (b.shape()[0] != groups || bk != k) {
    throw ShapeError("bmm: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  return a.tape->record(
      trans_b ? "bmm_bt" : "bmm", {a, b},
      [=](const Inputs<T>& in) {
        Tensor<T> out(Shape{groups, m, n});
        kernels::gemm(in[0]->data(), in[1]->data(), out.data(),
                      {groups, m, k, n, false, trans_b, false});
        return out;
      },
      [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (gin[0]) {
          // dA = dC * op(B)^T
          kernels::gemm(g.data(), in[1]->data(), gin[0]->data(),
                        {groups, m, n, k, false, !trans_b, true});
        }
        if (gin[1]) {
          if (trans_b) {
            // B is [n, k]: dB = dC^T * A
            kernels::gemm(g.data(), in[0]->data(), gin[1]->data(),
                          {groups, n, m, k, true, false, true});
          } else {
            // dB = A^T * dC
            kernels::gemm(in[0]->data(), g.data(), gin[1]->data(),
                          {groups, k, m, n, true, false, true});
          }
        }
      });
}

namespace {

template <typename T>
void softmax_backward(const Tensor<T>& y, const Tensor<T>& g, Tensor<T>& gx, double tau) {
  const std::size_t m = y.shape().back();
  const std::size_t rows = y.size() / m;
  const T inv_tau = static_cast<T>(1.0 / tau);
  for (std::size_t r = 0; r < rows; ++r) {
    T dot = 0;
    for (std::size_t j = 0; j < m; ++j) dot += g[r * m + j] * y[r * m + j];
    for (std::size_t j = 0; j < m; ++j) {
      gx[r * m + j] += y[r * m + j] * (g[r * m + j] - dot) * inv_tau;
    }
  }
}

}  // namespace

template <typename T>
Var<T> softmax_last(Var<T> logits, double tau) {
  return logits.tape->record(
      "softmax", {logits}, [tau](const Inputs<T>& in) { return softmax(*in[0], tau); },
      [tau](const Inputs<T>&, const Tensor<T>& out, const Tensor<T>& g, const Slots<T>& gin) {
        if (gin[0]) softmax_backward(out, g, *gin[0], tau);
      });
}

template <typename T>
Var<T> masked_softmax_last(Var<T> logits, double tau, std::vector<std::uint8_t> mask) {
  auto shared_mask = std::make_shared<const std::vector<std::uint8_t>>(std::move(mask));
  return logits.tape->record(
      "masked_softmax", {logits},
      [tau, shared_mask](const Inputs<T>& in) { return masked_softmax(*in[0], tau, *shared_mask); },
      [tau](const Inputs<T>&, const Tensor<T>& out, const Tensor<T>& g, const Slots<T>& gin) {
        if (gin[0]) softmax_backward(out, g, *gin[0], tau);
      });
}

template <typename T>
Var<T> blur(Var<T> x, double sigma) {
  require_rank(x, 4, "blur");
  const std::vector<double> weights = kernels::gaussian_weights(sigma);
  const Shape& s = x.shape();
  const kernels::PlaneDims dims{s[0] * s[1], s[2], s[3]};
  return x.tape->record(
      "blur", {x}, [sigma](const Inputs<T>& in) { return gaussian_blur_depthwise(*in[0], sigma); },
      [weights, dims](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        Tensor<T> adj(g.shape());
        kernels::blur_planes_adjoint(g.data(), adj.data(), dims, weights);
        for (std::size_t i = 0; i < adj.size(); ++i) (*gin[0])[i] += adj[i];
      });
}

template <typename T>
Var<T> time_mean(Var<T> z) {
  require_rank(z, 5, "time_mean");
  const Shape& s = z.shape();
  const std::size_t batch = s[0], frames = s[1], plane = s[2] * s[3] * s[4];
  if (frames == 0) throw ShapeError("time_mean: empty time axis");
  return z.tape->record(
      "time_mean", {z}, [](const Inputs<T>& in) { return freqvfx::time_mean(*in[0]); },
      [=](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        const T inv = T(1) / static_cast<T>(frames);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t t = 0; t < frames; ++t) {
            for (std::size_t p = 0; p < plane; ++p) {
              (*gin[0])[(b * frames + t) * plane + p] += g[b * plane + p] * inv;
            }
          }
        }
      });
}

template <typename T>
Var<T> frame_diff_sq_mean(Var<T> z) {
  require_rank(z, 5, "frame_diff_sq_mean");
  const Shape& s = z.shape();
  const std::size_t batch = s[0], frames = s[1], plane = s[2] * s[3] * s[4];
  if (frames < 2) throw ShapeError("frame differences need at least two frames");
  return z.tape->record(
      "frame_diff_sq_mean", {z},
      [](const Inputs<T>& in) { return freqvfx::frame_diff_sq_mean(*in[0]); },
      [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        const Tensor<T>& x = *in[0];
        const T inv = T(2) / static_cast<T>(frames - 1);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t t = 0; t + 1 < frames; ++t) {
            for (std::size_t p = 0; p < plane; ++p) {
              const std::size_t hi = (b * frames + t + 1) * plane + p;
              const std::size_t lo = (b * frames + t) * plane + p;
              const T gd = g[b * plane + p] * inv * (x[hi] - x[lo]);
              (*gin[0])[hi] += gd;
              (*gin[0])[lo] -= gd;
            }
          }
        }
      });
}

template <typename T>
Var<T> normalize_rows(Var<T> energies, double eps) {
  require_rank(energies, 2, "normalize_rows");
  if (!(eps > 0.0)) throw ParameterError("epsilon must be positive");
  const std::size_t rows = energies.shape()[0], k = energies.shape()[1];
  const T e = static_cast<T>(eps);
  return energies.tape->record(
      "normalize_rows", {energies},
      [eps](const Inputs<T>& in) { return freqvfx::normalize_rows(*in[0], eps); },
      [=](const Inputs<T>& in, const Tensor<T>& out, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        const Tensor<T>& x = *in[0];
        for (std::size_t r = 0; r < rows; ++r) {
          T total = 0;
          for (std::size_t j = 0; j < k; ++j) total += x[r * k + j];
          const T denom = total + e;
          T dot = 0;
          for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * out[r * k + j];
          for (std::size_t j = 0; j < k; ++j) (*gin[0])[r * k + j] += (g[r * k + j] - dot) / denom;
        }
      });
}

template <typename T>
Var<T> gather(Var<T> a, Shape out_shape, Index index) {
  if (!index || index->size() != numel(out_shape)) throw ShapeError("gather: index size mismatch");
  const std::size_t n_in = a.value().size();
  for (const std::size_t i : *index) {
    if (i >= n_in) throw ShapeError("gather: index out of range");
  }
  return a.tape->record(
      "gather", {a},
      [out_shape, index](const Inputs<T>& in) {
        Tensor<T> out(out_shape);
        const std::vector<std::size_t>& idx = *index;
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = (*in[0])[idx[i]];
        return out;
      },
      [index](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        const std::vector<std::size_t>& idx = *index;
        for (std::size_t i = 0; i < idx.size(); ++i) (*gin[0])[idx[i]] += g[i];
      });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const Var<T>& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t ax = 0; ax < s.size(); ++ax) {
      if (ax != axis && s[ax] != first[ax]) throw ShapeError("concat shape mismatch");
    }
    out_shape[axis] += s[axis];
    widths.push_back(s[axis]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t ax = 0; ax < axis; ++ax) outer *= first[ax];
  for (std::size_t ax = axis + 1; ax < first.size(); ++ax) inner *= first[ax];
  const std::size_t total = out_shape[axis];
  return parts[0].tape->record(
      "concat", parts,
      [=](const Inputs<T>& in) {
        Tensor<T> out(out_shape);
        std::size_t offset = 0;
        for (std::size_t p = 0; p < in.size(); ++p) {
          const std::size_t w = widths[p];
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < w * inner; ++i) {
              out[(o * total + offset) * inner + i] = (*in[p])[o * w * inner + i];
            }
          }
          offset += w;
        }
        return out;
      },
      [=](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < gin.size(); ++p) {
          const std::size_t w = widths[p];
          if (gin[p]) {
            for (std::size_t o = 0; o < outer; ++o) {
              for (std::size_t i = 0; i < w * inner; ++i) {
                (*gin[p])[o * w * inner + i] += g[(o * total + offset) * inner + i];
              }
            }
          }
          offset += w;
        }
      });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  if (numel(shape) != a.value().size()) {
    throw ShapeError("cannot reshape " + to_string(a.shape()) + " to " + to_string(shape));
  }
  return a.tape->record(
      "reshape", {a}, [shape](const Inputs<T>& in) { return in[0]->reshaped(shape); },
      [](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
      });
}

template <typename T>
Var<T> scale_leading(Var<T> x, Var<T> w) {
  require_rank(w, 1, "scale_leading weights");
  if (x.value().rank() == 0 || x.shape()[0] != w.shape()[0]) {
    throw ShapeError("scale_leading: leading axis mismatch");
  }
  const std::size_t lead = w.shape()[0];
  const std::size_t inner = x.value().size() / lead;
  return x.tape->record(
      "scale_leading", {x, w},
      [=](const Inputs<T>& in) {
        Tensor<T> out(in[0]->shape());
        for (std::size_t b = 0; b < lead; ++b) {
          const T s = (*in[1])[b];
          for (std::size_t i = 0; i < inner; ++i) out[b * inner + i] = s * (*in[0])[b * inner + i];
        }
        return out;
      },
      [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const Slots<T>& gin) {
        for (std::size_t b = 0; b < lead; ++b) {
          const T s = (*in[1])[b];
          T acc = 0;
          for (std::size_t i = 0; i < inner; ++i) {
            if (gin[0]) (*gin[0])[b * inner + i] += s * g[b * inner + i];
            acc += g[b * inner + i] * (*in[0])[b * inner + i];
          }
          if (gin[1]) (*gin[1])[b] += acc;
        }
      });
}

Index permute_index(const Shape& in, const std::vector<std::size_t>& axes, Shape& out_shape) {
  if (axes.size() != in.size()) throw ShapeError("permute: axis count mismatch");
  std::vector<bool> seen(in.size(), false);
  out_shape.assign(in.size(), 0);
  for (std::size_t ax = 0; ax < axes.size(); ++ax) {
    if (axes[ax] >= in.size() || seen[axes[ax]]) throw ShapeError("permute: invalid axes");
    seen[axes[ax]] = true;
    out_shape[ax] = in[axes[ax]];
  }
  const std::vector<std::size_t> in_strides = row_major_strides(in);
  auto index = std::make_shared<std::vector<std::size_t>>(numel(in));
  std::vector<std::size_t> coord(in.size(), 0);
  for (std::size_t o = 0; o < index->size(); ++o) {
    std::size_t src = 0;
    for (std::size_t ax = 0; ax < axes.size(); ++ax) src += coord[ax] * in_strides[axes[ax]];
    (*index)[o] = src;
    for (std::size_t ax = out_shape.size(); ax-- > 0;) {
      if (++coord[ax] < out_shape[ax]) break;
      coord[ax] = 0;
    }
  }
  return index;
}

Index broadcast_index(const Shape& in, const Shape& out) {
  if (in.size() > out.size()) throw ShapeError("broadcast: target rank too small");
  const std::size_t lead = out.size() - in.size();
  for (std::size_t ax = 0; ax < in.size(); ++ax) {
    if (in[ax] != 1 && in[ax] != out[lead + ax]) {
      throw ShapeError("cannot broadcast " + to_string(in) + " to " + to_string(out));
    }
  }
  const std::vector<std::size_t> in_strides = row_major_strides(in);
  auto index = std::make_shared<std::vector<std::size_t>>(numel(out));
  std::vector<std::size_t> coord(out.size(), 0);
  for (std::size_t o = 0; o < index->size(); ++o) {
    std::size_t src = 0;
    for (std::size_t ax = 0; ax < in.size(); ++ax) {
      if (in[ax] != 1) src += coord[lead + ax] * in_strides[ax];
    }
    (*index)[o] = src;
    for (std::size_t ax = out.size(); ax-- > 0;) {
      if (++coord[ax] < out[ax]) break;
      coord[ax] = 0;
    }
  }
  return index;
}

template <typename T>
Var<T> permute(Var<T> a, const std::vector<std::size_t>& axes) {
  Shape out_shape;
  Index index = permute_index(a.shape(), axes, out_shape);
  return gather(a, std::move(out_shape), std::move(index));
}

template <typename T>
Var<T> broadcast_to(Var<T> a, const Shape& shape) {
  if (a.shape() == shape) return a;
  return gather(a, shape, broadcast_index(a.shape(), shape));
}

template <typename T>
Var<T> select_last(Var<T> a, std::size_t i) {
  const Shape& s = a.shape();
  if (s.empty() || i >= s.back()) throw ShapeError("select_last: index out of range");
  Shape out_shape(s.begin(), s.end() - 1);
  const std::size_t m = s.back();
  auto index = std::make_shared<std::vector<std::size_t>>(numel(out_shape));
  for (std::size_t r = 0; r < index->size(); ++r) (*index)[r] = r * m + i;
  return gather(a, std::move(out_shape), std::move(index));
}

#define FREQVFX_INSTANTIATE(T)                                                         \
  template Var<T> add<T>(Var<T>, Var<T>);                                              \
  template Var<T> sub<T>(Var<T>, Var<T>);                                              \
  template Var<T> mul<T>(Var<T>, Var<T>);                                              \
  template Var<T> scale<T>(Var<T>, double);                                            \
  template Var<T> square<T>(Var<T>);                                                   \
  template Var<T> log1p<T>(Var<T>);                                                    \
  template Var<T> abs<T>(Var<T>);                                                      \
  template Var<T> gelu<T>(Var<T>);                                                     \
  template Var<T> sum<T>(Var<T>);                                                      \
  template Var<T> mean<T>(Var<T>);                                                     \
  template Var<T> reduce_sum_sq<T>(Var<T>, const std::vector<std::size_t>&);           \
  template Var<T> linear<T>(Var<T>, Var<T>);                                           \
  template Var<T> bmm<T>(Var<T>, Var<T>, bool);                                        \
  template Var<T> softmax_last<T>(Var<T>, double);                                     \
  template Var<T> masked_softmax_last<T>(Var<T>, double, std::vector<std::uint8_t>);   \
  template Var<T> blur<T>(Var<T>, double);                                             \
  template Var<T> time_mean<T>(Var<T>);                                                \
  template Var<T> frame_diff_sq_mean<T>(Var<T>);                                       \
  template Var<T> normalize_rows<T>(Var<T>, double);                                   \
  template Var<T> gather<T>(Var<T>, Shape, Index);                                     \
  template Var<T> concat<T>(const std::vector<Var<T>>&, std::size_t);                  \
  template Var<T> reshape<T>(Var<T>, Shape);                                           \
  template Var<T> scale_leading<T>(Var<T>, Var<T>);                                    \
  template Var<T> permute<T>(Var<T>, const std::vector<std::size_t>&);                 \
  template Var<T> broadcast_to<T>(Var<T>, const Shape&);                               \
  template Var<T> select_last<T>(Var<T>, std::size_t);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace freqvfx::ad

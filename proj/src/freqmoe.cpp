// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/freqmoe.hpp"

#include <algorithm>
#include <numeric>

#include "freqvfx/kernels.hpp"
#include "freqvfx/ops.hpp"
#include "freqvfx/tensor_ops.hpp"

namespace freqvfx::moe {

namespace {

template <typename T>
Tensor<T> gaussian(const Shape& shape, double stddev, Rng& rng) {
  Tensor<T> t(shape);
  for (T& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

void check_top_k(std::size_t top_k, std::size_t experts) {
  if (top_k < 1 || top_k > experts) {
    throw ParameterError("top_k must lie in [1, " + std::to_string(experts) + "], got " +
                         std::to_string(top_k));
  }
}

template <typename T>
bool column_all_zero(const Tensor<T>& pi, std::size_t m) {
  const std::size_t experts = pi.dim(1);
  for (std::size_t b = 0; b < pi.dim(0); ++b) {
    if (pi[b * experts + m] != T(0)) return false;
  }
  return true;
}

template <typename T>
Tensor<T> gelu_plain(Tensor<T> x) {
  for (T& v : x.values()) {
    const T c = static_cast<T>(0.7978845608028654);
    v = T(0.5) * v * (T(1) + std::tanh(c * (v + T(0.044715) * v * v * v)));
  }
  return x;
}

}  // namespace

void MoeConfig::validate() const {
  if (experts < 1) throw ParameterError("need at least one expert");
  check_top_k(top_k, experts);
  if (total_rank < experts) {
    throw ParameterError("total rank " + std::to_string(total_rank) + " is below the expert count " +
                         std::to_string(experts));
  }
  if (router_hidden < 1) throw ParameterError("router hidden width must be at least 1");
  if (!(tau > 0.0)) throw ParameterError("router temperature must be positive");
}

std::vector<std::size_t> split_rank_budget(std::size_t total_rank, std::size_t experts) {
  if (experts < 1) throw ParameterError("need at least one expert");
  if (total_rank < experts) {
    throw ParameterError("rank budget " + std::to_string(total_rank) + " leaves some of " +
                         std::to_string(experts) + " experts empty");
  }
  std::vector<std::size_t> ranks(experts, total_rank / experts);
  for (std::size_t m = 0; m < total_rank % experts; ++m) ++ranks[m];
  return ranks;
}

template <typename T>
MoeAdapter<T> make_adapter(std::size_t d_in, std::size_t d_out, const MoeConfig& config, Rng& rng) {
  config.validate();
  MoeAdapter<T> out;
  out.scaling = config.scaling();
  out.total_rank = config.total_rank;
  out.top_k = config.top_k;
  for (const std::size_t r : split_rank_budget(config.total_rank, config.experts)) {
    out.experts.push_back({gaussian<T>(Shape{r, d_in}, config.init_std, rng), Tensor<T>(Shape{d_out, r})});
  }
  return out;
}

template <typename T>
RouterParams<T> make_router(const MoeConfig& config, Rng& rng) {
  config.validate();
  const std::size_t h = config.router_hidden;
  RouterParams<T> r;
  r.w1 = gaussian<T>(Shape{h, kDescriptorDim}, 1.0 / std::sqrt(static_cast<double>(kDescriptorDim)), rng);
  r.b1 = Tensor<T>(Shape{h});
  r.w2 = Tensor<T>(Shape{config.experts, h});
  r.b2 = Tensor<T>(Shape{config.experts});
  r.tau = config.tau;
  return r;
}

template <typename T>
std::size_t adapter_param_count(const MoeAdapter<T>& adapter) {
  std::size_t n = 0;
  for (const LoraExpert<T>& e : adapter.experts) n += e.a.size() + e.b.size();
  return n;
}

template <typename T>
Tensor<T> router_logits(const Tensor<T>& descriptor, const RouterParams<T>& router) {
  require_shape(descriptor, 2, "router descriptor");
  const std::size_t batch = descriptor.dim(0), in = descriptor.dim(1);
  const std::size_t hidden = router.w1.dim(0), experts = router.experts();
  if (in != router.w1.dim(1) || router.w2.dim(1) != hidden || router.b1.size() != hidden ||
      router.b2.size() != experts) {
    throw ShapeError("router parameters do not match descriptor " + to_string(descriptor.shape()));
  }
  Tensor<T> h(Shape{batch, hidden});
  kernels::gemm(descriptor.data(), router.w1.data(), h.data(), {1, batch, in, hidden, false, true, false});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < hidden; ++j) h[b * hidden + j] += router.b1[j];
  h = gelu_plain(std::move(h));
  Tensor<T> logits(Shape{batch, experts});
  kernels::gemm(h.data(), router.w2.data(), logits.data(), {1, batch, hidden, experts, false, true, false});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t m = 0; m < experts; ++m) logits[b * experts + m] += router.b2[m];
  return logits;
}

template <typename T>
std::vector<std::uint8_t> top_k_mask(const Tensor<T>& scores, std::size_t top_k) {
  require_shape(scores, 2, "top_k_mask");
  const std::size_t rows = scores.dim(0), m = scores.dim(1);
  check_top_k(top_k, m);
  std::vector<std::uint8_t> mask(scores.size(), 0);
  std::vector<std::size_t> order(m);
  for (std::size_t r = 0; r < rows; ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[r * m + a] > scores[r * m + b];
    });
    for (std::size_t i = 0; i < top_k; ++i) mask[r * m + order[i]] = 1;
  }
  return mask;
}

template <typename T>
Tensor<T> route(const Tensor<T>& descriptor, const RouterParams<T>& router, std::size_t top_k) {
  const Tensor<T> logits = router_logits(descriptor, router);
  return masked_softmax(logits, router.tau, top_k_mask(logits, top_k));
}

template <typename T>
Tensor<T> moe_forward(const MoeAdapter<T>& adapter, const Tensor<T>& pi, const Tensor<T>& w,
                      const Tensor<T>& h) {
  require_shape(h, 3, "moe_forward input");
  require_shape(w, 2, "moe_forward weight");
  const std::size_t batch = h.dim(0), tokens = h.dim(1), d_in = h.dim(2), d_out = w.dim(0);
  const std::size_t experts = adapter.experts.size();
  if (w.dim(1) != d_in) throw ShapeError("base weight does not match input width");
  if (pi.shape() != Shape{batch, experts}) {
    throw ShapeError("routing weights " + to_string(pi.shape()) + " do not match batch and experts");
  }
  for (const LoraExpert<T>& e : adapter.experts) {
    if (e.a.rank() != 2 || e.b.rank() != 2 || e.a.dim(1) != d_in || e.b.dim(0) != d_out ||
        e.b.dim(1) != e.a.dim(0)) {
      throw ShapeError("expert shapes do not match the projection");
    }
  }
  const std::size_t rows = batch * tokens;
  Tensor<T> out(Shape{batch, tokens, d_out});
  kernels::gemm(h.data(), w.data(), out.data(), {1, rows, d_in, d_out, false, true, false});
  const T s = static_cast<T>(adapter.scaling);
  for (std::size_t m = 0; m < experts; ++m) {
    if (column_all_zero(pi, m)) continue;
    const LoraExpert<T>& e = adapter.experts[m];
    const std::size_t r = e.rank();
    Tensor<T> down(Shape{rows, r}), up(Shape{rows, d_out});
    kernels::gemm(h.data(), e.a.data(), down.data(), {1, rows, d_in, r, false, true, false});
    kernels::gemm(down.data(), e.b.data(), up.data(), {1, rows, r, d_out, false, true, false});
    for (std::size_t b = 0; b < batch; ++b) {
      const T weight = s * pi[b * experts + m];
      for (std::size_t i = b * tokens * d_out; i < (b + 1) * tokens * d_out; ++i) out[i] += weight * up[i];
    }
  }
  return out;
}

template <typename T>
ad::Var<T> route(ad::Tape<T>& tape, const Tensor<T>& descriptor, const RouterVars<T>& router,
                 std::size_t top_k) {
  require_shape(descriptor, 2, "router descriptor");
  const ad::Var<T> e = tape.constant(descriptor);
  const Shape hidden_shape{descriptor.dim(0), router.w1.shape().at(0)};
  const ad::Var<T> hidden =
      ad::gelu(ad::add(ad::linear(e, router.w1), ad::broadcast_to(router.b1, hidden_shape)));
  const Shape logit_shape{descriptor.dim(0), router.w2.shape().at(0)};
  const ad::Var<T> logits = ad::add(ad::linear(hidden, router.w2), ad::broadcast_to(router.b2, logit_shape));
  return ad::masked_softmax_last(logits, router.tau, top_k_mask(logits.value(), top_k));
}

template <typename T>
ad::Var<T> moe_forward(const std::vector<ExpertVars<T>>& experts, double scaling, ad::Var<T> pi,
                       ad::Var<T> w, ad::Var<T> h) {
  require_shape(h.value(), 3, "moe_forward input");
  if (pi.shape() != Shape{h.shape()[0], experts.size()}) {
    throw ShapeError("routing weights " + to_string(pi.shape()) + " do not match batch and experts");
  }
  const ad::Var<T> base = ad::linear(h, w);
  std::vector<ad::Var<T>> terms;
  for (std::size_t m = 0; m < experts.size(); ++m) {
    if (column_all_zero(pi.value(), m)) continue;
    const ad::Var<T> up = ad::linear(ad::linear(h, experts[m].a), experts[m].b);
    if (up.shape() != base.shape()) throw ShapeError("expert output does not match the projection");
    terms.push_back(ad::scale_leading(up, ad::select_last(pi, m)));
  }
  if (terms.empty()) return base;
  ad::Var<T> delta = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) delta = ad::add(delta, terms[i]);
  return ad::add(base, ad::scale(delta, scaling));
}

template <typename T>
void store_adapter(const MoeAdapter<T>& adapter, const std::string& prefix, ParamSet<T>& out) {
  for (std::size_t m = 0; m < adapter.experts.size(); ++m) {
    out.add(prefix + ".e" + std::to_string(m) + ".a", adapter.experts[m].a);
    out.add(prefix + ".e" + std::to_string(m) + ".b", adapter.experts[m].b);
  }
}

template <typename T>
void store_router(const RouterParams<T>& router, const std::string& prefix, ParamSet<T>& out) {
  out.add(prefix + ".w1", router.w1);
  out.add(prefix + ".b1", router.b1);
  out.add(prefix + ".w2", router.w2);
  out.add(prefix + ".b2", router.b2);
}

template <typename T>
MoeAdapter<T> load_adapter(const ParamSet<T>& set, const std::string& prefix, const MoeConfig& config) {
  MoeAdapter<T> out;
  out.scaling = config.scaling();
  out.total_rank = config.total_rank;
  out.top_k = config.top_k;
  for (std::size_t m = 0; m < config.experts; ++m) {
    out.experts.push_back({set.get(prefix + ".e" + std::to_string(m) + ".a"),
                           set.get(prefix + ".e" + std::to_string(m) + ".b")});
  }
  return out;
}

template <typename T>
RouterParams<T> load_router(const ParamSet<T>& set, const std::string& prefix, double tau) {
  return {set.get(prefix + ".w1"), set.get(prefix + ".b1"), set.get(prefix + ".w2"),
          set.get(prefix + ".b2"), tau};
}

template <typename T>
std::vector<ExpertVars<T>> adapter_vars(const VarMap<T>& vars, const std::string& prefix,
                                        std::size_t experts) {
  std::vector<ExpertVars<T>> out;
  for (std::size_t m = 0; m < experts; ++m) {
    out.push_back({vars[prefix + ".e" + std::to_string(m) + ".a"],
                   vars[prefix + ".e" + std::to_string(m) + ".b"]});
  }
  return out;
}

template <typename T>
RouterVars<T> router_vars(const VarMap<T>& vars, const std::string& prefix, double tau) {
  return {vars[prefix + ".w1"], vars[prefix + ".b1"], vars[prefix + ".w2"], vars[prefix + ".b2"], tau};
}

#define FREQVFX_INSTANTIATE(T)                                                                        \
  template MoeAdapter<T> make_adapter<T>(std::size_t, std::size_t, const MoeConfig&, Rng&);            \
  template RouterParams<T> make_router<T>(const MoeConfig&, Rng&);                                     \
  template std::size_t adapter_param_count<T>(const MoeAdapter<T>&);                                   \
  template Tensor<T> router_logits<T>(const Tensor<T>&, const RouterParams<T>&);                       \
  template std::vector<std::uint8_t> top_k_mask<T>(const Tensor<T>&, std::size_t);                     \
  template Tensor<T> route<T>(const Tensor<T>&, const RouterParams<T>&, std::size_t);                  \
  template Tensor<T> moe_forward<T>(const MoeAdapter<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                    const Tensor<T>&);                                                  \
  template ad::Var<T> route<T>(ad::Tape<T>&, const Tensor<T>&, const RouterVars<T>&, std::size_t);     \
  template ad::Var<T> moe_forward<T>(const std::vector<ExpertVars<T>>&, double, ad::Var<T>,             \
                                     ad::Var<T>, ad::Var<T>);                                          \
  template void store_adapter<T>(const MoeAdapter<T>&, const std::string&, ParamSet<T>&);              \
  template void store_router<T>(const RouterParams<T>&, const std::string&, ParamSet<T>&);             \
  template MoeAdapter<T> load_adapter<T>(const ParamSet<T>&, const std::string&, const MoeConfig&);    \
  template RouterParams<T> load_router<T>(const ParamSet<T>&, const std::string&, double);             \
  template std::vector<ExpertVars<T>> adapter_vars<T>(const VarMap<T>&, const std::string&,            \
                                                      std::size_t);                                     \
  template RouterVars<T> router_vars<T>(const VarMap<T>&, const std::string&, double);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace freqvfx::moe

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Frequency router and rank-budgeted mixture of low-rank (LoRA) experts.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "freqvfx/autodiff.hpp"
#include "freqvfx/params.hpp"
#include "freqvfx/rng.hpp"
#include "freqvfx/tensor.hpp"

namespace freqvfx::moe {

inline constexpr std::size_t kDescriptorDim = 6;

struct MoeConfig {
  std::size_t experts = 4;
  std::size_t total_rank = 16;
  std::size_t top_k = 3;
  std::size_t router_hidden = 16;
  /// LoRA scaling is alpha / total_rank.
  double alpha = 16.0;
  double tau = 1.0;
  double init_std = 0.02;

  double scaling() const { return alpha / static_cast<double>(total_rank); }
  void validate() const;
};

template <typename T>
struct RouterParams {
  Tensor<T> w1;  // [hidden, 6]
  Tensor<T> b1;  // [hidden]
  Tensor<T> w2;  // [M, hidden]
  Tensor<T> b2;  // [M]
  double tau = 1.0;

  std::size_t experts() const { return w2.dim(0); }
};

template <typename T>
struct LoraExpert {
  Tensor<T> a;  // [rank, d_in]
  Tensor<T> b;  // [d_out, rank]

  std::size_t rank() const { return a.dim(0); }
};

template <typename T>
struct MoeAdapter {
  std::vector<LoraExpert<T>> experts;
  double scaling = 1.0;
  std::size_t total_rank = 0;
  std::size_t top_k = 1;

  std::size_t d_in() const { return experts.at(0).a.dim(1); }
  std::size_t d_out() const { return experts.at(0).b.dim(0); }
};

/// Floor/ceil split of r over m experts, larger ranks first.
std::vector<std::size_t> split_rank_budget(std::size_t total_rank, std::size_t experts);

/// A ~ N(0, init_std), B = 0, so a fresh adapter leaves the base projection unchanged.
template <typename T>
MoeAdapter<T> make_adapter(std::size_t d_in, std::size_t d_out, const MoeConfig& config, Rng& rng);

/// Small Gaussian first layer. The output layer starts at zero so every
/// descriptor is routed uniformly until training moves it.
template <typename T>
RouterParams<T> make_router(const MoeConfig& config, Rng& rng);

/// Sum over experts of rank * (d_in + d_out).
template <typename T>
std::size_t adapter_param_count(const MoeAdapter<T>& adapter);

template <typename T>
Tensor<T> router_logits(const Tensor<T>& descriptor, const RouterParams<T>& router);

/// 1 for the top_k largest entries per row, ties broken towards lower indices.
template <typename T>
std::vector<std::uint8_t> top_k_mask(const Tensor<T>& scores, std::size_t top_k);

/// Mixture weights pi[B, M]: temperature softmax over the router logits,
/// restricted to the top_k experts and renormalized.
template <typename T>
Tensor<T> route(const Tensor<T>& descriptor, const RouterParams<T>& router, std::size_t top_k);

/// W h + s * sum_m pi[b, m] * B_m A_m h for h[B, N, d_in], W[d_out, d_in].
template <typename T>
Tensor<T> moe_forward(const MoeAdapter<T>& adapter, const Tensor<T>& pi, const Tensor<T>& w,
                      const Tensor<T>& h);

// Tape versions. The descriptor enters as plain data: no gradient reaches it.

template <typename T>
struct RouterVars {
  ad::Var<T> w1, b1, w2, b2;
  double tau = 1.0;
};

template <typename T>
struct ExpertVars {
  ad::Var<T> a, b;
};

template <typename T>
ad::Var<T> route(ad::Tape<T>& tape, const Tensor<T>& descriptor, const RouterVars<T>& router,
                 std::size_t top_k);

template <typename T>
ad::Var<T> moe_forward(const std::vector<ExpertVars<T>>& experts, double scaling, ad::Var<T> pi,
                       ad::Var<T> w, ad::Var<T> h);

// Flat storage under name prefixes, used by the denoiser and checkpoints:
// "<prefix>.e<m>.a" / "<prefix>.e<m>.b" and "<prefix>.w1" ... "<prefix>.b2".

template <typename T>
void store_adapter(const MoeAdapter<T>& adapter, const std::string& prefix, ParamSet<T>& out);
template <typename T>
void store_router(const RouterParams<T>& router, const std::string& prefix, ParamSet<T>& out);
template <typename T>
MoeAdapter<T> load_adapter(const ParamSet<T>& set, const std::string& prefix, const MoeConfig& config);
template <typename T>
RouterParams<T> load_router(const ParamSet<T>& set, const std::string& prefix, double tau);

template <typename T>
std::vector<ExpertVars<T>> adapter_vars(const VarMap<T>& vars, const std::string& prefix,
                                        std::size_t experts);
template <typename T>
RouterVars<T> router_vars(const VarMap<T>& vars, const std::string& prefix, double tau);

}  // namespace freqvfx::moe

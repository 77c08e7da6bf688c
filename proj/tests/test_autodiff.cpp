// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>

#include "freqvfx/ops.hpp"
#include "test_util.hpp"

using namespace freqvfx;
using fvtest::gradient_error;
using fvtest::random_tensor;
using fvtest::uniform_tensor;
using V = ad::Var<double>;
using TapeD = ad::Tape<double>;

namespace {

// Contracts any output with a fixed random tensor so every output coordinate
// carries a distinct weight into the scalar loss.
V project(TapeD& tape, V v) {
  Rng rng(777, v.value().size());
  return ad::sum(ad::mul(v, tape.constant(random_tensor(v.shape(), rng))));
}

constexpr double kTol = 1e-5;

}  // namespace

TEST(Backward, QuadraticGivesInput) {
  Rng rng(1);
  const TensorD x = random_tensor(Shape{3, 4}, rng);
  TapeD tape;
  const V p = tape.parameter(x);
  const V loss = ad::scale(ad::sum(ad::square(p)), 0.5);
  const TensorD g = tape.backward(loss)[p];
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(g[i], x[i]);
}

TEST(Backward, UnreachableParameterGetsZeros) {
  TapeD tape;
  const V used = tape.parameter(TensorD(Shape{2}, 1.0));
  const V unused = tape.parameter(TensorD(Shape{3}, 5.0));
  const V loss = ad::sum(ad::square(used));
  const auto grads = tape.backward(loss);
  EXPECT_EQ(grads.size(), 2u);
  EXPECT_TRUE(bit_equal(grads[unused], TensorD(Shape{3})));
}

TEST(Backward, NonScalarLossRejected) {
  TapeD tape;
  const V p = tape.parameter(TensorD(Shape{2}, 1.0));
  EXPECT_THROW(tape.backward(ad::square(p)), ShapeError);
}

TEST(Backward, ReplayMismatchDetected) {
  TapeD tape;
  const V p = tape.parameter(TensorD(Shape{1}, 1.0));
  auto counter = std::make_shared<std::atomic<int>>(0);
  const V drift = tape.record(
      "drifting", {p},
      [counter](const TapeD::Inputs& in) {
        TensorD out = *in[0];
        out[0] += static_cast<double>((*counter)++);
        return out;
      },
      [](const TapeD::Inputs&, const TensorD&, const TensorD& g, const std::vector<TensorD*>& s) {
        if (s[0]) (*s[0])[0] += g[0];
      });
  const V loss = ad::sum(drift);
  EXPECT_NO_THROW(tape.backward(loss));
  EXPECT_THROW(tape.backward(loss, {.verify_replay = true}), InternalError);
}

TEST(Backward, ReplayOfDeterministicTapeSucceeds) {
  Rng rng(2);
  TapeD tape;
  const V p = tape.parameter(random_tensor(Shape{1, 2, 5, 5}, rng));
  const V loss = ad::sum(ad::gelu(ad::blur(p, 0.7)));
  EXPECT_NO_THROW(tape.verify_replay());
  EXPECT_NO_THROW(tape.backward(loss, {.verify_replay = true}));
}

TEST(Backward, SharedInputAccumulates) {
  TapeD tape;
  const V p = tape.parameter(TensorD(Shape{1}, 3.0));
  const V loss = ad::sum(ad::mul(p, p));
  EXPECT_DOUBLE_EQ(tape.backward(loss)[p][0], 6.0);
}

// Finite-difference soundness for every primitive, f64, step 1e-5.

TEST(GradCheck, Elementwise) {
  Rng rng(10);
  const TensorD x = random_tensor(Shape{3, 5}, rng);
  const TensorD y = random_tensor(Shape{3, 5}, rng);
  const TensorD pos = uniform_tensor(Shape{3, 5}, rng, 0.1, 3.0);
  auto c = [&](TapeD& t) { return t.constant(y); };
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::add(p, c(t))); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::add(c(t), p)); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::sub(p, c(t))); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::sub(c(t), p)); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::mul(p, c(t))); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::mul(c(t), p)); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::scale(p, -2.5)); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::square(p)); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::log1p(p)); }, pos), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::abs(p)); }, x), kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::gelu(p)); }, x), kTol);
}

TEST(GradCheck, Reductions) {
  Rng rng(11);
  const TensorD x = random_tensor(Shape{2, 3, 4}, rng);
  EXPECT_LE(gradient_error([](TapeD&, V p) { return ad::sum(ad::square(p)); }, x), kTol);
  EXPECT_LE(gradient_error([](TapeD&, V p) { return ad::mean(ad::gelu(p)); }, x), kTol);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::reduce_sum_sq(p, {1})); }, x),
            kTol);
  EXPECT_LE(
      gradient_error([](TapeD& t, V p) { return project(t, ad::reduce_sum_sq(p, {0, 2})); }, x),
      kTol);
}

TEST(GradCheck, LinearAndBmm) {
  Rng rng(12);
  const TensorD x = random_tensor(Shape{2, 3, 4}, rng);
  const TensorD w = random_tensor(Shape{5, 4}, rng);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::linear(p, t.constant(w))); }, x),
            kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::linear(t.constant(x), p)); }, w),
            kTol);
  const TensorD a = random_tensor(Shape{2, 3, 4}, rng);
  const TensorD b = random_tensor(Shape{2, 4, 5}, rng);
  const TensorD bt = random_tensor(Shape{2, 5, 4}, rng);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::bmm(p, t.constant(b), false)); }, a),
            kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::bmm(t.constant(a), p, false)); }, b),
            kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::bmm(p, t.constant(bt), true)); }, a),
            kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::bmm(t.constant(a), p, true)); }, bt),
            kTol);
}

TEST(GradCheck, Softmax) {
  Rng rng(13);
  const TensorD x = random_tensor(Shape{3, 4}, rng);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::softmax_last(p, 0.7)); }, x),
            kTol);
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 1};
  EXPECT_LE(gradient_error(
                [&](TapeD& t, V p) { return project(t, ad::masked_softmax_last(p, 1.3, mask)); }, x),
            kTol);
}

TEST(GradCheck, SpectralPrimitives) {
  Rng rng(14);
  const TensorD img = random_tensor(Shape{2, 2, 5, 6}, rng);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::blur(p, 0.46875)); }, img), kTol);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::blur(p, 1.7)); }, img), kTol);
  const TensorD z = random_tensor(Shape{2, 3, 2, 3, 3}, rng);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::time_mean(p)); }, z), kTol);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::frame_diff_sq_mean(p)); }, z),
            kTol);
  const TensorD e = uniform_tensor(Shape{3, 3}, rng, 0.1, 2.0);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::normalize_rows(p, 1e-8)); }, e),
            kTol);
}

TEST(GradCheck, IndexingPrimitives) {
  Rng rng(15);
  const TensorD x = random_tensor(Shape{2, 3, 4}, rng);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::permute(p, {2, 0, 1})); }, x),
            kTol);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::reshape(p, Shape{6, 4})); }, x),
            kTol);
  EXPECT_LE(gradient_error([](TapeD& t, V p) { return project(t, ad::select_last(p, 2)); }, x), kTol);
  const TensorD row = random_tensor(Shape{1, 4}, rng);
  EXPECT_LE(
      gradient_error([](TapeD& t, V p) { return project(t, ad::broadcast_to(p, Shape{2, 3, 4})); },
                     row),
      kTol);
  const TensorD other = random_tensor(Shape{2, 2, 4}, rng);
  EXPECT_LE(gradient_error(
                [&](TapeD& t, V p) {
                  return project(t, ad::concat(std::vector<V>{p, t.constant(other), p}, 1));
                },
                x),
            kTol);
  const TensorD w = random_tensor(Shape{2}, rng);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::scale_leading(p, t.constant(w))); }, x),
            kTol);
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::scale_leading(t.constant(x), p)); }, w),
            kTol);
  auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{0, 5, 5, 23, 1});
  EXPECT_LE(gradient_error([&](TapeD& t, V p) { return project(t, ad::gather(p, Shape{5}, idx)); }, x),
            kTol);
}

TEST(Ops, ShapeErrors) {
  TapeD tape;
  const V a = tape.constant(TensorD(Shape{2, 3}));
  const V b = tape.constant(TensorD(Shape{3, 2}));
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::linear(a, tape.constant(TensorD(Shape{4, 2}))), ShapeError);
  EXPECT_THROW(ad::frame_diff_sq_mean(tape.constant(TensorD(Shape{1, 1, 1, 2, 2}))), ShapeError);
}

TEST(Ops, BroadcastAndPermuteValues) {
  TapeD tape;
  const V a = tape.constant(TensorD(Shape{3}, std::vector<double>{1, 2, 3}));
  const TensorD bc = ad::broadcast_to(a, Shape{2, 3}).value();
  EXPECT_EQ(bc[4], 2.0);
  const V m = tape.constant(TensorD(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}));
  const TensorD pt = ad::permute(m, {1, 0}).value();
  EXPECT_EQ(pt.shape(), (Shape{3, 2}));
  EXPECT_EQ(pt[1], 4.0);
}

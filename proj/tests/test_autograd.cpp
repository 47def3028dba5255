// Copyright 2026 The eend-dat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "test_util.hpp"

#include <gtest/gtest.h>

namespace eend {
namespace {

using testing::check_gradients;
using testing::random_matrix;
using testing::weighted_sum;

constexpr double kTol = 1e-4;

Tensor param(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  return Tensor::parameter(random_matrix(r, c, rng, scale));
}

TEST(Autograd, ElementwiseAndMatmul) {
  Rng rng(1);
  Tensor a = param(3, 4, rng), b = param(4, 2, rng), c = param(3, 2, rng), row = param(1, 2, rng);
  auto f = [&] { return weighted_sum(tanh(add_row(add(matmul(a, b), mul(c, sigmoid(c))), row))); };
  auto r = check_gradients(f, {{"a", a}, {"b", b}, {"c", c}, {"row", row}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Autograd, SwishSubScaleTranspose) {
  Rng rng(2);
  Tensor a = param(3, 5, rng), b = param(3, 5, rng);
  auto f = [&] { return weighted_sum(transpose(scale(sub(swish(a), b), 0.7))); };
  auto r = check_gradients(f, {{"a", a}, {"b", b}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Autograd, LayerNorm) {
  Rng rng(3);
  Tensor x = param(4, 6, rng), g = param(1, 6, rng), b = param(1, 6, rng);
  auto f = [&] { return weighted_sum(layer_norm(x, g, b)); };
  auto r = check_gradients(f, {{"x", x}, {"gain", g}, {"bias", b}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Autograd, LayerNormNormalizesRows) {
  Rng rng(4);
  Tensor x = param(3, 7, rng, 5.0);
  Matrix y = layer_norm(x, Tensor::constant(Matrix::Ones(1, 7)), Tensor::constant(Matrix::Zero(1, 7))).value();
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR((y.row(i).array().square()).mean(), 1.0, 1e-5);
  }
}

TEST(Autograd, SoftmaxRows) {
  Rng rng(5);
  Tensor x = param(3, 4, rng);
  auto f = [&] { return weighted_sum(softmax_rows(x)); };
  auto r = check_gradients(f, {{"x", x}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
  Matrix s = softmax_rows(x).value();
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-12);
}

TEST(Autograd, ConcatSliceReshapePermute) {
  Rng rng(6);
  Tensor a = param(2, 3, rng), b = param(3, 3, rng), c = param(5, 2, rng);
  auto f = [&] {
    Tensor rows = concat_rows({a, b});
    Tensor cols = concat_cols({rows, c});
    Tensor s = slice_cols(slice_rows(cols, 1, 4), 1, 3);
    Tensor p = permute_rows(s, {2, 0, 3, 1});
    return weighted_sum(reshape(p, 6, 2));
  };
  auto r = check_gradients(f, {{"a", a}, {"b", b}, {"c", c}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Autograd, GluAndDepthwiseConv) {
  Rng rng(7);
  Tensor x = param(6, 8, rng), k = param(3, 4, rng), bias = param(1, 4, rng);
  auto f = [&] { return weighted_sum(depthwise_conv1d(glu(x), k, bias)); };
  auto r = check_gradients(f, {{"x", x}, {"kernel", k}, {"bias", bias}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Autograd, DepthwiseConvMatchesLoopOracle) {
  Rng rng(8);
  Matrix x = random_matrix(7, 3, rng), k = random_matrix(5, 3, rng), b = random_matrix(1, 3, rng);
  Matrix y = depthwise_conv1d(Tensor::constant(x), Tensor::constant(k), Tensor::constant(b)).value();
  for (int t = 0; t < 7; ++t) {
    for (int c = 0; c < 3; ++c) {
      double acc = b(0, c);
      for (int j = 0; j < 5; ++j) {
        const int src = t + j - 2;
        if (src >= 0 && src < 7) acc += k(j, c) * x(src, c);
      }
      EXPECT_NEAR(y(t, c), acc, 1e-12);
    }
  }
}

TEST(Autograd, BceWithLogitsAndCrossEntropy) {
  Rng rng(9);
  Tensor logits = param(4, 3, rng, 2.0), row = param(1, 5, rng);
  Matrix targets = (random_matrix(4, 3, rng).array() > 0.0).cast<double>();
  auto f = [&] { return add(bce_with_logits_sum(logits, targets), softmax_cross_entropy(row, 2)); };
  auto r = check_gradients(f, {{"logits", logits}, {"row", row}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Autograd, LstmBackpropThroughTime) {
  Rng rng(10);
  const int in = 3, hid = 4;
  Tensor x = param(5, in, rng), h0 = param(1, hid, rng, 0.5), c0 = param(1, hid, rng, 0.5);
  Tensor wi = param(in, 4 * hid, rng, 0.5), wr = param(hid, 4 * hid, rng, 0.5), b = param(1, 4 * hid, rng, 0.5);
  auto f = [&] {
    LstmOutput o = lstm(x, h0, c0, wi, wr, b);
    return add(weighted_sum(o.hidden, 1), weighted_sum(o.cell, 2));
  };
  auto r = check_gradients(f, {{"x", x}, {"h0", h0}, {"c0", c0}, {"wi", wi}, {"wr", wr}, {"b", b}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Autograd, LstmSingleStepMatchesGateEquations) {
  Rng rng(11);
  const int in = 2, hid = 3;
  Matrix x = random_matrix(1, in, rng), h = random_matrix(1, hid, rng), c = random_matrix(1, hid, rng);
  Matrix wi = random_matrix(in, 4 * hid, rng), wr = random_matrix(hid, 4 * hid, rng), b = random_matrix(1, 4 * hid, rng);
  LstmOutput o = lstm(Tensor::constant(x), Tensor::constant(h), Tensor::constant(c), Tensor::constant(wi),
                      Tensor::constant(wr), Tensor::constant(b));
  Matrix z = x * wi + h * wr + b;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int k = 0; k < hid; ++k) {
    const double i = sig(z(0, k)), f = sig(z(0, hid + k)), g = std::tanh(z(0, 2 * hid + k)), og = sig(z(0, 3 * hid + k));
    const double cn = f * c(0, k) + i * g;
    EXPECT_NEAR(o.cell.value()(0, k), cn, 1e-12);
    EXPECT_NEAR(o.hidden.value()(0, k), og * std::tanh(cn), 1e-12);
  }
}

TEST(Autograd, DetachBlocksGradient) {
  Rng rng(12);
  Tensor a = param(2, 2, rng);
  Tensor y = sum(mul(detach(a), a));
  backward(y);
  EXPECT_TRUE(a.grad().isApprox(a.value()));
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Rng rng(13);
  Tensor a = param(2, 2, rng);
  NoGradGuard g;
  Tensor y = sum(mul(a, a));
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, GradientsAccumulateUntilCleared) {
  Tensor a = Tensor::parameter(Matrix::Ones(1, 1));
  backward(scale(a, 3.0));
  backward(scale(a, 3.0));
  EXPECT_DOUBLE_EQ(a.grad()(0, 0), 6.0);
  a.zero_grad();
  EXPECT_FALSE(a.has_grad());
  EXPECT_DOUBLE_EQ(a.grad()(0, 0), 0.0);
}

TEST(Autograd, RejectsShapeMismatchAndNonScalarRoot) {
  Tensor a = Tensor::parameter(Matrix::Ones(2, 3)), b = Tensor::parameter(Matrix::Ones(2, 2));
  EXPECT_THROW(add(a, b), std::invalid_argument);
  EXPECT_THROW(matmul(a, b), std::invalid_argument);
  EXPECT_THROW(backward(a), std::logic_error);
}

}  // namespace
}  // namespace eend

/*
 * Copyright 2026 The asf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "asf/optim.hpp"
#include "asf/tensor_ops.hpp"
#include "testutil.hpp"

using namespace asf;
using testutil::GradCheck;
using testutil::random_cotangent;
using testutil::random_tensor;
using testutil::weighted_sum;

namespace {

Conv2dLayer<double> make_conv(std::int64_t in, std::int64_t out, int kt, int kf,
                              int st, int sf, int pt, int pf, bool bias,
                              Rng& rng) {
  Conv2dSpec s{in, out, kt, kf, st, sf, pt, pf, bias};
  auto layer = Conv2dLayer<double>::make(s);
  layer.weight.fill_normal(rng, 0.3);
  if (bias) layer.bias.fill_normal(rng, 0.3);
  return layer;
}

}  // namespace

TEST(Conv2d, IdentityPointwise) {
  Rng rng(1);
  const std::int64_t c = 3;
  auto layer = make_conv(c, c, 1, 1, 1, 1, 0, 0, false, rng);
  layer.weight = Tensor<double>({c, c, 1, 1});
  for (std::int64_t i = 0; i < c; ++i) layer.weight.data[i * c + i] = 1.0;
  const auto x = random_tensor({2, c, 5, 4}, rng);
  const auto y = conv2d_forward(x, layer);
  EXPECT_EQ(y.shape, x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    EXPECT_DOUBLE_EQ(y.data[i], x.data[i]);
  }
}

TEST(Conv2d, WideStemShape) {
  Rng rng(2);
  auto layer = make_conv(1, 64, 1, 7, 2, 2, 0, 3, false, rng);
  const auto x = random_tensor({1, 1, 100, 128}, rng);
  const auto y = conv2d_forward(x, layer);
  EXPECT_EQ(y.shape, (Shape{1, 64, 50, 64}));
}

TEST(Conv2d, HandComputedTimeColumn) {
  Rng rng(3);
  auto layer = make_conv(1, 1, 3, 1, 1, 1, 1, 0, false, rng);
  layer.weight.data = {1.0, 1.0, 1.0};
  const auto x = Tensor<double>::from({1, 1, 3, 1}, {1.0, 2.0, 3.0});
  const auto y = conv2d_forward(x, layer);
  ASSERT_EQ(y.shape, (Shape{1, 1, 3, 1}));
  EXPECT_DOUBLE_EQ(y.data[0], 3.0);
  EXPECT_DOUBLE_EQ(y.data[1], 6.0);
  EXPECT_DOUBLE_EQ(y.data[2], 5.0);
}

TEST(Conv2d, Errors) {
  Rng rng(4);
  auto layer = make_conv(3, 4, 1, 3, 1, 1, 0, 1, false, rng);
  const auto bad = random_tensor({1, 2, 4, 4}, rng);
  EXPECT_THROW(conv2d_forward(bad, layer), Error);
  auto huge = make_conv(1, 1, 9, 9, 1, 1, 0, 0, false, rng);
  const auto tiny = random_tensor({1, 1, 4, 4}, rng);
  EXPECT_THROW(conv2d_forward(tiny, huge), Error);
}

TEST(Conv2d, FiniteDifferenceGradients) {
  Rng rng(5);
  for (const auto [kt, kf] : {std::pair{3, 1}, std::pair{1, 3}}) {
    auto layer = make_conv(3, 4, kt, kf, 1, 1, kt / 2, kf / 2, true, rng);
    auto x = random_tensor({2, 3, 8, 8}, rng);
    const auto cot = random_cotangent(
        conv2d_forward(x, layer).shape, rng);
    const auto loss = [&]() {
      return weighted_sum(conv2d_forward(x, layer), cot);
    };

    Tensor<double> gx, gw(layer.weight.shape), gb(layer.bias.shape);
    conv2d_backward(cot, x, layer, &gx, &gw, &gb);

    GradCheck gc;
    Rng pick(6);
    gc.check_buffer(x.data.data(), gx.data.data(), x.numel(), loss, pick);
    gc.check_buffer(layer.weight.data.data(), gw.data.data(),
                    layer.weight.numel(), loss, pick);
    gc.check_buffer(layer.bias.data.data(), gb.data.data(),
                    layer.bias.numel(), loss, pick);
    EXPECT_LT(gc.max_rel_err, 1e-4) << "kernel " << kt << "x" << kf;
  }
}

TEST(Conv2d, ZeroCotangentAndIdentityBackward) {
  Rng rng(7);
  auto layer = make_conv(2, 3, 3, 3, 1, 1, 1, 1, true, rng);
  const auto x = random_tensor({1, 2, 5, 5}, rng);
  const auto y = conv2d_forward(x, layer);
  Tensor<double> gx, gw(layer.weight.shape), gb(layer.bias.shape);
  conv2d_backward(Tensor<double>(y.shape), x, layer, &gx, &gw, &gb);
  for (const double v : gx.data) EXPECT_DOUBLE_EQ(v, 0.0);
  for (const double v : gw.data) EXPECT_DOUBLE_EQ(v, 0.0);
  for (const double v : gb.data) EXPECT_DOUBLE_EQ(v, 0.0);

  // identity 1x1: grad_x == grad_out
  auto id = make_conv(2, 2, 1, 1, 1, 1, 0, 0, false, rng);
  id.weight = Tensor<double>({2, 2, 1, 1});
  id.weight.data = {1.0, 0.0, 0.0, 1.0};
  const auto gy = random_tensor({1, 2, 5, 5}, rng);
  Tensor<double> gxi;
  conv2d_backward<double>(gy, x, id, &gxi, nullptr, nullptr);
  for (std::size_t i = 0; i < gy.data.size(); ++i) {
    EXPECT_DOUBLE_EQ(gxi.data[i], gy.data[i]);
  }
}

TEST(Conv2d, SeparablePairMatchesRankOneKernel) {
  // a (3,1) then (1,3) pair equals one 3x3 convolution exactly when the 3x3
  // kernel is rank-1
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> col(3), row(3);
    for (auto& v : col) v = rng.normal();
    for (auto& v : row) v = rng.normal();

    auto time_conv = make_conv(1, 1, 3, 1, 1, 1, 1, 0, false, rng);
    time_conv.weight.data = col;
    auto freq_conv = make_conv(1, 1, 1, 3, 1, 1, 0, 1, false, rng);
    freq_conv.weight.data = row;
    auto full = make_conv(1, 1, 3, 3, 1, 1, 1, 1, false, rng);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) full.weight.data[i * 3 + j] = col[i] * row[j];
    }

    const auto x = random_tensor({1, 1, 7, 6}, rng);
    const auto via_pair = conv2d_forward(conv2d_forward(x, time_conv), freq_conv);
    const auto direct = conv2d_forward(x, full);
    ASSERT_EQ(via_pair.shape, direct.shape);
    for (std::size_t i = 0; i < direct.data.size(); ++i) {
      EXPECT_NEAR(via_pair.data[i], direct.data[i], 1e-10);
    }
  }
}

TEST(Conv2d, OutputExtentFormulaMatchesEnumeration) {
  // every (kernel, stride, pad) combination used by the architecture
  const int kernels[] = {1, 3, 5, 7};
  const int strides[] = {1, 2, 4};
  const int pads[] = {0, 1, 2, 3};
  for (const int k : kernels) {
    for (const int s : strides) {
      for (const int p : pads) {
        for (std::int64_t in = k > 2 * p ? k - 2 * p : 1; in <= 40; ++in) {
          std::int64_t count = 0;
          for (std::int64_t start = -p; start + k <= in + p; start += s) {
            ++count;
          }
          if (count <= 0) continue;
          EXPECT_EQ(conv_out_extent(in, k, s, p), count)
              << "in=" << in << " k=" << k << " s=" << s << " p=" << p;
        }
      }
    }
  }
}

TEST(MaxPool, StemShapeAndConstant) {
  Rng rng(9);
  const Pool2dSpec spec;
  const auto x = random_tensor({1, 64, 50, 64}, rng);
  EXPECT_EQ(maxpool2d_forward(x, spec).shape, (Shape{1, 64, 25, 32}));

  const Tensor<double> c({1, 2, 9, 9}, 4.25);
  const auto y = maxpool2d_forward(c, spec);
  for (const double v : y.data) EXPECT_DOUBLE_EQ(v, 4.25);
}

TEST(MaxPool, RampAgainstBruteForce) {
  std::vector<double> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[i] = i;
  const auto x = Tensor<double>::from({1, 1, 4, 4}, ramp);
  const auto y = maxpool2d_forward(x, Pool2dSpec{});
  ASSERT_EQ(y.shape, (Shape{1, 1, 2, 2}));
  EXPECT_DOUBLE_EQ(y.data[0], 5.0);
  EXPECT_DOUBLE_EQ(y.data[1], 7.0);
  EXPECT_DOUBLE_EQ(y.data[2], 13.0);
  EXPECT_DOUBLE_EQ(y.data[3], 15.0);

  // randomized shapes against a direct windowed max
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t t = 3 + rng.uniform_int(8), f = 3 + rng.uniform_int(8);
    const auto xr = random_tensor({2, 3, t, f}, rng);
    const Pool2dSpec s;
    const auto yr = maxpool2d_forward(xr, s);
    for (std::int64_t n = 0; n < 2; ++n) {
      for (std::int64_t c = 0; c < 3; ++c) {
        for (std::int64_t ot = 0; ot < yr.dim(2); ++ot) {
          for (std::int64_t of = 0; of < yr.dim(3); ++of) {
            double best = -1e300;
            for (int i = 0; i < s.kt; ++i) {
              for (int j = 0; j < s.kf; ++j) {
                const std::int64_t it = ot * s.stride_t - s.pad_t + i;
                const std::int64_t jf = of * s.stride_f - s.pad_f + j;
                if (it < 0 || it >= t || jf < 0 || jf >= f) continue;
                best = std::max(best, xr.at4(n, c, it, jf));
              }
            }
            EXPECT_DOUBLE_EQ(yr.at4(n, c, ot, of), best);
          }
        }
      }
    }
  }
}

TEST(MaxPool, BackwardGradientAndTieBreak) {
  Rng rng(11);
  // values spaced apart so the finite difference never crosses a tie
  Tensor<double> x({1, 2, 6, 6});
  std::vector<int> perm(x.data.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.uniform_int(static_cast<std::int64_t>(i))]);
  }
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = 0.01 * perm[i];

  const Pool2dSpec spec;
  const auto cot = random_cotangent(maxpool2d_forward(x, spec).shape, rng);
  const auto loss = [&]() {
    return weighted_sum(maxpool2d_forward(x, spec), cot);
  };
  const auto gx = maxpool2d_backward(cot, x, spec);
  GradCheck gc;
  Rng pick(12);
  gc.check_buffer(x.data.data(), gx.data.data(), x.numel(), loss, pick);
  EXPECT_LT(gc.max_rel_err, 1e-4);

  // an exact tie routes to the first (lowest time, then frequency) index
  Tensor<double> tied({1, 1, 2, 2}, 1.0);
  Pool2dSpec whole;
  whole.kt = whole.kf = 2;
  whole.stride_t = whole.stride_f = 2;
  whole.pad_t = whole.pad_f = 0;
  Tensor<double> gy({1, 1, 1, 1});
  gy.data[0] = 3.0;
  const auto g = maxpool2d_backward(gy, tied, whole);
  EXPECT_DOUBLE_EQ(g.data[0], 3.0);
  EXPECT_DOUBLE_EQ(g.data[1], 0.0);
  EXPECT_DOUBLE_EQ(g.data[2], 0.0);
  EXPECT_DOUBLE_EQ(g.data[3], 0.0);
}

TEST(BatchNorm, TrainModeNormalizes) {
  Rng rng(13);
  auto layer = BatchNormLayer<double>::make(4);
  auto x = random_tensor({3, 4, 6, 5}, rng, 2.5);
  for (auto& v : x.data) v += 1.7;
  BnCache<double> cache;
  const auto y = batchnorm_forward(x, layer, BnMode::kTrain, &cache);
  const std::int64_t plane = 6 * 5, m = 3 * plane;
  for (std::int64_t c = 0; c < 4; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::int64_t n = 0; n < 3; ++n) {
      for (std::int64_t i = 0; i < plane; ++i) {
        mean += y.data[(n * 4 + c) * plane + i];
      }
    }
    mean /= m;
    for (std::int64_t n = 0; n < 3; ++n) {
      for (std::int64_t i = 0; i < plane; ++i) {
        const double d = y.data[(n * 4 + c) * plane + i] - mean;
        var += d * d;
      }
    }
    var /= m;
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
  // running statistics moved toward the batch statistics
  EXPECT_NE(layer.running_mean.data[0], 0.0);
}

TEST(BatchNorm, FrozenUsesRunningStats) {
  Rng rng(14);
  auto layer = BatchNormLayer<double>::make(3);
  layer.scale.data = {2.0, 0.5, -1.0};
  layer.shift.data = {0.1, -0.2, 0.3};
  const auto x = random_tensor({2, 3, 4, 4}, rng);
  const auto before_mean = layer.running_mean.data;
  const auto y = batchnorm_forward(x, layer, BnMode::kFrozen);
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t i = 0; i < 16; ++i) {
        const double expected =
            layer.scale.data[c] * x.data[(n * 3 + c) * 16 + i] +
            layer.shift.data[c];
        EXPECT_NEAR(y.data[(n * 3 + c) * 16 + i], expected, 1e-4);
      }
    }
  }
  EXPECT_EQ(layer.running_mean.data, before_mean);  // unchanged
}

TEST(BatchNorm, ZeroVarianceIsHandledByEps) {
  auto layer = BatchNormLayer<double>::make(1);
  const Tensor<double> x({2, 1, 3, 3}, 5.0);
  const auto y = batchnorm_forward(x, layer, BnMode::kTrain);
  for (const double v : y.data) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(BatchNorm, FiniteDifferenceGradients) {
  Rng rng(15);
  for (const BnMode mode : {BnMode::kTrain, BnMode::kEval}) {
    auto layer = BatchNormLayer<double>::make(3);
    layer.scale.data = {1.2, 0.8, -0.5};
    layer.shift.data = {0.3, 0.0, -0.1};
    layer.running_mean.data = {0.2, -0.4, 0.1};
    layer.running_var.data = {1.5, 0.7, 2.0};
    auto x = random_tensor({2, 3, 4, 3}, rng);
    const auto run = [&]() {
      auto snapshot = layer;  // forward mutates running stats in train mode
      BnCache<double> cache;
      return batchnorm_forward(x, snapshot, mode, &cache);
    };
    const auto cot = random_cotangent(run().shape, rng);
    const auto loss = [&]() { return weighted_sum(run(), cot); };

    auto work = layer;
    BnCache<double> cache;
    batchnorm_forward(x, work, mode, &cache);
    Tensor<double> gx, gs(layer.scale.shape), gb(layer.shift.shape);
    batchnorm_backward(cot, x, layer, cache, &gx, &gs, &gb);

    GradCheck gc;
    Rng pick(16);
    gc.check_buffer(x.data.data(), gx.data.data(), x.numel(), loss, pick);
    gc.check_buffer(layer.scale.data.data(), gs.data.data(), 3, loss, pick);
    gc.check_buffer(layer.shift.data.data(), gb.data.data(), 3, loss, pick);
    EXPECT_LT(gc.max_rel_err, 1e-4);
  }
}

TEST(PointwiseOps, ReluGapDropoutConcat) {
  Rng rng(17);
  // global average pool reduces (T, F) to 1x1
  const auto wide = random_tensor({1, 2048, 25, 4}, rng);
  EXPECT_EQ(global_avg_pool_forward(wide).shape, (Shape{1, 2048, 1, 1}));

  // dropout p=0 and eval mode are the identity
  const auto x = random_tensor({2, 8, 4, 4}, rng);
  Rng drng(18);
  const auto y0 = dropout_forward<double>(x, 0.0, true, drng);
  EXPECT_EQ(y0.data, x.data);
  const auto y1 = dropout_forward<double>(x, 0.5, false, drng);
  EXPECT_EQ(y1.data, x.data);

  // train-mode dropout scales survivors by 1/(1-p)
  Tensor<double> mask;
  const auto y2 = dropout_forward(x, 0.5, true, drng, &mask);
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    EXPECT_TRUE(mask.data[i] == 0.0 || mask.data[i] == 2.0);
    EXPECT_DOUBLE_EQ(y2.data[i], x.data[i] * mask.data[i]);
  }

  // channel concatenation of pooled vectors
  const auto a = random_tensor({1, 2048, 1, 1}, rng);
  const auto b = random_tensor({1, 256, 1, 1}, rng);
  const auto cat = concat_channels_forward<double>({&a, &b});
  EXPECT_EQ(cat.shape, (Shape{1, 2304, 1, 1}));
  const auto bad = random_tensor({1, 16, 2, 1}, rng);
  EXPECT_THROW(concat_channels_forward<double>({&a, &bad}), Error);

  // relu and gap finite differences
  auto xr = random_tensor({2, 3, 5, 4}, rng);
  for (auto& v : xr.data) v += (v >= 0 ? 0.2 : -0.2);  // keep off the kink
  const auto cot = random_cotangent(xr.shape, rng);
  const auto loss_relu = [&]() { return weighted_sum(relu_forward(xr), cot); };
  const auto gx = relu_backward(cot, xr);
  GradCheck gc;
  Rng pick(19);
  gc.check_buffer(xr.data.data(), gx.data.data(), xr.numel(), loss_relu, pick);
  EXPECT_LT(gc.max_rel_err, 1e-4);
}

TEST(Linear, ForwardAndGradients) {
  Rng rng(20);
  auto layer = LinearLayer<double>::make(6, 4);
  layer.weight.fill_normal(rng, 0.5);
  layer.bias.fill_normal(rng, 0.5);
  auto x = random_tensor({3, 6}, rng);
  const auto cot = random_cotangent(linear_forward(x, layer).shape, rng);
  const auto loss = [&]() { return weighted_sum(linear_forward(x, layer), cot); };
  Tensor<double> gx, gw(layer.weight.shape), gb(layer.bias.shape);
  linear_backward(cot, x, layer, &gx, &gw, &gb);
  GradCheck gc;
  Rng pick(21);
  gc.check_buffer(x.data.data(), gx.data.data(), x.numel(), loss, pick);
  gc.check_buffer(layer.weight.data.data(), gw.data.data(),
                  layer.weight.numel(), loss, pick);
  gc.check_buffer(layer.bias.data.data(), gb.data.data(), 4, loss, pick);
  EXPECT_LT(gc.max_rel_err, 1e-4);
}

TEST(CrossEntropy, KnownValues) {
  const int k = 309;
  Tensor<double> logits({2, k}, 0.0);
  const double loss =
      softmax_cross_entropy_forward(logits, {0, 42});
  EXPECT_NEAR(loss, std::log(309.0), 1e-9);

  Tensor<double> confident({1, 5}, 0.0);
  confident.data[3] = 1e6;
  EXPECT_NEAR(softmax_cross_entropy_forward(confident, {3}), 0.0,
              1e-9);

  EXPECT_THROW(softmax_cross_entropy_forward(confident, {5}), Error);
  EXPECT_THROW(softmax_cross_entropy_forward(confident, {-1}), Error);
}

TEST(CrossEntropy, FiniteDifferenceGradient) {
  Rng rng(22);
  auto logits = random_tensor({4, 7}, rng);
  const std::vector<int> labels = {1, 0, 6, 3};
  const auto loss = [&]() {
    return softmax_cross_entropy_forward(logits, labels);
  };
  Tensor<double> probs;
  softmax_cross_entropy_forward(logits, labels, &probs);
  const auto g = softmax_cross_entropy_backward(1.0, probs, labels);
  GradCheck gc;
  Rng pick(23);
  gc.check_buffer(logits.data.data(), g.data.data(), logits.numel(), loss,
                  pick);
  EXPECT_LT(gc.max_rel_err, 1e-4);
}

TEST(Sgd, UpdateRule) {
  SgdMomentum<double> opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.0;

  std::vector<double> w = {1.0, -2.0};
  const std::vector<double> g = {0.5, 0.25};
  ParamRef<double> ref{w.data(), g.data(), 2};

  opt.step({ref});
  EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.1 * 0.5);
  EXPECT_DOUBLE_EQ(w[1], -2.0 - 0.1 * 0.25);

  // second step with the same gradient: total shift is lr*g*(1 + 1.9)
  opt.step({ref});
  EXPECT_NEAR(w[0], 1.0 - 0.1 * 0.5 * 2.9, 1e-12);
  EXPECT_NEAR(w[1], -2.0 - 0.1 * 0.25 * 2.9, 1e-12);
  EXPECT_EQ(opt.last_step_scalars, 2);
}

TEST(Sgd, ZeroGradient) {
  SgdMomentum<double> opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.0;
  std::vector<double> w = {3.0, -4.0};
  const std::vector<double> g = {0.0, 0.0};
  opt.step({ParamRef<double>{w.data(), g.data(), 2}});
  EXPECT_DOUBLE_EQ(w[0], 3.0);
  EXPECT_DOUBLE_EQ(w[1], -4.0);
}

TEST(Sgd, WeightDecayShrinksNorm) {
  SgdMomentum<double> opt;
  opt.lr = 0.01;
  opt.weight_decay = 1e-2;
  std::vector<double> w = {3.0, -4.0, 1.5};
  const std::vector<double> g = {0.0, 0.0, 0.0};
  double prev = std::sqrt(9.0 + 16.0 + 2.25);
  for (int step = 0; step < 20; ++step) {
    opt.step({ParamRef<double>{w.data(), g.data(), 3}});
    double norm = 0.0;
    for (const double v : w) norm += v * v;
    norm = std::sqrt(norm);
    EXPECT_LT(norm, prev);
    prev = norm;
  }
}

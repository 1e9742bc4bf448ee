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
#include <map>

#include "asf/model.hpp"

using namespace asf;

namespace {

Tensor<float> random_input(std::int64_t t, std::int64_t f, std::uint64_t seed,
                           std::int64_t n = 1) {
  Tensor<float> x({n, 1, t, f});
  Rng rng(seed);
  x.fill_normal(rng, 1.0f);
  return x;
}

std::map<std::string, std::pair<std::int64_t, std::int64_t>> expected_slow(
    std::int64_t in_t) {
  // time: /4 data stride, /2 conv1, /2 pool1; freq: /2 at conv1, pool1,
  // res3, res4, res5
  const std::int64_t t = in_t / 4;
  return {
      {"data", {t, 128}},      {"conv1", {t / 2, 64}},
      {"pool1", {t / 4, 32}},  {"res2", {t / 4, 32}},
      {"res3", {t / 4, 16}},   {"res4", {t / 4, 8}},
      {"res5", {t / 4, 4}},
  };
}

std::map<std::string, std::pair<std::int64_t, std::int64_t>> expected_fast(
    std::int64_t in_t) {
  return {
      {"data", {in_t, 128}},      {"conv1", {in_t / 2, 64}},
      {"pool1", {in_t / 4, 32}},  {"res2", {in_t / 4, 32}},
      {"res3", {in_t / 4, 16}},   {"res4", {in_t / 4, 8}},
      {"res5", {in_t / 4, 4}},
  };
}

}  // namespace

TEST(Params, PublishedCountsWithinTwoPercent) {
  const struct {
    Variant variant;
    double target;
  } cases[] = {
      {Variant::kSlowOnly, 24.89e6},       {Variant::kFastOnly, 0.49e6},
      {Variant::kTwoSlowLateFusion, 49.78e6},
      {Variant::kSlowResNet101, 46.11e6},  {Variant::kSlowFast, 26.88e6},
      {Variant::kSlowFastLateFusion, 25.38e6},
  };
  for (const auto& c : cases) {
    auto net = build_network<float>(c.variant, {97, 300}, 1, 0);
    const double count = static_cast<double>(net.count_params());
    EXPECT_LE(std::abs(count - c.target) / c.target, 0.02)
        << to_string(c.variant) << ": " << count;
  }
}

TEST(Params, BreakdownSumsToTotal) {
  auto net = build_network<float>(Variant::kSlowFast, {97, 300}, 4, 0);
  std::int64_t sum = 0;
  for (const auto& [module, count] : net.param_breakdown()) sum += count;
  EXPECT_EQ(sum, net.count_params());
}

TEST(Params, SinglePointwiseConvClosedForm) {
  Conv2dSpec s{64, 256, 1, 1, 1, 1, 0, 0, true};
  const auto layer = Conv2dLayer<float>::make(s);
  EXPECT_EQ(layer.param_count(), 64 * 256 + 256);
}

TEST(Shapes, StageScheduleFor400x128AndBoth) {
  auto net = build_network<float>(Variant::kSlowFast, {8}, 4, 1);
  for (const std::int64_t in_t : {400L, 512L}) {
    const auto trace = net.trace_forward(random_input(in_t, 128, 2));
    for (const auto& [stage, tf] : expected_slow(in_t)) {
      const auto& fm = trace.at("slow/" + stage);
      EXPECT_EQ(fm.dim(2), tf.first) << "slow/" << stage << " @" << in_t;
      EXPECT_EQ(fm.dim(3), tf.second) << "slow/" << stage << " @" << in_t;
    }
    for (const auto& [stage, tf] : expected_fast(in_t)) {
      const auto& fm = trace.at("fast/" + stage);
      EXPECT_EQ(fm.dim(2), tf.first) << "fast/" << stage << " @" << in_t;
      EXPECT_EQ(fm.dim(3), tf.second) << "fast/" << stage << " @" << in_t;
    }
  }
}

TEST(Shapes, ChannelRatioIsBetaEverywhere) {
  auto net = build_network<float>(Variant::kSlowFast, {8}, 4, 3);
  const auto trace = net.trace_forward(random_input(400, 128, 4));
  for (const char* stage : {"conv1", "pool1", "res2", "res3", "res4", "res5"}) {
    const auto& slow = trace.at(std::string("slow/") + stage);
    const auto& fast = trace.at(std::string("fast/") + stage);
    EXPECT_EQ(slow.dim(1), 8 * fast.dim(1)) << stage;
  }
}

TEST(Shapes, TemporalKernelPlacement) {
  auto net = build_network<float>(Variant::kSlowFast, {8}, 4, 5);
  // weight shape is [out, in, kt, kf]
  for (const auto& [name, p] : net.named_params()) {
    if (p->value.rank() != 4 || name.find("/bn") != std::string::npos) continue;
    const std::int64_t kt = p->value.dim(2);
    const bool is_slow = name.rfind("slow/", 0) == 0;
    const bool is_fast = name.rfind("fast/", 0) == 0;
    const bool is_lateral = name.rfind("lateral/", 0) == 0;
    if (is_slow) {
      const bool late_stage = name.find("/res4/") != std::string::npos ||
                              name.find("/res5/") != std::string::npos;
      if (late_stage) continue;  // time kernels allowed
      EXPECT_EQ(kt, 1) << name << " must not mix time";
    } else if (is_fast) {
      if (name.find("conv1") != std::string::npos) {
        EXPECT_EQ(kt, 5) << name;
      }
    } else if (is_lateral) {
      EXPECT_EQ(kt, 7) << name;
    }
  }
  // every fast stage holds at least one kt > 1 convolution
  for (const char* stage : {"/res2/", "/res3/", "/res4/", "/res5/"}) {
    bool found = false;
    for (const auto& [name, p] : net.named_params()) {
      if (name.rfind("fast/", 0) == 0 &&
          name.find(stage) != std::string::npos && p->value.rank() == 4 &&
          p->value.dim(2) > 1) {
        found = true;
      }
    }
    EXPECT_TRUE(found) << "fast" << stage;
  }
  // slow res4/res5 carry time kernels
  for (const char* stage : {"/res4/", "/res5/"}) {
    bool found = false;
    for (const auto& [name, p] : net.named_params()) {
      if (name.rfind("slow/", 0) == 0 &&
          name.find(stage) != std::string::npos && p->value.rank() == 4 &&
          p->value.dim(2) > 1) {
        found = true;
      }
    }
    EXPECT_TRUE(found) << "slow" << stage;
  }
}

TEST(Shapes, LateralAlignmentHoldsForOddSizes) {
  auto net = build_network<float>(Variant::kSlowFast, {4}, 8, 6);
  // the concat inside forward throws if the strided fast maps were misaligned
  for (const std::int64_t t : {64L, 400L, 512L}) {
    EXPECT_NO_THROW(net.trace_forward(random_input(t, 32, 7)));
  }
}

TEST(Heads, ConcatWidthIs2304AtFullWidth) {
  auto net = build_network<float>(Variant::kSlowFast, {97, 300}, 1, 0);
  for (const auto& head : net.submodels[0].heads) {
    EXPECT_EQ(head.weight->value.dim(1), 2304);
  }
  auto slow = build_network<float>(Variant::kSlowOnly, {97, 300}, 1, 0);
  EXPECT_EQ(slow.submodels[0].heads[0].weight->value.dim(1), 2048);
}

TEST(Forward, ZeroInputGivesHeadBiases) {
  auto net = build_network<float>(Variant::kSlowFast, {6}, 8, 11);
  // fresh residual blocks are identities (expand BN starts at scale 0), so a
  // zero input propagates zeros and the logits equal the head biases
  auto& bias = net.submodels[0].heads[0].bias->value;
  for (std::int64_t i = 0; i < bias.numel(); ++i) {
    bias.data[i] = 0.25f * static_cast<float>(i + 1);
  }
  Tensor<float> zeros({2, 1, 64, 32});
  Rng rng(0);
  auto input = ag::leaf(zeros, false);
  auto logits = net.forward(input, /*train=*/false, rng);
  for (std::int64_t row = 0; row < 2; ++row) {
    for (std::int64_t c = 0; c < 6; ++c) {
      EXPECT_NEAR(logits[0][0]->value.at2(row, c), bias.data[c], 1e-6f);
    }
  }
}

TEST(Forward, EvalIsDeterministic) {
  auto net = build_network<float>(Variant::kSlowFast, {5}, 8, 13);
  const auto x = random_input(64, 32, 14, 2);
  const auto a = net.predict_probs(x);
  const auto b = net.predict_probs(x);
  for (std::size_t h = 0; h < a.size(); ++h) {
    EXPECT_EQ(a[h].data, b[h].data);
  }
  // probabilities sum to one per row
  for (std::int64_t row = 0; row < 2; ++row) {
    double sum = 0.0;
    for (std::int64_t c = 0; c < 5; ++c) sum += a[0].at2(row, c);
    EXPECT_NEAR(sum, 1.0, 1e-5);
  }
}

TEST(Forward, ExtentMismatchThrows) {
  auto net = build_network<float>(Variant::kSlowOnly, {5}, 8, 15);
  // spectrogram batches are single-channel
  Tensor<float> two_channel({1, 2, 64, 32});
  Rng rng(16);
  two_channel.fill_normal(rng, 1.0f);
  EXPECT_THROW(net.trace_forward(two_channel), Error);
}

TEST(FeatureMaps, StageChannelExtraction) {
  auto net = build_network<float>(Variant::kSlowFast, {8}, 4, 17);
  const auto trace = net.trace_forward(random_input(400, 128, 18));

  const auto slow_res3 = stage_channel(trace, "slow/res3", 5);
  EXPECT_EQ(slow_res3.shape, (Shape{25, 16}));
  const auto fast_res5 = stage_channel(trace, "fast/res5", 0);
  EXPECT_EQ(fast_res5.shape, (Shape{100, 4}));

  EXPECT_THROW(stage_channel(trace, "slow/res9", 0), Error);
  EXPECT_THROW(stage_channel(trace, "slow/res3", 100000), Error);
  try {
    stage_channel(trace, "nope", 0);
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("slow/res3"), std::string::npos)
        << "error should list valid stages";
  }
}

TEST(ArchSpecJson, RoundTrip) {
  const ArchSpec original = slow_pathway(2, 23);
  const nlohmann::json j = original;
  const ArchSpec back = j.get<ArchSpec>();
  EXPECT_EQ(back.name, original.name);
  EXPECT_EQ(back.alpha, original.alpha);
  EXPECT_EQ(back.beta, original.beta);
  EXPECT_EQ(back.conv1.out_channels, original.conv1.out_channels);
  ASSERT_EQ(back.stages.size(), original.stages.size());
  for (std::size_t i = 0; i < back.stages.size(); ++i) {
    EXPECT_EQ(back.stages[i].name, original.stages[i].name);
    EXPECT_EQ(back.stages[i].blocks, original.stages[i].blocks);
    EXPECT_EQ(back.stages[i].kind, original.stages[i].kind);
    EXPECT_EQ(back.stages[i].freq_stride, original.stages[i].freq_stride);
  }
}

TEST(Variants, NamesParseAndReject) {
  for (const auto& [variant, name] : variant_names()) {
    EXPECT_EQ(variant_from_string(name), variant);
  }
  EXPECT_THROW(variant_from_string("resnet9000"), Error);
  EXPECT_THROW(build_network<float>(Variant::kSlowFast, {}, 1, 0), Error);
  EXPECT_THROW(build_network<float>(Variant::kSlowFast, {1}, 1, 0), Error);
  // width divisor must divide the channel counts
  EXPECT_THROW(build_network<float>(Variant::kSlowFast, {8}, 3, 0), Error);
  EXPECT_THROW(build_network<float>(Variant::kFastOnly, {8}, 16, 0), Error);
}

TEST(Variants, LateFusionAveragesSubmodelProbs) {
  auto net = build_network<float>(Variant::kSlowFastLateFusion, {4}, 8, 19);
  ASSERT_EQ(net.submodels.size(), 2u);
  const auto x = random_input(64, 32, 20);
  const auto combined = net.predict_probs(x);

  // manual average over per-submodel softmax outputs
  Rng rng(0);
  auto input = ag::leaf(x, false);
  auto logits = net.forward(input, false, rng);
  Tensor<double> manual({1, 4});
  for (std::size_t s = 0; s < 2; ++s) {
    const auto p = softmax(logits[s][0]->value.cast<double>());
    for (std::int64_t c = 0; c < 4; ++c) manual.at2(0, c) += 0.5 * p.at2(0, c);
  }
  for (std::int64_t c = 0; c < 4; ++c) {
    EXPECT_NEAR(combined[0].at2(0, c), manual.at2(0, c), 1e-12);
  }
}

TEST(Variants, SingleStreamKindsDiffer) {
  auto plain = build_network<float>(Variant::kResNet50Plain, {8}, 4, 21);
  auto sep = build_network<float>(Variant::kResNet50Separable, {8}, 4, 21);
  // the plain variant has 3x3 middle convs everywhere; separable has a 3x1
  // conv_a plus 1x3 conv_b in every stage
  bool plain_has_3x3 = false, sep_has_3x3 = false;
  for (const auto& [name, p] : plain.named_params()) {
    if (p->value.rank() == 4 && p->value.dim(2) == 3 && p->value.dim(3) == 3) {
      plain_has_3x3 = true;
    }
  }
  for (const auto& [name, p] : sep.named_params()) {
    if (p->value.rank() == 4 && p->value.dim(2) == 3 && p->value.dim(3) == 3) {
      sep_has_3x3 = true;
    }
  }
  EXPECT_TRUE(plain_has_3x3);
  EXPECT_FALSE(sep_has_3x3);
  EXPECT_NE(plain.count_params(), sep.count_params());

  // both still follow the slow shape schedule
  const auto trace = sep.trace_forward(random_input(400, 128, 22));
  EXPECT_EQ(trace.at("single/res5").dim(2), 25);
  EXPECT_EQ(trace.at("single/res5").dim(3), 4);
}

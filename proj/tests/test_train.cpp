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
#include <filesystem>

#include "asf/train.hpp"

using namespace asf;

namespace {

// Tiny separable toy set: each class concentrates energy in its own mel band.
ClipSet toy_clips(int per_class, int n_classes, std::uint64_t seed,
                  std::int64_t frames = 64, std::int64_t mels = 32) {
  ClipSet out;
  Rng rng(seed);
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      LabeledClip clip;
      clip.clip_id = "toy_" + std::to_string(c) + "_" + std::to_string(i);
      clip.labels = {c};
      clip.spec.n_frames = frames;
      clip.spec.n_mels = mels;
      clip.spec.hop_ms = 5.0f;
      clip.spec.window_ms = 10.0f;
      clip.spec.values.resize(static_cast<std::size_t>(frames * mels));
      const std::int64_t band = 4 + c * (mels / n_classes);
      for (std::int64_t t = 0; t < frames; ++t) {
        for (std::int64_t m = 0; m < mels; ++m) {
          float v = static_cast<float>(0.3 * rng.normal());
          if (m >= band && m < band + 4) v += 3.0f;
          clip.spec.at(t, m) = v;
        }
      }
      out.push_back(std::move(clip));
    }
  }
  return out;
}

TrainConfig quiet_config(int epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  cfg.seed = seed;
  cfg.base_lr = 0.02;
  cfg.lr_drop_epochs = {30, 40};
  cfg.dropout_p = 0.0;
  cfg.augment.enabled = false;
  return cfg;
}

std::filesystem::path fresh_dir(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Schedule, StepDrops) {
  TrainConfig cfg;
  cfg.base_lr = 0.01;
  cfg.lr_drop_epochs = {30, 40};
  EXPECT_DOUBLE_EQ(lr_at(cfg, 0), 0.01);
  EXPECT_DOUBLE_EQ(lr_at(cfg, 29), 0.01);
  EXPECT_NEAR(lr_at(cfg, 30), 0.001, 1e-12);
  EXPECT_NEAR(lr_at(cfg, 39), 0.001, 1e-12);
  EXPECT_NEAR(lr_at(cfg, 40), 0.0001, 1e-12);

  const auto scratch = TrainConfig::scratch_defaults();
  EXPECT_EQ(scratch.epochs, 50);
  EXPECT_EQ(scratch.lr_drop_epochs, (std::vector<int>{30, 40}));
  EXPECT_FALSE(scratch.finetune);
  const auto ft = TrainConfig::finetune_defaults();
  EXPECT_EQ(ft.epochs, 30);
  EXPECT_EQ(ft.lr_drop_epochs, (std::vector<int>{20, 25}));
  EXPECT_TRUE(ft.finetune);
}

TEST(TrainEpoch, WeightDecayTouchesEveryParameter) {
  auto net = build_network<double>(Variant::kSlowFast, {2}, 8, 3, 0.0);
  const auto clips = toy_clips(2, 2, 4);
  SgdMomentum<double> optim;
  auto cfg = quiet_config(1, 5);
  train_epoch(net, clips, cfg, 0, optim, 64);
  EXPECT_EQ(optim.last_step_scalars, net.count_params());
}

TEST(TrainEpoch, RejectsBadLabelsAndNonFiniteLoss) {
  auto net = build_network<double>(Variant::kSlowOnly, {2}, 8, 6, 0.0);
  auto clips = toy_clips(2, 2, 7);
  clips[0].labels = {9};
  SgdMomentum<double> optim;
  auto cfg = quiet_config(1, 8);
  EXPECT_THROW(train_epoch(net, clips, cfg, 0, optim, 64), Error);

  clips[0].labels = {0};
  // poison one weight: the loss must abort with diagnostics, not propagate
  net.named_params()[0].second->value.data[0] =
      std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train_epoch(net, clips, cfg, 0, optim, 64), Error);
}

TEST(Finetune, FreezesAllBnExceptFirst) {
  auto net = build_network<double>(Variant::kSlowFast, {2}, 8, 9, 0.0);
  const auto clips = toy_clips(3, 2, 10);

  std::vector<Tensor<double>> before_mean;
  for (auto* bn : net.bn_units()) before_mean.push_back(bn->state.running_mean);

  net.freeze_bn_except_first();
  SgdMomentum<double> optim;
  auto cfg = quiet_config(1, 11);
  cfg.finetune = true;
  train_epoch(net, clips, cfg, 0, optim, 64);

  const auto units = net.bn_units();
  // the first layer's statistics moved; every other layer's stayed put
  EXPECT_NE(units[0]->state.running_mean.data, before_mean[0].data);
  for (std::size_t i = 1; i < units.size(); ++i) {
    EXPECT_EQ(units[i]->state.running_mean.data, before_mean[i].data)
        << "bn " << i << " should be frozen";
  }
}

TEST(Fit, HistoryLengthAndDeterminism) {
  const auto train_set = toy_clips(4, 2, 12);
  const auto val_set = toy_clips(2, 2, 13);
  auto cfg = quiet_config(3, 14);
  cfg.dropout_p = 0.5;
  cfg.augment.enabled = true;
  cfg.augment.freq_mask_param = 8;
  cfg.augment.time_mask_param = 8;
  cfg.augment.time_warp_w = 3;

  auto run = [&]() {
    auto net = build_network<double>(Variant::kSlowFast, {2}, 8, cfg.seed,
                                     cfg.dropout_p);
    return fit(net, train_set, val_set, cfg, 64);
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.history.size(), 3u);
  ASSERT_EQ(b.history.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    // bit-identical history records in double precision
    EXPECT_EQ(a.history[e].dump(), b.history[e].dump());
  }

  // a different seed changes the trajectory
  auto cfg2 = cfg;
  cfg2.seed = 999;
  auto net2 = build_network<double>(Variant::kSlowFast, {2}, 8, cfg2.seed,
                                    cfg2.dropout_p);
  const auto c = fit(net2, train_set, val_set, cfg2, 64);
  EXPECT_NE(a.history[0].dump(), c.history[0].dump());
}

TEST(Fit, ResumeReproducesTheUninterruptedRun) {
  const auto train_set = toy_clips(4, 2, 15);
  const auto val_set = toy_clips(2, 2, 16);
  auto cfg = quiet_config(4, 17);

  const auto dir_full = fresh_dir("asf_fit_full");
  {
    auto net = build_network<float>(Variant::kSlowOnly, {2}, 8, cfg.seed, 0.0f);
    fit(net, train_set, val_set, cfg, 64, dir_full);
  }

  const auto dir_resumed = fresh_dir("asf_fit_resumed");
  {
    auto cfg_half = cfg;
    cfg_half.epochs = 2;
    auto net = build_network<float>(Variant::kSlowOnly, {2}, 8, cfg.seed, 0.0f);
    fit(net, train_set, val_set, cfg_half, 64, dir_resumed);
  }
  {
    auto net = build_network<float>(Variant::kSlowOnly, {2}, 8, cfg.seed, 0.0f);
    fit(net, train_set, val_set, cfg, 64, dir_resumed,
        dir_resumed / "last_state.ckpt");
  }

  std::ifstream fa(dir_full / "history.jsonl"), fb(dir_resumed / "history.jsonl");
  std::string line_a, line_b;
  int lines = 0;
  while (std::getline(fa, line_a)) {
    ASSERT_TRUE(static_cast<bool>(std::getline(fb, line_b)));
    EXPECT_EQ(line_a, line_b) << "epoch record " << lines;
    ++lines;
  }
  EXPECT_EQ(lines, 4);
  EXPECT_FALSE(static_cast<bool>(std::getline(fb, line_b)));

  std::filesystem::remove_all(dir_full);
  std::filesystem::remove_all(dir_resumed);
}

TEST(Fit, OverfitsEightClipsToPerfectAccuracy) {
  // 8 clips, 2 classes: training accuracy must reach 100% within 50 epochs,
  // and after the first LR drop the epoch-average loss is non-increasing.
  // Full-batch steps keep the per-epoch averages comparable.
  const auto train_set = toy_clips(4, 2, 18);
  auto cfg = quiet_config(50, 19);
  cfg.batch_size = 8;
  cfg.base_lr = 0.01;
  auto net = build_network<double>(Variant::kSlowFast, {2}, 8, cfg.seed, 0.0);
  const auto result = fit(net, train_set, {}, cfg, 64);

  ASSERT_EQ(result.history.size(), 50u);
  const auto& last = result.history.back();
  EXPECT_DOUBLE_EQ(last.at("train_top1")[0].get<double>(), 1.0);

  const int first_drop = cfg.lr_drop_epochs[0];
  for (std::size_t e = 1; e < result.history.size(); ++e) {
    const double prev = result.history[e - 1].at("train_loss").get<double>();
    const double cur = result.history[e].at("train_loss").get<double>();
    if (static_cast<int>(e) <= first_drop) {
      EXPECT_LE(cur, prev * 1.05 + 1e-9) << "epoch " << e;
    } else {
      EXPECT_LE(cur, prev + 1e-9) << "epoch " << e;
    }
  }
}

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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asf/augment.hpp"
#include "asf/checkpoint.hpp"
#include "asf/common.hpp"
#include "asf/dsp.hpp"
#include "asf/eval.hpp"
#include "asf/manifest.hpp"
#include "asf/model.hpp"
#include "asf/optim.hpp"
#include "asf/rng.hpp"

namespace asf {

struct TrainConfig {
  int epochs = 50;
  double base_lr = 0.01;
  std::vector<int> lr_drop_epochs = {30, 40};
  double lr_drop_factor = 0.1;
  int batch_size = 8;
  std::uint64_t seed = 0;
  bool finetune = false;  // freezes every BN layer except the first
  double dropout_p = 0.5;
  AugmentConfig augment;
  int eval_segments = 1;  // per-epoch validation segments

  /// Scratch-training defaults drop at {30, 40}; fine-tuning at {20, 25}.
  static TrainConfig scratch_defaults() { return TrainConfig{}; }
  static TrainConfig finetune_defaults() {
    TrainConfig c;
    c.epochs = 30;
    c.lr_drop_epochs = {20, 25};
    c.finetune = true;
    return c;
  }
};

/// Step schedule: the rate is multiplied by lr_drop_factor at each listed
/// epoch, so lr(e) = base * factor^|{d : d <= e}|.
inline double lr_at(const TrainConfig& cfg, int epoch) {
  double lr = cfg.base_lr;
  for (const int d : cfg.lr_drop_epochs) {
    if (epoch >= d) lr *= cfg.lr_drop_factor;
  }
  return lr;
}

/// One dataset clip: the cached full-clip spectrogram plus its labels.
struct LabeledClip {
  std::string clip_id;
  Spectrogram spec;
  std::vector<int> labels;
  std::vector<std::string> tags;
};

using ClipSet = std::vector<LabeledClip>;

/// Loads the cached spectrograms for one manifest split.
inline ClipSet load_clipset(const Manifest& manifest, const std::string& split,
                            const std::filesystem::path& cache_dir,
                            int expected_mels) {
  ClipSet out;
  for (const auto& row : manifest.split_rows(split)) {
    LabeledClip clip;
    clip.clip_id = row.clip_id;
    clip.labels = row.labels;
    clip.tags = row.tags;
    const auto path = cache_dir / (row.clip_id + ".asfs");
    clip.spec = cache_read(path);
    check(clip.spec.n_mels == expected_mels, "clip ", row.clip_id, " cache has ",
          clip.spec.n_mels, " mel bands, expected ", expected_mels);
    out.push_back(std::move(clip));
  }
  return out;
}

struct EpochStats {
  double loss = 0.0;
  std::vector<double> top1;  // per head, on training batches
};

namespace detail {

/// Per-clip stream for segment choice and augmentation, derived from
/// (seed, epoch, clip id) so runs are reproducible and order-independent.
inline Rng clip_rng(std::uint64_t seed, int epoch, const std::string& clip_id) {
  return Rng(seed).fork(0xC11F).fork(static_cast<std::uint64_t>(epoch)).fork(
      Rng::hash_str(clip_id));
}

}  // namespace detail

/// One pass over a seeded shuffle of the training set: random segment per
/// clip, augmentation, cross-entropy, SGD steps. Returns mean loss and
/// running top-1 over the training batches.
template <typename R>
EpochStats train_epoch(Network<R>& net, const ClipSet& train_set,
                       const TrainConfig& cfg, int epoch,
                       SgdMomentum<R>& optim, std::int64_t target_frames) {
  check(!train_set.empty(), "train_epoch: empty training set");
  for (const auto& clip : train_set) {
    check(clip.labels.size() == net.num_heads(), "clip ", clip.clip_id,
          " has ", clip.labels.size(), " labels, network expects ",
          net.num_heads());
    for (std::size_t h = 0; h < clip.labels.size(); ++h) {
      check(clip.labels[h] < net.num_classes[h], "clip ", clip.clip_id,
            " label out of range");
    }
  }
  optim.lr = static_cast<R>(lr_at(cfg, epoch));

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng = Rng(cfg.seed).fork(0x5AFF).fork(epoch);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(shuffle_rng.uniform_int(
                  static_cast<std::int64_t>(i)))]);
  }
  Rng dropout_rng = Rng(cfg.seed).fork(0xD0).fork(epoch);

  EpochStats stats;
  stats.top1.assign(net.num_heads(), 0.0);
  std::int64_t seen = 0;
  double loss_sum = 0.0;
  std::int64_t steps = 0;
  std::vector<std::int64_t> hits(net.num_heads(), 0);

  for (std::size_t begin = 0; begin < order.size();
       begin += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(
        order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
    std::vector<Spectrogram> batch_specs;
    std::vector<std::vector<int>> labels(net.num_heads());
    for (std::size_t i = begin; i < end; ++i) {
      const LabeledClip& clip = train_set[order[i]];
      Rng crng = detail::clip_rng(cfg.seed, epoch, clip.clip_id);
      const std::int64_t max_start =
          std::max<std::int64_t>(0, clip.spec.n_frames - target_frames);
      const std::int64_t start =
          max_start == 0 ? 0 : crng.uniform_int(max_start + 1);
      Spectrogram seg = slice_frames(clip.spec, start, target_frames);
      seg = apply_augment(seg, cfg.augment, crng);
      batch_specs.push_back(std::move(seg));
      for (std::size_t h = 0; h < net.num_heads(); ++h) {
        labels[h].push_back(clip.labels[h]);
      }
    }
    std::vector<const Spectrogram*> ptrs;
    for (const auto& s : batch_specs) ptrs.push_back(&s);
    const Tensor<R> batch = specs_to_batch<R>(ptrs);

    net.zero_grads();
    auto input = ag::leaf(batch, false);
    auto all_logits = net.forward(input, /*train=*/true, dropout_rng);
    std::vector<VarPtr<R>> parts;
    for (auto& sub_logits : all_logits) {
      std::vector<VarPtr<R>> head_losses;
      for (std::size_t h = 0; h < sub_logits.size(); ++h) {
        head_losses.push_back(
            ag::softmax_cross_entropy(sub_logits[h], labels[h]));
      }
      parts.push_back(ag::scalar_mean(head_losses));
    }
    VarPtr<R> loss = parts[0];
    if (parts.size() > 1) {
      Tensor<R> total({1});
      for (const auto& p : parts) total.data[0] += p->value.data[0];
      loss = ag::make_node<R>(std::move(total), parts, [parts](Var<R>& self) {
        Tensor<R> g({1});
        g.data[0] = self.grad.data[0];
        for (const auto& p : parts) p->accumulate(g);
      });
    }
    const double loss_val = static_cast<double>(loss->value.data[0]);
    check(std::isfinite(loss_val), "train_epoch: non-finite loss at epoch ",
          epoch, ", step ", steps, " (lr=", optim.lr, ")");
    ag::backward(loss);
    optim.step(net.param_refs());

    // batch top-1 from the first submodel's logits (probability averaging
    // across submodels only matters at prediction time)
    for (std::size_t h = 0; h < net.num_heads(); ++h) {
      const Tensor<R>& lg = all_logits[0][h]->value;
      for (std::int64_t row = 0; row < lg.dim(0); ++row) {
        std::int64_t arg = 0;
        for (std::int64_t c = 1; c < lg.dim(1); ++c) {
          if (lg.at2(row, c) > lg.at2(row, arg)) arg = c;
        }
        if (static_cast<int>(arg) == labels[h][static_cast<std::size_t>(row)]) {
          ++hits[h];
        }
      }
    }
    seen += static_cast<std::int64_t>(end - begin);
    loss_sum += loss_val;
    ++steps;
  }

  stats.loss = loss_sum / static_cast<double>(steps);
  for (std::size_t h = 0; h < net.num_heads(); ++h) {
    stats.top1[h] = static_cast<double>(hits[h]) / static_cast<double>(seen);
  }
  return stats;
}

/// Validation pass: segment-averaged predictions over a clip set.
template <typename R>
PredictionSet predict_clipset(Network<R>& net, const ClipSet& clips,
                              std::int64_t target_frames, int n_segments) {
  PredictionSet preds;
  preds.num_classes = net.num_classes;
  preds.labels.resize(net.num_heads());
  preds.scores.resize(net.num_heads());
  for (const auto& clip : clips) {
    auto probs = predict_clip(net, clip.spec, target_frames, n_segments);
    preds.clip_ids.push_back(clip.clip_id);
    preds.tags.push_back(clip.tags);
    for (std::size_t h = 0; h < net.num_heads(); ++h) {
      preds.labels[h].push_back(clip.labels[h]);
      preds.scores[h].push_back(std::move(probs[h]));
    }
  }
  return preds;
}

struct FitResult {
  std::vector<nlohmann::json> history;  // one record per epoch
  double best_val_top1 = -1.0;
  int best_epoch = -1;
  std::filesystem::path best_checkpoint;  // empty when out_dir unset
};

namespace detail {

template <typename R>
std::vector<CheckpointRecord> fit_state_records(Network<R>& net,
                                                SgdMomentum<R>& optim,
                                                int next_epoch,
                                                double best_val,
                                                int best_epoch) {
  std::vector<CheckpointRecord> recs;
  for (auto& rec : net.state_records()) {
    rec.name = "param/" + rec.name;
    recs.push_back(std::move(rec));
  }
  auto named = net.named_params();
  check(optim.velocity.empty() || optim.velocity.size() == named.size(),
        "fit: optimizer/parameter mismatch");
  for (std::size_t i = 0; i < optim.velocity.size(); ++i) {
    Tensor<R> v = Tensor<R>::from(named[i].second->value.shape,
                                  optim.velocity[i]);
    recs.push_back(to_record("opt/v/" + named[i].first, v));
  }
  Tensor<float> meta({3});
  meta.data[0] = static_cast<float>(next_epoch);
  meta.data[1] = static_cast<float>(best_val);
  meta.data[2] = static_cast<float>(best_epoch);
  recs.push_back(to_record("meta/fit", meta));
  return recs;
}

}  // namespace detail

/// Full training drive: epochs, per-epoch validation, JSON-lines history and
/// best-by-val-top1 checkpointing. With resume_from set, continues a run
/// from its state checkpoint (parameters, optimizer velocity, epoch index).
template <typename R>
FitResult fit(Network<R>& net, const ClipSet& train_set, const ClipSet& val_set,
              const TrainConfig& cfg, std::int64_t target_frames,
              const std::optional<std::filesystem::path>& out_dir = {},
              const std::optional<std::filesystem::path>& resume_from = {}) {
  if (cfg.finetune) net.freeze_bn_except_first();
  SgdMomentum<R> optim;
  optim.lr = static_cast<R>(cfg.base_lr);

  FitResult result;
  int start_epoch = 0;
  if (resume_from) {
    const auto records = load_checkpoint(*resume_from);
    auto idx = index_records(records);
    std::vector<CheckpointRecord> params;
    for (const auto& rec : records) {
      if (rec.name.rfind("param/", 0) == 0) {
        CheckpointRecord r = rec;
        r.name = rec.name.substr(6);
        params.push_back(std::move(r));
      }
    }
    net.load_records(params);
    auto named = net.named_params();
    optim.velocity.clear();
    for (const auto& [name, p] : named) {
      auto it = idx.find("opt/v/" + name);
      check(it != idx.end(), "fit: resume checkpoint lacks velocity for ",
            name);
      std::vector<R> v(it->second->values.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<R>(it->second->values[i]);
      }
      optim.velocity.push_back(std::move(v));
    }
    auto it = idx.find("meta/fit");
    check(it != idx.end(), "fit: resume checkpoint lacks meta record");
    start_epoch = static_cast<int>(it->second->values[0]);
    result.best_val_top1 = it->second->values[1];
    result.best_epoch = static_cast<int>(it->second->values[2]);
  }

  std::filesystem::path history_path, best_path, state_path;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    history_path = *out_dir / "history.jsonl";
    best_path = *out_dir / "best.ckpt";
    state_path = *out_dir / "last_state.ckpt";
    result.best_checkpoint = best_path;
    if (resume_from && std::filesystem::exists(history_path)) {
      std::ifstream is(history_path);
      std::string line;
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        if (j.at("epoch").get<int>() < start_epoch) {
          result.history.push_back(std::move(j));
        }
      }
    }
  }

  const auto flush_history = [&]() {
    if (!out_dir) return;
    std::ofstream os(history_path, std::ios::trunc);
    for (const auto& j : result.history) os << j.dump() << "\n";
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const EpochStats stats =
        train_epoch(net, train_set, cfg, epoch, optim, target_frames);

    nlohmann::json rec;
    rec["epoch"] = epoch;
    rec["lr"] = lr_at(cfg, epoch);
    rec["train_loss"] = stats.loss;
    rec["train_top1"] = stats.top1;

    double val_mean = 0.0;
    if (!val_set.empty()) {
      PredictionSet preds =
          predict_clipset(net, val_set, target_frames, cfg.eval_segments);
      std::vector<double> val_top1;
      for (std::size_t h = 0; h < net.num_heads(); ++h) {
        val_top1.push_back(top_k_accuracy(preds, h, 1));
        val_mean += val_top1.back();
      }
      val_mean /= static_cast<double>(net.num_heads());
      rec["val_top1"] = val_top1;
    }
    result.history.push_back(rec);
    flush_history();

    if (!val_set.empty() && val_mean > result.best_val_top1) {
      result.best_val_top1 = val_mean;
      result.best_epoch = epoch;
      if (out_dir) net.save(best_path);
    }
    if (out_dir) {
      save_checkpoint(state_path,
                      detail::fit_state_records(net, optim, epoch + 1,
                                                result.best_val_top1,
                                                result.best_epoch));
    }
  }
  if (out_dir && val_set.empty()) {
    // no validation: persist the final weights as the deliverable
    net.save(best_path);
  }
  return result;
}

}  // namespace asf

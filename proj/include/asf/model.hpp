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

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asf/arch.hpp"
#include "asf/autograd.hpp"
#include "asf/checkpoint.hpp"
#include "asf/common.hpp"
#include "asf/optim.hpp"
#include "asf/rng.hpp"
#include "asf/tensor_ops.hpp"

namespace asf {

// Networks are compiled from ArchSpec descriptions. A SubModel is one
// independently trained unit (pathways + heads); late-fusion variants hold
// several submodels and average their softmax outputs at prediction time.

/// Post-activation feature maps recorded during a forward pass, keyed by
/// stage name ("slow/res3", "fast/pool1", "input", ...).
template <typename R>
using ForwardTrace = std::map<std::string, Tensor<R>>;

namespace detail {

template <typename R>
struct ConvUnit {
  Conv2dSpec spec;
  VarPtr<R> weight;
  VarPtr<R> bias;  // null unless spec.has_bias

  void init(const std::string& name, Rng& rng) {
    Tensor<R> w({spec.out_channels, spec.in_channels, spec.kt, spec.kf});
    const double fan_out =
        static_cast<double>(spec.out_channels * spec.kt * spec.kf);
    w.fill_normal(rng, static_cast<R>(std::sqrt(2.0 / fan_out)));
    weight = ag::param(std::move(w), name + "/weight");
    if (spec.has_bias) {
      bias = ag::param(Tensor<R>({spec.out_channels}), name + "/bias");
    }
  }

  VarPtr<R> operator()(VarPtr<R> x) const {
    return ag::conv2d(x, weight, bias, spec);
  }
};

template <typename R>
struct BnUnit {
  VarPtr<R> scale, shift;
  BatchNormLayer<R> state;

  void init(const std::string& name, std::int64_t channels,
            R initial_scale = R(1)) {
    state = BatchNormLayer<R>::make(channels);
    scale = ag::param(Tensor<R>({channels}, initial_scale), name + "/scale");
    shift = ag::param(Tensor<R>({channels}), name + "/shift");
  }

  VarPtr<R> operator()(VarPtr<R> x, bool train) {
    const BnMode mode = !train ? BnMode::kEval
                               : (state.frozen ? BnMode::kFrozen
                                               : BnMode::kTrain);
    return ag::batchnorm(x, scale, shift, state, mode);
  }
};

template <typename R>
struct LinearUnit {
  VarPtr<R> weight, bias;

  void init(const std::string& name, std::int64_t in, std::int64_t out,
            Rng& rng) {
    Tensor<R> w({out, in});
    w.fill_normal(rng, static_cast<R>(0.01));
    weight = ag::param(std::move(w), name + "/weight");
    bias = ag::param(Tensor<R>({out}), name + "/bias");
  }

  VarPtr<R> operator()(VarPtr<R> x) const {
    return ag::linear(x, weight, bias);
  }
};

/// Bottleneck residual block: reduce -> middle -> expand, BN after every
/// convolution, ReLU after the first two and after the shortcut sum. The
/// expand BN starts at scale 0 so a fresh block is the identity.
template <typename R>
struct Bottleneck {
  ConvUnit<R> conv_a, conv_b, conv_c;
  BnUnit<R> bn_a, bn_b, bn_c;
  std::optional<ConvUnit<R>> proj;
  std::optional<BnUnit<R>> bn_proj;

  void init(const std::string& name, std::int64_t in_ch, std::int64_t mid_ch,
            std::int64_t out_ch, BlockKind kind, int freq_stride, Rng& rng) {
    const int a_kt = (kind == BlockKind::kSeparableTF) ? 3 : 1;
    const int b_kt = (kind == BlockKind::kPlain2d) ? 3 : 1;

    conv_a.spec = {in_ch, mid_ch, a_kt, 1, 1, 1, a_kt / 2, 0, false};
    conv_a.init(name + "/conv_a", rng);
    bn_a.init(name + "/bn_a", mid_ch);

    conv_b.spec = {mid_ch, mid_ch, b_kt, 3, 1, freq_stride, b_kt / 2, 1, false};
    conv_b.init(name + "/conv_b", rng);
    bn_b.init(name + "/bn_b", mid_ch);

    conv_c.spec = {mid_ch, out_ch, 1, 1, 1, 1, 0, 0, false};
    conv_c.init(name + "/conv_c", rng);
    bn_c.init(name + "/bn_c", out_ch, R(0));

    if (in_ch != out_ch || freq_stride != 1) {
      ConvUnit<R> p;
      p.spec = {in_ch, out_ch, 1, 1, 1, freq_stride, 0, 0, false};
      p.init(name + "/proj", rng);
      proj = std::move(p);
      BnUnit<R> pb;
      pb.init(name + "/bn_proj", out_ch);
      bn_proj = std::move(pb);
    }
  }

  VarPtr<R> forward(VarPtr<R> x, bool train) {
    VarPtr<R> h = ag::relu(bn_a(conv_a(x), train));
    h = ag::relu(bn_b(conv_b(h), train));
    h = bn_c(conv_c(h), train);
    VarPtr<R> shortcut = x;
    if (proj) {
      shortcut = (*bn_proj)((*proj)(shortcut), train);
    }
    // elementwise sum
    Tensor<R> sum = h->value;
    add_into(sum.data, shortcut->value.data);
    auto node = ag::make_node<R>(
        std::move(sum), {h, shortcut}, [h, shortcut](Var<R>& self) {
          if (h->requires_grad) h->accumulate(self.grad);
          if (shortcut->requires_grad) shortcut->accumulate(self.grad);
        });
    return ag::relu(node);
  }
};

}  // namespace detail

/// One compiled pathway.
template <typename R>
struct Pathway {
  ArchSpec spec;
  std::string prefix;  // e.g. "slow"
  detail::ConvUnit<R> conv1;
  detail::BnUnit<R> bn1;
  std::vector<std::vector<detail::Bottleneck<R>>> stages;

  /// extra_in widens the first block of each stage (channels concatenated
  /// in by lateral connections before the stage runs).
  void build(const ArchSpec& arch, const std::string& name_prefix, Rng& rng,
             const std::vector<std::int64_t>& extra_in = {}) {
    spec = arch;
    prefix = name_prefix;
    conv1.spec = {1,
                  arch.conv1.out_channels,
                  arch.conv1.kt,
                  arch.conv1.kf,
                  arch.conv1.stride_t,
                  arch.conv1.stride_f,
                  arch.conv1.kt / 2,
                  arch.conv1.kf / 2,
                  false};
    conv1.init(prefix + "/conv1", rng);
    bn1.init(prefix + "/bn1", arch.conv1.out_channels);

    std::int64_t in_ch = arch.conv1.out_channels;
    for (std::size_t s = 0; s < arch.stages.size(); ++s) {
      const auto& st = arch.stages[s];
      if (s < extra_in.size()) in_ch += extra_in[s];
      std::vector<detail::Bottleneck<R>> blocks(st.blocks);
      for (int b = 0; b < st.blocks; ++b) {
        const std::string name =
            prefix + "/" + st.name + "/b" + std::to_string(b);
        blocks[b].init(name, in_ch, st.bottleneck_channels, st.out_channels,
                       st.kind, b == 0 ? st.freq_stride : 1, rng);
        in_ch = st.out_channels;
      }
      stages.push_back(std::move(blocks));
    }
  }

  /// conv1 + bn + relu + pool1 (the pre-stage stem).
  VarPtr<R> stem(VarPtr<R> x, bool train, ForwardTrace<R>* trace) {
    VarPtr<R> h = ag::subsample_time(x, spec.alpha);
    if (trace) (*trace)[prefix + "/data"] = h->value;
    h = ag::relu(bn1(conv1(h), train));
    if (trace) (*trace)[prefix + "/conv1"] = h->value;
    h = ag::maxpool2d(h, spec.pool1);
    if (trace) (*trace)[prefix + "/pool1"] = h->value;
    return h;
  }

  VarPtr<R> stage_forward(std::size_t idx, VarPtr<R> x, bool train,
                          ForwardTrace<R>* trace) {
    for (auto& block : stages[idx]) x = block.forward(x, train);
    if (trace) (*trace)[prefix + "/" + spec.stages[idx].name] = x->value;
    return x;
  }

  std::int64_t out_channels() const { return spec.stages.back().out_channels; }

  /// Channel widths seen by lateral taps: after pool1 and after each stage.
  std::vector<std::int64_t> tap_channels() const {
    std::vector<std::int64_t> taps{spec.conv1.out_channels};
    for (const auto& st : spec.stages) taps.push_back(st.out_channels);
    return taps;
  }
};

/// One independently trained unit: one or two pathways plus classifier heads.
/// When fused, time-strided lateral convolutions carry the fast pathway's
/// features into the slow pathway before each stage.
template <typename R>
struct SubModel {
  std::string prefix;  // "" or "m0/", "m1/"
  std::vector<Pathway<R>> pathways;
  std::vector<detail::ConvUnit<R>> laterals;  // fused variants only
  std::vector<std::string> lateral_taps;
  std::vector<detail::LinearUnit<R>> heads;
  R dropout_p = R(0.5);
  bool fused = false;

  void build_single(const ArchSpec& arch, const std::vector<int>& num_classes,
                    R dropout, Rng& rng) {
    dropout_p = dropout;
    fused = false;
    Pathway<R> p;
    p.build(arch, prefix + arch.name, rng);
    pathways.push_back(std::move(p));
    init_heads(pathways[0].out_channels(), num_classes, rng);
  }

  void build_fused(const ArchSpec& slow, const ArchSpec& fast,
                   const std::vector<int>& num_classes, R dropout, Rng& rng) {
    dropout_p = dropout;
    fused = true;

    // one lateral per fusion point: after pool1, res2, res3, res4; each
    // widens the slow stage it feeds by twice the fast channels at the tap
    Pathway<R> pf;
    pf.build(fast, prefix + "fast", rng);
    const auto taps = pf.tap_channels();
    std::vector<std::int64_t> extra_in;
    lateral_taps = {"pool1"};
    for (std::size_t i = 0; i + 1 < slow.stages.size(); ++i) {
      lateral_taps.push_back(slow.stages[i].name);
    }
    for (std::size_t i = 0; i < lateral_taps.size(); ++i) {
      extra_in.push_back(2 * taps[i]);
    }
    Pathway<R> ps;
    ps.build(slow, prefix + "slow", rng, extra_in);
    for (std::size_t i = 0; i < lateral_taps.size(); ++i) {
      detail::ConvUnit<R> lat;
      lat.spec = {taps[i], 2 * taps[i], 7,          1, slow.alpha, 1,
                  3,       0,           false};
      lat.init(prefix + "lateral/" + lateral_taps[i], rng);
      laterals.push_back(std::move(lat));
    }

    pathways.push_back(std::move(ps));
    pathways.push_back(std::move(pf));
    init_heads(pathways[0].out_channels() + pathways[1].out_channels(),
               num_classes, rng);
  }

  void init_heads(std::int64_t in_features, const std::vector<int>& num_classes,
                  Rng& rng) {
    for (std::size_t h = 0; h < num_classes.size(); ++h) {
      detail::LinearUnit<R> head;
      head.init(prefix + "head" + std::to_string(h), in_features,
                num_classes[h], rng);
      heads.push_back(std::move(head));
    }
  }

  /// Returns one logit node per head.
  std::vector<VarPtr<R>> forward(VarPtr<R> input, bool train, Rng& rng,
                                 ForwardTrace<R>* trace) {
    std::vector<VarPtr<R>> pooled;
    if (!fused) {
      VarPtr<R> h = pathways[0].stem(input, train, trace);
      for (std::size_t s = 0; s < pathways[0].stages.size(); ++s) {
        h = pathways[0].stage_forward(s, h, train, trace);
      }
      pooled.push_back(ag::global_avg_pool(h));
    } else {
      Pathway<R>& slow = pathways[0];
      Pathway<R>& fast = pathways[1];
      VarPtr<R> s = slow.stem(input, train, trace);
      VarPtr<R> f = fast.stem(input, train, trace);
      for (std::size_t i = 0; i < slow.stages.size(); ++i) {
        if (i < laterals.size()) {
          VarPtr<R> lat = laterals[i](f);
          s = ag::concat_channels<R>({s, lat});
        }
        s = slow.stage_forward(i, s, train, trace);
        f = fast.stage_forward(i, f, train, trace);
      }
      pooled.push_back(ag::global_avg_pool(s));
      pooled.push_back(ag::global_avg_pool(f));
    }

    VarPtr<R> feat = pooled.size() == 1 ? pooled[0]
                                        : ag::concat_channels<R>(pooled);
    feat = ag::flatten_pooled(feat);
    feat = ag::dropout(feat, dropout_p, train, rng);
    std::vector<VarPtr<R>> logits;
    logits.reserve(heads.size());
    for (auto& head : heads) logits.push_back(head(feat));
    return logits;
  }

  void visit_convs(const std::function<void(detail::ConvUnit<R>&)>& fn) {
    for (auto& p : pathways) {
      fn(p.conv1);
      for (auto& st : p.stages) {
        for (auto& b : st) {
          fn(b.conv_a);
          fn(b.conv_b);
          fn(b.conv_c);
          if (b.proj) fn(*b.proj);
        }
      }
    }
    for (auto& lat : laterals) fn(lat);
  }

  void visit_bns(const std::function<void(detail::BnUnit<R>&)>& fn) {
    for (auto& p : pathways) {
      fn(p.bn1);
      for (auto& st : p.stages) {
        for (auto& b : st) {
          fn(b.bn_a);
          fn(b.bn_b);
          fn(b.bn_c);
          if (b.bn_proj) fn(*b.bn_proj);
        }
      }
    }
  }
};

/// A compiled network: a model variant plus classifier head sizes.
template <typename R>
struct Network {
  Variant variant = Variant::kSlowFast;
  std::vector<int> num_classes;
  int width_div = 1;
  std::vector<SubModel<R>> submodels;

  std::size_t num_heads() const { return num_classes.size(); }

  // ---- parameter enumeration (deterministic order) ----

  std::vector<std::pair<std::string, VarPtr<R>>> named_params() {
    std::vector<std::pair<std::string, VarPtr<R>>> out;
    for (auto& sm : submodels) {
      sm.visit_convs([&out](detail::ConvUnit<R>& c) {
        out.emplace_back(c.weight->name, c.weight);
        if (c.bias) out.emplace_back(c.bias->name, c.bias);
      });
      sm.visit_bns([&out](detail::BnUnit<R>& b) {
        out.emplace_back(b.scale->name, b.scale);
        out.emplace_back(b.shift->name, b.shift);
      });
      for (auto& head : sm.heads) {
        out.emplace_back(head.weight->name, head.weight);
        out.emplace_back(head.bias->name, head.bias);
      }
    }
    return out;
  }

  std::vector<ParamRef<R>> param_refs() {
    std::vector<ParamRef<R>> refs;
    for (auto& [name, p] : named_params()) {
      p->ensure_grad();
      refs.push_back(
          {p->value.data.data(), p->grad.data.data(), p->value.numel()});
    }
    return refs;
  }

  void zero_grads() {
    for (auto& [name, p] : named_params()) p->zero_grad();
  }

  std::vector<detail::BnUnit<R>*> bn_units() {
    std::vector<detail::BnUnit<R>*> units;
    for (auto& sm : submodels) {
      sm.visit_bns([&units](detail::BnUnit<R>& b) { units.push_back(&b); });
    }
    return units;
  }

  /// Fine-tuning rule: freeze every batch-norm layer except the first.
  void freeze_bn_except_first() {
    auto units = bn_units();
    for (std::size_t i = 0; i < units.size(); ++i) {
      units[i]->state.frozen = i != 0;
    }
  }

  std::int64_t count_params() {
    std::int64_t total = 0;
    for (const auto& [name, p] : named_params()) total += p->value.numel();
    return total;
  }

  /// Trainable scalars grouped by top-level module (conv1+bn1 count as the
  /// stem of their pathway).
  std::vector<std::pair<std::string, std::int64_t>> param_breakdown() {
    std::map<std::string, std::int64_t> agg;
    std::vector<std::string> order;
    for (const auto& [name, p] : named_params()) {
      // group key: drop the trailing unit/parameter parts
      std::string key = name;
      const auto first = key.find('/');
      auto second = key.find('/', first + 1);
      if (second == std::string::npos) second = first;
      key = key.substr(0, second);
      // conv1/bn1 belong to the pathway stem
      const auto slash = key.rfind('/');
      const std::string last = key.substr(slash + 1);
      if (last == "conv1" || last == "bn1") {
        key = key.substr(0, slash) + "/stem";
      }
      if (agg.find(key) == agg.end()) order.push_back(key);
      agg[key] += p->value.numel();
    }
    std::vector<std::pair<std::string, std::int64_t>> out;
    for (const auto& k : order) out.emplace_back(k, agg[k]);
    return out;
  }

  // ---- forward paths ----

  /// Per-submodel, per-head logit nodes.
  std::vector<std::vector<VarPtr<R>>> forward(VarPtr<R> input, bool train,
                                              Rng& rng,
                                              ForwardTrace<R>* trace = nullptr) {
    std::vector<std::vector<VarPtr<R>>> out;
    for (auto& sm : submodels) {
      ForwardTrace<R>* t = trace;
      out.push_back(sm.forward(input, train, rng, t));
    }
    return out;
  }

  /// Training loss: per submodel the unweighted mean of its heads'
  /// cross-entropies, summed over submodels (substreams of late-fusion
  /// variants train exactly like their standalone counterparts).
  VarPtr<R> loss(VarPtr<R> input, const std::vector<std::vector<int>>& labels,
                 bool train, Rng& rng) {
    check(labels.size() == num_heads(), "loss: expected ", num_heads(),
          " label sets, got ", labels.size());
    auto all_logits = forward(input, train, rng);
    std::vector<VarPtr<R>> parts;
    for (auto& sub_logits : all_logits) {
      std::vector<VarPtr<R>> head_losses;
      for (std::size_t h = 0; h < sub_logits.size(); ++h) {
        head_losses.push_back(
            ag::softmax_cross_entropy(sub_logits[h], labels[h]));
      }
      parts.push_back(ag::scalar_mean(head_losses));
    }
    if (parts.size() == 1) return parts[0];
    // sum over submodels
    Tensor<R> total({1});
    for (const auto& p : parts) total.data[0] += p->value.data[0];
    return ag::make_node<R>(std::move(total), parts, [parts](Var<R>& self) {
      Tensor<R> g({1});
      g.data[0] = self.grad.data[0];
      for (const auto& p : parts) p->accumulate(g);
    });
  }

  /// Eval-mode class probabilities per head, averaged over submodels.
  std::vector<Tensor<double>> predict_probs(const Tensor<R>& batch) {
    Rng rng(0);  // dropout is inactive in eval mode
    auto input = ag::leaf(batch, false);
    auto all_logits = forward(input, /*train=*/false, rng);
    std::vector<Tensor<double>> probs;
    for (std::size_t h = 0; h < num_heads(); ++h) {
      Tensor<double> acc;
      for (std::size_t s = 0; s < all_logits.size(); ++s) {
        Tensor<double> p = softmax(all_logits[s][h]->value.template cast<double>());
        if (s == 0) {
          acc = std::move(p);
        } else {
          add_into(acc.data, p.data);
        }
      }
      for (auto& v : acc.data) v /= static_cast<double>(all_logits.size());
      probs.push_back(std::move(acc));
    }
    return probs;
  }

  /// Named post-activation feature maps for a single spectrogram.
  ForwardTrace<R> trace_forward(const Tensor<R>& batch) {
    Rng rng(0);
    ForwardTrace<R> trace;
    trace["input"] = batch;
    auto input = ag::leaf(batch, false);
    forward(input, /*train=*/false, rng, &trace);
    return trace;
  }

  // ---- persistence ----

  /// Trainable parameters plus batch-norm running statistics.
  std::vector<CheckpointRecord> state_records() {
    std::vector<CheckpointRecord> recs;
    for (const auto& [name, p] : named_params()) {
      recs.push_back(to_record(name, p->value));
    }
    for (auto* bn : bn_units()) {
      const std::string base =
          bn->scale->name.substr(0, bn->scale->name.rfind('/'));
      recs.push_back(to_record(base + "/running_mean", bn->state.running_mean));
      recs.push_back(to_record(base + "/running_var", bn->state.running_var));
    }
    return recs;
  }

  /// Loads records by name. When lenient_heads is set, head records whose
  /// shapes do not match are skipped (class counts changed between runs);
  /// anything else missing or mismatched is an error.
  void load_records(const std::vector<CheckpointRecord>& records,
                    bool lenient_heads = false) {
    auto idx = index_records(records);
    const auto fetch = [&idx](const std::string& name) {
      auto it = idx.find(name);
      check(it != idx.end(), "checkpoint: missing record ", name);
      return it->second;
    };
    for (auto& [name, p] : named_params()) {
      const bool is_head = name.find("head") != std::string::npos;
      auto it = idx.find(name);
      if (is_head && lenient_heads) {
        if (it == idx.end() || it->second->shape != p->value.shape) continue;
      }
      record_into(*fetch(name), p->value);
    }
    for (auto* bn : bn_units()) {
      const std::string base =
          bn->scale->name.substr(0, bn->scale->name.rfind('/'));
      record_into(*fetch(base + "/running_mean"), bn->state.running_mean);
      record_into(*fetch(base + "/running_var"), bn->state.running_var);
    }
  }

  void save(const std::filesystem::path& path) {
    save_checkpoint(path, state_records());
  }

  void load(const std::filesystem::path& path, bool lenient_heads = false) {
    load_records(load_checkpoint(path), lenient_heads);
  }
};

/// Compiles a model variant. width_div shrinks every channel count for
/// desk-scale runs; 1 reproduces the published widths.
template <typename R>
Network<R> build_network(Variant variant, const std::vector<int>& num_classes,
                         int width_div = 1, std::uint64_t seed = 0,
                         R dropout_p = R(0.5)) {
  check(!num_classes.empty() && num_classes.size() <= 2,
        "build_network: expected 1 or 2 heads");
  for (const int k : num_classes) {
    check(k >= 2, "build_network: each head needs at least 2 classes");
  }
  Rng rng = Rng(seed).fork(0xA5C);
  Network<R> net;
  net.variant = variant;
  net.num_classes = num_classes;
  net.width_div = width_div;

  const auto add_single = [&](const ArchSpec& arch, const std::string& prefix) {
    SubModel<R> sm;
    sm.prefix = prefix;
    sm.build_single(arch, num_classes, dropout_p, rng);
    net.submodels.push_back(std::move(sm));
  };

  switch (variant) {
    case Variant::kSlowFast: {
      SubModel<R> sm;
      sm.build_fused(slow_pathway(width_div), fast_pathway(width_div),
                     num_classes, dropout_p, rng);
      net.submodels.push_back(std::move(sm));
      break;
    }
    case Variant::kSlowOnly:
      add_single(slow_pathway(width_div), "");
      break;
    case Variant::kFastOnly:
      add_single(fast_pathway(width_div), "");
      break;
    case Variant::kTwoSlowLateFusion:
      add_single(slow_pathway(width_div), "m0/");
      add_single(slow_pathway(width_div), "m1/");
      break;
    case Variant::kSlowResNet101:
      add_single(slow_pathway(width_div, /*res4_blocks=*/23), "");
      break;
    case Variant::kSlowFastLateFusion:
      add_single(slow_pathway(width_div), "m0/");
      add_single(fast_pathway(width_div), "m1/");
      break;
    case Variant::kResNet50Plain:
      add_single(single_resnet50(BlockKind::kPlain2d, width_div), "");
      break;
    case Variant::kResNet50Separable:
      add_single(single_resnet50(BlockKind::kSeparableTF, width_div), "");
      break;
  }
  return net;
}

/// Extracts one channel of a traced stage as a T x F matrix.
template <typename R>
Tensor<R> stage_channel(const ForwardTrace<R>& trace, const std::string& stage,
                        std::int64_t channel) {
  auto it = trace.find(stage);
  if (it == trace.end()) {
    std::string stages;
    for (const auto& [k, v] : trace) {
      if (!stages.empty()) stages += ", ";
      stages += k;
    }
    fail("unknown stage '", stage, "' (valid stages: ", stages, ")");
  }
  const Tensor<R>& fm = it->second;
  check(channel >= 0 && channel < fm.dim(1), "channel ", channel,
        " out of range [0, ", fm.dim(1), ") for stage ", stage);
  Tensor<R> out({fm.dim(2), fm.dim(3)});
  for (std::int64_t t = 0; t < fm.dim(2); ++t) {
    for (std::int64_t f = 0; f < fm.dim(3); ++f) {
      out.data[t * fm.dim(3) + f] = fm.at4(0, channel, t, f);
    }
  }
  return out;
}

}  // namespace asf

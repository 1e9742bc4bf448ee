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
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "asf/common.hpp"
#include "asf/dsp.hpp"
#include "asf/model.hpp"

namespace asf {

// ---------------------------------------------------------------------------
// Segment placement
// ---------------------------------------------------------------------------

/// Equally spaced segment start positions (unit-agnostic reals).
/// n == 1 centers the segment; a clip shorter than the segment yields the
/// single start 0.
inline std::vector<double> segment_starts(double clip_len, double segment_len,
                                          int n) {
  check(n >= 1, "segment_starts: n must be >= 1");
  if (clip_len <= segment_len) return {0.0};
  if (n == 1) return {(clip_len - segment_len) / 2.0};
  std::vector<double> starts(n);
  for (int i = 0; i < n; ++i) {
    starts[i] = i * (clip_len - segment_len) / (n - 1);
  }
  return starts;
}

// ---------------------------------------------------------------------------
// Predictions
// ---------------------------------------------------------------------------

/// Per-clip softmax scores per head, with ground truth and manifest tags.
struct PredictionSet {
  std::vector<int> num_classes;                       // per head
  std::vector<std::string> clip_ids;
  std::vector<std::vector<std::string>> tags;         // per clip
  std::vector<std::vector<int>> labels;               // [head][clip]
  std::vector<std::vector<std::vector<double>>> scores;  // [head][clip][class]

  std::size_t num_heads() const { return num_classes.size(); }
  std::size_t size() const { return clip_ids.size(); }

  PredictionSet filter_by_tag(const std::string& tag) const {
    if (tag.empty()) return *this;
    PredictionSet out;
    out.num_classes = num_classes;
    out.labels.resize(num_heads());
    out.scores.resize(num_heads());
    for (std::size_t i = 0; i < size(); ++i) {
      if (std::find(tags[i].begin(), tags[i].end(), tag) == tags[i].end()) {
        continue;
      }
      out.clip_ids.push_back(clip_ids[i]);
      out.tags.push_back(tags[i]);
      for (std::size_t h = 0; h < num_heads(); ++h) {
        out.labels[h].push_back(labels[h][i]);
        out.scores[h].push_back(scores[h][i]);
      }
    }
    return out;
  }
};

/// Segment-averaged prediction for one clip: slices n_segments windows of
/// target_frames out of the cached spectrogram, runs them as one batch and
/// averages the per-segment softmax outputs (probabilities, not logits).
/// Duplicate starts are collapsed into multiplicity weights.
template <typename R>
std::vector<std::vector<double>> predict_clip(Network<R>& net,
                                              const Spectrogram& full,
                                              std::int64_t target_frames,
                                              int n_segments) {
  const auto starts_real = segment_starts(
      static_cast<double>(full.n_frames), static_cast<double>(target_frames),
      n_segments);
  std::map<std::int64_t, int> start_counts;  // start frame -> multiplicity
  for (const double s : starts_real) {
    start_counts[static_cast<std::int64_t>(std::floor(s))] += 1;
  }

  std::vector<Spectrogram> segments;
  std::vector<int> weights;
  for (const auto& [start, count] : start_counts) {
    segments.push_back(slice_frames(full, start, target_frames));
    weights.push_back(count);
  }
  std::vector<const Spectrogram*> ptrs;
  for (const auto& s : segments) ptrs.push_back(&s);
  const Tensor<R> batch = specs_to_batch<R>(ptrs);
  const auto probs = net.predict_probs(batch);

  const int total = static_cast<int>(starts_real.size());
  std::vector<std::vector<double>> out(net.num_heads());
  for (std::size_t h = 0; h < net.num_heads(); ++h) {
    const std::int64_t k = probs[h].dim(1);
    out[h].assign(static_cast<std::size_t>(k), 0.0);
    for (std::size_t seg = 0; seg < segments.size(); ++seg) {
      const double w = static_cast<double>(weights[seg]) / total;
      for (std::int64_t c = 0; c < k; ++c) {
        out[h][c] += w * probs[h].at2(static_cast<std::int64_t>(seg), c);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Accuracy metrics
// ---------------------------------------------------------------------------

namespace detail {

/// Class indices ordered by descending score; ties broken by ascending index.
inline std::vector<int> ranked_classes(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
    return scores[a] > scores[b];
  });
  return order;
}

}  // namespace detail

inline double top_k_accuracy(const PredictionSet& preds, std::size_t head,
                             int k) {
  check(head < preds.num_heads(), "top_k_accuracy: bad head index");
  check(preds.size() > 0, "top_k_accuracy: empty prediction set");
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto order = detail::ranked_classes(preds.scores[head][i]);
    const int label = preds.labels[head][i];
    const int depth = std::min<int>(k, static_cast<int>(order.size()));
    for (int r = 0; r < depth; ++r) {
      if (order[r] == label) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Hits and totals per class under top-1 prediction.
inline std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>
per_class_counts(const PredictionSet& preds, std::size_t head) {
  const int k = preds.num_classes[head];
  std::vector<std::int64_t> hits(k, 0), totals(k, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int label = preds.labels[head][i];
    totals[label] += 1;
    const auto order = detail::ranked_classes(preds.scores[head][i]);
    if (order[0] == label) hits[label] += 1;
  }
  return {hits, totals};
}

inline std::vector<double> per_class_accuracy(const PredictionSet& preds,
                                              std::size_t head) {
  const auto [hits, totals] = per_class_counts(preds, head);
  std::vector<double> acc(hits.size(), 0.0);
  for (std::size_t c = 0; c < hits.size(); ++c) {
    acc[c] = totals[c] > 0
                 ? static_cast<double>(hits[c]) / static_cast<double>(totals[c])
                 : 0.0;
  }
  return acc;
}

/// Two-head action accuracy: the top-k (verb, noun) pairs ranked by the
/// product of the marginal scores; tie-break ascending (verb, noun) index.
inline double action_top_k_accuracy(const PredictionSet& preds, int k) {
  check(preds.num_heads() == 2, "action accuracy needs two heads");
  check(preds.size() > 0, "action accuracy: empty prediction set");
  std::int64_t hits = 0;
  const int nv = preds.num_classes[0];
  const int nn = preds.num_classes[1];
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& sv = preds.scores[0][i];
    const auto& sn = preds.scores[1][i];
    std::vector<std::pair<double, std::int64_t>> pairs;
    pairs.reserve(static_cast<std::size_t>(nv) * nn);
    for (int v = 0; v < nv; ++v) {
      for (int n = 0; n < nn; ++n) {
        pairs.emplace_back(sv[v] * sn[n],
                           static_cast<std::int64_t>(v) * nn + n);
      }
    }
    const std::size_t depth = std::min<std::size_t>(k, pairs.size());
    std::partial_sort(pairs.begin(), pairs.begin() + depth, pairs.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    const std::int64_t want =
        static_cast<std::int64_t>(preds.labels[0][i]) * nn +
        preds.labels[1][i];
    for (std::size_t r = 0; r < depth; ++r) {
      if (pairs[r].second == want) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// Ranking metrics: AP, AUC, d-prime
// ---------------------------------------------------------------------------

/// Average precision of a binary ranking, computed over the distinct score
/// thresholds (descending), accumulating (recall delta) x precision. Tied
/// scores enter together, which keeps the value independent of input order.
inline double average_precision_binary(const std::vector<double>& scores,
                                       const std::vector<int>& labels01) {
  check(scores.size() == labels01.size(), "ap: size mismatch");
  std::int64_t npos = 0;
  for (const int l : labels01) npos += l;
  check(npos > 0, "ap: no positives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  double ap = 0.0;
  double prev_recall = 0.0;
  std::int64_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels01[order[j]];
      ++seen;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(npos);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

/// Rank-based (Mann-Whitney) AUC with average ranks over ties.
inline double auc_binary(const std::vector<double>& scores,
                         const std::vector<int>& labels01) {
  check(scores.size() == labels01.size(), "auc: size mismatch");
  std::int64_t npos = 0;
  for (const int l : labels01) npos += l;
  const std::int64_t nneg = static_cast<std::int64_t>(labels01.size()) - npos;
  check(npos > 0 && nneg > 0, "auc: needs both positives and negatives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) {
                     return scores[a] < scores[b];
                   });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t r = i; r < j; ++r) {
      if (labels01[order[r]]) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

/// Mean AP over classes with at least one positive clip.
inline double mean_average_precision(const PredictionSet& preds,
                                     std::size_t head) {
  const int k = preds.num_classes[head];
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      scores.push_back(preds.scores[head][i][c]);
      labels.push_back(preds.labels[head][i] == c ? 1 : 0);
    }
    if (std::accumulate(labels.begin(), labels.end(), 0) == 0) continue;
    sum += average_precision_binary(scores, labels);
    ++counted;
  }
  check(counted > 0, "mAP: no class has positives");
  return sum / counted;
}

/// Mean AUC over classes with at least one positive and one negative clip.
inline double mean_auc(const PredictionSet& preds, std::size_t head) {
  const int k = preds.num_classes[head];
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> scores;
    std::vector<int> labels;
    int npos = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      scores.push_back(preds.scores[head][i][c]);
      const int l = preds.labels[head][i] == c ? 1 : 0;
      npos += l;
      labels.push_back(l);
    }
    if (npos == 0 || npos == static_cast<int>(labels.size())) continue;
    sum += auc_binary(scores, labels);
    ++counted;
  }
  check(counted > 0, "AUC: no class has both positives and negatives");
  return sum / counted;
}

// ---------------------------------------------------------------------------
// Normal quantile and d-prime
// ---------------------------------------------------------------------------

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / 1.4142135623730950488);
}

/// Inverse standard normal CDF: rational initial guess refined by two Halley
/// steps, accurate to ~1e-15 over (0, 1).
inline double normal_quantile(double p) {
  check(p > 0.0 && p < 1.0, "normal_quantile: p must be in (0, 1)");
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int iter = 0; iter < 2; ++iter) {
    const double e = normal_cdf(x) - p;
    const double u = e * 2.5066282746310002 * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
  }
  return x;
}

/// Detectability index d' = sqrt(2) * quantile(AUC); AUC at the degenerate
/// endpoints is clamped to +-10 with a warning.
inline double d_prime(double auc) {
  const double clamp = 10.0;
  if (auc <= 0.0 || auc >= 1.0) {
    std::cerr << "[asf] warning: d_prime(" << auc
              << ") is unbounded; clamping to " << (auc >= 1.0 ? "+" : "-")
              << clamp << "\n";
    return auc >= 1.0 ? clamp : -clamp;
  }
  const double v = 1.4142135623730950488 * normal_quantile(auc);
  return std::clamp(v, -clamp, clamp);
}

// ---------------------------------------------------------------------------
// Stream specialization
// ---------------------------------------------------------------------------

/// Classes where A beats B by more than thresh_a, and vice versa. Thresholds
/// may differ (asymmetric when one stream dominates overall).
inline std::pair<std::vector<int>, std::vector<int>>
stream_specialization_report(const PredictionSet& preds_a,
                             const PredictionSet& preds_b, std::size_t head,
                             double thresh_a, double thresh_b) {
  check(preds_a.num_classes == preds_b.num_classes,
        "specialization: class counts differ");
  const auto acc_a = per_class_accuracy(preds_a, head);
  const auto acc_b = per_class_accuracy(preds_b, head);
  std::vector<int> best_a, best_b;
  for (std::size_t c = 0; c < acc_a.size(); ++c) {
    if (acc_a[c] - acc_b[c] > thresh_a) best_a.push_back(static_cast<int>(c));
    if (acc_b[c] - acc_a[c] > thresh_b) best_b.push_back(static_cast<int>(c));
  }
  return {best_a, best_b};
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Defined only when some class has at least one positive and one negative
/// (single-class subsets have no ranking to score).
inline std::optional<double> try_mean_auc(const PredictionSet& preds,
                                          std::size_t head) {
  for (int c = 0; c < preds.num_classes[head]; ++c) {
    int npos = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      npos += preds.labels[head][i] == c ? 1 : 0;
    }
    if (npos > 0 && npos < static_cast<int>(preds.size())) {
      return mean_auc(preds, head);
    }
  }
  return std::nullopt;
}

inline nlohmann::json metrics_report(const PredictionSet& preds,
                                     const std::string& split,
                                     const std::string& subset) {
  check(preds.size() > 0, "metrics_report: empty prediction set (subset '",
        subset, "' matched no clips)");
  nlohmann::json j;
  j["split"] = split;
  j["subset"] = subset;
  j["num_clips"] = preds.size();
  double map_sum = 0.0, auc_sum = 0.0;
  int auc_heads = 0;
  j["per_head"] = nlohmann::json::array();
  j["per_class"] = nlohmann::json::array();
  for (std::size_t h = 0; h < preds.num_heads(); ++h) {
    nlohmann::json hj;
    hj["top1"] = top_k_accuracy(preds, h, 1);
    hj["top5"] = top_k_accuracy(preds, h, 5);
    const double map = mean_average_precision(preds, h);
    hj["mAP"] = map;
    map_sum += map;
    if (const auto auc = try_mean_auc(preds, h)) {
      hj["AUC"] = *auc;
      hj["d_prime"] = d_prime(*auc);
      auc_sum += *auc;
      ++auc_heads;
    } else {
      hj["AUC"] = nullptr;
      hj["d_prime"] = nullptr;
    }
    j["per_head"].push_back(hj);
    j["per_class"].push_back(per_class_accuracy(preds, h));
  }
  const double nh = static_cast<double>(preds.num_heads());
  j["mAP"] = map_sum / nh;
  if (auc_heads == static_cast<int>(preds.num_heads())) {
    j["AUC"] = auc_sum / nh;
    j["d_prime"] = d_prime(auc_sum / nh);
  } else {
    j["AUC"] = nullptr;
    j["d_prime"] = nullptr;
  }
  if (preds.num_heads() == 2) {
    j["action"] = {{"top1", action_top_k_accuracy(preds, 1)},
                   {"top5", action_top_k_accuracy(preds, 5)}};
  }
  return j;
}

inline std::string per_class_csv(const PredictionSet& preds) {
  std::string out = "head,class,count,accuracy\n";
  for (std::size_t h = 0; h < preds.num_heads(); ++h) {
    const auto [hits, totals] = per_class_counts(preds, h);
    for (std::size_t c = 0; c < hits.size(); ++c) {
      const double acc =
          totals[c] > 0
              ? static_cast<double>(hits[c]) / static_cast<double>(totals[c])
              : 0.0;
      out += std::to_string(h) + "," + std::to_string(c) + "," +
             std::to_string(totals[c]) + "," + std::to_string(acc) + "\n";
    }
  }
  return out;
}

}  // namespace asf

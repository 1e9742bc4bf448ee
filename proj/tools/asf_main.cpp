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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asf/config.hpp"
#include "asf/dsp.hpp"
#include "asf/eval.hpp"
#include "asf/manifest.hpp"
#include "asf/model.hpp"
#include "asf/synth.hpp"
#include "asf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string variant;
  std::int64_t seed = -1;
  std::string checkpoint;
  std::string split = "val";
  std::string subset;
  int segments = -1;
};

asf::RunConfig load_config(const CommonOpts& opts) {
  asf::check(!opts.config_path.empty(), "--config is required");
  asf::RunConfig cfg = asf::load_run_config(opts.config_path);
  if (!opts.variant.empty()) cfg.variant = opts.variant;
  if (opts.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(opts.seed);
  if (opts.segments > 0) cfg.eval_segments = opts.segments;
  return cfg;
}

asf::Manifest load_manifest_for(const asf::RunConfig& cfg) {
  asf::check(!cfg.manifest_path.empty(),
             "config: paths.manifest must be set for this command");
  asf::Manifest m = asf::load_manifest(cfg.manifest_path);
  asf::validate_manifest(m, cfg.num_classes);
  return m;
}

// ---------------------------------------------------------------------------

int cmd_prep(const CommonOpts& opts) {
  const asf::RunConfig cfg = load_config(opts);
  const asf::Manifest manifest = load_manifest_for(cfg);
  const fs::path base = fs::path(cfg.manifest_path).parent_path();
  fs::create_directories(cfg.cache_dir);

  int prepared = 0, skipped = 0;
  json errors = json::array();
  for (const auto& row : manifest.rows) {
    const fs::path target = cfg.cache_dir / (row.clip_id + ".asfs");
    try {
      if (fs::exists(target)) {
        const asf::Spectrogram cached = asf::cache_read(target);
        if (cached.n_mels == cfg.dsp.n_mels &&
            cached.n_frames >= cfg.dsp.target_frames) {
          ++skipped;
          continue;
        }
      }
      fs::path wav_path = row.audio_path;
      if (wav_path.is_relative()) wav_path = base / wav_path;
      const asf::AudioClip full = asf::read_wav(wav_path);
      asf::check(full.sample_rate == cfg.sample_rate, "sample rate ",
                 full.sample_rate, " does not match configured ",
                 cfg.sample_rate, " (resampling is not supported)");
      const asf::AudioClip clip =
          asf::slice_clip(full, row.start_s, row.stop_s);
      const asf::Spectrogram spec = asf::log_mel_clip(clip, cfg.dsp);
      asf::cache_write(spec, target);
      ++prepared;
    } catch (const std::exception& e) {
      errors.push_back({{"clip_id", row.clip_id},
                        {"audio_path", row.audio_path},
                        {"message", e.what()}});
    }
  }
  json summary = {{"prepared", prepared},
                  {"skipped", skipped},
                  {"failed", errors.size()},
                  {"cache_dir", cfg.cache_dir.string()}};
  std::cout << summary.dump(2) << "\n";
  if (!errors.empty()) {
    std::cerr << json{{"errors", errors}}.dump(2) << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

template <typename R>
int run_train(const asf::RunConfig& cfg, const std::string& init_ckpt,
              bool resume) {
  const asf::Manifest manifest = load_manifest_for(cfg);
  const asf::ClipSet train_set =
      asf::load_clipset(manifest, "train", cfg.cache_dir, cfg.dsp.n_mels);
  const asf::ClipSet val_set =
      asf::load_clipset(manifest, "val", cfg.cache_dir, cfg.dsp.n_mels);
  asf::check(!train_set.empty(), "no training clips in the manifest");

  asf::Network<R> net = asf::build_network<R>(
      asf::variant_from_string(cfg.variant), cfg.num_classes, cfg.width_div,
      cfg.train.seed, static_cast<R>(cfg.train.dropout_p));
  if (!init_ckpt.empty()) {
    net.load(init_ckpt, /*lenient_heads=*/true);
  }

  std::optional<fs::path> resume_path;
  if (resume) {
    resume_path = cfg.out_dir / "last_state.ckpt";
    asf::check(fs::exists(*resume_path), "no state checkpoint at ",
               resume_path->string());
  }
  const asf::FitResult result =
      asf::fit(net, train_set, val_set, cfg.train, cfg.dsp.target_frames,
               cfg.out_dir, resume_path);

  json summary = {{"variant", cfg.variant},
                  {"epochs", cfg.train.epochs},
                  {"best_epoch", result.best_epoch},
                  {"best_val_top1", result.best_val_top1},
                  {"checkpoint", result.best_checkpoint.string()},
                  {"history", (cfg.out_dir / "history.jsonl").string()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& init_ckpt,
              bool finetune, bool resume) {
  asf::RunConfig cfg = load_config(opts);
  if (finetune) {
    cfg.train.finetune = true;
    asf::check(!init_ckpt.empty(), "--finetune requires --init CHECKPOINT");
  }
  if (cfg.precision == "f64") return run_train<double>(cfg, init_ckpt, resume);
  return run_train<float>(cfg, init_ckpt, resume);
}

// ---------------------------------------------------------------------------

template <typename R>
int run_eval(const asf::RunConfig& cfg, const CommonOpts& opts,
             const std::string& out_path, const std::string& csv_path) {
  asf::check(!opts.checkpoint.empty(), "--checkpoint is required");
  const asf::Manifest manifest = load_manifest_for(cfg);
  asf::ClipSet clips =
      asf::load_clipset(manifest, opts.split, cfg.cache_dir, cfg.dsp.n_mels);
  asf::check(!clips.empty(), "split '", opts.split, "' has no clips");

  asf::Network<R> net = asf::build_network<R>(
      asf::variant_from_string(cfg.variant), cfg.num_classes, cfg.width_div,
      cfg.train.seed, static_cast<R>(cfg.train.dropout_p));
  net.load(opts.checkpoint);

  asf::PredictionSet preds = asf::predict_clipset(
      net, clips, cfg.dsp.target_frames, cfg.eval_segments);
  preds = preds.filter_by_tag(opts.subset);
  const json report = asf::metrics_report(preds, opts.split, opts.subset);
  std::cout << report.dump(2) << "\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path, std::ios::trunc);
    os << report.dump(2) << "\n";
    asf::check(os.good(), "cannot write report to ", out_path);
  }
  if (!csv_path.empty()) {
    std::ofstream os(csv_path, std::ios::trunc);
    os << asf::per_class_csv(preds);
    asf::check(os.good(), "cannot write per-class csv to ", csv_path);
  }
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& out_path,
             const std::string& csv_path) {
  const asf::RunConfig cfg = load_config(opts);
  if (cfg.precision == "f64") {
    return run_eval<double>(cfg, opts, out_path, csv_path);
  }
  return run_eval<float>(cfg, opts, out_path, csv_path);
}

// ---------------------------------------------------------------------------

int cmd_params(const CommonOpts& opts, bool as_json,
               const std::string& emit_arch_dir) {
  const asf::RunConfig cfg = load_config(opts);
  json out = json::array();
  std::printf("%-24s %12s %10s\n", "variant", "params", "params(M)");
  for (const auto& [variant, name] : asf::variant_names()) {
    auto net = asf::build_network<float>(variant, cfg.num_classes,
                                         cfg.width_div, 0);
    const std::int64_t total = net.count_params();
    std::printf("%-24s %12lld %9.2fM\n", name.c_str(),
                static_cast<long long>(total), total / 1e6);
    json breakdown = json::array();
    for (const auto& [module, count] : net.param_breakdown()) {
      std::printf("  %-22s %12lld\n", module.c_str(),
                  static_cast<long long>(count));
      breakdown.push_back({{"module", module}, {"params", count}});
    }
    out.push_back(
        {{"variant", name}, {"params", total}, {"breakdown", breakdown}});
  }
  if (as_json) std::cout << out.dump(2) << "\n";

  if (!emit_arch_dir.empty()) {
    fs::create_directories(emit_arch_dir);
    const auto dump = [&](const asf::ArchSpec& a, const std::string& fname) {
      std::ofstream os(fs::path(emit_arch_dir) / fname, std::ios::trunc);
      os << json(a).dump(2) << "\n";
    };
    dump(asf::slow_pathway(cfg.width_div), "slow.json");
    dump(asf::fast_pathway(cfg.width_div), "fast.json");
    dump(asf::slow_pathway(cfg.width_div, 23), "slow_resnet101.json");
    dump(asf::single_resnet50(asf::BlockKind::kPlain2d, cfg.width_div),
         "resnet50_plain.json");
    dump(asf::single_resnet50(asf::BlockKind::kSeparableTF, cfg.width_div),
         "resnet50_separable.json");
  }
  return 0;
}

// ---------------------------------------------------------------------------

void write_pgm(const asf::Tensor<float>& map, const fs::path& path) {
  const std::int64_t t = map.dim(0), f = map.dim(1);
  float lo = map.data[0], hi = map.data[0];
  for (const float v : map.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float range = hi > lo ? hi - lo : 1.0f;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << "P5\n" << t << " " << f << "\n255\n";
  // frequency runs bottom-up: image row 0 is the highest mel band
  for (std::int64_t row = 0; row < f; ++row) {
    for (std::int64_t col = 0; col < t; ++col) {
      const float v = map.data[col * f + (f - 1 - row)];
      os.put(static_cast<char>(
          static_cast<int>(255.0f * (v - lo) / range + 0.5f)));
    }
  }
  asf::check(os.good(), "cannot write ", path.string());
}

int cmd_inspect(const CommonOpts& opts, const std::string& wav_path,
                const std::string& stages_arg, const std::string& channels_arg,
                const std::string& out_dir, bool pgm) {
  const asf::RunConfig cfg = load_config(opts);
  asf::check(!opts.checkpoint.empty(), "--checkpoint is required");
  asf::check(!wav_path.empty(), "--wav is required");

  asf::Network<float> net = asf::build_network<float>(
      asf::variant_from_string(cfg.variant), cfg.num_classes, cfg.width_div,
      cfg.train.seed, static_cast<float>(cfg.train.dropout_p));
  net.load(opts.checkpoint);

  const asf::AudioClip clip = asf::read_wav(wav_path);
  asf::check(clip.sample_rate == cfg.sample_rate, "sample rate mismatch");
  const asf::Spectrogram spec = asf::log_mel(clip, cfg.dsp);
  const asf::Tensor<float> batch =
      asf::specs_to_batch<float>({&spec});
  const auto trace = net.trace_forward(batch);

  std::vector<std::string> stages;
  if (stages_arg.empty()) {
    stages.push_back("input");
    for (const auto& [key, value] : trace) {
      if (key.size() >= 4 && (key.substr(key.size() - 4) == "res3" ||
                              key.substr(key.size() - 4) == "res5")) {
        stages.push_back(key);
      }
    }
  } else {
    stages = asf::detail::split_string(stages_arg, ',');
  }
  std::vector<std::int64_t> channels;
  if (channels_arg.empty()) {
    channels.push_back(0);
  } else {
    for (const auto& c : asf::detail::split_string(channels_arg, ',')) {
      channels.push_back(std::stoll(c));
    }
  }

  fs::create_directories(out_dir);
  const std::string stem = fs::path(wav_path).stem().string();
  json written = json::array();
  for (const auto& stage : stages) {
    for (const std::int64_t ch : channels) {
      const asf::Tensor<float> map = asf::stage_channel(trace, stage, ch);
      std::string tag = stage;
      for (auto& c : tag) {
        if (c == '/') c = '_';
      }
      const std::string base =
          stem + "__" + tag + "_c" + std::to_string(ch);
      asf::Spectrogram out_spec;
      out_spec.n_frames = map.dim(0);
      out_spec.n_mels = map.dim(1);
      out_spec.hop_ms = static_cast<float>(cfg.dsp.hop_ms);
      out_spec.window_ms = static_cast<float>(cfg.dsp.window_ms);
      out_spec.values = map.data;
      const fs::path target = fs::path(out_dir) / (base + ".asfs");
      asf::cache_write(out_spec, target);
      written.push_back(target.string());
      if (pgm) {
        write_pgm(map, fs::path(out_dir) / (base + ".pgm"));
        written.push_back((fs::path(out_dir) / (base + ".pgm")).string());
      }
    }
  }
  std::cout << json{{"written", written}}.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out_dir, std::int64_t seed, int classes,
              int clips_per_class, double seconds, int sample_rate,
              double val_fraction) {
  asf::SynthConfig cfg;
  cfg.n_classes = classes;
  cfg.clips_per_class = clips_per_class;
  cfg.seconds = seconds;
  cfg.sample_rate = sample_rate;
  cfg.val_fraction = val_fraction;
  const asf::Manifest m = asf::synth_dataset(
      out_dir, cfg, seed >= 0 ? static_cast<std::uint64_t>(seed) : 0);
  json summary = {{"classes", cfg.n_classes},
                  {"clips", m.rows.size()},
                  {"manifest", (fs::path(out_dir) / "manifest.csv").string()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stream audio recognition toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string init_ckpt, out_path, csv_path, wav_path;
  std::string stages_arg, channels_arg, inspect_out = "inspect_out";
  std::string synth_out;
  bool finetune = false, resume = false, as_json = false, pgm = false;
  std::string emit_arch_dir;
  std::int64_t synth_seed = 0;
  int synth_classes = 8, synth_clips = 100, synth_rate = 24000;
  double synth_seconds = 2.0, synth_val_fraction = 0.2;

  const auto add_common = [&opts](CLI::App* cmd, bool with_eval_flags) {
    cmd->add_option("--config", opts.config_path, "run config JSON");
    cmd->add_option("--variant", opts.variant, "model variant override");
    cmd->add_option("--seed", opts.seed, "seed override");
    if (with_eval_flags) {
      cmd->add_option("--checkpoint", opts.checkpoint, "checkpoint path");
      cmd->add_option("--split", opts.split, "manifest split");
      cmd->add_option("--subset", opts.subset, "manifest tag filter");
      cmd->add_option("--segments", opts.segments, "eval segments override");
    }
  };

  auto* prep = app.add_subcommand("prep", "extract and cache spectrograms");
  add_common(prep, false);

  auto* train = app.add_subcommand("train", "train a model variant");
  add_common(train, false);
  train->add_option("--init", init_ckpt, "initialize from checkpoint");
  train->add_flag("--finetune", finetune,
                  "fine-tune: freeze all BN layers except the first");
  train->add_flag("--resume", resume, "resume from out_dir/last_state.ckpt");

  auto* eval_cmd = app.add_subcommand("eval", "segment-averaged evaluation");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--out", out_path, "write the report JSON here too");
  eval_cmd->add_option("--per-class-csv", csv_path,
                       "write per-class accuracies as CSV");

  auto* params = app.add_subcommand("params", "parameter audit per variant");
  add_common(params, false);
  params->add_flag("--json", as_json, "also emit a JSON table");
  params->add_option("--emit-arch", emit_arch_dir,
                     "write pathway specs as JSON into this directory");

  auto* inspect = app.add_subcommand("inspect", "dump stage feature maps");
  add_common(inspect, true);
  inspect->add_option("--wav", wav_path, "input WAV file");
  inspect->add_option("--stages", stages_arg,
                      "comma-separated stage names (default: input + res3/res5)");
  inspect->add_option("--channels", channels_arg,
                      "comma-separated channel indices (default: 0)");
  inspect->add_option("--out", inspect_out, "output directory");
  inspect->add_flag("--pgm", pgm, "also render grayscale PGM images");

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--classes", synth_classes, "number of classes");
  synth->add_option("--clips-per-class", synth_clips, "clips per class");
  synth->add_option("--seconds", synth_seconds, "clip length in seconds");
  synth->add_option("--sample-rate", synth_rate, "sample rate in Hz");
  synth->add_option("--val-fraction", synth_val_fraction,
                    "fraction of clips per class held out for validation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prep->parsed()) return cmd_prep(opts);
    if (train->parsed()) return cmd_train(opts, init_ckpt, finetune, resume);
    if (eval_cmd->parsed()) return cmd_eval(opts, out_path, csv_path);
    if (params->parsed()) return cmd_params(opts, as_json, emit_arch_dir);
    if (inspect->parsed()) {
      return cmd_inspect(opts, wav_path, stages_arg, channels_arg, inspect_out,
                         pgm);
    }
    if (synth->parsed()) {
      return cmd_synth(synth_out, synth_seed, synth_classes, synth_clips,
                       synth_seconds, synth_rate, synth_val_fraction);
    }
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}

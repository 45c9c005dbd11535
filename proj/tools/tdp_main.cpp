// Copyright (c) the tdp authors.
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
//
// tdp: single entry point for the tri-dynamic preprocessing pipeline.
// Subcommands: analyze, synth, train, preprocess, encode-ladder (alias
// evaluate), bdbr, heatmap, ablate. Exit codes: 0 success, 1 computation
// error, 2 usage or config error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tdp/codec_sim.hpp"
#include "tdp/config.hpp"
#include "tdp/dpn.hpp"
#include "tdp/error.hpp"
#include "tdp/evaluation.hpp"
#include "tdp/fen.hpp"
#include "tdp/hash.hpp"
#include "tdp/preanalysis.hpp"
#include "tdp/training.hpp"
#include "tdp/video_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

// Shared flags for subcommands that run the QP probe.
struct ProbeFlags {
  double bitrate = 1500.0;
  std::string encoder = "x264";
  std::string cache_dir;
  bool no_probe = false;

  void attach(CLI::App* sub) {
    sub->add_option("--probe-bitrate", bitrate,
                    "CBR target for the QP probe in kbps")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--encoder", encoder, "probe encoder binary")
        ->capture_default_str();
    sub->add_option("--cache-dir", cache_dir,
                    "directory for probe result sidecar cache");
    sub->add_flag("--no-probe", no_probe,
                  "skip the external probe, use the analytic QP fallback");
  }

  tdp::preanalysis::ProbeOptions to_options() const {
    tdp::preanalysis::ProbeOptions opts;
    opts.bitrate_kbps = bitrate;
    opts.encoder_binary = no_probe ? std::string() : encoder;
    opts.allow_fallback = true;
    opts.cache_dir = cache_dir;
    return opts;
  }
};

// Flags that override TdpConfig fields for train/ablate. Overrides only apply
// when the flag was given on the command line, so config files stay in charge
// of everything else.
struct TrainFlags {
  std::size_t steps = 0;
  double lr = 0.0;
  std::size_t patch_size = 0;
  std::size_t samples_per_clip = 0;
  std::size_t fen_hidden = 0;
  std::size_t dpn_channels = 0;
  std::size_t sim_channels = 0;
  std::size_t checkpoint_every = 0;
  bool freeze_sim = false;
  bool no_dpi = false;
  bool no_dql = false;
  bool no_dlamt = false;
  double fixed_fd = 1.0;
  double fixed_fq = 30.0;
  double fixed_lambda = 1e-4;

  void attach(CLI::App* sub) {
    sub->add_option("--steps", steps, "total optimization steps");
    sub->add_option("--lr", lr, "Adam learning rate");
    sub->add_option("--patch-size", patch_size, "square training patch side");
    sub->add_option("--samples-per-clip", samples_per_clip,
                    "patch stacks drawn per corpus clip");
    sub->add_option("--fen-hidden", fen_hidden, "FEN hidden width");
    sub->add_option("--dpn-channels", dpn_channels, "DPN channel count");
    sub->add_option("--sim-channels", sim_channels,
                    "codec simulator latent channels");
    sub->add_option("--checkpoint-every", checkpoint_every,
                    "checkpoint interval in steps");
    sub->add_flag("--freeze-sim", freeze_sim,
                  "keep codec simulator parameters fixed");
    sub->add_flag("--no-dpi", no_dpi, "disable dynamic processing intensity");
    sub->add_flag("--no-dql", no_dql, "disable dynamic quantization level");
    sub->add_flag("--no-dlamt", no_dlamt, "disable dynamic lambda trade-off");
    sub->add_option("--fixed-fd", fixed_fd,
                    "processing intensity used when DPI is off");
    sub->add_option("--fixed-fq", fixed_fq,
                    "quantization level used when DQL is off");
    sub->add_option("--fixed-lambda", fixed_lambda,
                    "RD lambda used when DlamT is off");
  }

  void apply(const CLI::App* sub, tdp::TdpConfig& cfg) const {
    if (sub->count("--steps")) cfg.steps = steps;
    if (sub->count("--lr")) cfg.lr = lr;
    if (sub->count("--patch-size")) cfg.patch_size = patch_size;
    if (sub->count("--samples-per-clip")) {
      cfg.samples_per_clip = samples_per_clip;
    }
    if (sub->count("--fen-hidden")) cfg.fen_hidden = fen_hidden;
    if (sub->count("--dpn-channels")) cfg.dpn_channels = dpn_channels;
    if (sub->count("--sim-channels")) cfg.sim_channels = sim_channels;
    if (sub->count("--checkpoint-every")) {
      cfg.checkpoint_every = checkpoint_every;
    }
    if (sub->count("--freeze-sim")) cfg.freeze_simulator = true;
    if (sub->count("--no-dpi")) cfg.enable_dpi = false;
    if (sub->count("--no-dql")) cfg.enable_dql = false;
    if (sub->count("--no-dlamt")) cfg.enable_dlamt = false;
    if (sub->count("--fixed-fd")) cfg.fixed_f_d = fixed_fd;
    if (sub->count("--fixed-fq")) cfg.fixed_f_q = fixed_fq;
    if (sub->count("--fixed-lambda")) cfg.fixed_lambda = fixed_lambda;
  }
};

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) {
    throw tdp::UsageError(std::string(what) + " not found: " + path);
  }
}

// Positional clips plus optional --corpus directory (all *.y4m inside,
// lexicographic order).
std::vector<std::string> gather_clips(const std::vector<std::string>& inputs,
                                      const std::string& corpus_dir) {
  std::vector<std::string> clips;
  for (const auto& p : inputs) {
    require_file(p, "input clip");
    clips.push_back(p);
  }
  if (!corpus_dir.empty()) {
    if (!fs::is_directory(corpus_dir)) {
      throw tdp::UsageError("corpus directory not found: " + corpus_dir);
    }
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(corpus_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".y4m") {
        found.push_back(e.path().string());
      }
    }
    std::sort(found.begin(), found.end());
    clips.insert(clips.end(), found.begin(), found.end());
  }
  if (clips.empty()) {
    throw tdp::UsageError("no input clips (give positional paths or --corpus)");
  }
  return clips;
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw tdp::IoError("cannot write " + path);
  os << text;
}

tdp::TdpConfig base_config(const std::string& config_path, const CLI::App& app,
                           std::uint64_t seed, std::size_t jobs) {
  tdp::TdpConfig cfg;
  if (!config_path.empty()) {
    require_file(config_path, "config file");
    cfg = tdp::TdpConfig::from_json_file(config_path);
  }
  if (app.count("--seed")) cfg.seed = seed;
  if (app.count("--jobs")) cfg.jobs = jobs;
  return cfg;
}

double mean_tail_loss(const std::vector<tdp::training::StepMetrics>& rows,
                      std::size_t window) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min(window, rows.size());
  double sum = 0.0;
  for (std::size_t i = rows.size() - n; i < rows.size(); ++i) {
    sum += rows[i].loss;
  }
  return sum / static_cast<double>(n);
}

struct BdbrPair {
  std::string clip_id;
  std::string metric;
  tdp::evaluation::BdbrResult result;
};

// Matches anchor curves to test curves by (clip, metric). Unmatched anchor
// curves are reported on stderr and skipped.
std::vector<BdbrPair> pair_bdbr(const std::string& anchor_csv,
                                const std::string& test_csv) {
  using namespace tdp::evaluation;
  const auto anchor = rows_to_curves(read_results_csv(anchor_csv));
  const auto test = rows_to_curves(read_results_csv(test_csv));
  std::vector<BdbrPair> pairs;
  for (const auto& a : anchor) {
    const std::string& metric = a.points.front().metric;
    const auto it =
        std::find_if(test.begin(), test.end(), [&](const RdCurve& t) {
          return t.clip_id == a.clip_id && t.points.front().metric == metric;
        });
    if (it == test.end()) {
      std::cerr << "warning: no test curve for " << a.clip_id << " (" << metric
                << "), skipped\n";
      continue;
    }
    pairs.push_back({a.clip_id, metric, bdbr(a, *it)});
  }
  if (pairs.empty()) {
    throw tdp::UsageError("no matching (clip, metric) curves between " +
                          anchor_csv + " and " + test_csv);
  }
  return pairs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tri-dynamic preprocessing (TDP) pipeline for UGC video"};
  app.require_subcommand(1);

  std::uint64_t seed = 1234;
  std::size_t jobs = 1;
  std::string config_path;
  app.add_option("--seed", seed, "master random seed")->capture_default_str();
  app.add_option("--jobs", jobs, "worker thread bound")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--config", config_path, "JSON config file (flags win)");

  // ---- analyze ----
  auto* analyze = app.add_subcommand(
      "analyze", "per-clip SI/TI features and probe QP as JSON");
  analyze->fallthrough();
  std::vector<std::string> analyze_inputs;
  std::string analyze_json = "-";
  ProbeFlags analyze_probe;
  analyze->add_option("inputs", analyze_inputs, "Y4M clips")->required();
  analyze->add_option("--json", analyze_json, "output path, - for stdout")
      ->capture_default_str();
  analyze_probe.attach(analyze);
  analyze->callback([&] {
    const tdp::TdpConfig cfg = base_config(config_path, app, seed, jobs);
    json out;
    out["schema_version"] = kSchemaVersion;
    out["clips"] = json::array();
    for (const auto& path : analyze_inputs) {
      require_file(path, "input clip");
      const auto clip = tdp::video_io::read_y4m(path);
      const auto probe = tdp::preanalysis::probe_qp(
          clip, analyze_probe.to_options());
      const auto f =
          tdp::preanalysis::extract_features(clip, probe.clip_qp, cfg.jobs);
      json entry;
      entry["path"] = path;
      entry["width"] = clip.width;
      entry["height"] = clip.height;
      entry["frames"] = clip.frames.size();
      entry["features"] = {
          {"si_max", f.si_max}, {"si_avg", f.si_avg}, {"si_std", f.si_std},
          {"ti_max", f.ti_max}, {"ti_avg", f.ti_avg}, {"ti_std", f.ti_std},
          {"qp", f.qp},
      };
      entry["ti_degenerate"] = f.ti_degenerate;
      entry["qp_source"] = probe.source;
      entry["complexity_raw"] = std::sqrt(f.si_avg * f.ti_avg);
      out["clips"].push_back(std::move(entry));
    }
    write_text(analyze_json, out.dump(2) + "\n");
  });

  // ---- synth ----
  auto* synth = app.add_subcommand(
      "synth", "generate the stratified synthetic training corpus");
  synth->fallthrough();
  std::string synth_out;
  std::size_t synth_per_stratum = 2, synth_w = 64, synth_h = 64, synth_n = 5;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--clips-per-stratum", synth_per_stratum,
                    "clips per stratum (flat/ramp/moving/noise)")
      ->capture_default_str();
  synth->add_option("--width", synth_w, "frame width")->capture_default_str();
  synth->add_option("--height", synth_h, "frame height")->capture_default_str();
  synth->add_option("--frames", synth_n, "frames per clip")
      ->capture_default_str();
  synth->callback([&] {
    const tdp::TdpConfig cfg = base_config(config_path, app, seed, jobs);
    const auto entries = tdp::training::generate_corpus(
        synth_out, cfg.seed, synth_per_stratum, synth_w, synth_h, synth_n);
    std::cout << "wrote " << entries.size() << " clips to " << synth_out
              << "\n";
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "train the TDP networks");
  train->fallthrough();
  std::vector<std::string> train_inputs;
  std::string train_corpus, train_out, train_resume;
  TrainFlags train_flags;
  ProbeFlags train_probe;
  train->add_option("inputs", train_inputs, "Y4M training clips");
  train->add_option("--corpus", train_corpus, "directory of Y4M clips");
  train->add_option("--out", train_out,
                    "output directory (checkpoint.tdp, metrics.csv)")
      ->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train_flags.attach(train);
  train_probe.attach(train);
  train->callback([&] {
    tdp::TdpConfig cfg = base_config(config_path, app, seed, jobs);
    train_flags.apply(train, cfg);
    cfg.validate();
    const auto clips = gather_clips(train_inputs, train_corpus);
    tdp::training::DatasetOptions dopts;
    dopts.patch_size = cfg.patch_size;
    dopts.samples_per_clip = cfg.samples_per_clip;
    dopts.seed = cfg.seed;
    dopts.probe = train_probe.to_options();
    dopts.jobs = cfg.jobs;
    const auto dataset = tdp::training::build_dataset(clips, dopts);
    for (const auto& s : dataset.skipped) {
      std::cerr << "warning: skipped " << s << "\n";
    }
    if (dataset.samples.empty()) {
      throw tdp::UsageError("no usable training samples in the given clips");
    }
    fs::create_directories(train_out);
    const std::string ckpt = (fs::path(train_out) / "checkpoint.tdp").string();
    const std::string csv = (fs::path(train_out) / "metrics.csv").string();
    std::unique_ptr<tdp::training::Trainer> trainer;
    if (train_resume.empty()) {
      trainer = std::make_unique<tdp::training::Trainer>(cfg);
    } else {
      require_file(train_resume, "resume checkpoint");
      trainer = std::make_unique<tdp::training::Trainer>(cfg, train_resume);
    }
    trainer->fit_normalizer(dataset);
    const auto report = trainer->train(dataset, ckpt, csv);
    std::cout << "dataset " << dataset.samples.size() << " samples (manifest "
              << tdp::hex_u64(dataset.manifest_hash) << ")\n";
    std::cout << "trained to step " << trainer->step() << "\n";
    if (!report.metrics.empty()) {
      std::cout << "mean loss, last " << std::min<std::size_t>(20, report.metrics.size())
                << " steps: " << mean_tail_loss(report.metrics, 20) << "\n";
    }
    std::cout << "checkpoint " << report.checkpoint_path << "\n";
  });

  // ---- preprocess ----
  auto* preprocess = app.add_subcommand(
      "preprocess", "apply the trained filter to a clip");
  preprocess->fallthrough();
  std::string pre_input, pre_ckpt, pre_output;
  double pre_force_fd = 0.0;
  ProbeFlags pre_probe;
  preprocess->add_option("input", pre_input, "Y4M clip")->required();
  preprocess->add_option("--checkpoint", pre_ckpt, "trained model bundle")
      ->required();
  preprocess->add_option("--output", pre_output, "output Y4M path")
      ->required();
  auto* force_fd_opt = preprocess->add_option(
      "--force-fd", pre_force_fd, "override the processing intensity in [0,1]");
  pre_probe.attach(preprocess);
  preprocess->callback([&] {
    tdp::TdpConfig global = base_config(config_path, app, seed, jobs);
    require_file(pre_input, "input clip");
    require_file(pre_ckpt, "checkpoint");
    auto bundle = tdp::training::load_bundle(pre_ckpt);
    tdp::TdpConfig cfg = bundle->cfg;
    cfg.jobs = global.jobs;
    std::optional<double> force;
    if (force_fd_opt->count()) force = pre_force_fd;
    const auto clip = tdp::video_io::read_y4m(pre_input);
    double probe_qp_value = 0.0;
    if (!force.has_value() && cfg.enable_dpi) {
      probe_qp_value =
          tdp::preanalysis::probe_qp(clip, pre_probe.to_options()).clip_qp;
    }
    const auto outcome = tdp::dpn::preprocess_clip(
        *bundle->fen_model, bundle->normalizer, *bundle->dpn_model, clip,
        probe_qp_value, cfg, force);
    const fs::path parent = fs::path(pre_output).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    tdp::video_io::write_y4m(outcome.clip, pre_output);
    std::cout << "wrote " << pre_output << " f_d=" << outcome.f_d
              << " qp=" << outcome.qp << "\n";
  });

  // ---- encode-ladder / evaluate ----
  auto* ladder = app.add_subcommand(
      "encode-ladder", "encode clips over a bitrate ladder and score them");
  ladder->alias("evaluate");
  ladder->fallthrough();
  std::vector<std::string> eval_inputs;
  std::string eval_codec = "stub-lossless";
  std::vector<double> eval_bitrates = {1000.0, 2500.0, 4000.0, 5000.0};
  std::vector<std::string> eval_metrics = {"ms-ssim"};
  std::string eval_out = "results.csv";
  std::string eval_ref_dir;
  std::string eval_workdir = ".tdp-work";
  std::string eval_id_mode = "basename";
  bool eval_keep_going = false;
  ladder->add_option("inputs", eval_inputs, "Y4M clips to encode")->required();
  ladder
      ->add_option("--ids", eval_id_mode,
                   "how rows are keyed: by clip file name so anchor and test "
                   "runs from different directories line up, or by full path")
      ->check(CLI::IsMember({"basename", "path"}))
      ->capture_default_str();
  ladder->add_option("--codec", eval_codec,
                     "codec profile: stub-lossless, stub-noisy, x264")
      ->capture_default_str();
  ladder->add_option("--bitrates", eval_bitrates, "target kbps ladder")
      ->delimiter(',');
  ladder->add_option("--metrics", eval_metrics, "quality metrics (ms-ssim, ssim)")
      ->delimiter(',');
  ladder->add_option("--out", eval_out, "results CSV path")
      ->capture_default_str();
  ladder->add_option("--reference-dir", eval_ref_dir,
                     "directory holding the original clips (matched by file "
                     "name); default scores against the input itself");
  ladder->add_option("--workdir", eval_workdir,
                     "scratch directory for external codecs")
      ->capture_default_str();
  ladder->add_flag("--keep-going", eval_keep_going,
                   "continue past failed encodes");
  ladder->callback([&] {
    const tdp::TdpConfig cfg = base_config(config_path, app, seed, jobs);
    const auto profile = tdp::evaluation::profile_by_id(eval_codec);
    if (eval_bitrates.empty()) throw tdp::UsageError("empty --bitrates");
    if (eval_metrics.empty()) throw tdp::UsageError("empty --metrics");
    if (eval_id_mode == "basename") {
      std::set<std::string> seen;
      for (const auto& input : eval_inputs) {
        const auto name = fs::path(input).filename().string();
        if (!seen.insert(name).second) {
          throw tdp::UsageError("two inputs share the file name '" + name +
                                "'; pass --ids path to keep them apart");
        }
      }
    }
    std::vector<tdp::evaluation::ResultRow> rows;
    std::size_t failures = 0;
    for (const auto& input : eval_inputs) {
      try {
        require_file(input, "input clip");
        const auto clip = tdp::video_io::read_y4m(input);
        tdp::video_io::Clip reference = clip;
        if (!eval_ref_dir.empty()) {
          const std::string ref_path =
              (fs::path(eval_ref_dir) / fs::path(input).filename()).string();
          require_file(ref_path, "reference clip");
          reference = tdp::video_io::read_y4m(ref_path);
        }
        const std::string clip_id = eval_id_mode == "basename"
                                        ? fs::path(input).filename().string()
                                        : input;
        for (const auto& metric : eval_metrics) {
          const auto curve = tdp::evaluation::run_ladder(
              clip, reference, profile, eval_bitrates, metric, clip_id,
              cfg.jobs, eval_workdir);
          const auto curve_rows = tdp::evaluation::curve_to_rows(curve);
          rows.insert(rows.end(), curve_rows.begin(), curve_rows.end());
        }
      } catch (const tdp::UsageError&) {
        throw;  // bad invocation, never downgraded by --keep-going
      } catch (const tdp::Error& e) {
        ++failures;
        if (!eval_keep_going) throw;
        std::cerr << "warning: " << input << ": " << e.what() << "\n";
      }
    }
    const fs::path parent = fs::path(eval_out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    tdp::evaluation::write_results_csv(eval_out, rows);
    std::cout << "wrote " << rows.size() << " rows to " << eval_out;
    if (failures > 0) std::cout << " (" << failures << " clips failed)";
    std::cout << "\n";
  });

  // ---- bdbr ----
  auto* bdbr_cmd = app.add_subcommand(
      "bdbr", "Bjontegaard delta bitrate between two results CSVs");
  bdbr_cmd->fallthrough();
  std::string bdbr_anchor, bdbr_test, bdbr_json;
  bool bdbr_per_clip = false;
  bdbr_cmd->add_option("anchor", bdbr_anchor, "anchor results CSV")
      ->required();
  bdbr_cmd->add_option("test", bdbr_test, "test results CSV")->required();
  bdbr_cmd->add_flag("--per-clip", bdbr_per_clip,
                     "print one line per (clip, metric) pair");
  bdbr_cmd->add_option("--json", bdbr_json, "detailed report path, - for stdout");
  bdbr_cmd->callback([&] {
    require_file(bdbr_anchor, "anchor CSV");
    require_file(bdbr_test, "test CSV");
    const auto pairs = pair_bdbr(bdbr_anchor, bdbr_test);
    std::vector<double> valid_values;
    for (const auto& p : pairs) {
      if (p.result.valid) valid_values.push_back(p.result.value);
    }
    if (valid_values.empty()) {
      throw tdp::ComputeError("no valid BDBR pair (see notes in --json output)");
    }
    double mean = 0.0;
    for (double v : valid_values) mean += v;
    mean /= static_cast<double>(valid_values.size());
    if (!bdbr_json.empty()) {
      json out;
      out["schema_version"] = kSchemaVersion;
      out["pairs"] = json::array();
      for (const auto& p : pairs) {
        json e;
        e["clip"] = p.clip_id;
        e["metric"] = p.metric;
        e["valid"] = p.result.valid;
        e["bdbr_percent"] = p.result.value;
        e["overlap"] = {p.result.overlap_lo, p.result.overlap_hi};
        e["note"] = p.result.note;
        out["pairs"].push_back(std::move(e));
      }
      out["mean_bdbr_percent"] = mean;
      out["bad_case_rate"] = tdp::evaluation::bad_case_rate(valid_values);
      write_text(bdbr_json, out.dump(2) + "\n");
    }
    std::cout << std::fixed << std::setprecision(2);
    if (bdbr_per_clip) {
      for (const auto& p : pairs) {
        std::cout << p.clip_id << "," << p.metric << ",";
        if (p.result.valid) {
          std::cout << p.result.value;
        } else {
          std::cout << "NA";
        }
        std::cout << "\n";
      }
    }
    if (std::abs(mean) < 0.005) mean = 0.0;  // avoid printing -0.00
    std::cout << mean << "\n";
  });

  // ---- heatmap ----
  auto* heatmap = app.add_subcommand(
      "heatmap", "BDBR heat map binned by content complexity and f_q");
  heatmap->fallthrough();
  std::string hm_anchor, hm_test, hm_out, hm_clips_dir;
  ProbeFlags hm_probe;
  heatmap->add_option("anchor", hm_anchor, "anchor results CSV")->required();
  heatmap->add_option("test", hm_test, "test results CSV")->required();
  heatmap->add_option("--out", hm_out, "heat map CSV path")->required();
  heatmap->add_option("--clips-dir", hm_clips_dir,
                      "directory that resolves clip ids from the CSVs when "
                      "they are bare file names");
  hm_probe.attach(heatmap);
  heatmap->callback([&] {
    require_file(hm_anchor, "anchor CSV");
    require_file(hm_test, "test CSV");
    const auto pairs = pair_bdbr(hm_anchor, hm_test);
    // each clip is read once for its complexity and f_q; ids may be paths
    // or bare names resolved against --clips-dir
    std::vector<std::string> clip_ids;
    for (const auto& p : pairs) {
      if (p.result.valid &&
          std::find(clip_ids.begin(), clip_ids.end(), p.clip_id) ==
              clip_ids.end()) {
        clip_ids.push_back(p.clip_id);
      }
    }
    if (clip_ids.empty()) {
      throw tdp::ComputeError("no valid BDBR pair to bin");
    }
    std::vector<double> raw(clip_ids.size());
    std::vector<double> fq(clip_ids.size());
    for (std::size_t i = 0; i < clip_ids.size(); ++i) {
      std::string resolved = clip_ids[i];
      if (!fs::exists(resolved) && !hm_clips_dir.empty()) {
        resolved = (fs::path(hm_clips_dir) / clip_ids[i]).string();
      }
      require_file(resolved, "clip referenced by results CSV");
      const auto clip = tdp::video_io::read_y4m(resolved);
      raw[i] = tdp::evaluation::raw_complexity(clip);
      const auto probe =
          tdp::preanalysis::probe_qp(clip, hm_probe.to_options());
      fq[i] = tdp::codec_sim::dynamic_quant_level(probe.clip_qp).f_q;
    }
    const auto norm = tdp::evaluation::normalize_complexities(raw);
    std::vector<tdp::evaluation::HeatmapSample> samples;
    for (const auto& p : pairs) {
      if (!p.result.valid) continue;
      const auto idx = static_cast<std::size_t>(
          std::find(clip_ids.begin(), clip_ids.end(), p.clip_id) -
          clip_ids.begin());
      samples.push_back({norm[idx], fq[idx], p.result.value});
    }
    const auto map = tdp::evaluation::complexity_heatmap(samples);
    write_text(hm_out, tdp::evaluation::heatmap_to_csv(map));
    std::cout << "wrote " << hm_out << " (" << samples.size() << " samples)\n";
  });

  // ---- ablate ----
  auto* ablate = app.add_subcommand(
      "ablate", "train the four control-scheme ablations");
  ablate->fallthrough();
  std::vector<std::string> ablate_inputs;
  std::string ablate_corpus, ablate_out;
  TrainFlags ablate_flags;
  ProbeFlags ablate_probe;
  ablate->add_option("inputs", ablate_inputs, "Y4M training clips");
  ablate->add_option("--corpus", ablate_corpus, "directory of Y4M clips");
  ablate->add_option("--out-dir", ablate_out, "output directory")->required();
  ablate_flags.attach(ablate);
  ablate_probe.attach(ablate);
  ablate->callback([&] {
    tdp::TdpConfig cfg = base_config(config_path, app, seed, jobs);
    ablate_flags.apply(ablate, cfg);
    cfg.validate();
    const auto clips = gather_clips(ablate_inputs, ablate_corpus);
    tdp::training::DatasetOptions dopts;
    dopts.patch_size = cfg.patch_size;
    dopts.samples_per_clip = cfg.samples_per_clip;
    dopts.seed = cfg.seed;
    dopts.probe = ablate_probe.to_options();
    dopts.jobs = cfg.jobs;
    const auto dataset = tdp::training::build_dataset(clips, dopts);
    if (dataset.samples.empty()) {
      throw tdp::UsageError("no usable training samples in the given clips");
    }
    fs::create_directories(ablate_out);
    std::ostringstream table;
    table << "name,dpi,dql,dlamt,steps,final_loss\n";
    for (const auto& [name, acfg] : tdp::training::ablation_matrix(cfg)) {
      const fs::path dir = fs::path(ablate_out) / name;
      fs::create_directories(dir);
      tdp::training::Trainer trainer(acfg);
      trainer.fit_normalizer(dataset);
      const auto report = trainer.train(
          dataset, (dir / "checkpoint.tdp").string(),
          (dir / "metrics.csv").string());
      table << name << "," << (acfg.enable_dpi ? 1 : 0) << ","
            << (acfg.enable_dql ? 1 : 0) << "," << (acfg.enable_dlamt ? 1 : 0)
            << "," << acfg.steps << ","
            << std::setprecision(12) << mean_tail_loss(report.metrics, 20)
            << "\n";
      std::cout << name << " done\n";
    }
    const std::string table_path =
        (fs::path(ablate_out) / "ablation.csv").string();
    write_text(table_path, table.str());
    std::cout << "wrote " << table_path << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const tdp::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const tdp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

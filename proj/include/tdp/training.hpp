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

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tdp/codec_sim.hpp"
#include "tdp/config.hpp"
#include "tdp/dpn.hpp"
#include "tdp/fen.hpp"
#include "tdp/loss.hpp"
#include "tdp/optim.hpp"
#include "tdp/preanalysis.hpp"
#include "tdp/rng.hpp"
#include "tdp/video_io.hpp"

namespace tdp::training {

// ---- synthetic corpus ----

enum class Stratum { kFlat, kRamp, kMoving, kNoise };

const char* stratum_name(Stratum s);

// Procedural test-content generator spanning complexity strata, from flat
// (zero SI/TI) up to dense noise (maximal SI/TI). Deterministic for a given
// rng state.
video_io::Clip make_synth_clip(Stratum stratum, std::size_t width,
                               std::size_t height, std::size_t frames,
                               Rng& rng);

struct CorpusEntry {
  std::string path;
  Stratum stratum = Stratum::kFlat;
};

// Writes clips_per_stratum Y4M files per stratum plus a manifest.json into
// dir; file order and contents are functions of the seed alone.
std::vector<CorpusEntry> generate_corpus(const std::string& dir,
                                         std::uint64_t seed,
                                         std::size_t clips_per_stratum,
                                         std::size_t width, std::size_t height,
                                         std::size_t frames);

// ---- dataset ----

// One training unit: a 3-frame luma patch stack plus the features that the
// pre-analysis stage extracted for it.
struct TrainSample {
  numerics::Tensor patches;  // 3 x 1 x P x P, normalized luma
  preanalysis::FeatureVector features;
  double qp = 0.0;
  std::string source;
  std::size_t start_frame = 0;
  std::size_t crop_x = 0;
  std::size_t crop_y = 0;
};

struct Dataset {
  std::vector<TrainSample> samples;
  std::vector<std::string> skipped;  // clips too short or too small, with reason
  std::uint64_t manifest_hash = 0;
};

struct DatasetOptions {
  std::size_t patch_size = 64;
  std::size_t samples_per_clip = 4;
  std::uint64_t seed = 1234;
  preanalysis::ProbeOptions probe;
  std::size_t jobs = 1;
};

// Random 3-consecutive-frame spatial crops per clip, features computed on
// each cropped sub-sequence with the full-clip probe QP attached. Clips with
// fewer than 3 frames or smaller than the patch are skipped and logged.
Dataset build_dataset(const std::vector<std::string>& clip_paths,
                      const DatasetOptions& opts);

// ---- model bundle ----

// Everything a trained pipeline needs, held together so checkpoints stay
// self-describing (network widths and the normalizer ride along with the
// weights). Pinned in memory; models hold handles into `params`.
struct ModelBundle {
  numerics::ParamStore params;
  std::unique_ptr<fen::FenModel> fen_model;
  std::unique_ptr<dpn::DpnModel> dpn_model;
  std::unique_ptr<codec_sim::SimulatorModel> sim_model;
  fen::Normalizer normalizer;
  TdpConfig cfg;
  std::uint64_t step = 0;

  ModelBundle() = default;
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;
};

std::unique_ptr<ModelBundle> create_bundle(const TdpConfig& cfg);
void save_bundle(const ModelBundle& bundle, const std::string& path,
                 const numerics::Adam* opt = nullptr);
std::unique_ptr<ModelBundle> load_bundle(const std::string& path,
                                         numerics::Adam* opt = nullptr);

// ---- training loop ----

struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0.0;
  double distortion = 0.0;
  double rate_bpp = 0.0;
  double lambda = 0.0;
  double f_d = 0.0;
  double f_q = 0.0;
};

void write_metrics_csv(const std::string& path,
                       const std::vector<StepMetrics>& rows, bool append);

struct TrainReport {
  std::vector<StepMetrics> metrics;  // rows for the steps run in this call
  std::string checkpoint_path;
};

class Trainer {
 public:
  // Fresh run: parameters initialized from cfg.seed.
  explicit Trainer(const TdpConfig& cfg);
  // Resume: parameters, optimizer moments and step counter from checkpoint.
  Trainer(const TdpConfig& cfg, const std::string& resume_checkpoint);

  // Must run before training; refitting on the same dataset reproduces the
  // same normalizer, which keeps resumed runs bit-identical.
  void fit_normalizer(const Dataset& dataset);

  // One optimization step on one sample. Aborts (throws ComputeError) before
  // touching parameters when the loss or any gradient is non-finite.
  loss::RdLossTerms train_step(const TrainSample& sample, Rng& rng);

  // Runs cfg.steps total steps (continuing from the restored step counter),
  // sampling the dataset with per-step derived rng streams, checkpointing
  // every cfg.checkpoint_every steps and on completion.
  TrainReport train(const Dataset& dataset, const std::string& checkpoint_path,
                    const std::string& metrics_csv_path);

  const ModelBundle& bundle() const { return *bundle_; }
  ModelBundle& bundle() { return *bundle_; }
  std::uint64_t step() const { return bundle_->step; }

  // Control values chosen by the most recent train_step; surfaced for the
  // metrics log.
  double last_f_d() const { return last_f_d_; }
  double last_f_q() const { return last_f_q_; }

 private:
  std::unique_ptr<ModelBundle> bundle_;
  std::unique_ptr<numerics::Adam> opt_;
  bool normalizer_ready_ = false;
  double last_f_d_ = 0.0;
  double last_f_q_ = 0.0;
};

// The four control-scheme rows exercised by the ablation runner:
// DPI alone, DQL alone, DlamT alone, and all three together.
std::vector<std::pair<std::string, TdpConfig>> ablation_matrix(
    const TdpConfig& base);

}  // namespace tdp::training

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

#include "tdp/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include <nlohmann/json.hpp>

#include "tdp/error.hpp"
#include "tdp/hash.hpp"
#include "tdp/parallel.hpp"

namespace tdp::training {

namespace {

using numerics::real;
using numerics::Tensor;

constexpr std::uint16_t kChromaMid8 = 128;

video_io::Clip blank_clip(std::size_t width, std::size_t height,
                          std::size_t frames) {
  video_io::Clip clip;
  clip.width = width;
  clip.height = height;
  clip.fps_num = 30;
  clip.fps_den = 1;
  clip.bit_depth = 8;
  clip.chroma = video_io::Chroma::k420;
  clip.frames.resize(frames);
  for (auto& f : clip.frames) {
    f.y.assign(clip.luma_size(), 0);
    f.u.assign(clip.chroma_size(), kChromaMid8);
    f.v.assign(clip.chroma_size(), kChromaMid8);
  }
  return clip;
}

double meta_scalar(const numerics::CheckpointMap& cm, const std::string& key) {
  auto it = cm.find(key);
  if (it == cm.end() || it->second.values.size() != 1) {
    throw ParseError("checkpoint missing meta entry " + key, 0);
  }
  return it->second.values[0];
}

}  // namespace

const char* stratum_name(Stratum s) {
  switch (s) {
    case Stratum::kFlat:
      return "flat";
    case Stratum::kRamp:
      return "ramp";
    case Stratum::kMoving:
      return "moving";
    case Stratum::kNoise:
      return "noise";
  }
  return "unknown";
}

video_io::Clip make_synth_clip(Stratum stratum, std::size_t width,
                               std::size_t height, std::size_t frames,
                               Rng& rng) {
  if (width % 2 || height % 2 || width < 16 || height < 16 || frames == 0) {
    throw DimensionError("synthetic clip needs even dims >= 16 and >= 1 frame");
  }
  video_io::Clip clip = blank_clip(width, height, frames);
  switch (stratum) {
    case Stratum::kFlat: {
      const std::uint16_t level =
          static_cast<std::uint16_t>(40 + 30 * rng.index(6));
      for (auto& f : clip.frames) f.y.assign(clip.luma_size(), level);
      break;
    }
    case Stratum::kRamp: {
      // Slowly drifting diagonal gradient; low SI, near-zero TI.
      const double denom =
          static_cast<double>(width + height + 2 * frames);
      for (std::size_t t = 0; t < frames; ++t) {
        auto& y = clip.frames[t].y;
        for (std::size_t r = 0; r < height; ++r)
          for (std::size_t c = 0; c < width; ++c) {
            const double v = (c + r + 2.0 * t) * 200.0 / denom + 20.0;
            y[r * width + c] = static_cast<std::uint16_t>(v);
          }
      }
      break;
    }
    case Stratum::kMoving: {
      // Bright square translating over a gray background.
      const std::size_t side = std::max<std::size_t>(8, width / 8);
      const std::size_t px = rng.index(width - side);
      const std::size_t py = rng.index(height - side);
      for (std::size_t t = 0; t < frames; ++t) {
        auto& y = clip.frames[t].y;
        y.assign(clip.luma_size(), 128);
        const std::size_t x0 = (px + 5 * t) % (width - side);
        const std::size_t y0 = (py + 3 * t) % (height - side);
        for (std::size_t r = y0; r < y0 + side; ++r)
          for (std::size_t c = x0; c < x0 + side; ++c)
            y[r * width + c] = 235;
      }
      break;
    }
    case Stratum::kNoise: {
      for (auto& f : clip.frames)
        for (auto& v : f.y) v = static_cast<std::uint16_t>(rng.index(256));
      break;
    }
  }
  return clip;
}

std::vector<CorpusEntry> generate_corpus(const std::string& dir,
                                         std::uint64_t seed,
                                         std::size_t clips_per_stratum,
                                         std::size_t width, std::size_t height,
                                         std::size_t frames) {
  std::filesystem::create_directories(dir);
  const Stratum strata[] = {Stratum::kFlat, Stratum::kRamp, Stratum::kMoving,
                            Stratum::kNoise};
  std::vector<CorpusEntry> entries;
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["seed"] = seed;
  manifest["width"] = width;
  manifest["height"] = height;
  manifest["frames"] = frames;
  manifest["clips"] = nlohmann::json::array();
  std::uint64_t global = 0;
  for (Stratum s : strata) {
    for (std::size_t v = 0; v < clips_per_stratum; ++v, ++global) {
      Rng rng = Rng::stream(seed, rng_stream::kSynthCorpus, global);
      video_io::Clip clip = make_synth_clip(s, width, height, frames, rng);
      const std::string name =
          std::string(stratum_name(s)) + "_" + std::to_string(v) + ".y4m";
      const std::string path = (std::filesystem::path(dir) / name).string();
      video_io::write_y4m(clip, path);
      entries.push_back({path, s});
      manifest["clips"].push_back(
          {{"file", name}, {"stratum", stratum_name(s)}});
    }
  }
  std::ofstream os(std::filesystem::path(dir) / "manifest.json");
  if (!os) throw IoError("cannot write corpus manifest in " + dir);
  os << manifest.dump(2) << "\n";
  return entries;
}

Dataset build_dataset(const std::vector<std::string>& clip_paths,
                      const DatasetOptions& opts) {
  if (opts.patch_size < 16) {
    throw DimensionError("patch size must be >= 16");
  }
  const std::size_t P = opts.patch_size;
  std::vector<std::vector<TrainSample>> per_clip(clip_paths.size());
  std::vector<std::string> skipped_slots(clip_paths.size());

  parallel_for(clip_paths.size(), opts.jobs, [&](std::size_t ci) {
    const std::string& path = clip_paths[ci];
    video_io::Clip clip = video_io::read_y4m(path);
    if (clip.frames.size() < 3) {
      skipped_slots[ci] = path + ": fewer than 3 frames";
      return;
    }
    if (clip.width < P || clip.height < P) {
      skipped_slots[ci] = path + ": smaller than patch size";
      return;
    }
    const double clip_qp = preanalysis::probe_qp(clip, opts.probe).clip_qp;
    Rng rng = Rng::stream(opts.seed, rng_stream::kDataset, ci);
    const real scale = 1.0 / static_cast<real>(clip.max_sample());
    for (std::size_t s = 0; s < opts.samples_per_clip; ++s) {
      TrainSample sample;
      sample.source = path;
      sample.qp = clip_qp;
      sample.start_frame = rng.index(clip.frames.size() - 2);
      sample.crop_x = rng.index(clip.width - P + 1);
      sample.crop_y = rng.index(clip.height - P + 1);

      // Crop the 3-frame window into a standalone sub-clip so the features
      // describe exactly what the networks will see. 4:4:4 sidesteps the
      // even-dimension rule for odd patch sizes.
      video_io::Clip sub;
      sub.width = P;
      sub.height = P;
      sub.fps_num = clip.fps_num;
      sub.fps_den = clip.fps_den;
      sub.bit_depth = clip.bit_depth;
      sub.chroma = video_io::Chroma::k444;
      std::vector<real> stack;
      stack.reserve(3 * P * P);
      for (std::size_t t = 0; t < 3; ++t) {
        const auto& y = clip.frames[sample.start_frame + t].y;
        video_io::Frame f;
        f.y.resize(P * P);
        f.u.assign(P * P, kChromaMid8);
        f.v.assign(P * P, kChromaMid8);
        for (std::size_t r = 0; r < P; ++r) {
          const std::size_t src =
              (sample.crop_y + r) * clip.width + sample.crop_x;
          for (std::size_t c = 0; c < P; ++c) {
            const std::uint16_t v = y[src + c];
            f.y[r * P + c] = v;
            stack.push_back(static_cast<real>(v) * scale);
          }
        }
        sub.frames.push_back(std::move(f));
      }
      sample.features = preanalysis::extract_features(sub, clip_qp);
      sample.patches = Tensor::from_data({3, 1, P, P}, std::move(stack));
      per_clip[ci].push_back(std::move(sample));
    }
  });

  Dataset ds;
  Fnv1a h;
  for (std::size_t ci = 0; ci < clip_paths.size(); ++ci) {
    if (!skipped_slots[ci].empty()) ds.skipped.push_back(skipped_slots[ci]);
    for (auto& s : per_clip[ci]) {
      h.update_string(s.source);
      h.update_pod<std::uint64_t>(s.start_frame);
      h.update_pod<std::uint64_t>(s.crop_x);
      h.update_pod<std::uint64_t>(s.crop_y);
      h.update_pod<double>(s.qp);
      for (double v : s.features.to_array()) h.update_pod<double>(v);
      const auto& data = s.patches.data();
      h.update(data.data(), data.size() * sizeof(real));
      ds.samples.push_back(std::move(s));
    }
  }
  ds.manifest_hash = h.digest();
  return ds;
}

std::unique_ptr<ModelBundle> create_bundle(const TdpConfig& cfg) {
  cfg.validate();
  auto bundle = std::make_unique<ModelBundle>();
  bundle->cfg = cfg;
  Rng init = Rng::stream(cfg.seed, rng_stream::kParamInit, 0);
  bundle->fen_model =
      std::make_unique<fen::FenModel>(bundle->params, cfg.fen_hidden, init);
  bundle->dpn_model =
      std::make_unique<dpn::DpnModel>(bundle->params, cfg.dpn_channels, init);
  bundle->sim_model = std::make_unique<codec_sim::SimulatorModel>(
      bundle->params, cfg.sim_channels, init);
  if (cfg.freeze_simulator) bundle->params.set_trainable("sim.", false);
  return bundle;
}

void save_bundle(const ModelBundle& bundle, const std::string& path,
                 const numerics::Adam* opt) {
  numerics::CheckpointMap cm =
      numerics::checkpoint_from_state(bundle.params, opt, bundle.step);
  cm["meta.fen_hidden"] = {{1}, {static_cast<real>(bundle.cfg.fen_hidden)}};
  cm["meta.dpn_channels"] = {{1},
                             {static_cast<real>(bundle.cfg.dpn_channels)}};
  cm["meta.sim_channels"] = {{1},
                             {static_cast<real>(bundle.cfg.sim_channels)}};
  cm["meta.latent_unit"] = {{1}, {bundle.cfg.latent_unit}};
  cm["norm.mean"] = {{fen::FeatureVector::kDim},
                     {bundle.normalizer.mean.begin(),
                      bundle.normalizer.mean.end()}};
  cm["norm.std"] = {{fen::FeatureVector::kDim},
                    {bundle.normalizer.std.begin(),
                     bundle.normalizer.std.end()}};
  numerics::save_checkpoint(path, cm);
}

std::unique_ptr<ModelBundle> load_bundle(const std::string& path,
                                         numerics::Adam* opt) {
  const numerics::CheckpointMap cm = numerics::load_checkpoint(path);
  TdpConfig cfg;
  cfg.fen_hidden = static_cast<std::size_t>(meta_scalar(cm, "meta.fen_hidden"));
  cfg.dpn_channels =
      static_cast<std::size_t>(meta_scalar(cm, "meta.dpn_channels"));
  cfg.sim_channels =
      static_cast<std::size_t>(meta_scalar(cm, "meta.sim_channels"));
  cfg.latent_unit = meta_scalar(cm, "meta.latent_unit");

  auto bundle = create_bundle(cfg);
  bundle->step = numerics::state_from_checkpoint(cm, bundle->params, opt);

  auto nm = cm.find("norm.mean");
  auto ns = cm.find("norm.std");
  if (nm == cm.end() || ns == cm.end() ||
      nm->second.values.size() != fen::FeatureVector::kDim ||
      ns->second.values.size() != fen::FeatureVector::kDim) {
    throw ParseError("checkpoint missing normalizer state", 0);
  }
  std::copy(nm->second.values.begin(), nm->second.values.end(),
            bundle->normalizer.mean.begin());
  std::copy(ns->second.values.begin(), ns->second.values.end(),
            bundle->normalizer.std.begin());
  return bundle;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<StepMetrics>& rows, bool append) {
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw IoError("cannot write metrics to " + path);
  if (!append) {
    os << "step,loss,distortion,rate_bpp,lambda,f_d,f_q\n";
  }
  os << std::setprecision(12);
  for (const auto& r : rows) {
    os << r.step << "," << r.loss << "," << r.distortion << "," << r.rate_bpp
       << "," << r.lambda << "," << r.f_d << "," << r.f_q << "\n";
  }
}

Trainer::Trainer(const TdpConfig& cfg) : bundle_(create_bundle(cfg)) {
  opt_ = std::make_unique<numerics::Adam>(bundle_->params,
                                          numerics::AdamConfig{cfg.lr});
}

Trainer::Trainer(const TdpConfig& cfg, const std::string& resume_checkpoint) {
  cfg.validate();
  bundle_ = load_bundle(resume_checkpoint);
  if (bundle_->cfg.fen_hidden != cfg.fen_hidden ||
      bundle_->cfg.dpn_channels != cfg.dpn_channels ||
      bundle_->cfg.sim_channels != cfg.sim_channels) {
    throw UsageError("config widths do not match checkpoint " +
                     resume_checkpoint);
  }
  bundle_->cfg = cfg;
  if (cfg.freeze_simulator) bundle_->params.set_trainable("sim.", false);
  opt_ = std::make_unique<numerics::Adam>(bundle_->params,
                                          numerics::AdamConfig{cfg.lr});
  // Second pass over the file restores the optimizer moments now that the
  // optimizer exists against the loaded parameter store.
  const auto cm = numerics::load_checkpoint(resume_checkpoint);
  numerics::state_from_checkpoint(cm, bundle_->params, opt_.get());
  normalizer_ready_ = true;
}

void Trainer::fit_normalizer(const Dataset& dataset) {
  std::vector<std::array<double, fen::FeatureVector::kDim>> rows;
  rows.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) rows.push_back(s.features.to_array());
  bundle_->normalizer = fen::Normalizer::fit(rows);
  normalizer_ready_ = true;
}

loss::RdLossTerms Trainer::train_step(const TrainSample& sample, Rng& rng) {
  const TdpConfig& cfg = bundle_->cfg;
  if (!sample.patches.defined() || sample.patches.shape().size() != 4) {
    throw DimensionError("train sample has no patch stack");
  }

  Tensor f_d;
  if (cfg.enable_dpi) {
    if (!normalizer_ready_) {
      throw ComputeError("normalizer not fitted before training");
    }
    f_d = fen::fen_forward(*bundle_->fen_model, sample.features,
                           bundle_->normalizer);
  } else {
    f_d = Tensor::scalar(cfg.fixed_f_d);
  }
  const codec_sim::QuantLevel level =
      cfg.enable_dql ? codec_sim::dynamic_quant_level(sample.qp)
                     : codec_sim::QuantLevel{cfg.fixed_f_q};
  const loss::LambdaMap lmap{cfg.lambda_k, cfg.lambda_b, cfg.lambda_min,
                             cfg.lambda_max};
  const double lambda = cfg.enable_dlamt ? loss::lambda_adapt(sample.qp, lmap)
                                         : cfg.fixed_lambda;

  const Tensor& x = sample.patches;
  Tensor x_m = bundle_->dpn_model->mask(x);
  Tensor processed = dpn::apply_intensity(x, x_m, f_d);
  codec_sim::SimResult sim =
      codec_sim::simulate(*bundle_->sim_model, processed, level,
                          codec_sim::QuantMode::kTrain, cfg.latent_unit, &rng);

  loss::MsSsimOptions mopts;
  mopts.weights = cfg.msssim_weights;
  loss::RdLossTerms terms = loss::rd_loss_with_lambda(
      x, sim.reconstruction, sim.rate_bits, lambda, x.numel(), mopts);

  bundle_->params.zero_grads();
  numerics::backward(terms.total);
  for (const auto& [name, t] : bundle_->params.entries()) {
    if (!t.requires_grad()) continue;
    for (real g : t.grad()) {
      if (!std::isfinite(g)) {
        throw ComputeError("non-finite gradient on " + name +
                           "; step aborted, parameters unchanged");
      }
    }
  }
  opt_->step();
  ++bundle_->step;
  last_f_d_ = f_d.value();
  last_f_q_ = level.f_q;
  return terms;
}

TrainReport Trainer::train(const Dataset& dataset,
                           const std::string& checkpoint_path,
                           const std::string& metrics_csv_path) {
  const TdpConfig& cfg = bundle_->cfg;
  if (dataset.samples.empty()) {
    throw UsageError("training dataset is empty");
  }
  if (!normalizer_ready_) fit_normalizer(dataset);

  const std::uint64_t initial_step = bundle_->step;
  TrainReport report;
  report.checkpoint_path = checkpoint_path;
  while (bundle_->step < cfg.steps) {
    const std::uint64_t s = bundle_->step;
    Rng rng = Rng::stream(cfg.seed, rng_stream::kTrainStep, s);
    const std::size_t idx = rng.index(dataset.samples.size());
    const loss::RdLossTerms terms = train_step(dataset.samples[idx], rng);
    StepMetrics row;
    row.step = s;
    row.loss = terms.total.value();
    row.distortion = terms.distortion.value();
    row.rate_bpp = terms.rate_bpp.value();
    row.lambda = terms.lambda;
    row.f_d = last_f_d_;
    row.f_q = last_f_q_;
    report.metrics.push_back(row);
    if (!checkpoint_path.empty() &&
        (bundle_->step % cfg.checkpoint_every == 0 ||
         bundle_->step == cfg.steps)) {
      save_bundle(*bundle_, checkpoint_path, opt_.get());
    }
  }
  if (!checkpoint_path.empty() && bundle_->step == initial_step) {
    save_bundle(*bundle_, checkpoint_path, opt_.get());  // nothing to train
  }
  if (!metrics_csv_path.empty()) {
    write_metrics_csv(metrics_csv_path, report.metrics, initial_step > 0);
  }
  return report;
}

std::vector<std::pair<std::string, TdpConfig>> ablation_matrix(
    const TdpConfig& base) {
  std::vector<std::pair<std::string, TdpConfig>> rows;
  const bool flags[4][3] = {
      {true, false, false},  // DPI only
      {false, true, false},  // DQL only
      {false, false, true},  // DlamT only
      {true, true, true},    // full TDP
  };
  const char* names[4] = {"dpi_only", "dql_only", "dlamt_only", "full_tdp"};
  for (int i = 0; i < 4; ++i) {
    TdpConfig cfg = base;
    cfg.enable_dpi = flags[i][0];
    cfg.enable_dql = flags[i][1];
    cfg.enable_dlamt = flags[i][2];
    rows.emplace_back(names[i], cfg);
  }
  return rows;
}

}  // namespace tdp::training

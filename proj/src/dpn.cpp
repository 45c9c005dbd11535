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

#include "tdp/dpn.hpp"

#include <cmath>
#include <string>

#include "tdp/error.hpp"
#include "tdp/parallel.hpp"
#include "tdp/preanalysis.hpp"

namespace tdp::dpn {

namespace {

using numerics::Shape;
using numerics::Tensor;

std::string block_name(std::size_t b, int conv, const char* leaf) {
  return "dpn.block" + std::to_string(b + 1) + ".c" + std::to_string(conv) +
         "." + leaf;
}

Tensor conv_init(Shape shape, Rng& rng, double gain = 1.0) {
  // He-style scaling over fan-in. The tail uses a small gain so training
  // starts close to the identity preprocessing.
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  const double s = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  return Tensor::randn(std::move(shape), rng, s);
}

}  // namespace

DpnModel::DpnModel(numerics::ParamStore& params, std::size_t channels,
                   Rng& init_rng)
    : channels_(channels) {
  if (channels == 0) throw DimensionError("dpn channels must be >= 1");
  const std::size_t C = channels;
  head_w_ = params.create("dpn.head.w", conv_init({C, 1, 3, 3}, init_rng));
  head_b_ = params.create("dpn.head.b", Tensor::zeros({C}));
  for (std::size_t b = 0; b < kBlocks; ++b) {
    block_w_[b][0] =
        params.create(block_name(b, 1, "w"), conv_init({C, C, 3, 3}, init_rng));
    block_b_[b][0] = params.create(block_name(b, 1, "b"), Tensor::zeros({C}));
    block_w_[b][1] =
        params.create(block_name(b, 2, "w"), conv_init({C, C, 3, 3}, init_rng));
    block_b_[b][1] = params.create(block_name(b, 2, "b"), Tensor::zeros({C}));
  }
  tail_w_ =
      params.create("dpn.tail.w", conv_init({1, C, 3, 3}, init_rng, 0.05));
  tail_b_ = params.create("dpn.tail.b", Tensor::zeros({1}));
}

DpnModel::DpnModel(numerics::ParamStore& params, std::size_t channels)
    : channels_(channels),
      head_w_(params.get("dpn.head.w")),
      head_b_(params.get("dpn.head.b")),
      tail_w_(params.get("dpn.tail.w")),
      tail_b_(params.get("dpn.tail.b")) {
  for (std::size_t b = 0; b < kBlocks; ++b) {
    block_w_[b][0] = params.get(block_name(b, 1, "w"));
    block_b_[b][0] = params.get(block_name(b, 1, "b"));
    block_w_[b][1] = params.get(block_name(b, 2, "w"));
    block_b_[b][1] = params.get(block_name(b, 2, "b"));
  }
  if (head_w_.shape() != Shape{channels, 1, 3, 3}) {
    throw DimensionError("dpn.head.w shape does not match channel width " +
                         std::to_string(channels));
  }
}

Tensor DpnModel::mask(const Tensor& x) const {
  if (!x.defined() || x.shape().size() != 4 || x.dim(1) != 1) {
    throw DimensionError("dpn mask expects an N x 1 x H x W tensor");
  }
  if (x.dim(2) < 16 || x.dim(3) < 16) {
    throw DimensionError("dpn mask needs patches of at least 16x16, got " +
                         numerics::shape_str(x.shape()));
  }
  Tensor h =
      numerics::relu(numerics::conv2d(x, head_w_, head_b_, 1, 1));
  for (std::size_t b = 0; b < kBlocks; ++b) {
    Tensor r = numerics::conv2d(h, block_w_[b][0], block_b_[b][0], 1, 1);
    r = numerics::relu(r);
    r = numerics::conv2d(r, block_w_[b][1], block_b_[b][1], 1, 1);
    h = numerics::add(h, r);
  }
  return numerics::tanh_of(numerics::conv2d(h, tail_w_, tail_b_, 1, 1));
}

Tensor dpn_mask(const DpnModel& model, const Tensor& x) {
  return model.mask(x);
}

Tensor apply_intensity(const Tensor& x, const Tensor& x_m, const Tensor& f_d) {
  if (x.shape() != x_m.shape()) {
    throw DimensionError("apply_intensity: shape mismatch " +
                         numerics::shape_str(x.shape()) + " vs " +
                         numerics::shape_str(x_m.shape()));
  }
  if (f_d.numel() != 1) {
    throw DimensionError("apply_intensity: f_d must be scalar");
  }
  return numerics::add(numerics::scale_by(x_m, f_d), x);
}

Tensor apply_intensity(const Tensor& x, const Tensor& x_m, double f_d) {
  return apply_intensity(x, x_m, Tensor::scalar(f_d));
}

PreprocessOutcome preprocess_clip(const fen::FenModel& fen_model,
                                  const fen::Normalizer& normalizer,
                                  const DpnModel& dpn_model,
                                  const video_io::Clip& clip, double probe_qp,
                                  const TdpConfig& cfg,
                                  std::optional<double> force_f_d) {
  clip.validate();
  PreprocessOutcome out;
  out.qp = probe_qp;

  if (force_f_d.has_value()) {
    out.f_d = *force_f_d;
  } else if (!cfg.enable_dpi) {
    out.f_d = cfg.fixed_f_d;
  } else {
    const auto features =
        preanalysis::extract_features(clip, probe_qp, cfg.jobs);
    out.f_d = fen::fen_forward(fen_model, features, normalizer).value();
  }
  if (out.f_d < 0.0 || out.f_d > 1.0 || !std::isfinite(out.f_d)) {
    throw ComputeError("preprocess intensity out of range: " +
                       std::to_string(out.f_d));
  }

  out.clip = clip;
  if (out.f_d == 0.0) return out;  // exact identity path

  const std::size_t H = clip.height, W = clip.width;
  parallel_for(clip.frames.size(), cfg.jobs, [&](std::size_t i) {
    Tensor luma = video_io::to_normalized_luma(clip, i);
    Tensor x = numerics::reshape(luma, {1, 1, H, W});
    Tensor processed = apply_intensity(x, dpn_model.mask(x), out.f_d);
    video_io::store_normalized_luma(numerics::reshape(processed, {H, W}),
                                    out.clip.frames[i], clip.bit_depth);
  });
  return out;
}

}  // namespace tdp::dpn

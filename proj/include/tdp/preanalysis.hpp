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

#include <array>
#include <string>
#include <vector>

#include "tdp/tensor.hpp"
#include "tdp/video_io.hpp"

namespace tdp::preanalysis {

// Clip-level content descriptor fed to the filtering estimation network.
// The component order is a frozen contract; to_array() is the only place
// that defines it.
struct FeatureVector {
  double si_max = 0.0;
  double si_avg = 0.0;
  double si_std = 0.0;
  double ti_max = 0.0;
  double ti_avg = 0.0;
  double ti_std = 0.0;
  double qp = 0.0;

  // Set when the clip had fewer than 2 frames and the TI statistics were
  // defined as zero rather than measured.
  bool ti_degenerate = false;

  static constexpr std::size_t kDim = 7;
  std::array<double, kDim> to_array() const {
    return {si_max, si_avg, si_std, ti_max, ti_avg, ti_std, qp};
  }
};

struct QpProbeResult {
  std::vector<double> per_frame_qp;  // empty when the fallback produced clip_qp
  double clip_qp = 0.0;
  std::string source;  // "x264", "cache", or "fallback_v1"
};

// Per-pixel gradient magnitude sqrt(Gx^2 + Gy^2) from the 3x3 Sobel pair.
// The 1-pixel border is left at zero; statistics must skip it.
numerics::Tensor sobel_magnitude(const numerics::Tensor& luma);

// Population standard deviation of the Sobel magnitude over interior pixels.
double spatial_information(const numerics::Tensor& luma);

// Population standard deviation of the per-pixel frame difference.
double temporal_information(const numerics::Tensor& curr_luma,
                            const numerics::Tensor& prev_luma);

// Extracts per-frame QP values from encoder log text. Contract: one value per
// line matching `frame=\s*\d+\s+QP=([0-9.]+)`, in frame order.
std::vector<double> parse_qp_log(const std::string& log_text);

// Deterministic encoder-free QP estimate ("fallback_v1"): monotone in content
// activity, mapping (si_avg + ti_avg) onto [10, 45] via
//   qp = 10 + 35 * (1 - exp(-4 * (si_avg + ti_avg))).
double fallback_qp(double si_avg, double ti_avg);

struct ProbeOptions {
  std::string encoder_binary = "x264";
  double bitrate_kbps = 1500.0;  // constant-bitrate probe target
  bool allow_fallback = true;
  std::string cache_dir;  // empty disables the JSON sidecar cache
};

// Runs the external CBR probe (preset fast), parses per-frame QPs from its
// log, and aggregates by arithmetic mean. Falls back to fallback_qp() when
// the encoder is unavailable and fallback is allowed; otherwise throws
// ProbeError.
QpProbeResult probe_qp(const video_io::Clip& clip, const ProbeOptions& opts);

// Mean of per-frame values; exposed for the log-parsing tests.
double aggregate_qp(const std::vector<double>& per_frame_qp);

// Per-frame SI over all frames and per-pair TI over consecutive frames,
// reduced to max/avg/std and combined with the probe QP. jobs > 1 spreads the
// per-frame work across threads; results are deterministic either way.
FeatureVector extract_features(const video_io::Clip& clip, double qp,
                               std::size_t jobs = 1);

struct SeriesStats {
  double max = 0.0;
  double avg = 0.0;
  double std = 0.0;
};

SeriesStats series_stats(const std::vector<double>& values);

}  // namespace tdp::preanalysis

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

#include "tdp/video_io.hpp"

namespace tdp::evaluation {

// ---- rate-distortion primitives ----

struct RdPoint {
  double target_kbps = 0.0;   // requested CBR target
  double bitrate_kbps = 0.0;  // measured from container size and duration
  double quality = 0.0;
  std::string metric;
};

struct RdCurve {
  std::vector<RdPoint> points;  // sorted by measured bitrate
  std::string codec_id;
  std::string clip_id;

  // Sorted, positive bitrates, one metric throughout. Exact duplicate points
  // (equal bitrate and equal quality, as a lossless codec produces) are
  // tolerated; equal bitrates with different qualities are rejected.
  void validate() const;
};

struct BdbrResult {
  double value = 0.0;  // percent; negative means the test curve saves rate
  bool valid = false;
  double overlap_lo = 0.0;  // quality span used for integration
  double overlap_hi = 0.0;
  std::string note;  // warnings (monotonicity fixes, duplicate merging)
};

// Bjontegaard delta bitrate, test vs anchor. log10(rate) is interpolated as
// a function of quality with a monotone piecewise cubic (PCHIP) and averaged
// over the overlapping quality span in closed form. Identical curves short-
// circuit to exactly 0. Curves must carry at least 4 points each.
BdbrResult bdbr(const RdCurve& anchor, const RdCurve& test);

// Fraction of results with value > 0. Throws on an empty list.
double bad_case_rate(const std::vector<double>& bdbr_values);

// ---- codec drive ----

struct CodecProfile {
  enum class Kind { kStubLossless, kStubNoisy, kExternal };
  std::string id;
  Kind kind = Kind::kStubLossless;
  // External profiles: argv templates with {input}, {output} and
  // {bitrate_kbps} placeholders. decode_argv turns the container back into
  // Y4M for scoring.
  std::vector<std::string> encode_argv;
  std::vector<std::string> decode_argv;
  std::string container_ext = ".bin";
};

CodecProfile stub_lossless_profile();
CodecProfile stub_noisy_profile();
CodecProfile x264_profile();
// Accepts "stub-lossless", "stub-noisy" or "x264"; throws UsageError else.
CodecProfile profile_by_id(const std::string& id);

// Mean per-frame score of a decoded clip against the reference, computed on
// normalized luma. metric is "ms-ssim" or "ssim" (internal); geometry must
// match.
double score_clip(const video_io::Clip& decoded, const video_io::Clip& reference,
                  const std::string& metric);

// Encodes encode_input at the CBR target, decodes, and scores the decoded
// output against `reference` (the ORIGINAL source; preprocessed variants are
// never their own reference). workdir holds intermediate files for external
// codecs.
RdPoint encode_and_measure(const video_io::Clip& encode_input,
                           const video_io::Clip& reference,
                           const CodecProfile& profile, double target_kbps,
                           const std::string& metric,
                           const std::string& workdir);

// Full bitrate ladder, bounded-parallel over targets. Points come back
// sorted by measured bitrate and validated.
RdCurve run_ladder(const video_io::Clip& encode_input,
                   const video_io::Clip& reference,
                   const CodecProfile& profile,
                   const std::vector<double>& bitrates_kbps,
                   const std::string& metric, const std::string& clip_id,
                   std::size_t jobs, const std::string& workdir);

// ---- VMAF bridge ----

// Extracts pooled_metrics -> vmaf -> mean from a VMAF JSON report.
double parse_vmaf_json(const std::string& json_text);

// Runs the external `vmaf` tool on a distorted/reference pair. Throws
// ProbeError when the binary is unavailable.
double measure_vmaf(const video_io::Clip& distorted,
                    const video_io::Clip& reference,
                    const std::string& tool_binary,
                    const std::string& workdir);

// ---- complexity and heat-map ----

// Pre-normalization spatio-temporal complexity proxy: sqrt(si_avg * ti_avg).
double raw_complexity(const video_io::Clip& clip);

// Min-max normalization over an evaluation set; a degenerate set (all equal)
// maps every clip to 0.5.
std::vector<double> normalize_complexities(const std::vector<double>& raw);

struct HeatmapSample {
  double complexity = 0.0;  // normalized, in [0,1]
  double f_q = 1.0;
  double bdbr = 0.0;
};

struct Heatmap {
  static constexpr std::size_t kComplexityBins = 10;  // width 0.1 each
  static constexpr std::size_t kFqBins = 10;          // spans [1, 50]
  std::array<std::array<double, kFqBins>, kComplexityBins> mean_bdbr{};
  std::array<std::array<std::size_t, kFqBins>, kComplexityBins> count{};
};

std::size_t complexity_bin(double complexity);
std::size_t fq_bin(double f_q);
Heatmap complexity_heatmap(const std::vector<HeatmapSample>& samples);
// CSV export: one row per complexity bin, empty cells written as "NA".
std::string heatmap_to_csv(const Heatmap& map);

// ---- result persistence ----

struct ResultRow {
  std::string clip_id;
  std::string codec_id;
  double target_kbps = 0.0;
  double bitrate_kbps = 0.0;
  std::string metric;
  double score = 0.0;
};

void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::string& path);

std::vector<ResultRow> curve_to_rows(const RdCurve& curve);
// Groups rows by clip_id (codec and metric must agree within a group).
std::vector<RdCurve> rows_to_curves(const std::vector<ResultRow>& rows);

}  // namespace tdp::evaluation

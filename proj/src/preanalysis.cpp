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

#include "tdp/preanalysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tdp/error.hpp"
#include "tdp/hash.hpp"
#include "tdp/parallel.hpp"
#include "tdp/subprocess.hpp"

namespace tdp::preanalysis {

namespace {

using numerics::real;
using numerics::Tensor;

void check_plane(const Tensor& t, const char* what) {
  if (!t.defined() || t.shape().size() != 2) {
    throw DimensionError(std::string(what) + ": expected an H x W tensor");
  }
}

std::filesystem::path cache_path(const ProbeOptions& opts,
                                 std::uint64_t clip_hash) {
  std::ostringstream name;
  name << "probe_" << hex_u64(clip_hash) << "_"
       << static_cast<long long>(opts.bitrate_kbps) << ".json";
  return std::filesystem::path(opts.cache_dir) / name.str();
}

bool load_cached_probe(const std::filesystem::path& path,
                       std::uint64_t clip_hash, double bitrate,
                       QpProbeResult& out) {
  std::ifstream is(path);
  if (!is) return false;
  nlohmann::json j;
  try {
    is >> j;
    if (j.at("clip_hash").get<std::string>() != hex_u64(clip_hash)) return false;
    if (j.at("bitrate_kbps").get<double>() != bitrate) return false;
    out.per_frame_qp = j.at("per_frame_qp").get<std::vector<double>>();
    out.clip_qp = j.at("clip_qp").get<double>();
    out.source = "cache";
    return true;
  } catch (const nlohmann::json::exception&) {
    return false;  // stale or foreign sidecar; recompute
  }
}

void store_cached_probe(const std::filesystem::path& path,
                        std::uint64_t clip_hash, double bitrate,
                        const QpProbeResult& res) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  nlohmann::json j;
  j["clip_hash"] = hex_u64(clip_hash);
  j["bitrate_kbps"] = bitrate;
  j["per_frame_qp"] = res.per_frame_qp;
  j["clip_qp"] = res.clip_qp;
  j["source"] = res.source;
  std::ofstream os(path);
  if (os) os << j.dump(2) << "\n";
}

}  // namespace

Tensor sobel_magnitude(const Tensor& luma) {
  check_plane(luma, "sobel_magnitude");
  const std::size_t H = luma.dim(0), W = luma.dim(1);
  if (H < 3 || W < 3) {
    throw DimensionError("sobel_magnitude: frame smaller than 3x3 kernel");
  }
  const auto& p = luma.data();
  std::vector<real> mag(H * W, 0.0);
  for (std::size_t y = 1; y + 1 < H; ++y) {
    const real* r0 = p.data() + (y - 1) * W;
    const real* r1 = p.data() + y * W;
    const real* r2 = p.data() + (y + 1) * W;
    real* out = mag.data() + y * W;
    for (std::size_t x = 1; x + 1 < W; ++x) {
      const real gx = (r0[x + 1] - r0[x - 1]) + 2.0 * (r1[x + 1] - r1[x - 1]) +
                      (r2[x + 1] - r2[x - 1]);
      const real gy = (r2[x - 1] - r0[x - 1]) + 2.0 * (r2[x] - r0[x]) +
                      (r2[x + 1] - r0[x + 1]);
      out[x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return Tensor::from_data({H, W}, std::move(mag));
}

double spatial_information(const Tensor& luma) {
  const Tensor mag = sobel_magnitude(luma);
  const std::size_t H = luma.dim(0), W = luma.dim(1);
  const auto& m = mag.data();
  const std::size_t n = (H - 2) * (W - 2);
  double sum = 0.0;
  for (std::size_t y = 1; y + 1 < H; ++y)
    for (std::size_t x = 1; x + 1 < W; ++x) sum += m[y * W + x];
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (std::size_t y = 1; y + 1 < H; ++y)
    for (std::size_t x = 1; x + 1 < W; ++x) {
      const double d = m[y * W + x] - mean;
      var += d * d;
    }
  return std::sqrt(var / static_cast<double>(n));
}

double temporal_information(const Tensor& curr_luma, const Tensor& prev_luma) {
  check_plane(curr_luma, "temporal_information");
  check_plane(prev_luma, "temporal_information");
  if (curr_luma.shape() != prev_luma.shape()) {
    throw DimensionError("temporal_information: frame dimension mismatch");
  }
  const auto& a = curr_luma.data();
  const auto& b = prev_luma.data();
  const std::size_t n = a.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] - b[i];
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (a[i] - b[i]) - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(n));
}

std::vector<double> parse_qp_log(const std::string& log_text) {
  static const std::regex kLine(R"(frame=\s*\d+\s+QP=([0-9.]+))");
  std::vector<double> qps;
  std::istringstream is(log_text);
  std::string line;
  while (std::getline(is, line)) {
    std::smatch m;
    if (std::regex_search(line, m, kLine)) {
      qps.push_back(std::stod(m[1].str()));
    }
  }
  return qps;
}

double fallback_qp(double si_avg, double ti_avg) {
  const double activity = std::max(0.0, si_avg + ti_avg);
  return 10.0 + 35.0 * (1.0 - std::exp(-4.0 * activity));
}

double aggregate_qp(const std::vector<double>& per_frame_qp) {
  if (per_frame_qp.empty()) throw ProbeError("no per-frame QP values");
  double sum = 0.0;
  for (double q : per_frame_qp) sum += q;
  return sum / static_cast<double>(per_frame_qp.size());
}

QpProbeResult probe_qp(const video_io::Clip& clip, const ProbeOptions& opts) {
  clip.validate();
  if (clip.frames.empty()) throw ProbeError("cannot probe an empty clip");

  const std::uint64_t clip_hash = video_io::clip_content_hash(clip);
  const bool use_cache = !opts.cache_dir.empty();
  const auto sidecar =
      use_cache ? cache_path(opts, clip_hash) : std::filesystem::path();
  if (use_cache) {
    QpProbeResult cached;
    if (load_cached_probe(sidecar, clip_hash, opts.bitrate_kbps, cached)) {
      return cached;
    }
  }

  QpProbeResult res;
  if (command_exists(opts.encoder_binary)) {
    const auto tmp_dir = std::filesystem::temp_directory_path();
    const auto input =
        tmp_dir / ("tdp_probe_" + hex_u64(clip_hash) + ".y4m");
    video_io::write_y4m(clip, input.string());
    const std::vector<std::string> argv = {
        opts.encoder_binary,
        "--preset",
        "fast",
        "--bitrate",
        std::to_string(static_cast<long long>(opts.bitrate_kbps)),
        "--log-level",
        "debug",
        "-o",
        "/dev/null",
        input.string(),
    };
    CommandResult cmd;
    bool spawn_failed = false;
    try {
      cmd = run_command(argv);
    } catch (const ProbeError&) {
      spawn_failed = true;
    }
    std::filesystem::remove(input);
    if (!spawn_failed && cmd.ok()) {
      res.per_frame_qp = parse_qp_log(cmd.output);
      if (!res.per_frame_qp.empty()) {
        res.clip_qp = aggregate_qp(res.per_frame_qp);
        res.source = "x264";
      }
    }
    if (res.source.empty() && !opts.allow_fallback) {
      throw ProbeError("encoder probe failed for " + opts.encoder_binary +
                       " and fallback is disabled");
    }
  } else if (!opts.allow_fallback) {
    throw ProbeError("encoder binary not found: " + opts.encoder_binary);
  }

  if (res.source.empty()) {
    // Encoder-free path: estimate activity directly from the clip.
    const FeatureVector f = extract_features(clip, 0.0);
    res.clip_qp = fallback_qp(f.si_avg, f.ti_avg);
    res.source = "fallback_v1";
  }

  if (use_cache) {
    store_cached_probe(sidecar, clip_hash, opts.bitrate_kbps, res);
  }
  return res;
}

SeriesStats series_stats(const std::vector<double>& values) {
  SeriesStats s;
  if (values.empty()) return s;
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.avg = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) {
    const double d = v - s.avg;
    var += d * d;
  }
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

FeatureVector extract_features(const video_io::Clip& clip, double qp,
                               std::size_t jobs) {
  clip.validate();
  if (clip.frames.empty()) {
    throw DimensionError("extract_features: clip has no frames");
  }
  const std::size_t n = clip.frames.size();
  std::vector<Tensor> lumas(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    lumas[i] = video_io::to_normalized_luma(clip, i);
  });

  std::vector<double> si(n);
  parallel_for(n, jobs,
               [&](std::size_t i) { si[i] = spatial_information(lumas[i]); });

  std::vector<double> ti;
  if (n >= 2) {
    ti.resize(n - 1);
    parallel_for(n - 1, jobs, [&](std::size_t i) {
      ti[i] = temporal_information(lumas[i + 1], lumas[i]);
    });
  }

  const SeriesStats ss = series_stats(si);
  const SeriesStats ts = series_stats(ti);
  FeatureVector f;
  f.si_max = ss.max;
  f.si_avg = ss.avg;
  f.si_std = ss.std;
  f.ti_max = ts.max;
  f.ti_avg = ts.avg;
  f.ti_std = ts.std;
  f.qp = qp;
  f.ti_degenerate = n < 2;
  return f;
}

}  // namespace tdp::preanalysis

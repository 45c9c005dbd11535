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

#include "tdp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tdp/error.hpp"
#include "tdp/hash.hpp"
#include "tdp/loss.hpp"
#include "tdp/parallel.hpp"
#include "tdp/preanalysis.hpp"
#include "tdp/rng.hpp"
#include "tdp/subprocess.hpp"

namespace tdp::evaluation {

namespace {

// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes) with
// a closed-form integral. Used for the log-rate vs quality curves.
class Pchip {
 public:
  static Pchip fit(std::vector<double> x, std::vector<double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) {
      throw DimensionError("pchip needs >= 2 knots");
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (!(x[i] < x[i + 1])) {
        throw ComputeError("pchip knots must be strictly increasing");
      }
    }
    std::vector<double> h(n - 1), d(n - 1), m(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x[i + 1] - x[i];
      d[i] = (y[i + 1] - y[i]) / h[i];
    }
    if (n == 2) {
      m[0] = m[1] = d[0];
    } else {
      for (std::size_t i = 1; i + 1 < n; ++i) {
        if (d[i - 1] * d[i] <= 0.0) {
          m[i] = 0.0;
        } else {
          const double w1 = 2.0 * h[i] + h[i - 1];
          const double w2 = h[i] + 2.0 * h[i - 1];
          m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
      }
      m[0] = edge_slope(h[0], h[1], d[0], d[1]);
      m[n - 1] = edge_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    }
    Pchip p;
    p.x_ = std::move(x);
    p.y_ = std::move(y);
    p.m_ = std::move(m);
    return p;
  }

  double x_front() const { return x_.front(); }
  double x_back() const { return x_.back(); }

  // Integral over [a, b], which must lie inside the knot span.
  double integral(double a, double b) const {
    if (a > b) std::swap(a, b);
    if (a < x_.front() - 1e-12 || b > x_.back() + 1e-12) {
      throw ComputeError("pchip integral outside knot span");
    }
    a = std::max(a, x_.front());
    b = std::min(b, x_.back());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < x_.size(); ++i) {
      const double lo = std::max(a, x_[i]);
      const double hi = std::min(b, x_[i + 1]);
      if (hi <= lo) continue;
      const double h = x_[i + 1] - x_[i];
      const double d = (y_[i + 1] - y_[i]) / h;
      const double c0 = y_[i];
      const double c1 = m_[i];
      const double c2 = (3.0 * d - 2.0 * m_[i] - m_[i + 1]) / h;
      const double c3 = (m_[i] + m_[i + 1] - 2.0 * d) / (h * h);
      auto F = [&](double t) {
        return t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)));
      };
      total += F(hi - x_[i]) - F(lo - x_[i]);
    }
    return total;
  }

 private:
  static double edge_slope(double h0, double h1, double d0, double d1) {
    double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m * d0 <= 0.0) return 0.0;
    if (d0 * d1 < 0.0 && std::abs(m) > 3.0 * std::abs(d0)) return 3.0 * d0;
    return m;
  }

  std::vector<double> x_, y_, m_;
};

struct QualityRateSeries {
  std::vector<double> quality;
  std::vector<double> log_rate;
  bool merged_duplicates = false;
  bool resorted = false;
};

QualityRateSeries to_series(const RdCurve& curve) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(curve.points.size());
  for (const auto& p : curve.points) {
    pts.emplace_back(p.quality, std::log10(p.bitrate_kbps));
  }
  QualityRateSeries s;
  s.resorted = !std::is_sorted(
      pts.begin(), pts.end(),
      [](const auto& a, const auto& b) { return a.first < b.first; });
  std::sort(pts.begin(), pts.end());
  for (const auto& [q, lr] : pts) {
    if (!s.quality.empty() && q == s.quality.back()) {
      // average the log-rates of duplicate quality points
      s.log_rate.back() = (s.log_rate.back() + lr) / 2.0;
      s.merged_duplicates = true;
    } else {
      s.quality.push_back(q);
      s.log_rate.push_back(lr);
    }
  }
  return s;
}

std::string substitute(const std::string& tmpl, const std::string& input,
                       const std::string& output, double bitrate_kbps) {
  std::string out = tmpl;
  auto replace_all = [&out](const std::string& key, const std::string& val) {
    std::size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), val);
      pos += val.size();
    }
  };
  replace_all("{input}", input);
  replace_all("{output}", output);
  replace_all("{bitrate_kbps}",
              std::to_string(static_cast<long long>(std::llround(bitrate_kbps))));
  return out;
}

std::size_t clip_container_bytes(const video_io::Clip& clip) {
  const std::size_t per_sample = clip.bit_depth > 8 ? 2 : 1;
  return clip.frames.size() * per_sample *
         (clip.luma_size() + 2 * clip.chroma_size());
}

void run_codec_step(const std::vector<std::string>& argv_template,
                    const std::string& input, const std::string& output,
                    double bitrate_kbps, const char* stage) {
  std::vector<std::string> argv;
  argv.reserve(argv_template.size());
  for (const auto& a : argv_template) {
    argv.push_back(substitute(a, input, output, bitrate_kbps));
  }
  const CommandResult res = run_command(argv);
  if (!res.ok()) {
    std::string cmd;
    for (const auto& a : argv) {
      if (!cmd.empty()) cmd += ' ';
      cmd += a;
    }
    const std::string tail =
        res.output.size() > 400 ? res.output.substr(res.output.size() - 400)
                                : res.output;
    throw ComputeError(std::string(stage) + " failed (exit " +
                       std::to_string(res.exit_code) + "): " + cmd + "\n" +
                       tail);
  }
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::vector<std::string> csv_split(const std::string& line,
                                   const std::string& path) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote in " + path, 0);
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

void RdCurve::validate() const {
  if (points.empty()) throw DimensionError("RD curve has no points");
  for (const auto& p : points) {
    if (!(p.bitrate_kbps > 0.0) || !std::isfinite(p.quality)) {
      throw ComputeError("RD point with non-positive bitrate or non-finite "
                         "quality in curve " + clip_id);
    }
    if (p.metric != points.front().metric) {
      throw ComputeError("mixed metrics within curve " + clip_id);
    }
  }
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (points[i].bitrate_kbps > points[i + 1].bitrate_kbps) {
      throw ComputeError("RD curve not sorted by bitrate: " + clip_id);
    }
    if (points[i].bitrate_kbps == points[i + 1].bitrate_kbps &&
        points[i].quality != points[i + 1].quality) {
      throw ComputeError("ambiguous RD curve (equal bitrate, different "
                         "quality): " + clip_id);
    }
  }
}

BdbrResult bdbr(const RdCurve& anchor, const RdCurve& test) {
  anchor.validate();
  test.validate();
  if (anchor.points.size() < 4 || test.points.size() < 4) {
    throw DimensionError("bdbr needs curves with at least 4 points");
  }
  if (anchor.points.front().metric != test.points.front().metric) {
    throw ComputeError("bdbr across different metrics");
  }

  BdbrResult res;
  bool identical = anchor.points.size() == test.points.size();
  for (std::size_t i = 0; identical && i < anchor.points.size(); ++i) {
    identical = anchor.points[i].bitrate_kbps == test.points[i].bitrate_kbps &&
                anchor.points[i].quality == test.points[i].quality;
  }
  if (identical) {
    res.value = 0.0;
    res.valid = true;
    res.overlap_lo = anchor.points.front().quality;
    res.overlap_hi = anchor.points.back().quality;
    res.note = "identical curves";
    return res;
  }

  QualityRateSeries sa = to_series(anchor);
  QualityRateSeries st = to_series(test);
  std::string note;
  if (sa.resorted || st.resorted) note += "non-monotone quality, resorted; ";
  if (sa.merged_duplicates || st.merged_duplicates) {
    note += "duplicate qualities averaged; ";
  }
  if (sa.quality.size() < 2 || st.quality.size() < 2) {
    res.note = note + "degenerate curve after merging";
    return res;  // invalid
  }

  const double lo = std::max(sa.quality.front(), st.quality.front());
  const double hi = std::min(sa.quality.back(), st.quality.back());
  if (!(hi > lo)) {
    res.note = note + "no quality overlap";
    return res;  // invalid
  }

  const Pchip pa = Pchip::fit(sa.quality, sa.log_rate);
  const Pchip pt = Pchip::fit(st.quality, st.log_rate);
  const double avg_diff = (pt.integral(lo, hi) - pa.integral(lo, hi)) / (hi - lo);
  res.value = (std::pow(10.0, avg_diff) - 1.0) * 100.0;
  res.valid = true;
  res.overlap_lo = lo;
  res.overlap_hi = hi;
  res.note = note;
  return res;
}

double bad_case_rate(const std::vector<double>& bdbr_values) {
  if (bdbr_values.empty()) {
    throw DimensionError("bad_case_rate of an empty list");
  }
  std::size_t bad = 0;
  for (double v : bdbr_values) {
    if (v > 0.0) ++bad;
  }
  return static_cast<double>(bad) / static_cast<double>(bdbr_values.size());
}

CodecProfile stub_lossless_profile() {
  CodecProfile p;
  p.id = "stub-lossless";
  p.kind = CodecProfile::Kind::kStubLossless;
  return p;
}

CodecProfile stub_noisy_profile() {
  CodecProfile p;
  p.id = "stub-noisy";
  p.kind = CodecProfile::Kind::kStubNoisy;
  return p;
}

CodecProfile x264_profile() {
  CodecProfile p;
  p.id = "x264";
  p.kind = CodecProfile::Kind::kExternal;
  p.encode_argv = {"x264",          "--preset",      "medium",
                   "--bitrate",     "{bitrate_kbps}", "--vbv-maxrate",
                   "{bitrate_kbps}", "--vbv-bufsize", "{bitrate_kbps}",
                   "-o",            "{output}",      "{input}"};
  p.decode_argv = {"ffmpeg", "-y", "-loglevel", "error",
                   "-i",     "{input}", "{output}"};
  p.container_ext = ".264";
  return p;
}

CodecProfile profile_by_id(const std::string& id) {
  if (id == "stub-lossless") return stub_lossless_profile();
  if (id == "stub-noisy") return stub_noisy_profile();
  if (id == "x264") return x264_profile();
  throw UsageError("unknown codec profile: " + id);
}

double score_clip(const video_io::Clip& decoded,
                  const video_io::Clip& reference, const std::string& metric) {
  decoded.validate();
  reference.validate();
  if (decoded.width != reference.width || decoded.height != reference.height ||
      decoded.frames.size() != reference.frames.size()) {
    throw DimensionError("decoded/reference geometry mismatch");
  }
  if (reference.frames.empty()) {
    throw DimensionError("cannot score an empty clip");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.frames.size(); ++i) {
    const auto a = video_io::to_normalized_luma(decoded, i);
    const auto b = video_io::to_normalized_luma(reference, i);
    if (metric == "ms-ssim") {
      sum += loss::ms_ssim(a, b).value();
    } else if (metric == "ssim") {
      sum += loss::ssim(a, b).value();
    } else {
      throw UsageError("unknown internal metric: " + metric);
    }
  }
  return sum / static_cast<double>(reference.frames.size());
}

RdPoint encode_and_measure(const video_io::Clip& encode_input,
                           const video_io::Clip& reference,
                           const CodecProfile& profile, double target_kbps,
                           const std::string& metric,
                           const std::string& workdir) {
  if (!(target_kbps > 0.0)) throw UsageError("target bitrate must be > 0");
  encode_input.validate();
  const double duration = encode_input.duration_seconds();
  if (duration <= 0.0) throw DimensionError("cannot encode an empty clip");

  RdPoint point;
  point.target_kbps = target_kbps;
  point.metric = metric;

  switch (profile.kind) {
    case CodecProfile::Kind::kStubLossless: {
      const double bytes =
          static_cast<double>(clip_container_bytes(encode_input));
      point.bitrate_kbps = bytes * 8.0 / 1000.0 / duration;
      point.quality = score_clip(encode_input, reference, metric);
      return point;
    }
    case CodecProfile::Kind::kStubNoisy: {
      // Bitrate-dependent Gaussian degradation on normalized luma: noise
      // shrinks as the target grows, and the simulated container hits the
      // CBR target exactly. Scoring happens in the float domain on purpose.
      // Rounding back to the sample range would clip the noise for content
      // sitting near the luma bounds, and a preprocessor that shoves flat
      // regions against a bound would then grade better than the identity.
      const double sigma = 2.5 / std::sqrt(target_kbps);
      Rng rng = Rng::stream(video_io::clip_content_hash(encode_input),
                            rng_stream::kStubCodec,
                            static_cast<std::uint64_t>(std::llround(target_kbps)));
      if (encode_input.width != reference.width ||
          encode_input.height != reference.height ||
          encode_input.frames.size() != reference.frames.size()) {
        throw DimensionError("decoded/reference geometry mismatch");
      }
      double sum = 0.0;
      for (std::size_t i = 0; i < encode_input.frames.size(); ++i) {
        auto noisy = video_io::to_normalized_luma(encode_input, i);
        for (auto& v : noisy.mutable_data()) v += sigma * rng.normal();
        const auto ref = video_io::to_normalized_luma(reference, i);
        if (metric == "ms-ssim") {
          sum += loss::ms_ssim(noisy, ref).value();
        } else if (metric == "ssim") {
          sum += loss::ssim(noisy, ref).value();
        } else {
          throw UsageError("unknown internal metric: " + metric);
        }
      }
      point.quality = sum / static_cast<double>(encode_input.frames.size());
      point.bitrate_kbps = target_kbps;
      return point;
    }
    case CodecProfile::Kind::kExternal:
      break;
  }

  std::filesystem::create_directories(workdir);
  const std::string base =
      (std::filesystem::path(workdir) /
       ("enc_" + hex_u64(video_io::clip_content_hash(encode_input)) + "_" +
        std::to_string(static_cast<long long>(std::llround(target_kbps)))))
          .string();
  const std::string input_y4m = base + "_in.y4m";
  const std::string container = base + profile.container_ext;
  const std::string decoded_y4m = base + "_dec.y4m";
  video_io::write_y4m(encode_input, input_y4m);
  run_codec_step(profile.encode_argv, input_y4m, container, target_kbps,
                 "encode");
  const auto bytes = std::filesystem::file_size(container);
  run_codec_step(profile.decode_argv, container, decoded_y4m, target_kbps,
                 "decode");
  const video_io::Clip decoded = video_io::read_y4m(decoded_y4m);
  point.bitrate_kbps = static_cast<double>(bytes) * 8.0 / 1000.0 / duration;
  point.quality = score_clip(decoded, reference, metric);
  std::filesystem::remove(input_y4m);
  std::filesystem::remove(container);
  std::filesystem::remove(decoded_y4m);
  return point;
}

RdCurve run_ladder(const video_io::Clip& encode_input,
                   const video_io::Clip& reference,
                   const CodecProfile& profile,
                   const std::vector<double>& bitrates_kbps,
                   const std::string& metric, const std::string& clip_id,
                   std::size_t jobs, const std::string& workdir) {
  if (bitrates_kbps.empty()) throw UsageError("empty bitrate ladder");
  RdCurve curve;
  curve.codec_id = profile.id;
  curve.clip_id = clip_id;
  curve.points.resize(bitrates_kbps.size());
  parallel_for(bitrates_kbps.size(), jobs, [&](std::size_t i) {
    curve.points[i] = encode_and_measure(encode_input, reference, profile,
                                         bitrates_kbps[i], metric, workdir);
  });
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const RdPoint& a, const RdPoint& b) {
                     return a.bitrate_kbps < b.bitrate_kbps;
                   });
  curve.validate();
  return curve;
}

double parse_vmaf_json(const std::string& json_text) {
  try {
    const auto j = nlohmann::json::parse(json_text);
    return j.at("pooled_metrics").at("vmaf").at("mean").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("unexpected VMAF JSON shape: ") + e.what(), 0);
  }
}

double measure_vmaf(const video_io::Clip& distorted,
                    const video_io::Clip& reference,
                    const std::string& tool_binary,
                    const std::string& workdir) {
  if (!command_exists(tool_binary)) {
    throw ProbeError("VMAF tool not found: " + tool_binary);
  }
  std::filesystem::create_directories(workdir);
  const auto base = std::filesystem::path(workdir) /
                    ("vmaf_" + hex_u64(video_io::clip_content_hash(distorted)));
  const std::string ref = base.string() + "_ref.y4m";
  const std::string dist = base.string() + "_dist.y4m";
  const std::string report = base.string() + ".json";
  video_io::write_y4m(reference, ref);
  video_io::write_y4m(distorted, dist);
  const CommandResult res = run_command({tool_binary, "--reference", ref,
                                         "--distorted", dist, "--json",
                                         "--output", report});
  if (!res.ok()) {
    throw ComputeError("vmaf failed (exit " + std::to_string(res.exit_code) +
                       "): " + res.output.substr(0, 400));
  }
  std::ifstream is(report);
  std::ostringstream buf;
  buf << is.rdbuf();
  std::filesystem::remove(ref);
  std::filesystem::remove(dist);
  std::filesystem::remove(report);
  return parse_vmaf_json(buf.str());
}

double raw_complexity(const video_io::Clip& clip) {
  const auto f = preanalysis::extract_features(clip, 0.0);
  return std::sqrt(f.si_avg * f.ti_avg);
}

std::vector<double> normalize_complexities(const std::vector<double>& raw) {
  if (raw.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(raw.size());
  if (hi - lo <= 0.0) {
    std::fill(out.begin(), out.end(), 0.5);
    return out;
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = (raw[i] - lo) / (hi - lo);
  }
  return out;
}

std::size_t complexity_bin(double complexity) {
  const double c = std::clamp(complexity, 0.0, 1.0);
  return std::min<std::size_t>(Heatmap::kComplexityBins - 1,
                               static_cast<std::size_t>(c * 10.0));
}

std::size_t fq_bin(double f_q) {
  const double f = std::clamp(f_q, 1.0, 50.0);
  return std::min<std::size_t>(
      Heatmap::kFqBins - 1,
      static_cast<std::size_t>((f - 1.0) / 49.0 * Heatmap::kFqBins));
}

Heatmap complexity_heatmap(const std::vector<HeatmapSample>& samples) {
  Heatmap map;
  for (const auto& s : samples) {
    const std::size_t cb = complexity_bin(s.complexity);
    const std::size_t fb = fq_bin(s.f_q);
    map.mean_bdbr[cb][fb] += s.bdbr;
    map.count[cb][fb] += 1;
  }
  for (std::size_t c = 0; c < Heatmap::kComplexityBins; ++c) {
    for (std::size_t f = 0; f < Heatmap::kFqBins; ++f) {
      if (map.count[c][f] > 0) {
        map.mean_bdbr[c][f] /= static_cast<double>(map.count[c][f]);
      }
    }
  }
  return map;
}

std::string heatmap_to_csv(const Heatmap& map) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "complexity_bin";
  for (std::size_t f = 0; f < Heatmap::kFqBins; ++f) {
    const double lo = 1.0 + 49.0 * f / Heatmap::kFqBins;
    const double hi = 1.0 + 49.0 * (f + 1) / Heatmap::kFqBins;
    os << ",fq[" << lo << "," << hi << ")";
  }
  os << "\n";
  for (std::size_t c = 0; c < Heatmap::kComplexityBins; ++c) {
    os << "[" << c / 10.0 << "," << (c + 1) / 10.0 << ")";
    for (std::size_t f = 0; f < Heatmap::kFqBins; ++f) {
      if (map.count[c][f] > 0) {
        os << "," << map.mean_bdbr[c][f];
      } else {
        os << ",NA";
      }
    }
    os << "\n";
  }
  return os.str();
}

void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write results to " + path);
  os << "# tdp-results v1\n";
  os << "clip,codec,target_kbps,bitrate_kbps,metric,score\n";
  os << std::setprecision(12);
  for (const auto& r : rows) {
    os << csv_escape(r.clip_id) << "," << csv_escape(r.codec_id) << ","
       << r.target_kbps << "," << r.bitrate_kbps << "," << csv_escape(r.metric)
       << "," << r.score << "\n";
  }
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read results from " + path);
  std::vector<ResultRow> rows;
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    const auto fields = csv_split(line, path);
    if (fields.size() != 6) {
      throw ParseError("expected 6 CSV fields at line " +
                           std::to_string(lineno) + " of " + path,
                       0);
    }
    try {
      ResultRow r;
      r.clip_id = fields[0];
      r.codec_id = fields[1];
      r.target_kbps = std::stod(fields[2]);
      r.bitrate_kbps = std::stod(fields[3]);
      r.metric = fields[4];
      r.score = std::stod(fields[5]);
      rows.push_back(std::move(r));
    } catch (const std::exception&) {
      throw ParseError("bad numeric field at line " + std::to_string(lineno) +
                           " of " + path,
                       0);
    }
  }
  return rows;
}

std::vector<ResultRow> curve_to_rows(const RdCurve& curve) {
  std::vector<ResultRow> rows;
  rows.reserve(curve.points.size());
  for (const auto& p : curve.points) {
    rows.push_back({curve.clip_id, curve.codec_id, p.target_kbps,
                    p.bitrate_kbps, p.metric, p.quality});
  }
  return rows;
}

std::vector<RdCurve> rows_to_curves(const std::vector<ResultRow>& rows) {
  std::vector<RdCurve> curves;
  for (const auto& r : rows) {
    // one curve per (clip, metric) pair so mixed-metric CSVs stay valid
    auto it = std::find_if(curves.begin(), curves.end(), [&](const RdCurve& c) {
      return c.clip_id == r.clip_id && c.points.front().metric == r.metric;
    });
    if (it == curves.end()) {
      curves.push_back(RdCurve{{}, r.codec_id, r.clip_id});
      it = std::prev(curves.end());
    } else if (it->codec_id != r.codec_id) {
      throw ComputeError("mixed codecs for clip " + r.clip_id);
    }
    RdPoint p;
    p.target_kbps = r.target_kbps;
    p.bitrate_kbps = r.bitrate_kbps;
    p.metric = r.metric;
    p.quality = r.score;
    it->points.push_back(p);
  }
  for (auto& c : curves) {
    std::stable_sort(c.points.begin(), c.points.end(),
                     [](const RdPoint& a, const RdPoint& b) {
                       return a.bitrate_kbps < b.bitrate_kbps;
                     });
    c.validate();
  }
  return curves;
}

}  // namespace tdp::evaluation

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "support/oracles.hpp"
#include "support/testutil.hpp"
#include "tdp/error.hpp"
#include "tdp/evaluation.hpp"
#include "tdp/rng.hpp"

using namespace tdp;
using namespace tdp::evaluation;

namespace {

// (quality, rate) pairs into a curve, sorted by rate as the ladder would be.
RdCurve make_curve(std::vector<std::pair<double, double>> pts,
                   const std::string& clip = "clip",
                   const std::string& metric = "ms-ssim") {
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  RdCurve c;
  c.clip_id = clip;
  c.codec_id = "stub-noisy";
  for (const auto& [q, r] : pts) {
    RdPoint p;
    p.target_kbps = r;
    p.bitrate_kbps = r;
    p.quality = q;
    p.metric = metric;
    c.points.push_back(p);
  }
  return c;
}

std::size_t count_workdir_files(const std::string& dir) {
  if (!std::filesystem::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    (void)e;
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("curve validation accepts ladders and rejects broken ones") {
  CHECK_NOTHROW(make_curve({{0.8, 1000}, {0.9, 2000}, {0.95, 4000}}).validate());
  CHECK_THROWS_AS(RdCurve{}.validate(), DimensionError);

  auto neg = make_curve({{0.8, 1000}, {0.9, 2000}});
  neg.points[0].bitrate_kbps = -5.0;
  CHECK_THROWS_AS(neg.validate(), ComputeError);

  auto mixed = make_curve({{0.8, 1000}, {0.9, 2000}});
  mixed.points[1].metric = "ssim";
  CHECK_THROWS_AS(mixed.validate(), ComputeError);

  auto unsorted = make_curve({{0.8, 1000}, {0.9, 2000}});
  std::swap(unsorted.points[0], unsorted.points[1]);
  CHECK_THROWS_AS(unsorted.validate(), ComputeError);

  // exact duplicates (lossless stub) pass; same bitrate at two qualities fails
  auto dup = make_curve({{0.9, 1500}, {0.9, 1500}, {0.9, 1500}});
  CHECK_NOTHROW(dup.validate());
  auto ambig = make_curve({{0.8, 1500}, {0.9, 1500}});
  CHECK_THROWS_AS(ambig.validate(), ComputeError);
}

TEST_CASE("identical curves give exactly zero") {
  const auto c = make_curve(
      {{0.80, 900}, {0.88, 1800}, {0.93, 3500}, {0.97, 6000}});
  const auto res = bdbr(c, c);
  CHECK(res.valid);
  CHECK(res.value == 0.0);
  CHECK(res.note.find("identical") != std::string::npos);
}

TEST_CASE("a uniform ten percent rate saving reads as minus ten") {
  std::vector<std::pair<double, double>> pts = {
      {0.80, 1000}, {0.88, 2000}, {0.93, 4000}, {0.97, 8000}};
  std::vector<std::pair<double, double>> cheaper;
  for (auto [q, r] : pts) cheaper.push_back({q, 0.9 * r});
  const auto res = bdbr(make_curve(pts), make_curve(cheaper));
  REQUIRE(res.valid);
  CHECK(res.value == doctest::Approx(-10.0).epsilon(1e-9));
  CHECK(res.overlap_lo == 0.80);
  CHECK(res.overlap_hi == 0.97);
}

TEST_CASE("closed-form integration matches a dense trapezoid oracle") {
  Rng rng(4051);
  for (int trial = 0; trial < 100; ++trial) {
    auto smooth = [&](std::vector<std::pair<double, double>>& out) {
      const double c0 = rng.uniform_in(2.5, 3.5);
      const double c1 = rng.uniform_in(2.0, 10.0);
      const double c2 = rng.uniform_in(-1.0, 1.0) * c1;
      for (int j = 0; j < 5; ++j) {
        const double q =
            0.7 + 0.058 * (static_cast<double>(j) + 0.8 * rng.uniform());
        const double x = q - 0.7;
        out.push_back({q, std::pow(10.0, c0 + c1 * x + c2 * x * x)});
      }
    };
    std::vector<std::pair<double, double>> an, te;
    smooth(an);
    smooth(te);
    const auto res = bdbr(make_curve(an), make_curve(te));
    REQUIRE(res.valid);
    const double want = tdp_test::ref_bdbr(an, te);
    INFO("trial ", trial, " got ", res.value, " want ", want);
    CHECK(std::abs(res.value - want) < 0.05);
  }
}

TEST_CASE("swapping anchor and test inverts the rate ratio") {
  const auto a = make_curve(
      {{0.78, 800}, {0.86, 1900}, {0.94, 4200}, {0.975, 7800}});
  const auto b = make_curve(
      {{0.80, 700}, {0.87, 2100}, {0.93, 3600}, {0.97, 8200}});
  const auto ab = bdbr(a, b);
  const auto ba = bdbr(b, a);
  REQUIRE(ab.valid);
  REQUIRE(ba.valid);
  const double product = (1.0 + ab.value / 100.0) * (1.0 + ba.value / 100.0);
  CHECK(product == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("bdbr is invariant to common rate scaling and quality shifts") {
  std::vector<std::pair<double, double>> an = {
      {0.78, 800}, {0.86, 1900}, {0.94, 4200}, {0.975, 7800}};
  std::vector<std::pair<double, double>> te = {
      {0.80, 700}, {0.87, 2100}, {0.93, 3600}, {0.97, 8200}};
  const double base = bdbr(make_curve(an), make_curve(te)).value;

  auto scaled = [](const std::vector<std::pair<double, double>>& v, double s) {
    std::vector<std::pair<double, double>> out;
    for (auto [q, r] : v) out.push_back({q, s * r});
    return out;
  };
  CHECK(bdbr(make_curve(scaled(an, 3.7)), make_curve(scaled(te, 3.7))).value ==
        doctest::Approx(base).epsilon(1e-9));

  auto shifted = [](const std::vector<std::pair<double, double>>& v,
                    double d) {
    std::vector<std::pair<double, double>> out;
    for (auto [q, r] : v) out.push_back({q + d, r});
    return out;
  };
  CHECK(
      bdbr(make_curve(shifted(an, -0.5)), make_curve(shifted(te, -0.5))).value ==
      doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("bdbr input contracts") {
  const auto four = make_curve(
      {{0.8, 1000}, {0.88, 2000}, {0.93, 4000}, {0.97, 8000}});
  const auto three = make_curve({{0.8, 1000}, {0.88, 2000}, {0.93, 4000}});
  CHECK_THROWS_AS(bdbr(four, three), DimensionError);
  CHECK_THROWS_AS(bdbr(three, four), DimensionError);

  auto ssim_curve = make_curve(
      {{0.8, 1000}, {0.88, 2000}, {0.93, 4000}, {0.97, 8000}}, "clip", "ssim");
  CHECK_THROWS_AS(bdbr(four, ssim_curve), ComputeError);
}

TEST_CASE("disjoint or collapsed quality spans come back invalid") {
  const auto low = make_curve(
      {{0.50, 1000}, {0.55, 2000}, {0.58, 4000}, {0.60, 8000}});
  const auto high = make_curve(
      {{0.70, 900}, {0.80, 1900}, {0.90, 3900}, {0.95, 7900}});
  const auto res = bdbr(low, high);
  CHECK(!res.valid);
  CHECK(res.note.find("no quality overlap") != std::string::npos);

  const auto flat = make_curve(
      {{0.9, 1000}, {0.9, 2000}, {0.9, 4000}, {0.9, 8000}});
  const auto degen = bdbr(flat, high);
  CHECK(!degen.valid);
  CHECK(degen.note.find("degenerate") != std::string::npos);
}

TEST_CASE("bdbr flags merged duplicates and quality resorts in its note") {
  const auto dup = make_curve(
      {{0.90, 1000}, {0.90, 2000}, {0.95, 4000}, {0.99, 8000}});
  const auto clean = make_curve(
      {{0.85, 900}, {0.92, 1900}, {0.96, 3900}, {0.99, 7900}});
  const auto merged = bdbr(dup, clean);
  CHECK(merged.valid);
  CHECK(merged.note.find("duplicate qualities averaged") != std::string::npos);

  const auto wobble = make_curve(
      {{0.80, 1000}, {0.95, 2000}, {0.90, 4000}, {0.99, 8000}});
  const auto resorted = bdbr(wobble, clean);
  CHECK(resorted.valid);
  CHECK(resorted.note.find("resorted") != std::string::npos);
}

TEST_CASE("bad case rate is the fraction of positive deltas") {
  CHECK(bad_case_rate({-1.0, 2.0, -3.0, 4.0}) == 0.5);
  CHECK(bad_case_rate({-1.0, -2.0}) == 0.0);
  CHECK(bad_case_rate({0.0}) == 0.0);  // zero is not a regression
  CHECK_THROWS_AS(bad_case_rate({}), DimensionError);
}

TEST_CASE("codec profiles resolve by id") {
  CHECK(profile_by_id("stub-lossless").kind ==
        CodecProfile::Kind::kStubLossless);
  CHECK(profile_by_id("stub-noisy").kind == CodecProfile::Kind::kStubNoisy);
  CHECK(profile_by_id("x264").kind == CodecProfile::Kind::kExternal);
  CHECK(!profile_by_id("x264").encode_argv.empty());
  CHECK_THROWS_AS(profile_by_id("h266"), UsageError);
}

TEST_CASE("the lossless stub reports raw size and perfect quality") {
  const auto clip = tdp_test::make_noise_clip(64, 64, 4, 7);
  const auto p = encode_and_measure(clip, clip, stub_lossless_profile(),
                                    1000.0, "ms-ssim", "");
  CHECK(p.quality == doctest::Approx(1.0).epsilon(1e-12));
  // 4 frames of 64x64 8-bit 4:2:0 at 30 fps
  const double bytes = 4.0 * (64.0 * 64.0 * 1.5);
  const double duration = 4.0 / 30.0;
  CHECK(p.bitrate_kbps ==
        doctest::Approx(bytes * 8.0 / 1000.0 / duration).epsilon(1e-12));
  CHECK(p.target_kbps == 1000.0);
  CHECK(p.metric == "ms-ssim");
}

TEST_CASE("the noisy stub degrades with rate and hits its target exactly") {
  const auto clip = tdp_test::make_noise_clip(32, 32, 3, 11);
  const auto lo = encode_and_measure(clip, clip, stub_noisy_profile(), 200.0,
                                     "ms-ssim", "");
  const auto hi = encode_and_measure(clip, clip, stub_noisy_profile(), 5000.0,
                                     "ms-ssim", "");
  CHECK(lo.quality < hi.quality);
  CHECK(hi.quality < 1.0);
  CHECK(lo.bitrate_kbps == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(hi.bitrate_kbps == doctest::Approx(5000.0).epsilon(1e-12));

  const auto again = encode_and_measure(clip, clip, stub_noisy_profile(),
                                        200.0, "ms-ssim", "");
  CHECK(again.quality == lo.quality);
}

TEST_CASE("encode rejects non-positive targets") {
  const auto clip = tdp_test::make_noise_clip(32, 32, 2, 13);
  CHECK_THROWS_AS(
      encode_and_measure(clip, clip, stub_lossless_profile(), 0.0, "ms-ssim",
                         ""),
      UsageError);
}

TEST_CASE("score_clip checks geometry and metric names") {
  const auto a = tdp_test::make_noise_clip(32, 32, 2, 17);
  const auto b = tdp_test::make_noise_clip(32, 16, 2, 19);
  CHECK(score_clip(a, a, "ms-ssim") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(score_clip(a, a, "ssim") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(score_clip(a, b, "ms-ssim"), DimensionError);
  CHECK_THROWS_AS(score_clip(a, a, "psnr"), UsageError);
}

TEST_CASE("ladders come back sorted regardless of worker count") {
  const auto clip = tdp_test::make_noise_clip(32, 32, 3, 23);
  const std::vector<double> targets = {3000.0, 400.0, 1200.0};
  const auto one = run_ladder(clip, clip, stub_noisy_profile(), targets,
                              "ms-ssim", "c", 1, "");
  const auto many = run_ladder(clip, clip, stub_noisy_profile(), targets,
                               "ms-ssim", "c", 3, "");
  REQUIRE(one.points.size() == 3);
  CHECK(one.points[0].bitrate_kbps == 400.0);
  CHECK(one.points[2].bitrate_kbps == 3000.0);
  REQUIRE(many.points.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(one.points[i].bitrate_kbps == many.points[i].bitrate_kbps);
    CHECK(one.points[i].quality == many.points[i].quality);
  }
  CHECK(one.clip_id == "c");
  CHECK_THROWS_AS(
      run_ladder(clip, clip, stub_noisy_profile(), {}, "ms-ssim", "c", 1, ""),
      UsageError);
}

TEST_CASE("an external codec runs through argv substitution and cleans up") {
  tdp_test::TempDir dir;
  CodecProfile copy;
  copy.id = "copy";
  copy.kind = CodecProfile::Kind::kExternal;
  copy.encode_argv = {"/bin/cp", "{input}", "{output}"};
  copy.decode_argv = {"/bin/cp", "{input}", "{output}"};
  copy.container_ext = ".y4m";

  const auto clip = tdp_test::make_noise_clip(32, 32, 3, 29);
  const std::string workdir = dir.file("work");
  const auto p =
      encode_and_measure(clip, clip, copy, 800.0, "ms-ssim", workdir);
  CHECK(p.quality == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.bitrate_kbps > 0.0);
  CHECK(count_workdir_files(workdir) == 0);  // intermediates removed
}

TEST_CASE("a missing codec binary surfaces as a computation error") {
  tdp_test::TempDir dir;
  CodecProfile broken;
  broken.id = "broken";
  broken.kind = CodecProfile::Kind::kExternal;
  broken.encode_argv = {"/nonexistent/encoder-binary", "{input}", "{output}",
                        "{bitrate_kbps}"};
  broken.decode_argv = {"/bin/cp", "{input}", "{output}"};
  const auto clip = tdp_test::make_noise_clip(32, 32, 2, 31);
  CHECK_THROWS_AS(
      encode_and_measure(clip, clip, broken, 500.0, "ms-ssim",
                         dir.file("work")),
      ComputeError);
}

TEST_CASE("vmaf report parsing") {
  CHECK(parse_vmaf_json(
            R"({"pooled_metrics": {"vmaf": {"mean": 87.25, "min": 80}}})") ==
        87.25);
  CHECK_THROWS_AS(parse_vmaf_json(R"({"pooled_metrics": {}})"), ParseError);
  CHECK_THROWS_AS(parse_vmaf_json("not json at all"), ParseError);
}

TEST_CASE("a missing vmaf tool surfaces as a probe error") {
  tdp_test::TempDir dir;
  const auto clip = tdp_test::make_noise_clip(32, 32, 2, 37);
  CHECK_THROWS_AS(measure_vmaf(clip, clip, "definitely-not-a-vmaf-binary",
                               dir.file("work")),
                  ProbeError);
}

TEST_CASE("raw complexity is zero for flat content and positive for noise") {
  CHECK(raw_complexity(tdp_test::make_flat_clip(32, 32, 3)) == 0.0);
  CHECK(raw_complexity(tdp_test::make_noise_clip(32, 32, 3, 41)) > 0.0);
}

TEST_CASE("complexity normalization is min-max with a degenerate fallback") {
  const auto out = normalize_complexities({2.0, 4.0, 6.0});
  REQUIRE(out.size() == 3);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.5);
  CHECK(out[2] == 1.0);
  const auto flat = normalize_complexities({3.0, 3.0});
  CHECK(flat[0] == 0.5);
  CHECK(flat[1] == 0.5);
  CHECK(normalize_complexities({}).empty());
}

TEST_CASE("bin mapping covers the edges") {
  CHECK(complexity_bin(0.0) == 0);
  CHECK(complexity_bin(0.0999) == 0);
  CHECK(complexity_bin(0.55) == 5);
  CHECK(complexity_bin(0.95) == 9);
  CHECK(complexity_bin(1.0) == 9);
  CHECK(complexity_bin(-0.5) == 0);  // clamped
  CHECK(complexity_bin(2.0) == 9);
  CHECK(fq_bin(1.0) == 0);
  CHECK(fq_bin(25.5) == 5);
  CHECK(fq_bin(50.0) == 9);
  CHECK(fq_bin(0.0) == 0);   // clamped into [1, 50]
  CHECK(fq_bin(99.0) == 9);
}

TEST_CASE("heat-map accumulates means per cell and exports NA for gaps") {
  std::vector<HeatmapSample> samples = {
      {0.05, 3.0, -2.0}, {0.05, 3.0, -4.0}, {0.95, 48.0, 1.5}};
  const Heatmap map = complexity_heatmap(samples);
  CHECK(map.count[0][0] == 2);
  CHECK(map.mean_bdbr[0][0] == doctest::Approx(-3.0));
  CHECK(map.count[9][9] == 1);
  CHECK(map.mean_bdbr[9][9] == doctest::Approx(1.5));
  CHECK(map.count[5][5] == 0);

  const std::string csv = heatmap_to_csv(map);
  CHECK(csv.rfind("complexity_bin", 0) == 0);
  CHECK(csv.find("NA") != std::string::npos);
  CHECK(csv.find("-3") != std::string::npos);
}

TEST_CASE("result csv round-trips including quoting") {
  tdp_test::TempDir dir;
  std::vector<ResultRow> rows;
  rows.push_back({"plain.y4m", "stub-noisy", 1000.0, 1000.0, "ms-ssim",
                  0.912345678901});
  rows.push_back({"with,comma.y4m", "stub-noisy", 2000.0, 1999.5, "ms-ssim",
                  0.95});
  rows.push_back({"with\"quote.y4m", "stub-noisy", 3000.0, 3000.25, "ms-ssim",
                  0.97});
  const std::string path = dir.file("r.csv");
  write_results_csv(path, rows);

  const auto back = read_results_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].clip_id == rows[i].clip_id);
    CHECK(back[i].codec_id == rows[i].codec_id);
    CHECK(back[i].target_kbps == rows[i].target_kbps);
    CHECK(back[i].bitrate_kbps == rows[i].bitrate_kbps);
    CHECK(back[i].metric == rows[i].metric);
    CHECK(back[i].score == doctest::Approx(rows[i].score).epsilon(1e-10));
  }
  const std::string text = tdp_test::read_file(path);
  CHECK(text.rfind("# tdp-results v1", 0) == 0);

  CHECK_THROWS_AS(read_results_csv(dir.file("absent.csv")), IoError);
}

TEST_CASE("malformed result rows are reported with their line") {
  tdp_test::TempDir dir;
  {
    std::ofstream os(dir.file("bad1.csv"));
    os << "# tdp-results v1\nclip,codec,target_kbps,bitrate_kbps,metric,score\n"
       << "a,b,1,2,m\n";  // five fields
  }
  CHECK_THROWS_AS(read_results_csv(dir.file("bad1.csv")), ParseError);
  {
    std::ofstream os(dir.file("bad2.csv"));
    os << "# tdp-results v1\nclip,codec,target_kbps,bitrate_kbps,metric,score\n"
       << "a,b,xyz,2,m,0.5\n";
  }
  CHECK_THROWS_AS(read_results_csv(dir.file("bad2.csv")), ParseError);
}

TEST_CASE("rows regroup into per-clip per-metric curves") {
  std::vector<ResultRow> rows;
  for (double r : {4000.0, 1000.0, 2000.0}) {
    rows.push_back({"a.y4m", "stub-noisy", r, r, "ms-ssim", 0.8 + r * 1e-5});
  }
  for (double r : {1500.0, 3000.0}) {
    rows.push_back({"b.y4m", "stub-noisy", r, r, "ms-ssim", 0.85 + r * 1e-5});
  }
  rows.push_back({"a.y4m", "stub-noisy", 1000.0, 1000.0, "ssim", 0.9});

  const auto curves = rows_to_curves(rows);
  REQUIRE(curves.size() == 3);  // (a, ms-ssim), (b, ms-ssim), (a, ssim)
  const auto& a = curves[0];
  CHECK(a.clip_id == "a.y4m");
  REQUIRE(a.points.size() == 3);
  CHECK(a.points[0].bitrate_kbps == 1000.0);  // sorted on the way in
  CHECK(a.points[2].bitrate_kbps == 4000.0);

  std::vector<ResultRow> mixed = rows;
  mixed.push_back({"a.y4m", "x264", 5000.0, 5000.0, "ms-ssim", 0.99});
  CHECK_THROWS_AS(rows_to_curves(mixed), ComputeError);
}

TEST_CASE("curve_to_rows carries every field across") {
  const auto c = make_curve({{0.8, 1000}, {0.9, 2000}}, "clip7");
  const auto rows = curve_to_rows(c);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].clip_id == "clip7");
  CHECK(rows[0].codec_id == "stub-noisy");
  CHECK(rows[0].bitrate_kbps == 1000.0);
  CHECK(rows[0].metric == "ms-ssim");
  CHECK(rows[1].score == 0.9);
}

TEST_CASE("stub ladders produce bdbr-ready curves end to end") {
  const auto clip = tdp_test::make_noise_clip(32, 32, 3, 43);
  const std::vector<double> targets = {400.0, 1000.0, 2500.0, 6000.0};
  const auto anchor = run_ladder(clip, clip, stub_noisy_profile(), targets,
                                 "ms-ssim", "clip", 1, "");
  std::vector<double> cheaper;
  for (double t : targets) cheaper.push_back(0.9 * t);
  auto test = run_ladder(clip, clip, stub_noisy_profile(), cheaper, "ms-ssim",
                         "clip", 1, "");
  const auto res = bdbr(anchor, test);
  REQUIRE(res.valid);
  // same quality trend at 10% less rate: the saving lands near -10
  CHECK(res.value < 0.0);
}

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

#include "tdp/video_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tdp/error.hpp"
#include "tdp/hash.hpp"

namespace tdp::video_io {

namespace {

struct ColorspaceTag {
  const char* tag;
  Chroma chroma;
  int bit_depth;
};

// Canonical tag first per (chroma, depth); the writer always emits that one.
constexpr ColorspaceTag kColorspaces[] = {
    {"C420", Chroma::k420, 8},      {"C420jpeg", Chroma::k420, 8},
    {"C420mpeg2", Chroma::k420, 8}, {"C420paldv", Chroma::k420, 8},
    {"C444", Chroma::k444, 8},      {"C420p10", Chroma::k420, 10},
    {"C444p10", Chroma::k444, 10},
};

const char* canonical_tag(Chroma chroma, int bit_depth) {
  for (const auto& cs : kColorspaces) {
    if (cs.chroma == chroma && cs.bit_depth == bit_depth) return cs.tag;
  }
  throw DimensionError("unsupported chroma/bit-depth combination");
}

std::size_t plane_bytes(std::size_t samples, int bit_depth) {
  return bit_depth > 8 ? samples * 2 : samples;
}

void read_plane(std::istream& is, std::vector<std::uint16_t>& plane,
                std::size_t samples, int bit_depth, const std::string& path,
                std::size_t frame_index, std::size_t frame_offset) {
  std::vector<char> raw(plane_bytes(samples, bit_depth));
  is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
    throw ParseError("partial frame " + std::to_string(frame_index) + " in " +
                         path,
                     frame_offset);
  }
  plane.resize(samples);
  if (bit_depth > 8) {
    const std::uint16_t limit = static_cast<std::uint16_t>(1u << bit_depth);
    for (std::size_t i = 0; i < samples; ++i) {
      const auto lo = static_cast<std::uint8_t>(raw[2 * i]);
      const auto hi = static_cast<std::uint8_t>(raw[2 * i + 1]);
      const std::uint16_t v = static_cast<std::uint16_t>(lo | (hi << 8));
      if (v >= limit) {
        throw ParseError("sample out of range for " +
                             std::to_string(bit_depth) + "-bit content in " +
                             path,
                         frame_offset + 2 * i);
      }
      plane[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < samples; ++i) {
      plane[i] = static_cast<std::uint8_t>(raw[i]);
    }
  }
}

void write_plane(std::ostream& os, const std::vector<std::uint16_t>& plane,
                 int bit_depth) {
  if (bit_depth > 8) {
    std::vector<char> raw(plane.size() * 2);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      raw[2 * i] = static_cast<char>(plane[i] & 0xff);
      raw[2 * i + 1] = static_cast<char>(plane[i] >> 8);
    }
    os.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  } else {
    std::vector<char> raw(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) {
      raw[i] = static_cast<char>(plane[i] & 0xff);
    }
    os.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  }
}

std::uint32_t parse_u32(const std::string& text, const std::string& path,
                        std::size_t offset) {
  if (text.empty() ||
      !std::all_of(text.begin(), text.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    throw ParseError("bad numeric field '" + text + "' in " + path, offset);
  }
  unsigned long v = std::stoul(text);
  if (v > 0xffffffffUL) {
    throw ParseError("numeric field overflow in " + path, offset);
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

const char* chroma_name(Chroma c) {
  return c == Chroma::k420 ? "4:2:0" : "4:4:4";
}

std::size_t Clip::chroma_size() const {
  if (chroma == Chroma::k444) return width * height;
  return (width / 2) * (height / 2);
}

double Clip::duration_seconds() const {
  if (fps_num == 0) return 0.0;
  return static_cast<double>(frames.size()) * fps_den / fps_num;
}

void Clip::validate() const {
  if (width == 0 || height == 0) {
    throw DimensionError("clip has zero width or height");
  }
  if (bit_depth != 8 && bit_depth != 10) {
    throw DimensionError("unsupported bit depth " + std::to_string(bit_depth));
  }
  if (chroma == Chroma::k420 && (width % 2 || height % 2)) {
    throw DimensionError("4:2:0 requires even dimensions, got " +
                         std::to_string(width) + "x" + std::to_string(height));
  }
  const std::size_t ls = luma_size(), cs = chroma_size();
  const std::uint16_t maxv = max_sample();
  auto in_range = [maxv](const std::vector<std::uint16_t>& plane) {
    for (std::uint16_t v : plane) {
      if (v > maxv) return false;
    }
    return true;
  };
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    if (f.y.size() != ls || f.u.size() != cs || f.v.size() != cs) {
      throw DimensionError("frame " + std::to_string(i) +
                           " plane sizes inconsistent with geometry");
    }
    if (!in_range(f.y) || !in_range(f.u) || !in_range(f.v)) {
      throw DimensionError("frame " + std::to_string(i) +
                           " has samples beyond " + std::to_string(maxv) +
                           " for bit depth " + std::to_string(bit_depth));
    }
  }
}

Clip read_y4m(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);

  std::string header;
  if (!std::getline(is, header) || header.rfind("YUV4MPEG2", 0) != 0) {
    throw ParseError("missing YUV4MPEG2 signature in " + path, 0);
  }

  Clip clip;
  bool have_w = false, have_h = false, have_c = false;
  std::istringstream tags(header);
  std::string tok;
  tags >> tok;  // signature
  std::size_t tag_offset = tok.size();
  while (tags >> tok) {
    tag_offset += 1;  // separating space
    const std::string value = tok.substr(1);
    switch (tok[0]) {
      case 'W':
        clip.width = parse_u32(value, path, tag_offset);
        have_w = true;
        break;
      case 'H':
        clip.height = parse_u32(value, path, tag_offset);
        have_h = true;
        break;
      case 'F': {
        const auto colon = value.find(':');
        if (colon == std::string::npos) {
          throw ParseError("bad frame-rate tag '" + tok + "' in " + path,
                           tag_offset);
        }
        clip.fps_num = parse_u32(value.substr(0, colon), path, tag_offset);
        clip.fps_den = parse_u32(value.substr(colon + 1), path, tag_offset);
        if (clip.fps_num == 0 || clip.fps_den == 0) {
          throw ParseError("zero frame-rate component in " + path, tag_offset);
        }
        break;
      }
      case 'C': {
        bool known = false;
        for (const auto& cs : kColorspaces) {
          if (tok == cs.tag) {
            clip.chroma = cs.chroma;
            clip.bit_depth = cs.bit_depth;
            known = true;
            break;
          }
        }
        if (!known) {
          throw ParseError("unsupported colorspace '" + tok + "' in " + path,
                           tag_offset);
        }
        have_c = true;
        break;
      }
      case 'I':  // interlacing
      case 'A':  // aspect ratio
      case 'X':  // extensions
        break;   // accepted, not used
      default:
        throw ParseError("unknown header tag '" + tok + "' in " + path,
                         tag_offset);
    }
    tag_offset += tok.size();
  }
  if (!have_w || !have_h) {
    throw ParseError("header missing W or H in " + path, 0);
  }
  if (!have_c) {
    clip.chroma = Chroma::k420;  // Y4M default colorspace
    clip.bit_depth = 8;
  }
  if (clip.chroma == Chroma::k420 && (clip.width % 2 || clip.height % 2)) {
    throw ParseError("4:2:0 stream with odd dimensions in " + path, 0);
  }

  const std::size_t ls = clip.luma_size(), cs = clip.chroma_size();
  std::size_t offset = header.size() + 1;
  while (true) {
    std::string marker;
    if (!std::getline(is, marker)) break;  // clean EOF
    if (marker.rfind("FRAME", 0) != 0) {
      throw ParseError("expected FRAME marker in " + path, offset);
    }
    offset += marker.size() + 1;
    Frame f;
    const std::size_t idx = clip.frames.size();
    read_plane(is, f.y, ls, clip.bit_depth, path, idx, offset);
    offset += plane_bytes(ls, clip.bit_depth);
    read_plane(is, f.u, cs, clip.bit_depth, path, idx, offset);
    offset += plane_bytes(cs, clip.bit_depth);
    read_plane(is, f.v, cs, clip.bit_depth, path, idx, offset);
    offset += plane_bytes(cs, clip.bit_depth);
    clip.frames.push_back(std::move(f));
  }
  clip.validate();
  return clip;
}

void write_y4m(const Clip& clip, const std::string& path) {
  clip.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for write");
  os << "YUV4MPEG2 W" << clip.width << " H" << clip.height << " F"
     << clip.fps_num << ":" << clip.fps_den << " Ip A1:1 "
     << canonical_tag(clip.chroma, clip.bit_depth) << "\n";
  for (const Frame& f : clip.frames) {
    os << "FRAME\n";
    write_plane(os, f.y, clip.bit_depth);
    write_plane(os, f.u, clip.bit_depth);
    write_plane(os, f.v, clip.bit_depth);
  }
  if (!os) throw IoError("short write on " + path);
}

Clip read_raw_yuv(const std::string& path, const RawGeometry& geom) {
  Clip clip;
  clip.width = geom.width;
  clip.height = geom.height;
  clip.fps_num = geom.fps_num;
  clip.fps_den = geom.fps_den;
  clip.bit_depth = geom.bit_depth;
  clip.chroma = geom.chroma;
  if (clip.width == 0 || clip.height == 0) {
    throw DimensionError("raw YUV needs explicit nonzero geometry");
  }

  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  const std::size_t ls = clip.luma_size(), cs = clip.chroma_size();
  std::size_t offset = 0;
  while (true) {
    if (is.peek() == std::char_traits<char>::eof()) break;
    Frame f;
    const std::size_t idx = clip.frames.size();
    read_plane(is, f.y, ls, clip.bit_depth, path, idx, offset);
    offset += plane_bytes(ls, clip.bit_depth);
    read_plane(is, f.u, cs, clip.bit_depth, path, idx, offset);
    offset += plane_bytes(cs, clip.bit_depth);
    read_plane(is, f.v, cs, clip.bit_depth, path, idx, offset);
    offset += plane_bytes(cs, clip.bit_depth);
    clip.frames.push_back(std::move(f));
  }
  clip.validate();
  return clip;
}

void write_raw_yuv(const Clip& clip, const std::string& path) {
  clip.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for write");
  for (const Frame& f : clip.frames) {
    write_plane(os, f.y, clip.bit_depth);
    write_plane(os, f.u, clip.bit_depth);
    write_plane(os, f.v, clip.bit_depth);
  }
  if (!os) throw IoError("short write on " + path);
}

numerics::Tensor to_normalized_luma(const Frame& frame, std::size_t width,
                                    std::size_t height, int bit_depth) {
  if (frame.y.size() != width * height) {
    throw DimensionError("luma plane size does not match geometry");
  }
  const numerics::real scale =
      1.0 / static_cast<numerics::real>((1u << bit_depth) - 1u);
  std::vector<numerics::real> data(frame.y.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<numerics::real>(frame.y[i]) * scale;
  }
  return numerics::Tensor::from_data({height, width}, std::move(data));
}

numerics::Tensor to_normalized_luma(const Clip& clip,
                                    std::size_t frame_index) {
  if (frame_index >= clip.frames.size()) {
    throw DimensionError("frame index out of range");
  }
  return to_normalized_luma(clip.frames[frame_index], clip.width, clip.height,
                            clip.bit_depth);
}

void store_normalized_luma(const numerics::Tensor& luma, Frame& frame,
                           int bit_depth) {
  const auto& data = luma.data();
  if (data.size() != frame.y.size()) {
    throw DimensionError("normalized luma size does not match frame");
  }
  const double maxval = static_cast<double>((1u << bit_depth) - 1u);
  for (std::size_t i = 0; i < data.size(); ++i) {
    double v = std::round(std::clamp(data[i], 0.0, 1.0) * maxval);
    frame.y[i] = static_cast<std::uint16_t>(v);
  }
}

std::uint64_t clip_content_hash(const Clip& clip) {
  Fnv1a h;
  h.update_pod<std::uint64_t>(clip.width);
  h.update_pod<std::uint64_t>(clip.height);
  h.update_pod<std::uint32_t>(clip.fps_num);
  h.update_pod<std::uint32_t>(clip.fps_den);
  h.update_pod<std::int32_t>(clip.bit_depth);
  h.update_pod<std::int32_t>(clip.chroma == Chroma::k420 ? 0 : 1);
  for (const Frame& f : clip.frames) {
    h.update(f.y.data(), f.y.size() * sizeof(std::uint16_t));
    h.update(f.u.data(), f.u.size() * sizeof(std::uint16_t));
    h.update(f.v.data(), f.v.size() * sizeof(std::uint16_t));
  }
  return h.digest();
}

}  // namespace tdp::video_io

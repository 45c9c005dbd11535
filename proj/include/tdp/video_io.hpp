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

#include <cstdint>
#include <string>
#include <vector>

#include "tdp/tensor.hpp"

namespace tdp::video_io {

enum class Chroma { k420, k444 };

const char* chroma_name(Chroma c);

// One planar frame. Geometry lives on the owning Clip; samples are stored as
// u16 so 8- and 10-bit content share one layout.
struct Frame {
  std::vector<std::uint16_t> y;
  std::vector<std::uint16_t> u;
  std::vector<std::uint16_t> v;
};

struct Clip {
  std::vector<Frame> frames;
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t fps_num = 30;
  std::uint32_t fps_den = 1;
  int bit_depth = 8;
  Chroma chroma = Chroma::k420;

  std::size_t luma_size() const { return width * height; }
  std::size_t chroma_size() const;
  std::uint16_t max_sample() const {
    return static_cast<std::uint16_t>((1u << bit_depth) - 1u);
  }
  double duration_seconds() const;

  // Throws DimensionError when geometry or any plane length is inconsistent.
  void validate() const;
};

Clip read_y4m(const std::string& path);
void write_y4m(const Clip& clip, const std::string& path);

// Headerless planar YUV; geometry must be supplied by the caller.
struct RawGeometry {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t fps_num = 30;
  std::uint32_t fps_den = 1;
  int bit_depth = 8;
  Chroma chroma = Chroma::k420;
};

Clip read_raw_yuv(const std::string& path, const RawGeometry& geom);
void write_raw_yuv(const Clip& clip, const std::string& path);

// Luma samples scaled by 1/(2^bit_depth - 1) into an H x W tensor.
numerics::Tensor to_normalized_luma(const Frame& frame, std::size_t width,
                                    std::size_t height, int bit_depth);
numerics::Tensor to_normalized_luma(const Clip& clip, std::size_t frame_index);

// Writes a normalized luma tensor back into the frame's Y plane, clamping to
// the sample range. Chroma planes are left untouched.
void store_normalized_luma(const numerics::Tensor& luma, Frame& frame,
                           int bit_depth);

// Content digest over geometry plus every plane; stable across process runs.
std::uint64_t clip_content_hash(const Clip& clip);

}  // namespace tdp::video_io

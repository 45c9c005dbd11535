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

#ifndef TDP_HASH_HPP_
#define TDP_HASH_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

namespace tdp {

// FNV-1a 64-bit. Used for content hashes (clip identity, probe cache keys,
// dataset manifests, determinism tests); not cryptographic.
class Fnv1a {
 public:
  void update(const void* bytes, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ull;
    }
  }

  template <typename T>
  void update_pod(const T& value) {
    static_assert(std::is_trivially_copyable_v<T>);
    update(&value, sizeof(T));
  }

  void update_string(const std::string& s) { update(s.data(), s.size()); }

  std::uint64_t digest() const { return state_; }

  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

std::string hex_u64(std::uint64_t v);

// Hash of a file's raw bytes; throws IoError if unreadable.
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace tdp

#endif  // TDP_HASH_HPP_

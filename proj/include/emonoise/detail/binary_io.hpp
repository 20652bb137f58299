// Copyright (c) 2026 The emonoise Authors. All Rights Reserved.
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

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

#include "emonoise/error.hpp"

// Little-endian scalar I/O shared by the WAV, feature-cache and model formats.
namespace emonoise::detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <class T>
T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  value = byteswap_if_big(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
void write_le(std::ostream& out, std::span<const T> values) {
  for (const T& v : values) write_le(out, v);
}

/// Reads one scalar; a short read raises Errc::truncated naming `what`.
template <class T>
T read_le(std::istream& in, const char* what) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
    throw Error(Errc::truncated, std::string("unexpected end of file reading ") + what);
  return byteswap_if_big(value);
}

template <class T>
void read_le(std::istream& in, std::span<T> values, const char* what) {
  for (T& v : values) v = read_le<T>(in, what);
}

inline std::string read_tag(std::istream& in, const char* what) {
  char tag[4];
  in.read(tag, 4);
  if (in.gcount() != 4)
    throw Error(Errc::truncated, std::string("unexpected end of file reading ") + what);
  return std::string(tag, 4);
}

}  // namespace emonoise::detail

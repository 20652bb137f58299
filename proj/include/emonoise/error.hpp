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

#include <stdexcept>
#include <string>

namespace emonoise {

enum class Errc {
  io,
  malformed_header,
  unsupported_encoding,
  bad_magic,
  version_mismatch,
  truncated,
  dimension_mismatch,
  invalid_argument,
  empty_input,
  rate_mismatch,
  silent_signal,
  label_out_of_range,
  unmappable_filename,
  missing_category,
  not_configured,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::io: return "io";
    case Errc::malformed_header: return "malformed header";
    case Errc::unsupported_encoding: return "unsupported encoding";
    case Errc::bad_magic: return "bad magic";
    case Errc::version_mismatch: return "version mismatch";
    case Errc::truncated: return "truncated";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::empty_input: return "empty input";
    case Errc::rate_mismatch: return "sample rate mismatch";
    case Errc::silent_signal: return "silent signal";
    case Errc::label_out_of_range: return "label out of range";
    case Errc::unmappable_filename: return "unmappable filename";
    case Errc::missing_category: return "missing noise category";
    case Errc::not_configured: return "not configured";
  }
  return "unknown";
}

/// Every domain failure raised by the library. The code lets callers (and
/// tests) tell failure kinds apart without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace emonoise

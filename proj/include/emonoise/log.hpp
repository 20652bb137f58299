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

#include <functional>
#include <iostream>
#include <string>

namespace emonoise {

/// Receives progress and warning lines. Data never goes through here.
using LogSink = std::function<void(const std::string&)>;

inline LogSink stderr_sink() {
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

inline LogSink null_sink() {
  return [](const std::string&) {};
}

}  // namespace emonoise

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

// Writes a small synthetic corpus that the emonoise CLI can run on:
//
//   make_synthetic_corpus out/
//   emonoise run --clean-dir out/clean --noise-dir out/noise --work-dir out/work
//       --set dbn.layer_sizes=13,64,64,128

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "emonoise/synthetic.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_synthetic_corpus <out_dir> [per_class=20] [seed=1]\n";
    return 2;
  }
  const std::filesystem::path root = argv[1];
  const std::size_t per_class = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 20;
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 1;
  try {
    const auto n = emonoise::synthetic::write_clean_corpus(root / "clean", per_class, 10, seed);
    emonoise::synthetic::write_noise_corpus(root / "noise", 20.0, seed + 1);
    std::cerr << "wrote " << n << " utterances to " << (root / "clean") << " and noise to " << (root / "noise")
              << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

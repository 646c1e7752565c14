// lyrec/checkpoint.h
//
// Copyright 2026 The lyrec authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LYREC_CHECKPOINT_H_
#define LYREC_CHECKPOINT_H_

#include <string>
#include <utility>
#include <vector>

#include "lyrec/matrix.h"

namespace lyrec {

// Versioned binary container shared by recognizer and LM checkpoints:
// a config snapshot, named parameter tensors, named non-trainable
// buffers, and optional optimizer state. Doubles are stored bit-exact,
// so eval-mode results are portable across machines.
struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Mat>> tensors;
  std::vector<std::pair<std::string, Mat>> buffers;
  bool has_optimizer = false;
  uint64_t optimizer_step = 0;
  std::vector<std::pair<std::string, Mat>> optimizer_m;
  std::vector<std::pair<std::string, Mat>> optimizer_v;
};

void SaveCheckpoint(const std::string &path, const Checkpoint &ckpt);
Checkpoint LoadCheckpoint(const std::string &path);

}  // namespace lyrec

#endif  // LYREC_CHECKPOINT_H_

// lyrec/checkpoint.cc
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

#include "lyrec/checkpoint.h"

#include <cstring>
#include <fstream>

#include "lyrec/common.h"
#include "lyrec/io.h"

namespace lyrec {

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'C', 'K', 'P'};
constexpr uint32_t kCheckpointVersion = 1;

void WriteNamedMats(std::ostream &os,
                    const std::vector<std::pair<std::string, Mat>> &mats) {
  WriteU32(os, static_cast<uint32_t>(mats.size()));
  for (const auto &[name, mat] : mats) {
    WriteLenString(os, name);
    WriteU32(os, static_cast<uint32_t>(mat.rows()));
    WriteU32(os, static_cast<uint32_t>(mat.cols()));
    for (long r = 0; r < mat.rows(); ++r) {
      for (long c = 0; c < mat.cols(); ++c) WriteF64(os, mat(r, c));
    }
  }
}

std::vector<std::pair<std::string, Mat>> ReadNamedMats(
    std::istream &is, const std::string &what) {
  uint32_t n = ReadU32(is, what + " count");
  std::vector<std::pair<std::string, Mat>> out;
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = ReadLenString(is, what + " name");
    uint32_t rows = ReadU32(is, what + " rows");
    uint32_t cols = ReadU32(is, what + " cols");
    if (rows == 0 || cols == 0 || rows > (1u << 26) || cols > (1u << 26)) {
      throw FormatError("bad tensor shape in checkpoint for " + name);
    }
    Mat m(rows, cols);
    for (uint32_t r = 0; r < rows; ++r) {
      for (uint32_t c = 0; c < cols; ++c) {
        m(r, c) = ReadF64(is, what + " payload");
      }
    }
    out.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace

void SaveCheckpoint(const std::string &path, const Checkpoint &ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  WriteBytes(os, kCheckpointMagic, 4);
  WriteU32(os, kCheckpointVersion);
  WriteLenString(os, ckpt.config_text);
  WriteNamedMats(os, ckpt.tensors);
  WriteNamedMats(os, ckpt.buffers);
  unsigned char has_opt = ckpt.has_optimizer ? 1 : 0;
  WriteBytes(os, &has_opt, 1);
  if (ckpt.has_optimizer) {
    WriteU64(os, ckpt.optimizer_step);
    WriteNamedMats(os, ckpt.optimizer_m);
    WriteNamedMats(os, ckpt.optimizer_v);
  }
}

Checkpoint LoadCheckpoint(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  char magic[4];
  try {
    ReadBytes(is, magic, 4, "checkpoint magic");
  } catch (const FormatError &) {
    throw FormatError("malformed checkpoint header: " + path);
  }
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("malformed checkpoint header: " + path);
  }
  uint32_t version = ReadU32(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError(Strprintf("unsupported checkpoint version %u", version));
  }
  Checkpoint ckpt;
  ckpt.config_text = ReadLenString(is, "checkpoint config");
  ckpt.tensors = ReadNamedMats(is, "checkpoint tensor");
  ckpt.buffers = ReadNamedMats(is, "checkpoint buffer");
  unsigned char has_opt = 0;
  ReadBytes(is, &has_opt, 1, "checkpoint optimizer flag");
  if (has_opt) {
    ckpt.has_optimizer = true;
    ckpt.optimizer_step = ReadU64(is, "checkpoint optimizer step");
    ckpt.optimizer_m = ReadNamedMats(is, "checkpoint optimizer m");
    ckpt.optimizer_v = ReadNamedMats(is, "checkpoint optimizer v");
  }
  return ckpt;
}

}  // namespace lyrec

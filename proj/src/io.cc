// lyrec/io.cc
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

#include "lyrec/io.h"

#include <cstring>
#include <fstream>
#include <ostream>

#include "lyrec/common.h"

namespace lyrec {

void WriteBytes(std::ostream &os, const void *data, size_t n) {
  os.write(static_cast<const char *>(data), static_cast<std::streamsize>(n));
  if (!os) throw DataError("write failed");
}

void ReadBytes(std::istream &is, void *data, size_t n,
               const std::string &what_for) {
  is.read(static_cast<char *>(data), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n) {
    throw FormatError("truncated input while reading " + what_for);
  }
}

namespace {

template <typename T>
void WriteLe(std::ostream &os, T v) {
  unsigned char buf[sizeof(T)];
  uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  }
  WriteBytes(os, buf, sizeof(T));
}

template <typename T>
T ReadLe(std::istream &is, const std::string &what_for) {
  unsigned char buf[sizeof(T)];
  ReadBytes(is, buf, sizeof(T), what_for);
  uint64_t bits = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
  }
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

}  // namespace

void WriteU16(std::ostream &os, uint16_t v) { WriteLe(os, v); }
void WriteU32(std::ostream &os, uint32_t v) { WriteLe(os, v); }
void WriteU64(std::ostream &os, uint64_t v) { WriteLe(os, v); }
void WriteF32(std::ostream &os, float v) { WriteLe(os, v); }
void WriteF64(std::ostream &os, double v) { WriteLe(os, v); }

void WriteLenString(std::ostream &os, const std::string &s) {
  if (s.size() > UINT32_MAX) throw DataError("string too long to serialize");
  WriteU32(os, static_cast<uint32_t>(s.size()));
  WriteBytes(os, s.data(), s.size());
}

uint16_t ReadU16(std::istream &is, const std::string &w) {
  return ReadLe<uint16_t>(is, w);
}
uint32_t ReadU32(std::istream &is, const std::string &w) {
  return ReadLe<uint32_t>(is, w);
}
uint64_t ReadU64(std::istream &is, const std::string &w) {
  return ReadLe<uint64_t>(is, w);
}
float ReadF32(std::istream &is, const std::string &w) {
  return ReadLe<float>(is, w);
}
double ReadF64(std::istream &is, const std::string &w) {
  return ReadLe<double>(is, w);
}

std::string ReadLenString(std::istream &is, const std::string &w) {
  uint32_t n = ReadU32(is, w + " length");
  std::string s(n, '\0');
  if (n > 0) ReadBytes(is, s.data(), n, w);
  return s;
}

std::vector<std::string> ReadLines(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void WriteFile(const std::string &path, const std::string &content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw DataError("write failed: " + path);
}

}  // namespace lyrec

// lyrec/io.h
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

#ifndef LYREC_IO_H_
#define LYREC_IO_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lyrec {

// All binary container formats in this project are little-endian on disk,
// independent of host byte order.

void WriteBytes(std::ostream &os, const void *data, size_t n);
// Throws FormatError with `what_for` in the message on short read.
void ReadBytes(std::istream &is, void *data, size_t n,
               const std::string &what_for);

void WriteU16(std::ostream &os, uint16_t v);
void WriteU32(std::ostream &os, uint32_t v);
void WriteU64(std::ostream &os, uint64_t v);
void WriteF32(std::ostream &os, float v);
void WriteF64(std::ostream &os, double v);
void WriteLenString(std::ostream &os, const std::string &s);

uint16_t ReadU16(std::istream &is, const std::string &what_for);
uint32_t ReadU32(std::istream &is, const std::string &what_for);
uint64_t ReadU64(std::istream &is, const std::string &what_for);
float ReadF32(std::istream &is, const std::string &what_for);
double ReadF64(std::istream &is, const std::string &what_for);
std::string ReadLenString(std::istream &is, const std::string &what_for);

// Whole-file text helpers. Lines are '\n'-separated; a trailing final
// newline does not produce an empty last line.
std::vector<std::string> ReadLines(const std::string &path);
void WriteFile(const std::string &path, const std::string &content);

}  // namespace lyrec

#endif  // LYREC_IO_H_

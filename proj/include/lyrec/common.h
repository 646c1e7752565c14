// lyrec/common.h
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

#ifndef LYREC_COMMON_H_
#define LYREC_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lyrec {

// Error hierarchy. The CLI maps these onto process exit codes:
// UsageError -> 1, DataError (and FormatError) -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string &msg) : Error(msg) {}
};

// Bad or inconsistent input data (missing files, mismatched ids, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string &msg) : Error(msg) {}
};

// Malformed on-disk artifacts. A kind of data error, but kept distinct so
// format round-trip tests can assert the exact failure class.
class FormatError : public DataError {
 public:
  explicit FormatError(const std::string &msg) : DataError(msg) {}
};

// Numeric breakdown during training or decoding (NaN loss, ...).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string &msg) : Error(msg) {}
};

std::string Strprintf(const char *fmt, ...);

// Deterministic random stream. mt19937_64 has a standard-defined sequence
// and the variate transforms below are our own, so identical seeds give
// identical streams on every platform (std::*_distribution would not).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53-bit resolution.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t UniformInt(int64_t lo, int64_t hi);

  // Standard normal via Box-Muller (no cached spare; keeps the stream
  // position a pure function of call count).
  double Normal();

  uint64_t NextRaw() { return engine_(); }

  // Child stream decorrelated from this one; forking with distinct ids
  // gives independent reproducible streams.
  Rng Fork(uint64_t stream_id);

 private:
  std::mt19937_64 engine_;
};

// splitmix64; used for seed mixing.
uint64_t MixSeed(uint64_t a, uint64_t b);

std::string ToLowerAscii(const std::string &s);
std::vector<std::string> SplitString(const std::string &s, char sep);
std::string JoinStrings(const std::vector<std::string> &parts,
                        const std::string &sep);
std::string TrimString(const std::string &s);

// `key = value` lines; '#' starts a comment; later keys win.
std::vector<std::pair<std::string, std::string>> ParseKeyValueLines(
    const std::string &text);

}  // namespace lyrec

#endif  // LYREC_COMMON_H_

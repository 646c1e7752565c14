// lyrec/fft.cc
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

#include "lyrec/fft.h"

#include <cmath>

#include "lyrec/common.h"

namespace lyrec {
namespace features {

size_t NextPowerOfTwo(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void Fft(std::vector<std::complex<double>> *data) {
  size_t n = data->size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw UsageError("Fft: size must be a nonzero power of two");
  }
  auto &a = *data;

  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::vector<double> RealPowerSpectrum(const std::vector<double> &frame,
                                      size_t n_fft) {
  if (n_fft < frame.size() || (n_fft & (n_fft - 1)) != 0) {
    throw UsageError("RealPowerSpectrum: n_fft must be a power of two >= len");
  }
  std::vector<std::complex<double>> buf(n_fft, {0.0, 0.0});
  for (size_t i = 0; i < frame.size(); ++i) buf[i] = {frame[i], 0.0};
  Fft(&buf);
  std::vector<double> power(n_fft / 2 + 1);
  for (size_t i = 0; i <= n_fft / 2; ++i) power[i] = std::norm(buf[i]);
  return power;
}

}  // namespace features
}  // namespace lyrec

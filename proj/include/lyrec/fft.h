// lyrec/fft.h
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

#ifndef LYREC_FFT_H_
#define LYREC_FFT_H_

#include <complex>
#include <vector>

namespace lyrec {
namespace features {

// In-place iterative radix-2 FFT; data.size() must be a power of two.
void Fft(std::vector<std::complex<double>> *data);

// Power spectrum bins 0..n/2 of a real frame zero-padded to `n_fft`
// (power of two, >= frame.size()).
std::vector<double> RealPowerSpectrum(const std::vector<double> &frame,
                                      size_t n_fft);

size_t NextPowerOfTwo(size_t n);

}  // namespace features
}  // namespace lyrec

#endif  // LYREC_FFT_H_

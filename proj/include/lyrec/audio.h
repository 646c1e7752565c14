// lyrec/audio.h
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

#ifndef LYREC_AUDIO_H_
#define LYREC_AUDIO_H_

#include <string>
#include <vector>

namespace lyrec {
namespace corpus {

// Mono waveform in [-1, 1]. Length must be > 0 and every sample finite;
// Validate() enforces this.
struct AudioSegment {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string id;

  size_t NumSamples() const { return samples.size(); }
  double DurationSeconds() const;
  // Mean squared sample value.
  double Power() const;
  double Peak() const;
  void Validate() const;
};

// 16-bit PCM mono WAV. Reading rejects anything else with FormatError.
AudioSegment ReadWav(const std::string &path, const std::string &id = "");
// Samples are clamped to [-1, 1] and quantized to int16.
void WriteWav(const std::string &path, const AudioSegment &audio);

// Quantize to the int16 grid the WAV container stores, so that an
// in-memory segment equals its write/read round-trip bit for bit.
void QuantizeToInt16Grid(AudioSegment *audio);

}  // namespace corpus
}  // namespace lyrec

#endif  // LYREC_AUDIO_H_

// lyrec/features.h
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

#ifndef LYREC_FEATURES_H_
#define LYREC_FEATURES_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lyrec/audio.h"
#include "lyrec/matrix.h"

namespace lyrec {
namespace features {

struct MelConfig {
  int n_mels = 80;
  int window_length = 400;  // samples (25 ms at 16 kHz)
  int hop_length = 160;     // samples (10 ms at 16 kHz)
  double fmin = 0.0;
  double fmax = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-10;

  void Validate(int sample_rate) const;
};

// Triangular filters with unit peak on an HTK-style mel scale; a pure
// tone at CenterFrequencyHz(i) maximizes band i.
class MelFilterbank {
 public:
  MelFilterbank(const MelConfig &cfg, int sample_rate, size_t n_fft);

  // Mel-weighted power per band for one power spectrum (n_fft/2+1 bins).
  std::vector<double> Apply(const std::vector<double> &power_spectrum) const;
  double CenterFrequencyHz(int band) const;
  int NumBands() const { return static_cast<int>(weights_.size()); }

 private:
  std::vector<std::vector<double>> weights_;  // per band, per fft bin
  std::vector<double> center_freqs_hz_;
};

// K layered T x D representations for one utterance, all layers the same
// shape, plus the frame rate they were extracted at.
struct FeatureStack {
  std::vector<Mat> layers;
  double frame_rate = 0.0;  // frames per second
  std::string source_tag;

  int K() const { return static_cast<int>(layers.size()); }
  long T() const { return layers.empty() ? 0 : layers[0].rows(); }
  long D() const { return layers.empty() ? 0 : layers[0].cols(); }
  void Validate() const;
};

// Trainable convex combination over stack layers: w = softmax(logits).
// The trainable copy lives inside a model; this standalone form backs the
// pure fusion math and its tests.
struct FusionWeights {
  Vec logits;

  explicit FusionWeights(int k) : logits(Vec::Zero(k)) {}
  explicit FusionWeights(Vec l) : logits(std::move(l)) {}
  int K() const { return static_cast<int>(logits.size()); }
  Vec Weights() const;  // softmax(logits); positive, sums to 1
};

// log(mel power + log_floor); T = 1 + floor((len - window) / hop).
// Throws DataError if the audio is shorter than one window.
FeatureStack MelSpectrogram(const corpus::AudioSegment &audio,
                            const MelConfig &cfg);

// F[t,d] = sum_i w_i * layer_i[t,d].
Mat FuseLayers(const FeatureStack &stack, const FusionWeights &weights);

// Stand-in for a frozen SSL upstream: layer 0 is the mel spectrogram,
// layer i > 0 is tanh(layer_{i-1} W_i + b_i) with W_i, b_i drawn once
// from `seed`. Deterministic in (audio, cfg, n_layers, seed).
FeatureStack PseudoSslExtract(const corpus::AudioSegment &audio,
                              const MelConfig &cfg, int n_layers,
                              uint64_t seed);

// Binary stack container: magic "FSTK", version u32, K u32, T u32, D u32,
// frame_rate f32, then K*T*D float32, layer-major then frame then dim.
void WriteStack(const std::string &path, const FeatureStack &stack);
FeatureStack ReadStack(const std::string &path);

// Multi-utterance archive of stacks plus a text sidecar index mapping
// utterance id -> byte offset within the archive.
class StackArchiveWriter {
 public:
  StackArchiveWriter(const std::string &archive_path,
                     const std::string &index_path);
  ~StackArchiveWriter();
  void Add(const std::string &utt_id, const FeatureStack &stack);
  void Close();

 private:
  struct Impl;
  Impl *impl_;
};

class StackArchiveReader {
 public:
  StackArchiveReader(const std::string &archive_path,
                     const std::string &index_path);
  FeatureStack Read(const std::string &utt_id) const;
  std::vector<std::string> Ids() const;

 private:
  std::string archive_path_;
  std::map<std::string, uint64_t> offsets_;
};

// Per-dimension mean/variance normalization, fitted on the train split
// only and applied to every stack layer by layer.
struct FeatureNormalizer {
  std::vector<Vec> mean;     // per layer
  std::vector<Vec> inv_std;  // per layer

  static FeatureNormalizer Fit(const std::vector<const FeatureStack *> &train);
  FeatureStack Apply(const FeatureStack &stack) const;
};

}  // namespace features
}  // namespace lyrec

#endif  // LYREC_FEATURES_H_

// lyrec/features.cc
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

#include "lyrec/features.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "lyrec/common.h"
#include "lyrec/fft.h"
#include "lyrec/io.h"

namespace lyrec {
namespace features {

namespace {

double HzToMel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

constexpr char kStackMagic[4] = {'F', 'S', 'T', 'K'};
constexpr uint32_t kStackVersion = 1;

}  // namespace

void MelConfig::Validate(int sample_rate) const {
  if (n_mels < 1) throw DataError("n_mels must be >= 1");
  if (window_length < 2) throw DataError("window_length must be >= 2");
  if (hop_length < 1 || hop_length > window_length) {
    throw DataError("hop_length must satisfy 0 < hop <= window");
  }
  double nyquist = sample_rate / 2.0;
  double hi = fmax > 0.0 ? fmax : nyquist;
  if (!(fmin >= 0.0 && fmin < hi && hi <= nyquist)) {
    throw DataError("mel band limits must satisfy 0 <= fmin < fmax <= sr/2");
  }
  if (log_floor <= 0.0) throw DataError("log_floor must be positive");
}

MelFilterbank::MelFilterbank(const MelConfig &cfg, int sample_rate,
                             size_t n_fft) {
  cfg.Validate(sample_rate);
  double hi = cfg.fmax > 0.0 ? cfg.fmax : sample_rate / 2.0;
  double mel_lo = HzToMel(cfg.fmin);
  double mel_hi = HzToMel(hi);
  int m = cfg.n_mels;

  std::vector<double> mel_points(static_cast<size_t>(m) + 2);
  for (int i = 0; i < m + 2; ++i) {
    mel_points[static_cast<size_t>(i)] =
        mel_lo + (mel_hi - mel_lo) * i / (m + 1);
  }
  for (int i = 0; i < m; ++i) {
    center_freqs_hz_.push_back(MelToHz(mel_points[static_cast<size_t>(i) + 1]));
  }

  size_t n_bins = n_fft / 2 + 1;
  double hz_per_bin = static_cast<double>(sample_rate) /
                      static_cast<double>(n_fft);
  weights_.assign(static_cast<size_t>(m), std::vector<double>(n_bins, 0.0));
  for (int b = 0; b < m; ++b) {
    double left = mel_points[static_cast<size_t>(b)];
    double center = mel_points[static_cast<size_t>(b) + 1];
    double right = mel_points[static_cast<size_t>(b) + 2];
    for (size_t k = 0; k < n_bins; ++k) {
      double mel = HzToMel(hz_per_bin * static_cast<double>(k));
      double w = 0.0;
      if (mel > left && mel <= center) {
        w = (mel - left) / (center - left);
      } else if (mel > center && mel < right) {
        w = (right - mel) / (right - center);
      }
      weights_[static_cast<size_t>(b)][k] = w;
    }
  }
}

std::vector<double> MelFilterbank::Apply(
    const std::vector<double> &power_spectrum) const {
  std::vector<double> out(weights_.size(), 0.0);
  for (size_t b = 0; b < weights_.size(); ++b) {
    if (power_spectrum.size() != weights_[b].size()) {
      throw DataError("power spectrum size does not match filterbank");
    }
    double acc = 0.0;
    for (size_t k = 0; k < power_spectrum.size(); ++k) {
      acc += weights_[b][k] * power_spectrum[k];
    }
    out[b] = acc;
  }
  return out;
}

double MelFilterbank::CenterFrequencyHz(int band) const {
  if (band < 0 || band >= NumBands()) {
    throw DataError("mel band index out of range");
  }
  return center_freqs_hz_[static_cast<size_t>(band)];
}

void FeatureStack::Validate() const {
  if (layers.empty()) throw DataError("feature stack has no layers");
  long t = layers[0].rows(), d = layers[0].cols();
  if (t < 1 || d < 1) throw DataError("feature stack layer is empty");
  for (const Mat &layer : layers) {
    if (layer.rows() != t || layer.cols() != d) {
      throw DataError("feature stack layers disagree in shape");
    }
    if (!layer.allFinite()) {
      throw DataError("feature stack contains non-finite values");
    }
  }
  if (frame_rate <= 0.0) throw DataError("feature stack frame_rate invalid");
}

Vec FusionWeights::Weights() const {
  if (logits.size() < 1) throw DataError("FusionWeights needs K >= 1");
  Vec shifted = logits.array() - logits.maxCoeff();
  Vec w = shifted.array().exp();
  return w / w.sum();
}

FeatureStack MelSpectrogram(const corpus::AudioSegment &audio,
                            const MelConfig &cfg) {
  audio.Validate();
  cfg.Validate(audio.sample_rate);
  long len = static_cast<long>(audio.samples.size());
  if (len < cfg.window_length) {
    throw DataError(Strprintf(
        "audio '%s' shorter than one analysis window (%ld < %d samples)",
        audio.id.c_str(), len, cfg.window_length));
  }
  long n_frames = 1 + (len - cfg.window_length) / cfg.hop_length;
  size_t n_fft = NextPowerOfTwo(static_cast<size_t>(cfg.window_length));
  MelFilterbank bank(cfg, audio.sample_rate, n_fft);

  // Periodic Hann window.
  std::vector<double> window(static_cast<size_t>(cfg.window_length));
  for (int i = 0; i < cfg.window_length; ++i) {
    window[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.window_length);
  }

  Mat feat(n_frames, cfg.n_mels);
  std::vector<double> frame(static_cast<size_t>(cfg.window_length));
  for (long t = 0; t < n_frames; ++t) {
    long start = t * cfg.hop_length;
    for (int i = 0; i < cfg.window_length; ++i) {
      frame[static_cast<size_t>(i)] =
          audio.samples[static_cast<size_t>(start + i)] *
          window[static_cast<size_t>(i)];
    }
    std::vector<double> power = RealPowerSpectrum(frame, n_fft);
    std::vector<double> mel = bank.Apply(power);
    for (int d = 0; d < cfg.n_mels; ++d) {
      feat(t, d) = std::log(mel[static_cast<size_t>(d)] + cfg.log_floor);
    }
  }

  FeatureStack stack;
  stack.layers.push_back(std::move(feat));
  stack.frame_rate =
      static_cast<double>(audio.sample_rate) / cfg.hop_length;
  stack.source_tag = "mel";
  return stack;
}

Mat FuseLayers(const FeatureStack &stack, const FusionWeights &weights) {
  stack.Validate();
  if (stack.K() != weights.K()) {
    throw DataError(Strprintf("fusion weight count %d != stack layers %d",
                              weights.K(), stack.K()));
  }
  Vec w = weights.Weights();
  Mat fused = Mat::Zero(stack.T(), stack.D());
  for (int i = 0; i < stack.K(); ++i) {
    fused += w(i) * stack.layers[static_cast<size_t>(i)];
  }
  return fused;
}

FeatureStack PseudoSslExtract(const corpus::AudioSegment &audio,
                              const MelConfig &cfg, int n_layers,
                              uint64_t seed) {
  if (n_layers < 1) throw DataError("n_layers must be >= 1");
  FeatureStack stack = MelSpectrogram(audio, cfg);
  stack.source_tag = "pseudo-ssl";
  long d = stack.D();
  for (int i = 1; i < n_layers; ++i) {
    // Frozen projection; parameters depend only on (seed, layer, dims).
    Rng rng(MixSeed(seed, static_cast<uint64_t>(i)));
    double limit = std::sqrt(6.0 / static_cast<double>(d + d));
    Mat w(d, d);
    for (long r = 0; r < d; ++r) {
      for (long c = 0; c < d; ++c) w(r, c) = rng.Uniform(-limit, limit);
    }
    Vec b(d);
    for (long c = 0; c < d; ++c) b(c) = rng.Uniform(-0.1, 0.1);
    const Mat &prev = stack.layers.back();
    Mat next = ((prev * w).rowwise() + b.transpose())
                   .unaryExpr([](double x) { return std::tanh(x); });
    stack.layers.push_back(std::move(next));
  }
  return stack;
}

namespace {

void WriteStackTo(std::ostream &os, const FeatureStack &stack) {
  stack.Validate();
  WriteBytes(os, kStackMagic, 4);
  WriteU32(os, kStackVersion);
  WriteU32(os, static_cast<uint32_t>(stack.K()));
  WriteU32(os, static_cast<uint32_t>(stack.T()));
  WriteU32(os, static_cast<uint32_t>(stack.D()));
  WriteF32(os, static_cast<float>(stack.frame_rate));
  for (const Mat &layer : stack.layers) {
    for (long t = 0; t < layer.rows(); ++t) {
      for (long d = 0; d < layer.cols(); ++d) {
        WriteF32(os, static_cast<float>(layer(t, d)));
      }
    }
  }
}

FeatureStack ReadStackFrom(std::istream &is, const std::string &what) {
  uint32_t k, t, d;
  float frame_rate;
  try {
    char magic[4];
    ReadBytes(is, magic, 4, "stack magic");
    if (std::memcmp(magic, kStackMagic, 4) != 0) {
      throw FormatError("bad magic");
    }
    uint32_t version = ReadU32(is, "stack version");
    if (version != kStackVersion) {
      throw FormatError(Strprintf("unsupported version %u", version));
    }
    k = ReadU32(is, "stack K");
    t = ReadU32(is, "stack T");
    d = ReadU32(is, "stack D");
    frame_rate = ReadF32(is, "stack frame_rate");
  } catch (const FormatError &e) {
    throw FormatError("malformed stack header in " + what + ": " + e.what());
  }
  if (k < 1 || t < 1 || d < 1 || k > 1u << 16 || t > 1u << 28 ||
      d > 1u << 20) {
    throw FormatError(
        Strprintf("stack dimension mismatch in %s: K=%u T=%u D=%u",
                  what.c_str(), k, t, d));
  }

  FeatureStack stack;
  stack.frame_rate = frame_rate;
  for (uint32_t i = 0; i < k; ++i) {
    Mat layer(t, d);
    for (uint32_t r = 0; r < t; ++r) {
      for (uint32_t c = 0; c < d; ++c) {
        layer(r, c) = ReadF32(is, "stack payload of " + what);
      }
    }
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

}  // namespace

void WriteStack(const std::string &path, const FeatureStack &stack) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  WriteStackTo(os, stack);
}

FeatureStack ReadStack(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open stack file " + path);
  return ReadStackFrom(is, path);
}

struct StackArchiveWriter::Impl {
  std::ofstream archive;
  std::string index_path;
  std::string index_content;
  bool closed = false;
};

StackArchiveWriter::StackArchiveWriter(const std::string &archive_path,
                                       const std::string &index_path)
    : impl_(new Impl) {
  impl_->archive.open(archive_path, std::ios::binary);
  if (!impl_->archive) {
    delete impl_;
    throw DataError("cannot open " + archive_path + " for writing");
  }
  impl_->index_path = index_path;
}

StackArchiveWriter::~StackArchiveWriter() {
  try {
    Close();
  } catch (...) {
  }
  delete impl_;
}

void StackArchiveWriter::Add(const std::string &utt_id,
                             const FeatureStack &stack) {
  if (impl_->closed) throw UsageError("StackArchiveWriter already closed");
  uint64_t offset = static_cast<uint64_t>(impl_->archive.tellp());
  WriteStackTo(impl_->archive, stack);
  impl_->index_content += utt_id + "\t" + std::to_string(offset) + "\n";
}

void StackArchiveWriter::Close() {
  if (impl_->closed) return;
  impl_->archive.close();
  WriteFile(impl_->index_path, impl_->index_content);
  impl_->closed = true;
}

StackArchiveReader::StackArchiveReader(const std::string &archive_path,
                                       const std::string &index_path)
    : archive_path_(archive_path) {
  for (const std::string &line : ReadLines(index_path)) {
    if (line.empty()) continue;
    std::vector<std::string> fields = SplitString(line, '\t');
    if (fields.size() != 2) {
      throw FormatError("bad stack index line: " + line);
    }
    offsets_[fields[0]] = std::stoull(fields[1]);
  }
}

FeatureStack StackArchiveReader::Read(const std::string &utt_id) const {
  auto it = offsets_.find(utt_id);
  if (it == offsets_.end()) {
    throw DataError("utterance '" + utt_id + "' not in stack archive");
  }
  std::ifstream is(archive_path_, std::ios::binary);
  if (!is) throw DataError("cannot open stack archive " + archive_path_);
  is.seekg(static_cast<std::streamoff>(it->second));
  return ReadStackFrom(is, archive_path_ + ":" + utt_id);
}

std::vector<std::string> StackArchiveReader::Ids() const {
  std::vector<std::string> ids;
  for (const auto &kv : offsets_) ids.push_back(kv.first);
  return ids;
}

FeatureNormalizer FeatureNormalizer::Fit(
    const std::vector<const FeatureStack *> &train) {
  if (train.empty()) throw DataError("cannot fit normalizer on empty split");
  int k = train[0]->K();
  long d = train[0]->D();
  FeatureNormalizer norm;
  for (int i = 0; i < k; ++i) {
    Vec sum = Vec::Zero(d), sumsq = Vec::Zero(d);
    long n = 0;
    for (const FeatureStack *stack : train) {
      if (stack->K() != k || stack->D() != d) {
        throw DataError("normalizer: stacks disagree in K or D");
      }
      const Mat &layer = stack->layers[static_cast<size_t>(i)];
      sum += layer.colwise().sum().transpose();
      sumsq += layer.array().square().matrix().colwise().sum().transpose();
      n += layer.rows();
    }
    Vec mean = sum / static_cast<double>(n);
    Vec var = sumsq / static_cast<double>(n) - mean.array().square().matrix();
    norm.mean.push_back(mean);
    norm.inv_std.push_back(
        (var.array().max(0.0) + 1e-8).sqrt().inverse().matrix());
  }
  return norm;
}

FeatureStack FeatureNormalizer::Apply(const FeatureStack &stack) const {
  if (static_cast<size_t>(stack.K()) != mean.size()) {
    throw DataError("normalizer layer count does not match stack");
  }
  FeatureStack out = stack;
  for (size_t i = 0; i < out.layers.size(); ++i) {
    out.layers[i] =
        ((out.layers[i].rowwise() - mean[i].transpose()).array().rowwise() *
         inv_std[i].transpose().array())
            .matrix();
  }
  return out;
}

}  // namespace features
}  // namespace lyrec

// lyrec/corpus.h
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

#ifndef LYREC_CORPUS_H_
#define LYREC_CORPUS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lyrec/audio.h"

namespace lyrec {
namespace corpus {

// Text normalization applied to every transcript before tokenization:
// ASCII lowercase; apostrophes kept only between alphanumerics; any other
// punctuation (and non-ASCII bytes) becomes a space; whitespace collapsed
// and trimmed. Idempotent.
std::string NormalizeText(const std::string &raw);

enum class TokenUnit { kChar, kWord };

// Token-to-id bijection with five reserved ids up front.
class Vocabulary {
 public:
  static constexpr int kBlankId = 0;
  static constexpr int kSosId = 1;
  static constexpr int kEosId = 2;
  static constexpr int kUnkId = 3;
  static constexpr int kPadId = 4;
  static constexpr int kNumReserved = 5;

  Vocabulary() = default;
  // Units must be distinct, nonempty, and not collide with the reserved
  // token spellings.
  explicit Vocabulary(std::vector<std::string> units, TokenUnit unit);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  TokenUnit unit() const { return unit_; }
  const std::string &TokenOf(int id) const;
  // Unknown units map to kUnkId.
  int IdOf(const std::string &token) const;
  bool Contains(const std::string &token) const;

  // Normalizes, then splits into units. Char mode keeps spaces as tokens;
  // word mode splits on spaces.
  std::vector<int> Tokenize(const std::string &raw) const;
  std::string Detokenize(const std::vector<int> &ids) const;

  // One token per line; the first five lines are the reserved tokens.
  // A space token is stored escaped as "<space>".
  void Save(const std::string &path) const;
  static Vocabulary Load(const std::string &path);

  bool operator==(const Vocabulary &other) const;

 private:
  std::vector<std::string> id_to_token_;
  std::map<std::string, int> token_to_id_;
  TokenUnit unit_ = TokenUnit::kChar;
};

struct ManifestEntry {
  std::string id;
  std::string audio_path;
  std::string raw_transcript;
  std::string split;  // train / dev / test

  bool operator==(const ManifestEntry &other) const = default;
};

// Utterance list backing every pipeline stage. Immutable once built.
struct Manifest {
  std::vector<ManifestEntry> entries;
  int sample_rate = 16000;

  std::vector<const ManifestEntry *> Split(const std::string &split) const;
  const ManifestEntry *Find(const std::string &id) const;

  // Checks id uniqueness and (optionally) that audio paths resolve.
  void Validate(bool check_audio_exists) const;

  // Tab-separated `id  audio_path  raw_transcript  split`, one per line.
  // The first line is a `#sample_rate <hz>` header.
  void Save(const std::string &path) const;
  static Manifest Load(const std::string &path);

  bool operator==(const Manifest &other) const = default;
};

// Builds a vocabulary from the train-split transcripts (sorted units plus
// reserved tokens). Throws DataError if any train transcript normalizes
// to the empty string.
Vocabulary BuildVocabulary(const Manifest &manifest, TokenUnit unit);

struct MixSpec {
  AudioSegment music;
  double target_snr_db = 0.0;  // 10*log10(P_voice / P_scaled_music)
  uint64_t seed = 0;           // reserved for randomized music offsets
};

struct MixResult {
  AudioSegment mixed;
  double music_gain = 0.0;   // g applied to the music before summing
  double joint_scale = 1.0;  // <1 only when peak protection triggered
};

// voice + g*music at the requested SNR. Music is looped or truncated to
// the voice length; the voice is never altered. If the sum would clip,
// both components are scaled down together and the scale is reported.
MixResult MixBackground(const AudioSegment &voice, const MixSpec &spec);

struct SynthConfig {
  int n_utts = 8;
  int vocab_size = 5;  // distinct letters; space is added on top
  uint64_t seed = 0;
  int sample_rate = 16000;
  int samples_per_token = 1600;
  int min_words = 2;
  int max_words = 4;
  int min_word_len = 1;
  int max_word_len = 3;
  double tone_amplitude = 0.30;
  double noise_amplitude = 0.01;
  // Repetitive mode draws each utterance from a small pool of template
  // sentences instead of fully random text (lyrics-like chorus structure).
  bool repetitive = false;
  int n_templates = 4;
  // Fraction of utterances per split; remainder goes to train.
  double dev_fraction = 0.0;
  double test_fraction = 0.0;
};

struct SynthResult {
  Manifest manifest;
  std::vector<AudioSegment> audio;  // parallel to manifest.entries
};

// Deterministic synthetic corpus: every character has a fixed sinusoid
// signature (space maps to silence), utterance audio is the concatenation
// of per-token signatures plus low-amplitude seeded noise. The same
// config yields a bit-identical corpus.
SynthResult GenerateSyntheticCorpus(const SynthConfig &cfg);

// Waveform signature of one character under this config; `token` must be
// a single lowercase letter or " ".
std::vector<double> TokenSignature(const SynthConfig &cfg, char token);

// Writes wavs into `dir` and a manifest alongside; returns manifest path.
std::string SaveSyntheticCorpus(const SynthResult &synth,
                                const std::string &dir);

}  // namespace corpus
}  // namespace lyrec

#endif  // LYREC_CORPUS_H_

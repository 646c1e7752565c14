// lyrec/corpus.cc
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

#include "lyrec/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "lyrec/common.h"
#include "lyrec/io.h"

namespace lyrec {
namespace corpus {

namespace {

bool IsAlnumLower(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

char FoldAscii(char c) {
  if (c >= 'A' && c <= 'Z') return static_cast<char>(c - 'A' + 'a');
  return c;
}

const char *const kReservedTokens[] = {"<blank>", "<sos>", "<eos>", "<unk>",
                                       "<pad>"};
constexpr const char *kSpaceEscape = "<space>";

}  // namespace

std::string NormalizeText(const std::string &raw) {
  std::string out;
  out.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    char c = FoldAscii(raw[i]);
    if (IsAlnumLower(c)) {
      out += c;
      continue;
    }
    if (c == '\'') {
      char next = (i + 1 < raw.size()) ? FoldAscii(raw[i + 1]) : '\0';
      if (!out.empty() && IsAlnumLower(out.back()) && IsAlnumLower(next)) {
        out += '\'';
        continue;
      }
    }
    // Everything else (whitespace, punctuation, non-ASCII bytes) separates.
    if (!out.empty() && out.back() != ' ') out += ' ';
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> units, TokenUnit unit)
    : unit_(unit) {
  for (const char *t : kReservedTokens) {
    token_to_id_[t] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(t);
  }
  for (const std::string &u : units) {
    if (u.empty()) throw DataError("vocabulary unit may not be empty");
    if (u == kSpaceEscape) {
      throw DataError("vocabulary unit collides with the space escape");
    }
    if (!token_to_id_.emplace(u, static_cast<int>(id_to_token_.size()))
             .second) {
      throw DataError("duplicate vocabulary unit '" + u + "'");
    }
    id_to_token_.push_back(u);
  }
}

const std::string &Vocabulary::TokenOf(int id) const {
  if (id < 0 || id >= size()) {
    throw DataError(Strprintf("token id %d outside vocabulary of size %d", id,
                              size()));
  }
  return id_to_token_[static_cast<size_t>(id)];
}

int Vocabulary::IdOf(const std::string &token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::Contains(const std::string &token) const {
  return token_to_id_.count(token) > 0;
}

std::vector<int> Vocabulary::Tokenize(const std::string &raw) const {
  std::string norm = NormalizeText(raw);
  std::vector<int> ids;
  if (unit_ == TokenUnit::kChar) {
    ids.reserve(norm.size());
    for (char c : norm) ids.push_back(IdOf(std::string(1, c)));
  } else {
    if (norm.empty()) return ids;
    for (const std::string &w : SplitString(norm, ' ')) ids.push_back(IdOf(w));
  }
  return ids;
}

std::string Vocabulary::Detokenize(const std::vector<int> &ids) const {
  std::vector<std::string> parts;
  for (int id : ids) {
    if (id < kNumReserved) continue;  // strip sos/eos/etc.
    parts.push_back(TokenOf(id));
  }
  return unit_ == TokenUnit::kChar ? JoinStrings(parts, "")
                                   : JoinStrings(parts, " ");
}

void Vocabulary::Save(const std::string &path) const {
  std::string content;
  content += std::string("#unit ") +
             (unit_ == TokenUnit::kChar ? "char" : "word") + "\n";
  for (const std::string &tok : id_to_token_) {
    content += (tok == " " ? kSpaceEscape : tok);
    content += '\n';
  }
  WriteFile(path, content);
}

Vocabulary Vocabulary::Load(const std::string &path) {
  std::vector<std::string> lines = ReadLines(path);
  if (lines.empty() || lines[0].rfind("#unit ", 0) != 0) {
    throw FormatError("vocabulary file missing #unit header: " + path);
  }
  std::string unit_name = lines[0].substr(6);
  TokenUnit unit;
  if (unit_name == "char") {
    unit = TokenUnit::kChar;
  } else if (unit_name == "word") {
    unit = TokenUnit::kWord;
  } else {
    throw FormatError("unknown token unit '" + unit_name + "' in " + path);
  }
  if (lines.size() < 1 + kNumReserved) {
    throw FormatError("vocabulary file shorter than the reserved block: " +
                      path);
  }
  for (int i = 0; i < kNumReserved; ++i) {
    if (lines[1 + i] != kReservedTokens[i]) {
      throw FormatError(Strprintf("reserved token line %d is '%s', want '%s'",
                                  i, lines[1 + i].c_str(),
                                  kReservedTokens[i]));
    }
  }
  std::vector<std::string> units;
  for (size_t i = 1 + kNumReserved; i < lines.size(); ++i) {
    units.push_back(lines[i] == kSpaceEscape ? " " : lines[i]);
  }
  return Vocabulary(std::move(units), unit);
}

bool Vocabulary::operator==(const Vocabulary &other) const {
  return unit_ == other.unit_ && id_to_token_ == other.id_to_token_;
}

std::vector<const ManifestEntry *> Manifest::Split(
    const std::string &split) const {
  std::vector<const ManifestEntry *> out;
  for (const ManifestEntry &e : entries) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

const ManifestEntry *Manifest::Find(const std::string &id) const {
  for (const ManifestEntry &e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

void Manifest::Validate(bool check_audio_exists) const {
  if (sample_rate <= 0) throw DataError("manifest sample_rate must be > 0");
  std::set<std::string> seen;
  for (const ManifestEntry &e : entries) {
    if (!seen.insert(e.id).second) {
      throw DataError("duplicate utterance id '" + e.id + "'");
    }
    if (e.split != "train" && e.split != "dev" && e.split != "test") {
      throw DataError("utterance '" + e.id + "' has unknown split '" +
                      e.split + "'");
    }
    if (check_audio_exists && !std::filesystem::exists(e.audio_path)) {
      throw DataError("audio locator not resolvable: " + e.audio_path);
    }
  }
}

namespace {

void CheckField(const std::string &value, const std::string &what) {
  if (value.find('\t') != std::string::npos ||
      value.find('\n') != std::string::npos) {
    throw DataError(what + " may not contain tabs or newlines: '" + value +
                    "'");
  }
}

}  // namespace

void Manifest::Save(const std::string &path) const {
  std::string content = Strprintf("#sample_rate %d\n", sample_rate);
  for (const ManifestEntry &e : entries) {
    CheckField(e.id, "utterance id");
    CheckField(e.audio_path, "audio path");
    CheckField(e.raw_transcript, "transcript");
    CheckField(e.split, "split");
    content += e.id + "\t" + e.audio_path + "\t" + e.raw_transcript + "\t" +
               e.split + "\n";
  }
  WriteFile(path, content);
}

Manifest Manifest::Load(const std::string &path) {
  std::vector<std::string> lines = ReadLines(path);
  if (lines.empty() || lines[0].rfind("#sample_rate ", 0) != 0) {
    throw FormatError("manifest missing #sample_rate header: " + path);
  }
  Manifest m;
  try {
    m.sample_rate = std::stoi(lines[0].substr(13));
  } catch (const std::exception &) {
    throw FormatError("bad sample rate in manifest header: " + path);
  }
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> fields = SplitString(lines[i], '\t');
    if (fields.size() != 4) {
      throw FormatError(Strprintf("manifest line %zu has %zu fields, want 4",
                                  i + 1, fields.size()));
    }
    m.entries.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  return m;
}

Vocabulary BuildVocabulary(const Manifest &manifest, TokenUnit unit) {
  std::vector<const ManifestEntry *> train = manifest.Split("train");
  if (train.empty()) throw DataError("manifest has no train split");
  std::set<std::string> units;
  for (const ManifestEntry *e : train) {
    std::string norm = NormalizeText(e->raw_transcript);
    if (norm.empty()) {
      throw DataError("transcript of '" + e->id +
                      "' is empty after normalization");
    }
    if (unit == TokenUnit::kChar) {
      for (char c : norm) units.insert(std::string(1, c));
    } else {
      for (const std::string &w : SplitString(norm, ' ')) units.insert(w);
    }
  }
  // std::set iteration order is already the sorted, deterministic order.
  return Vocabulary(std::vector<std::string>(units.begin(), units.end()),
                    unit);
}

MixResult MixBackground(const AudioSegment &voice, const MixSpec &spec) {
  voice.Validate();
  spec.music.Validate();
  if (!std::isfinite(spec.target_snr_db)) {
    throw DataError("target_snr_db must be finite");
  }
  if (voice.sample_rate != spec.music.sample_rate) {
    throw DataError(Strprintf("sample rate mismatch: voice %d vs music %d",
                              voice.sample_rate, spec.music.sample_rate));
  }

  // Loop or truncate the music to the voice length; the voice is fixed.
  size_t n = voice.samples.size();
  std::vector<double> music(n);
  for (size_t i = 0; i < n; ++i) {
    music[i] = spec.music.samples[i % spec.music.samples.size()];
  }

  double p_music = 0.0, p_voice = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p_music += music[i] * music[i];
    p_voice += voice.samples[i] * voice.samples[i];
  }
  p_music /= static_cast<double>(n);
  p_voice /= static_cast<double>(n);
  if (p_music <= 0.0) {
    throw DataError("music segment has zero power; cannot set an SNR");
  }
  if (p_voice <= 0.0) {
    throw DataError("voice segment has zero power; SNR undefined");
  }

  double gain =
      std::sqrt(p_voice / (p_music * std::pow(10.0, spec.target_snr_db / 10.0)));

  MixResult out;
  out.music_gain = gain;
  out.mixed.sample_rate = voice.sample_rate;
  out.mixed.id = voice.id + "#mix";
  out.mixed.samples.resize(n);
  double peak = 0.0;
  for (size_t i = 0; i < n; ++i) {
    out.mixed.samples[i] = voice.samples[i] + gain * music[i];
    peak = std::max(peak, std::fabs(out.mixed.samples[i]));
  }
  if (peak > 1.0) {
    out.joint_scale = 1.0 / peak;
    for (double &s : out.mixed.samples) s *= out.joint_scale;
  }
  return out;
}

namespace {

double TokenFrequencyHz(char token) {
  // Letter tones spaced widely enough that neighbouring letters land in
  // different mel bands at 16 kHz.
  return 400.0 + 240.0 * (token - 'a');
}

std::string RandomSentence(const SynthConfig &cfg, Rng *rng) {
  int n_words = static_cast<int>(rng->UniformInt(cfg.min_words, cfg.max_words));
  std::vector<std::string> words;
  for (int w = 0; w < n_words; ++w) {
    int len =
        static_cast<int>(rng->UniformInt(cfg.min_word_len, cfg.max_word_len));
    std::string word;
    for (int k = 0; k < len; ++k) {
      word += static_cast<char>('a' + rng->UniformInt(0, cfg.vocab_size - 1));
    }
    words.push_back(word);
  }
  return JoinStrings(words, " ");
}

}  // namespace

std::vector<double> TokenSignature(const SynthConfig &cfg, char token) {
  std::vector<double> sig(static_cast<size_t>(cfg.samples_per_token), 0.0);
  if (token == ' ') return sig;  // silence
  if (token < 'a' || token >= 'a' + cfg.vocab_size) {
    throw DataError(Strprintf("token '%c' outside synthetic alphabet", token));
  }
  double f = TokenFrequencyHz(token);
  for (int i = 0; i < cfg.samples_per_token; ++i) {
    double t = static_cast<double>(i) / cfg.sample_rate;
    sig[static_cast<size_t>(i)] =
        cfg.tone_amplitude * std::sin(2.0 * M_PI * f * t);
  }
  return sig;
}

SynthResult GenerateSyntheticCorpus(const SynthConfig &cfg) {
  if (cfg.n_utts < 1) throw DataError("n_utts must be >= 1");
  if (cfg.vocab_size < 2 || cfg.vocab_size > 26) {
    throw DataError("vocab_size must be in [2, 26]");
  }

  Rng text_rng(MixSeed(cfg.seed, 0x7e87));
  std::vector<std::string> templates;
  if (cfg.repetitive) {
    for (int i = 0; i < cfg.n_templates; ++i) {
      templates.push_back(RandomSentence(cfg, &text_rng));
    }
  }

  int n_test = static_cast<int>(cfg.test_fraction * cfg.n_utts);
  int n_dev = static_cast<int>(cfg.dev_fraction * cfg.n_utts);

  SynthResult out;
  out.manifest.sample_rate = cfg.sample_rate;
  for (int u = 0; u < cfg.n_utts; ++u) {
    std::string text = cfg.repetitive
                           ? templates[static_cast<size_t>(text_rng.UniformInt(
                                 0, cfg.n_templates - 1))]
                           : RandomSentence(cfg, &text_rng);

    AudioSegment seg;
    seg.id = Strprintf("utt%04d", u);
    seg.sample_rate = cfg.sample_rate;
    seg.samples.reserve(text.size() *
                        static_cast<size_t>(cfg.samples_per_token));
    for (char c : text) {
      std::vector<double> sig = TokenSignature(cfg, c);
      seg.samples.insert(seg.samples.end(), sig.begin(), sig.end());
    }
    Rng noise_rng(MixSeed(cfg.seed, 0x5a5a + static_cast<uint64_t>(u)));
    for (double &s : seg.samples) {
      s += cfg.noise_amplitude * noise_rng.Normal();
    }
    QuantizeToInt16Grid(&seg);

    std::string split = "train";
    if (u >= cfg.n_utts - n_test) {
      split = "test";
    } else if (u >= cfg.n_utts - n_test - n_dev) {
      split = "dev";
    }
    out.manifest.entries.push_back({seg.id, seg.id + ".wav", text, split});
    out.audio.push_back(std::move(seg));
  }
  return out;
}

std::string SaveSyntheticCorpus(const SynthResult &synth,
                                const std::string &dir) {
  std::filesystem::create_directories(dir);
  Manifest manifest = synth.manifest;
  for (size_t i = 0; i < synth.audio.size(); ++i) {
    std::string wav_path =
        (std::filesystem::path(dir) / (synth.audio[i].id + ".wav")).string();
    WriteWav(wav_path, synth.audio[i]);
    manifest.entries[i].audio_path = wav_path;
  }
  std::string manifest_path =
      (std::filesystem::path(dir) / "manifest.tsv").string();
  manifest.Save(manifest_path);
  return manifest_path;
}

}  // namespace corpus
}  // namespace lyrec

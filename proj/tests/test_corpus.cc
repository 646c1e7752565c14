// tests/test_corpus.cc
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "lyrec/audio.h"
#include "lyrec/common.h"
#include "lyrec/corpus.h"
#include "lyrec/io.h"

using namespace lyrec;
using namespace lyrec::corpus;

namespace {

std::string TempDir(const std::string &tag) {
  auto dir = std::filesystem::temp_directory_path() / ("lyrec_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

// Random printable-ish string incl. punctuation and some high bytes.
std::string RandomRawString(Rng *rng) {
  static const char pool[] =
      "abcXYZ 012,.!?'\t\n\"-_;:()ü€~@#$%^&*";
  int len = static_cast<int>(rng->UniformInt(0, 40));
  std::string s;
  for (int i = 0; i < len; ++i) {
    s += pool[rng->UniformInt(0, sizeof(pool) - 2)];
  }
  return s;
}

}  // namespace

TEST_CASE("NormalizeText basic rules") {
  CHECK(NormalizeText("Hello,  WORLD!") == "hello world");
  CHECK(NormalizeText("don't  stop") == "don't stop");
  CHECK(NormalizeText("") == "");
  CHECK(NormalizeText("  \t ") == "");
  CHECK(NormalizeText("'ello 'ello'") == "ello ello");
  CHECK(NormalizeText("rock'n'roll") == "rock'n'roll");
  CHECK(NormalizeText("A--B") == "a b");
  CHECK(NormalizeText("x ' y") == "x y");
}

TEST_CASE("NormalizeText idempotent on random strings") {
  Rng rng(123);
  for (int i = 0; i < 1000; ++i) {
    std::string raw = RandomRawString(&rng);
    std::string once = NormalizeText(raw);
    CHECK(NormalizeText(once) == once);
  }
}

TEST_CASE("Vocabulary construction and round trip") {
  Manifest m;
  m.entries = {{"u1", "a.wav", "ab", "train"}, {"u2", "b.wav", "ba", "train"}};
  Vocabulary vocab = BuildVocabulary(m, TokenUnit::kChar);
  CHECK(vocab.size() == 7);  // {a, b} + 5 reserved
  CHECK(vocab.IdOf("a") >= Vocabulary::kNumReserved);

  Vocabulary again = BuildVocabulary(m, TokenUnit::kChar);
  CHECK(vocab == again);

  Manifest words;
  words.entries = {{"u1", "a.wav", "la la", "train"},
                   {"u2", "b.wav", "da", "train"}};
  Vocabulary wv = BuildVocabulary(words, TokenUnit::kWord);
  CHECK(wv.size() == 7);  // {la, da} + reserved
  CHECK(wv.Contains("la"));
  CHECK(wv.Contains("da"));

  std::string dir = TempDir("vocab");
  std::string path = dir + "/vocab.txt";
  vocab.Save(path);
  Vocabulary loaded = Vocabulary::Load(path);
  CHECK(loaded == vocab);
}

TEST_CASE("Vocabulary tokenize round trip equals normalized text") {
  Manifest m;
  m.entries = {{"u1", "a.wav", "hey you, don't go", "train"}};
  Vocabulary vocab = BuildVocabulary(m, TokenUnit::kChar);
  std::string norm = NormalizeText("Hey YOU, don't GO");
  CHECK(vocab.Detokenize(vocab.Tokenize("Hey YOU, don't GO")) == norm);
}

TEST_CASE("Vocabulary maps unseen units to unk") {
  Vocabulary v({"a", "b"}, TokenUnit::kChar);
  auto ids = v.Tokenize("abz");
  CHECK(ids.size() == 3);
  CHECK(ids[2] == Vocabulary::kUnkId);
}

TEST_CASE("BuildVocabulary rejects empty transcripts") {
  Manifest m;
  m.entries = {{"u1", "a.wav", "!!!", "train"}};
  CHECK_THROWS_AS(BuildVocabulary(m, TokenUnit::kChar), DataError);
}

TEST_CASE("Manifest save/load round trip and validation") {
  std::string dir = TempDir("manifest");
  Manifest m;
  m.sample_rate = 8000;
  m.entries = {{"u1", dir + "/u1.wav", "la la", "train"},
               {"u2", dir + "/u2.wav", "di da", "test"}};
  std::string path = dir + "/manifest.tsv";
  m.Save(path);
  Manifest loaded = Manifest::Load(path);
  CHECK(loaded == m);

  // Duplicate ids rejected.
  Manifest dup = m;
  dup.entries.push_back(dup.entries[0]);
  CHECK_THROWS_AS(dup.Validate(false), DataError);

  // Unresolvable audio rejected when asked to check.
  CHECK_THROWS_AS(m.Validate(true), DataError);
}

TEST_CASE("Manifest load rejects malformed files") {
  std::string dir = TempDir("manifest_bad");
  WriteFile(dir + "/no_header.tsv", "u1\ta.wav\thi\ttrain\n");
  CHECK_THROWS_AS(Manifest::Load(dir + "/no_header.tsv"), FormatError);
  WriteFile(dir + "/short.tsv", "#sample_rate 16000\nu1\ta.wav\thi\n");
  CHECK_THROWS_AS(Manifest::Load(dir + "/short.tsv"), FormatError);
}

TEST_CASE("Wav write/read round trip on the int16 grid") {
  std::string dir = TempDir("wav");
  AudioSegment seg;
  seg.id = "tone";
  seg.sample_rate = 16000;
  Rng rng(7);
  seg.samples.resize(1000);
  for (double &s : seg.samples) s = rng.Uniform(-0.9, 0.9);
  QuantizeToInt16Grid(&seg);

  std::string path = dir + "/tone.wav";
  WriteWav(path, seg);
  AudioSegment back = ReadWav(path, "tone");
  REQUIRE(back.samples.size() == seg.samples.size());
  CHECK(back.sample_rate == 16000);
  for (size_t i = 0; i < seg.samples.size(); ++i) {
    CHECK(back.samples[i] == seg.samples[i]);
  }
}

TEST_CASE("ReadWav rejects non-wav input") {
  std::string dir = TempDir("wav_bad");
  WriteFile(dir + "/x.wav", "definitely not a riff file");
  CHECK_THROWS_AS(ReadWav(dir + "/x.wav"), FormatError);
}

TEST_CASE("MixBackground hits the target SNR") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    AudioSegment voice;
    voice.id = "v";
    voice.sample_rate = 16000;
    voice.samples.resize(4000);
    for (double &s : voice.samples) s = 0.3 * rng.Normal();

    MixSpec spec;
    spec.music.id = "m";
    spec.music.sample_rate = 16000;
    spec.music.samples.resize(2500);  // forces looping
    for (double &s : spec.music.samples) s = 0.2 * rng.Normal();
    spec.target_snr_db = rng.Uniform(-10.0, 20.0);

    MixResult res = MixBackground(voice, spec);
    REQUIRE(res.mixed.samples.size() == voice.samples.size());

    // Re-measure the SNR from the two components of the mix.
    double p_voice = 0.0, p_music = 0.0;
    for (size_t i = 0; i < voice.samples.size(); ++i) {
      double v = res.joint_scale * voice.samples[i];
      double m = res.joint_scale * res.music_gain *
                 spec.music.samples[i % spec.music.samples.size()];
      p_voice += v * v;
      p_music += m * m;
    }
    double measured = 10.0 * std::log10(p_voice / p_music);
    CHECK(std::fabs(measured - spec.target_snr_db) <= 0.5);
  }
}

TEST_CASE("MixBackground equal-power at 0 dB gives unit gain") {
  AudioSegment voice;
  voice.id = "v";
  voice.sample_rate = 16000;
  MixSpec spec;
  spec.music.id = "m";
  spec.music.sample_rate = 16000;
  for (int i = 0; i < 1000; ++i) {
    double s = 0.4 * std::sin(2.0 * M_PI * 440.0 * i / 16000.0);
    voice.samples.push_back(s);
    // Same power, different phase/frequency.
    spec.music.samples.push_back(0.4 *
                                 std::sin(2.0 * M_PI * 523.0 * i / 16000.0));
  }
  // Align powers exactly.
  double pv = voice.Power(), pm = spec.music.Power();
  for (double &s : spec.music.samples) s *= std::sqrt(pv / pm);
  spec.target_snr_db = 0.0;
  MixResult res = MixBackground(voice, spec);
  CHECK(res.music_gain == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("MixBackground recovers the voice by subtraction") {
  Rng rng(5);
  AudioSegment voice;
  voice.id = "v";
  voice.sample_rate = 16000;
  voice.samples.resize(2000);
  for (double &s : voice.samples) s = 0.2 * rng.Normal();
  MixSpec spec;
  spec.music.id = "m";
  spec.music.sample_rate = 16000;
  spec.music.samples.resize(2000);
  for (double &s : spec.music.samples) s = 0.1 * rng.Normal();
  spec.target_snr_db = 10.0;
  MixResult res = MixBackground(voice, spec);
  REQUIRE(res.joint_scale == 1.0);  // quiet enough not to clip
  for (size_t i = 0; i < voice.samples.size(); ++i) {
    double recovered =
        res.mixed.samples[i] - res.music_gain * spec.music.samples[i];
    CHECK(recovered == doctest::Approx(voice.samples[i]).epsilon(1e-12));
  }
}

TEST_CASE("MixBackground rejects silent music and rate mismatch") {
  AudioSegment voice;
  voice.id = "v";
  voice.sample_rate = 16000;
  voice.samples.assign(100, 0.1);
  MixSpec spec;
  spec.music.id = "m";
  spec.music.sample_rate = 16000;
  spec.music.samples.assign(100, 0.0);
  CHECK_THROWS_AS(MixBackground(voice, spec), DataError);
  spec.music.samples.assign(100, 0.2);
  spec.music.sample_rate = 8000;
  CHECK_THROWS_AS(MixBackground(voice, spec), DataError);
}

TEST_CASE("Synthetic corpus is seed-deterministic") {
  SynthConfig cfg;
  cfg.n_utts = 4;
  cfg.vocab_size = 3;
  cfg.seed = 7;
  SynthResult a = GenerateSyntheticCorpus(cfg);
  SynthResult b = GenerateSyntheticCorpus(cfg);
  REQUIRE(a.manifest.entries.size() == b.manifest.entries.size());
  CHECK(a.manifest == b.manifest);
  for (size_t i = 0; i < a.audio.size(); ++i) {
    REQUIRE(a.audio[i].samples.size() == b.audio[i].samples.size());
    CHECK(a.audio[i].samples == b.audio[i].samples);
  }

  SynthConfig other = cfg;
  other.seed = 8;
  SynthResult c = GenerateSyntheticCorpus(other);
  bool any_differs = false;
  for (const auto &e : c.manifest.entries) {
    if (a.manifest.Find(e.id) != nullptr &&
        a.manifest.Find(e.id)->raw_transcript != e.raw_transcript) {
      any_differs = true;
    }
  }
  CHECK(any_differs);
}

TEST_CASE("Synthetic token signatures are pairwise distinct") {
  SynthConfig cfg;
  cfg.vocab_size = 8;
  double max_corr = 0.0;
  for (char a = 'a'; a < 'a' + cfg.vocab_size; ++a) {
    for (char b = static_cast<char>(a + 1); b < 'a' + cfg.vocab_size; ++b) {
      auto sa = TokenSignature(cfg, a);
      auto sb = TokenSignature(cfg, b);
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (size_t i = 0; i < sa.size(); ++i) {
        dot += sa[i] * sb[i];
        na += sa[i] * sa[i];
        nb += sb[i] * sb[i];
      }
      double corr = std::fabs(dot) / std::sqrt(na * nb);
      max_corr = std::max(max_corr, corr);
    }
  }
  CHECK(max_corr < 0.5);
}

TEST_CASE("Synthetic durations are tokens times per-token length") {
  SynthConfig cfg;
  cfg.n_utts = 6;
  cfg.vocab_size = 4;
  cfg.seed = 3;
  SynthResult res = GenerateSyntheticCorpus(cfg);
  for (size_t i = 0; i < res.audio.size(); ++i) {
    size_t n_tokens = res.manifest.entries[i].raw_transcript.size();
    CHECK(res.audio[i].samples.size() ==
          n_tokens * static_cast<size_t>(cfg.samples_per_token));
  }
}

TEST_CASE("Synthetic corpus saves and reloads") {
  std::string dir = TempDir("synth");
  SynthConfig cfg;
  cfg.n_utts = 3;
  cfg.vocab_size = 3;
  cfg.seed = 11;
  SynthResult res = GenerateSyntheticCorpus(cfg);
  std::string manifest_path = SaveSyntheticCorpus(res, dir);
  Manifest loaded = Manifest::Load(manifest_path);
  loaded.Validate(true);
  REQUIRE(loaded.entries.size() == 3);
  AudioSegment wav = ReadWav(loaded.entries[0].audio_path, "utt0000");
  CHECK(wav.samples == res.audio[0].samples);
}

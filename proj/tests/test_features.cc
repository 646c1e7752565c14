// tests/test_features.cc
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
#include <filesystem>
#include <fstream>

#include "lyrec/common.h"
#include "lyrec/features.h"
#include "lyrec/fft.h"
#include "lyrec/io.h"

using namespace lyrec;
using namespace lyrec::features;

namespace {

std::string TempDir(const std::string &tag) {
  auto dir = std::filesystem::temp_directory_path() / ("lyrec_feat_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

corpus::AudioSegment Tone(double freq_hz, int n, int rate = 16000) {
  corpus::AudioSegment seg;
  seg.id = "tone";
  seg.sample_rate = rate;
  seg.samples.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    seg.samples[static_cast<size_t>(i)] =
        0.5 * std::sin(2.0 * M_PI * freq_hz * i / rate);
  }
  return seg;
}

FeatureStack RandomStack(int k, int t, int d, uint64_t seed) {
  Rng rng(seed);
  FeatureStack stack;
  stack.frame_rate = 100.0;
  for (int i = 0; i < k; ++i) {
    Mat m(t, d);
    for (long r = 0; r < t; ++r) {
      for (long c = 0; c < d; ++c) m(r, c) = rng.Normal();
    }
    stack.layers.push_back(std::move(m));
  }
  return stack;
}

}  // namespace

TEST_CASE("Fft matches a naive DFT") {
  Rng rng(42);
  std::vector<double> frame(64);
  for (double &x : frame) x = rng.Normal();
  std::vector<double> power = RealPowerSpectrum(frame, 64);
  for (size_t k = 0; k <= 32; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t n = 0; n < 64; ++n) {
      double ang = -2.0 * M_PI * static_cast<double>(k * n) / 64.0;
      acc += frame[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    CHECK(power[k] == doctest::Approx(std::norm(acc)).epsilon(1e-9));
  }
}

TEST_CASE("MelSpectrogram frame count and shapes") {
  MelConfig cfg;
  cfg.n_mels = 40;
  corpus::AudioSegment seg = Tone(440.0, cfg.window_length);
  FeatureStack stack = MelSpectrogram(seg, cfg);
  CHECK(stack.K() == 1);
  CHECK(stack.T() == 1);  // len == window -> exactly one frame
  CHECK(stack.D() == 40);

  corpus::AudioSegment seg2 = Tone(440.0, cfg.window_length + 5 * cfg.hop_length + 3);
  FeatureStack stack2 = MelSpectrogram(seg2, cfg);
  CHECK(stack2.T() == 6);  // 1 + floor((len - window)/hop)
  CHECK(stack2.frame_rate == doctest::Approx(100.0));
}

TEST_CASE("MelSpectrogram rejects short audio") {
  MelConfig cfg;
  corpus::AudioSegment seg = Tone(440.0, cfg.window_length - 1);
  CHECK_THROWS_AS(MelSpectrogram(seg, cfg), DataError);
}

TEST_CASE("Pure tone at a band center peaks in that band") {
  MelConfig cfg;
  cfg.n_mels = 40;
  size_t n_fft = NextPowerOfTwo(static_cast<size_t>(cfg.window_length));
  MelFilterbank bank(cfg, 16000, n_fft);
  // Middle band; edge bands have near-DC or near-Nyquist centers.
  int band = 20;
  double freq = bank.CenterFrequencyHz(band);
  corpus::AudioSegment seg = Tone(freq, cfg.window_length + 10 * cfg.hop_length);
  FeatureStack stack = MelSpectrogram(seg, cfg);
  for (long t = 0; t < stack.T(); ++t) {
    long argmax = 0;
    stack.layers[0].row(t).maxCoeff(&argmax);
    CHECK(argmax == band);
  }
}

TEST_CASE("Silence maps to the log floor") {
  MelConfig cfg;
  corpus::AudioSegment seg;
  seg.id = "silence";
  seg.sample_rate = 16000;
  seg.samples.assign(static_cast<size_t>(cfg.window_length) + 400, 0.0);
  FeatureStack stack = MelSpectrogram(seg, cfg);
  double expect = std::log(cfg.log_floor);
  CHECK(stack.layers[0].minCoeff() == doctest::Approx(expect));
  CHECK(stack.layers[0].maxCoeff() == doctest::Approx(expect));
}

TEST_CASE("FusionWeights softmax is a convex combination") {
  FusionWeights w(4);
  Vec weights = w.Weights();
  CHECK(weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
  for (int i = 0; i < 4; ++i) CHECK(weights(i) == doctest::Approx(0.25));
}

TEST_CASE("FuseLayers identities") {
  FeatureStack one = RandomStack(1, 7, 5, 1);
  Mat fused = FuseLayers(one, FusionWeights(1));
  CHECK((fused - one.layers[0]).cwiseAbs().maxCoeff() == 0.0);

  FeatureStack three = RandomStack(3, 6, 4, 2);
  Mat avg = FuseLayers(three, FusionWeights(3));
  Mat expect =
      (three.layers[0] + three.layers[1] + three.layers[2]) / 3.0;
  CHECK((avg - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("FuseLayers hand-computed two-layer case") {
  // logits (ln 3, 0) -> weights (0.75, 0.25); ones and fives -> all 2.0.
  FeatureStack stack;
  stack.frame_rate = 100.0;
  stack.layers.push_back(Mat::Constant(3, 2, 1.0));
  stack.layers.push_back(Mat::Constant(3, 2, 5.0));
  Vec logits(2);
  logits << std::log(3.0), 0.0;
  Mat fused = FuseLayers(stack, FusionWeights(logits));
  for (long r = 0; r < 3; ++r) {
    for (long c = 0; c < 2; ++c) {
      CHECK(fused(r, c) == doctest::Approx(2.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("FuseLayers one-hot limit and homogeneity") {
  FeatureStack stack = RandomStack(3, 5, 4, 3);
  Vec logits = Vec::Zero(3);
  logits(1) = 20.0;
  Mat fused = FuseLayers(stack, FusionWeights(logits));
  double rel = (fused - stack.layers[1]).cwiseAbs().maxCoeff() /
               stack.layers[1].cwiseAbs().maxCoeff();
  CHECK(rel <= 1e-6);

  // Homogeneity: fusing c*layers == c*fused.
  FeatureStack scaled = stack;
  for (Mat &l : scaled.layers) l *= 2.5;
  Vec logits2(3);
  logits2 << 0.3, -0.2, 1.0;
  Mat a = FuseLayers(scaled, FusionWeights(logits2));
  Mat b = FuseLayers(stack, FusionWeights(logits2)) * 2.5;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("FuseLayers rejects K mismatch") {
  FeatureStack stack = RandomStack(3, 5, 4, 4);
  CHECK_THROWS_AS(FuseLayers(stack, FusionWeights(2)), DataError);
}

TEST_CASE("PseudoSslExtract is deterministic and layered") {
  MelConfig cfg;
  cfg.n_mels = 24;
  corpus::AudioSegment seg = Tone(700.0, cfg.window_length + 6 * cfg.hop_length);
  FeatureStack a = PseudoSslExtract(seg, cfg, 4, 99);
  FeatureStack b = PseudoSslExtract(seg, cfg, 4, 99);
  REQUIRE(a.K() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.layers[static_cast<size_t>(i)] ==
          b.layers[static_cast<size_t>(i)]);
    CHECK(a.layers[static_cast<size_t>(i)].rows() == a.T());
    CHECK(a.layers[static_cast<size_t>(i)].cols() == a.D());
  }

  FeatureStack mel = MelSpectrogram(seg, cfg);
  CHECK(a.layers[0] == mel.layers[0]);

  FeatureStack one = PseudoSslExtract(seg, cfg, 1, 99);
  CHECK(one.K() == 1);
  CHECK(one.layers[0] == mel.layers[0]);

  FeatureStack other = PseudoSslExtract(seg, cfg, 4, 100);
  CHECK(a.layers[1] != other.layers[1]);
}

TEST_CASE("Stack file round trip is exact") {
  std::string dir = TempDir("stack");
  FeatureStack stack = RandomStack(4, 7, 8, 5);
  // Float32 container: round the payload to float first so equality is exact.
  for (Mat &l : stack.layers) {
    l = l.unaryExpr([](double x) {
      return static_cast<double>(static_cast<float>(x));
    });
  }
  std::string path = dir + "/a.fstk";
  WriteStack(path, stack);
  FeatureStack back = ReadStack(path);
  REQUIRE(back.K() == 4);
  CHECK(back.frame_rate == doctest::Approx(100.0));
  for (int i = 0; i < 4; ++i) {
    CHECK(back.layers[static_cast<size_t>(i)] ==
          stack.layers[static_cast<size_t>(i)]);
  }
}

TEST_CASE("Stack reader distinguishes error kinds") {
  std::string dir = TempDir("stack_bad");

  // Zero-length file: malformed header.
  WriteFile(dir + "/empty.fstk", "");
  CHECK_THROWS_WITH_AS(ReadStack(dir + "/empty.fstk"),
                       doctest::Contains("malformed stack header"),
                       FormatError);

  // Wrong magic: malformed header.
  WriteFile(dir + "/magic.fstk", "NOPExxxxxxxxxxxxxxxxxxxxxxxx");
  CHECK_THROWS_WITH_AS(ReadStack(dir + "/magic.fstk"),
                       doctest::Contains("malformed stack header"),
                       FormatError);

  // Header advertising two layers with only one layer of payload.
  FeatureStack stack = RandomStack(2, 3, 4, 6);
  std::string path = dir + "/trunc.fstk";
  WriteStack(path, stack);
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3 * 4 * 4);  // drop layer 1
  CHECK_THROWS_WITH_AS(ReadStack(path), doctest::Contains("truncated"),
                       FormatError);

  // Absurd dimensions: dimension error.
  {
    std::ofstream os(dir + "/dims.fstk", std::ios::binary);
    os.write("FSTK", 4);
    WriteU32(os, 1);          // version
    WriteU32(os, 0);          // K = 0
    WriteU32(os, 3);
    WriteU32(os, 4);
    WriteF32(os, 100.0f);
  }
  CHECK_THROWS_WITH_AS(ReadStack(dir + "/dims.fstk"),
                       doctest::Contains("dimension"), FormatError);
}

TEST_CASE("Stack archive with sidecar index") {
  std::string dir = TempDir("archive");
  std::string archive = dir + "/feats.fstk";
  std::string index = dir + "/feats.idx";
  FeatureStack s1 = RandomStack(2, 4, 3, 7);
  FeatureStack s2 = RandomStack(2, 6, 3, 8);
  {
    StackArchiveWriter writer(archive, index);
    writer.Add("utt1", s1);
    writer.Add("utt2", s2);
    writer.Close();
  }
  StackArchiveReader reader(archive, index);
  CHECK(reader.Ids().size() == 2);
  FeatureStack r2 = reader.Read("utt2");
  CHECK(r2.T() == 6);
  FeatureStack r1 = reader.Read("utt1");
  CHECK(r1.T() == 4);
  CHECK_THROWS_AS(reader.Read("missing"), DataError);
}

TEST_CASE("FeatureNormalizer standardizes train statistics") {
  FeatureStack a = RandomStack(2, 50, 3, 9);
  FeatureStack b = RandomStack(2, 70, 3, 10);
  FeatureNormalizer norm = FeatureNormalizer::Fit({&a, &b});
  FeatureStack na = norm.Apply(a);
  FeatureStack nb = norm.Apply(b);
  for (int layer = 0; layer < 2; ++layer) {
    for (int dim = 0; dim < 3; ++dim) {
      double sum = na.layers[layer].col(dim).sum() +
                   nb.layers[layer].col(dim).sum();
      double n = static_cast<double>(na.layers[layer].rows() +
                                     nb.layers[layer].rows());
      CHECK(sum / n == doctest::Approx(0.0).epsilon(1e-9));
      double sq = na.layers[layer].col(dim).squaredNorm() +
                  nb.layers[layer].col(dim).squaredNorm();
      CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
}

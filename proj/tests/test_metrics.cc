// tests/test_metrics.cc
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

#include "lyrec/common.h"
#include "lyrec/io.h"
#include "lyrec/metrics.h"

using namespace lyrec;
using namespace lyrec::metrics;

namespace {

// Exhaustive minimal edit distance; the independent oracle for Align.
long BruteForceDistance(const std::vector<int> &ref,
                        const std::vector<int> &hyp, size_t i = 0,
                        size_t j = 0) {
  if (i == ref.size()) return static_cast<long>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<long>(ref.size() - i);
  long sub = (ref[i] == hyp[j] ? 0 : 1) + BruteForceDistance(ref, hyp, i + 1,
                                                             j + 1);
  long ins = 1 + BruteForceDistance(ref, hyp, i, j + 1);
  long del = 1 + BruteForceDistance(ref, hyp, i + 1, j);
  return std::min({sub, ins, del});
}

std::vector<int> RandomTokens(Rng *rng, int max_len, int vocab) {
  std::vector<int> out;
  int len = static_cast<int>(rng->UniformInt(0, max_len));
  for (int i = 0; i < len; ++i) {
    out.push_back(static_cast<int>(rng->UniformInt(0, vocab - 1)));
  }
  return out;
}

// Replays the edit script against ref/hyp, checking the op stream is
// consistent and consumes both sequences exactly.
void CheckScriptReplays(const AlignmentResult &a, const std::vector<int> &ref,
                        const std::vector<int> &hyp) {
  size_t i = 0, j = 0;
  for (EditOp op : a.script) {
    switch (op) {
      case EditOp::kMatch:
        REQUIRE(i < ref.size());
        REQUIRE(j < hyp.size());
        CHECK(ref[i] == hyp[j]);
        ++i;
        ++j;
        break;
      case EditOp::kSub:
        REQUIRE(i < ref.size());
        REQUIRE(j < hyp.size());
        CHECK(ref[i] != hyp[j]);
        ++i;
        ++j;
        break;
      case EditOp::kIns:
        REQUIRE(j < hyp.size());
        ++j;
        break;
      case EditOp::kDel:
        REQUIRE(i < ref.size());
        ++i;
        break;
    }
  }
  CHECK(i == ref.size());
  CHECK(j == hyp.size());
}

Mat UniformAttention(long rows, long cols) {
  return Mat::Constant(rows, cols, 1.0 / static_cast<double>(cols));
}

}  // namespace

TEST_CASE("Align on identical, substituted and empty sequences") {
  AlignmentResult same = Align({5, 6, 7}, {5, 6, 7});
  CHECK(same.Distance() == 0);
  CHECK(same.Wer() == 0.0);

  AlignmentResult sub = Align({5, 6, 7}, {5, 9, 7});
  CHECK(sub.substitutions == 1);
  CHECK(sub.deletions == 0);
  CHECK(sub.insertions == 0);
  CHECK(sub.Wer() == doctest::Approx(1.0 / 3.0));

  AlignmentResult ins = Align({}, {5, 5});
  CHECK(ins.insertions == 2);
  CHECK(ins.ref_len == 0);
  CHECK(std::isinf(ins.Wer()));

  AlignmentResult empty = Align({}, {});
  CHECK(empty.Wer() == 0.0);
}

TEST_CASE("Align matches the exhaustive oracle and replays its script") {
  Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> ref = RandomTokens(&rng, 5, 5);
    std::vector<int> hyp = RandomTokens(&rng, 5, 5);
    AlignmentResult a = Align(ref, hyp);
    CHECK(a.Distance() == BruteForceDistance(ref, hyp));
    CHECK(a.substitutions + a.deletions <= a.ref_len);
    CheckScriptReplays(a, ref, hyp);
  }
}

TEST_CASE("Align distance is symmetric with S and I/D roles swapped") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> a = RandomTokens(&rng, 6, 4);
    std::vector<int> b = RandomTokens(&rng, 6, 4);
    AlignmentResult ab = Align(a, b);
    AlignmentResult ba = Align(b, a);
    CHECK(ab.Distance() == ba.Distance());
    CHECK(ab.insertions == ba.deletions);
    CHECK(ab.deletions == ba.insertions);
  }
}

TEST_CASE("Levenshtein triangle inequality") {
  Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> a = RandomTokens(&rng, 5, 4);
    std::vector<int> b = RandomTokens(&rng, 5, 4);
    std::vector<int> c = RandomTokens(&rng, 5, 4);
    CHECK(Align(a, c).Distance() <=
          Align(a, b).Distance() + Align(b, c).Distance());
  }
}

TEST_CASE("Corpus WER pools errors over reference length") {
  std::vector<std::pair<std::string, std::vector<int>>> refs = {
      {"u1", {1, 2, 3, 4}}, {"u2", {1, 2, 3, 4, 5, 6}}};
  std::vector<std::pair<std::string, std::vector<int>>> hyps = {
      {"u1", {1, 9, 3, 4}}, {"u2", {1, 2, 3, 4, 5, 6}}};
  CorpusWer result = ComputeCorpusWer(refs, hyps);
  CHECK(result.wer_percent == doctest::Approx(10.0));
  CHECK(result.total_errors == 1);
  CHECK(result.total_ref_len == 10);

  // All-correct corpus scores zero.
  CorpusWer perfect = ComputeCorpusWer(refs, refs);
  CHECK(perfect.wer_percent == 0.0);
}

TEST_CASE("Corpus WER is invariant to utterance order") {
  Rng rng(44);
  std::vector<std::pair<std::string, std::vector<int>>> refs, hyps;
  for (int u = 0; u < 10; ++u) {
    std::string id = Strprintf("u%02d", u);
    std::vector<int> r = RandomTokens(&rng, 6, 5);
    r.push_back(1);  // never empty
    refs.emplace_back(id, r);
    hyps.emplace_back(id, RandomTokens(&rng, 6, 5));
  }
  CorpusWer forward = ComputeCorpusWer(refs, hyps);
  std::reverse(refs.begin(), refs.end());
  std::reverse(hyps.begin(), hyps.end());
  CorpusWer backward = ComputeCorpusWer(refs, hyps);
  CHECK(forward.wer_percent == doctest::Approx(backward.wer_percent));
}

TEST_CASE("Corpus WER reports id mismatches by name") {
  std::vector<std::pair<std::string, std::vector<int>>> refs = {
      {"u1", {1, 2}}, {"u2", {3}}};
  std::vector<std::pair<std::string, std::vector<int>>> hyps = {
      {"u1", {1, 2}}, {"u3", {3}}};
  CHECK_THROWS_WITH_AS(ComputeCorpusWer(refs, hyps),
                       doctest::Contains("u2"), DataError);
}

TEST_CASE("Corpus WER skips empty references with a warning") {
  std::vector<std::pair<std::string, std::vector<int>>> refs = {
      {"u1", {1, 2}}, {"u2", {}}};
  std::vector<std::pair<std::string, std::vector<int>>> hyps = {
      {"u1", {1, 2}}, {"u2", {5}}};
  CorpusWer result = ComputeCorpusWer(refs, hyps);
  CHECK(result.skipped_empty_refs == std::vector<std::string>{"u2"});
  CHECK(result.wer_percent == 0.0);
}

TEST_CASE("Attention stats on diagonal, one-hot and uniform inputs") {
  long h = 6;
  Mat diag = Mat::Identity(h, h);
  AttentionStats d = ComputeAttentionStats({diag});
  CHECK(d.max_column_mass == doctest::Approx(1.0 / h));
  CHECK_FALSE(d.collapse);
  CHECK(d.diagonality == doctest::Approx(1.0));

  Mat onehot = Mat::Zero(5, 7);
  onehot.col(3).setOnes();
  AttentionStats o = ComputeAttentionStats({onehot});
  CHECK(o.max_column_mass == doctest::Approx(1.0));
  CHECK(o.collapse);
  for (double e : o.row_entropy) CHECK(e == doctest::Approx(0.0));

  Mat uniform = UniformAttention(4, 9);
  AttentionStats u = ComputeAttentionStats({uniform});
  for (double e : u.row_entropy) {
    CHECK(e == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  }
  CHECK_FALSE(u.collapse);
}

TEST_CASE("Attention stats reject non-normalized rows") {
  Mat bad = UniformAttention(3, 4);
  bad(1, 2) += 0.1;
  CHECK_THROWS_AS(ComputeAttentionStats({bad}), DataError);
}

TEST_CASE("Collapse flag is monotone when sharpening onto one frame") {
  // Family interpolating uniform -> one-hot on frame 2.
  long h = 5, frames = 8;
  bool seen_collapse = false;
  double prev_mass = 0.0;
  for (double alpha = 0.0; alpha <= 1.0001; alpha += 0.1) {
    Mat a = UniformAttention(h, frames) * (1.0 - alpha);
    a.col(2).array() += alpha;
    AttentionStats stats = ComputeAttentionStats({a});
    CHECK(stats.max_column_mass >= prev_mass - 1e-12);
    prev_mass = stats.max_column_mass;
    if (stats.collapse) seen_collapse = true;
    // Once collapsed, sharpening further must stay collapsed.
    if (seen_collapse) CHECK(stats.collapse);
  }
  CHECK(seen_collapse);
}

TEST_CASE("Attention stats aggregate multiple heads") {
  Mat head1 = Mat::Zero(4, 4);
  head1.col(0).setOnes();
  Mat head2 = Mat::Zero(4, 4);
  head2.col(3).setOnes();
  AttentionStats stats = ComputeAttentionStats({head1, head2});
  CHECK(stats.max_column_mass == doctest::Approx(0.5));
  CHECK_FALSE(stats.collapse);  // 0.5 is not > 0.5
}

TEST_CASE("Score report and attention grid files") {
  auto dir = std::filesystem::temp_directory_path() / "lyrec_metrics";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  std::vector<std::pair<std::string, std::vector<int>>> refs = {
      {"u1", {1, 2, 3, 4}}};
  std::vector<std::pair<std::string, std::vector<int>>> hyps = {
      {"u1", {1, 9, 3, 4}}};
  CorpusWer result = ComputeCorpusWer(refs, hyps);
  std::string report = (dir / "score.txt").string();
  WriteScoreReport(report, result);
  std::vector<std::string> lines = ReadLines(report);
  REQUIRE(!lines.empty());
  CHECK(lines[0].rfind("# corpus WER", 0) == 0);
  bool found_record = false;
  for (const std::string &line : lines) {
    if (line.rfind("u1\t4\t1\t0\t0", 0) == 0) found_record = true;
  }
  CHECK(found_record);

  Mat attn = UniformAttention(3, 5);
  std::string grid = (dir / "attn.bin").string();
  WriteAttentionMatrix(grid, attn);
  Mat back = ReadAttentionMatrix(grid);
  CHECK(back.rows() == 3);
  CHECK(back.cols() == 5);
  CHECK((back - attn).cwiseAbs().maxCoeff() < 1e-7);
}

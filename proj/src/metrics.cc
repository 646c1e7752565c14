// lyrec/metrics.cc
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

#include "lyrec/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "lyrec/common.h"
#include "lyrec/io.h"

namespace lyrec {
namespace metrics {

double AlignmentResult::Wer() const {
  if (ref_len == 0) {
    return Distance() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(Distance()) / static_cast<double>(ref_len);
}

AlignmentResult Align(const std::vector<int> &ref,
                      const std::vector<int> &hyp) {
  long n = static_cast<long>(ref.size());
  long m = static_cast<long>(hyp.size());
  Eigen::MatrixXi dp(n + 1, m + 1);
  for (long i = 0; i <= n; ++i) dp(i, 0) = static_cast<int>(i);
  for (long j = 0; j <= m; ++j) dp(0, j) = static_cast<int>(j);
  for (long i = 1; i <= n; ++i) {
    for (long j = 1; j <= m; ++j) {
      int sub = dp(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int ins = dp(i, j - 1) + 1;
      int del = dp(i - 1, j) + 1;
      dp(i, j) = std::min({sub, ins, del});
    }
  }

  AlignmentResult out;
  out.ref_len = n;
  // Backtrace, preferring substitution/match, then insertion, then
  // deletion; collected in reverse.
  std::vector<EditOp> rev;
  long i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp(i, j) == dp(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      rev.push_back(ref[i - 1] == hyp[j - 1] ? EditOp::kMatch : EditOp::kSub);
      --i;
      --j;
    } else if (j > 0 && dp(i, j) == dp(i, j - 1) + 1) {
      rev.push_back(EditOp::kIns);
      --j;
    } else {
      rev.push_back(EditOp::kDel);
      --i;
    }
  }
  out.script.assign(rev.rbegin(), rev.rend());
  for (EditOp op : out.script) {
    switch (op) {
      case EditOp::kSub:
        ++out.substitutions;
        break;
      case EditOp::kIns:
        ++out.insertions;
        break;
      case EditOp::kDel:
        ++out.deletions;
        break;
      case EditOp::kMatch:
        break;
    }
  }
  return out;
}

CorpusWer ComputeCorpusWer(
    const std::vector<std::pair<std::string, std::vector<int>>> &refs,
    const std::vector<std::pair<std::string, std::vector<int>>> &hyps) {
  std::map<std::string, const std::vector<int> *> hyp_by_id;
  for (const auto &[id, tokens] : hyps) {
    if (!hyp_by_id.emplace(id, &tokens).second) {
      throw DataError("duplicate hypothesis id '" + id + "'");
    }
  }
  std::set<std::string> ref_ids;
  for (const auto &[id, tokens] : refs) {
    if (!ref_ids.insert(id).second) {
      throw DataError("duplicate reference id '" + id + "'");
    }
  }
  std::vector<std::string> missing, extra;
  for (const auto &[id, tokens] : refs) {
    if (hyp_by_id.find(id) == hyp_by_id.end()) missing.push_back(id);
  }
  for (const auto &[id, tokens] : hyps) {
    if (ref_ids.find(id) == ref_ids.end()) extra.push_back(id);
  }
  if (!missing.empty() || !extra.empty()) {
    throw DataError("utterance id mismatch; missing hyps: [" +
                    JoinStrings(missing, ", ") + "], extra hyps: [" +
                    JoinStrings(extra, ", ") + "]");
  }

  CorpusWer out;
  for (const auto &[id, ref_tokens] : refs) {
    if (ref_tokens.empty()) {
      out.skipped_empty_refs.push_back(id);
      continue;
    }
    AlignmentResult a = Align(ref_tokens, *hyp_by_id[id]);
    out.total_ref_len += a.ref_len;
    out.total_errors += a.Distance();
    out.per_utterance.push_back({id, a.ref_len, a.substitutions, a.deletions,
                                 a.insertions, a.Wer()});
  }
  if (out.total_ref_len == 0) {
    throw DataError("corpus WER undefined: no non-empty references");
  }
  out.wer_percent = 100.0 * static_cast<double>(out.total_errors) /
                    static_cast<double>(out.total_ref_len);
  return out;
}

AttentionStats ComputeAttentionStats(const std::vector<Mat> &attentions,
                                     double collapse_threshold) {
  if (attentions.empty()) throw DataError("no attention matrices given");
  long rows = attentions[0].rows(), cols = attentions[0].cols();
  if (rows < 1 || cols < 1) throw DataError("empty attention matrix");
  Mat mean = Mat::Zero(rows, cols);
  for (const Mat &a : attentions) {
    if (a.rows() != rows || a.cols() != cols) {
      throw DataError("attention matrices disagree in shape");
    }
    for (long r = 0; r < rows; ++r) {
      double sum = a.row(r).sum();
      if (std::fabs(sum - 1.0) > 1e-5) {
        throw DataError(
            Strprintf("attention row %ld sums to %.8f, not 1", r, sum));
      }
      if (a.row(r).minCoeff() < -1e-12) {
        throw DataError("attention weights must be non-negative");
      }
    }
    mean += a;
  }
  mean /= static_cast<double>(attentions.size());

  AttentionStats stats;
  for (long r = 0; r < rows; ++r) {
    double h = 0.0;
    for (long c = 0; c < cols; ++c) {
      double p = mean(r, c);
      if (p > 0.0) h -= p * std::log(p);
    }
    stats.row_entropy.push_back(h);
  }
  stats.column_mass = mean.colwise().mean().transpose();
  stats.max_column_mass = stats.column_mass.maxCoeff();
  stats.collapse = stats.max_column_mass > collapse_threshold;

  // Correlation of the expected source position with the output step.
  Vec expected(rows);
  for (long r = 0; r < rows; ++r) {
    double e = 0.0;
    for (long c = 0; c < cols; ++c) e += mean(r, c) * static_cast<double>(c);
    expected(r) = e;
  }
  double mean_r = static_cast<double>(rows - 1) / 2.0;
  double mean_e = expected.mean();
  double cov = 0.0, var_r = 0.0, var_e = 0.0;
  for (long r = 0; r < rows; ++r) {
    double dr = static_cast<double>(r) - mean_r;
    double de = expected(r) - mean_e;
    cov += dr * de;
    var_r += dr * dr;
    var_e += de * de;
  }
  stats.diagonality =
      (var_r > 0.0 && var_e > 1e-12) ? cov / std::sqrt(var_r * var_e) : 0.0;
  return stats;
}

void WriteScoreReport(const std::string &path, const CorpusWer &result) {
  std::ostringstream os;
  os << Strprintf("# corpus WER %.4f%% (%ld errors / %ld reference tokens)\n",
                  result.wer_percent, result.total_errors,
                  result.total_ref_len);
  os << Strprintf("# utterances scored: %zu\n", result.per_utterance.size());
  if (!result.skipped_empty_refs.empty()) {
    os << "# skipped empty references: "
       << JoinStrings(result.skipped_empty_refs, ", ") << "\n";
  }
  os << "# utt_id\tN\tS\tD\tI\twer\n";
  for (const UtteranceScore &u : result.per_utterance) {
    os << u.id << "\t" << u.ref_len << "\t" << u.substitutions << "\t"
       << u.deletions << "\t" << u.insertions << "\t"
       << Strprintf("%.6f", u.wer) << "\n";
  }
  WriteFile(path, os.str());
}

namespace {
constexpr char kAttnMagic[4] = {'A', 'T', 'T', 'N'};
}

void WriteAttentionMatrix(const std::string &path, const Mat &attention) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  WriteBytes(os, kAttnMagic, 4);
  WriteU32(os, static_cast<uint32_t>(attention.rows()));
  WriteU32(os, static_cast<uint32_t>(attention.cols()));
  for (long r = 0; r < attention.rows(); ++r) {
    for (long c = 0; c < attention.cols(); ++c) {
      WriteF32(os, static_cast<float>(attention(r, c)));
    }
  }
}

Mat ReadAttentionMatrix(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  char magic[4];
  ReadBytes(is, magic, 4, "attention magic");
  if (std::memcmp(magic, kAttnMagic, 4) != 0) {
    throw FormatError("malformed attention grid header: " + path);
  }
  uint32_t rows = ReadU32(is, "attention rows");
  uint32_t cols = ReadU32(is, "attention cols");
  Mat m(rows, cols);
  for (uint32_t r = 0; r < rows; ++r) {
    for (uint32_t c = 0; c < cols; ++c) {
      m(r, c) = ReadF32(is, "attention payload");
    }
  }
  return m;
}

}  // namespace metrics
}  // namespace lyrec

// lyrec/metrics.h
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

#ifndef LYREC_METRICS_H_
#define LYREC_METRICS_H_

#include <string>
#include <vector>

#include "lyrec/matrix.h"

namespace lyrec {
namespace metrics {

enum class EditOp { kMatch, kSub, kIns, kDel };

struct AlignmentResult {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_len = 0;
  // Ref-to-hyp edit script; replaying it on ref yields hyp.
  std::vector<EditOp> script;

  long Distance() const { return substitutions + deletions + insertions; }
  // errors / ref_len; +inf when ref is empty but errors exist.
  double Wer() const;
};

// Minimal unit-cost alignment with deterministic tie-breaking during
// backtrace: substitution/match preferred over insertion over deletion.
AlignmentResult Align(const std::vector<int> &ref, const std::vector<int> &hyp);

struct UtteranceScore {
  std::string id;
  long ref_len = 0;
  long substitutions = 0, deletions = 0, insertions = 0;
  double wer = 0.0;
};

struct CorpusWer {
  double wer_percent = 0.0;  // pooled: 100 * sum(errors) / sum(ref_len)
  long total_ref_len = 0;
  long total_errors = 0;
  // Utterances whose reference is empty are excluded from pooling.
  std::vector<std::string> skipped_empty_refs;
  std::vector<UtteranceScore> per_utterance;
};

// Pooled corpus WER over matching utterance id sets. Missing or extra
// ids raise DataError naming them.
CorpusWer ComputeCorpusWer(
    const std::vector<std::pair<std::string, std::vector<int>>> &refs,
    const std::vector<std::pair<std::string, std::vector<int>>> &hyps);

struct AttentionStats {
  std::vector<double> row_entropy;  // nats, per output step
  Vec column_mass;                  // mean attention per source frame
  double max_column_mass = 0.0;
  bool collapse = false;  // max_column_mass > threshold
  // Pearson correlation between output step index and the expected
  // source position; 1.0 is a clean monotone alignment.
  double diagonality = 0.0;
};

// Stats over a set of equally-shaped attention matrices (layers/heads),
// aggregated by averaging. Rows must sum to 1 within 1e-5.
AttentionStats ComputeAttentionStats(const std::vector<Mat> &attentions,
                                     double collapse_threshold = 0.5);

// Score report: '#'-prefixed human-readable summary followed by
// per-utterance records `utt_id N S D I wer`, tab-separated.
void WriteScoreReport(const std::string &path, const CorpusWer &result);

// Headered float32 grid for external plotting.
void WriteAttentionMatrix(const std::string &path, const Mat &attention);
Mat ReadAttentionMatrix(const std::string &path);

}  // namespace metrics
}  // namespace lyrec

#endif  // LYREC_METRICS_H_

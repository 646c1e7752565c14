// lyrec/decoding.h
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

#ifndef LYREC_DECODING_H_
#define LYREC_DECODING_H_

#include <string>
#include <vector>

#include "lyrec/lm.h"
#include "lyrec/models.h"

namespace lyrec {
namespace decoding {

struct Hypothesis {
  std::vector<int> tokens;  // emitted after sos; may end in eos
  double am_logp = 0.0;
  double lm_logp = 0.0;   // raw LM log-prob (unweighted)
  double ctc_logp = 0.0;  // CTC prefix score when fusion is enabled
  double combined = 0.0;
  bool finished = false;
};

struct BeamConfig {
  int beam_size = 10;
  double lm_weight = 0.3;      // shallow fusion weight
  double length_bonus = 0.0;   // added per emitted token
  double max_len_ratio = 1.0;  // fraction of encoder frames
  double ctc_weight = 0.0;     // decode-time CTC prefix fusion, default off

  void Validate() const;
  long MaxDecodeLen(long encoder_frames) const;
};

// combined = am + lm_weight*lm + length_bonus*|tokens| (+ctc_weight*ctc).
double CombinedScore(const BeamConfig &cfg, double am_logp, double lm_logp,
                     double ctc_logp, size_t num_tokens);

// Total order on hypotheses: combined descending, then token sequence
// lexicographically ascending (a strict prefix sorts before its
// extensions). Deterministic so results are byte-stable.
bool HypothesisBetter(const Hypothesis &a, const Hypothesis &b);

// Attention-decoder beam search with optional shallow LM fusion and
// optional CTC prefix scoring. Returns finished hypotheses (eos or max
// length), best first, at most beam_size. `lm` must be present iff
// lm_weight > 0; a vocabulary mismatch is an error.
std::vector<Hypothesis> BeamSearch(const models::RecognizerModel &model,
                                   const Mat &enc_states,
                                   const BeamConfig &cfg,
                                   const lm::LanguageModel *lm = nullptr);

// Stepwise argmax until eos or max_len; the returned sequence excludes
// eos. `attention` (when non-null) receives one decoder attention row
// per emitted step, including the final eos step.
std::vector<int> GreedyDecode(const models::RecognizerModel &model,
                              const Mat &enc_states, long max_len,
                              Mat *attention = nullptr);

// Label-synchronous CTC prefix scoring over a fixed log-prob grid
// (frames x vocab).
class CtcPrefixScorer {
 public:
  CtcPrefixScorer(Mat ctc_logp, int blank, int eos);

  struct State {
    Vec log_prob_blank;     // prefix ends in blank, per frame
    Vec log_prob_nonblank;  // prefix ends in its last label, per frame
    double prefix_logp = 0.0;
  };

  State Initial() const;
  // Prefix score of g+c given state(g); fills `next` for chaining.
  // `last_token` is g's final label or -1 for the empty prefix.
  double ExtendScore(const State &state, int last_token, int token,
                     State *next) const;
  // Probability that the collapse equals the prefix exactly (eos case).
  double FinalScore(const State &state) const;

 private:
  Mat logp_;
  int blank_, eos_;
};

// N-best records: `utt_id rank combined am lm text`, tab-separated.
struct NbestEntry {
  std::string utt_id;
  int rank = 0;
  double combined = 0.0;
  double am_logp = 0.0;
  double lm_logp = 0.0;
  std::string text;

  bool operator==(const NbestEntry &other) const = default;
};

void WriteNbest(const std::string &path,
                const std::vector<NbestEntry> &entries);
std::vector<NbestEntry> ReadNbest(const std::string &path);

}  // namespace decoding
}  // namespace lyrec

#endif  // LYREC_DECODING_H_

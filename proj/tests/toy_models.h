// tests/toy_models.h
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
//
// Shared helpers for decoding tests: tiny random recognizers and the
// exhaustive-enumeration decoding oracle the beam search is checked
// against. The oracle walks the full prefix tree and scores every legal
// output sequence independently of the beam search implementation.

#ifndef LYREC_TESTS_TOY_MODELS_H_
#define LYREC_TESTS_TOY_MODELS_H_

#include <memory>
#include <vector>

#include "lyrec/decoding.h"
#include "lyrec/lm.h"
#include "lyrec/models.h"

namespace lyrec {
namespace testing {

inline models::ModelConfig TinyModelConfig(int vocab, uint64_t seed) {
  models::ModelConfig cfg;
  cfg.encoder = {models::EncoderKind::kTransformer, 1, 2, 16, 32, 0.0, 7, 16};
  cfg.decoder = {models::DecoderKind::kTransformer, 1, 2, 16, 32, 0.0, 16};
  cfg.loss = {0.3, 0.1};
  cfg.vocab_size = vocab;
  cfg.input_dim = 4;
  cfg.stack_layers = 1;
  cfg.seed = seed;
  return cfg;
}

inline features::FeatureStack TinyStack(int t, int d, uint64_t seed) {
  Rng rng(seed);
  features::FeatureStack stack;
  stack.frame_rate = 100.0;
  Mat m(t, d);
  for (long r = 0; r < t; ++r) {
    for (long c = 0; c < d; ++c) m(r, c) = rng.Normal();
  }
  stack.layers.push_back(std::move(m));
  return stack;
}

// Every legal output sequence: eos only as the final token, and
// sequences without eos have exactly max_len tokens.
inline void EnumerateAllHypotheses(const models::RecognizerModel &model,
                                   const decoding::BeamConfig &cfg,
                                   const lm::LanguageModel *lm, long max_len,
                                   const models::DecodeState &state,
                                   const Eigen::RowVectorXd &am_next,
                                   const lm::LmState *lm_state,
                                   decoding::Hypothesis partial,
                                   std::vector<decoding::Hypothesis> *out) {
  int vocab = model.config().vocab_size;
  bool use_lm = cfg.lm_weight > 0.0;
  for (int tok = 0; tok < vocab; ++tok) {
    decoding::Hypothesis child = partial;
    child.tokens.push_back(tok);
    child.am_logp += am_next(tok);
    if (use_lm) child.lm_logp += lm_state->next_logp(tok);
    child.combined = decoding::CombinedScore(cfg, child.am_logp,
                                             child.lm_logp, 0.0,
                                             child.tokens.size());
    bool is_eos = tok == 2;
    long len = static_cast<long>(child.tokens.size());
    if (is_eos || len == max_len) {
      child.finished = is_eos;
      out->push_back(child);
      continue;
    }
    models::DecodeState next_state = state;
    Eigen::RowVectorXd next_am = model.DecodeStep(&next_state, tok, nullptr);
    if (use_lm) {
      lm::LmState next_lm = *lm_state;
      lm->Advance(&next_lm, tok);
      EnumerateAllHypotheses(model, cfg, lm, max_len, next_state, next_am,
                             &next_lm, child, out);
    } else {
      EnumerateAllHypotheses(model, cfg, lm, max_len, next_state, next_am,
                             nullptr, child, out);
    }
  }
}

inline std::vector<decoding::Hypothesis> BruteForceDecode(
    const models::RecognizerModel &model, const Mat &enc,
    const decoding::BeamConfig &cfg, const lm::LanguageModel *lm,
    long max_len) {
  models::DecodeState state = model.BeginDecode(enc);
  Eigen::RowVectorXd am_next = model.DecodeStep(&state, 1, nullptr);  // sos
  lm::LmState lm_state;
  if (cfg.lm_weight > 0.0) lm_state = lm->Begin();
  std::vector<decoding::Hypothesis> all;
  EnumerateAllHypotheses(model, cfg, lm, max_len, state, am_next,
                         cfg.lm_weight > 0.0 ? &lm_state : nullptr,
                         decoding::Hypothesis(), &all);
  std::sort(all.begin(), all.end(), decoding::HypothesisBetter);
  return all;
}

}  // namespace testing
}  // namespace lyrec

#endif  // LYREC_TESTS_TOY_MODELS_H_

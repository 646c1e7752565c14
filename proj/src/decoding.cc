// lyrec/decoding.cc
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

#include "lyrec/decoding.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lyrec/io.h"

namespace lyrec {
namespace decoding {

namespace {

constexpr int kSosId = 1;
constexpr int kEosId = 2;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

void BeamConfig::Validate() const {
  if (beam_size < 1) throw UsageError("beam_size must be >= 1");
  if (!(lm_weight >= 0.0 && lm_weight <= 1.0)) {
    throw UsageError("lm_weight must be in [0, 1]");
  }
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) {
    throw UsageError("ctc_weight must be in [0, 1]");
  }
  if (!(max_len_ratio > 0.0 && max_len_ratio <= 1.0)) {
    throw UsageError("max_len_ratio must be in (0, 1]");
  }
  if (!std::isfinite(length_bonus)) {
    throw UsageError("length_bonus must be finite");
  }
}

long BeamConfig::MaxDecodeLen(long encoder_frames) const {
  long len = static_cast<long>(max_len_ratio * static_cast<double>(
                                                   encoder_frames) +
                               1e-9);
  return std::max(1L, len);
}

double CombinedScore(const BeamConfig &cfg, double am_logp, double lm_logp,
                     double ctc_logp, size_t num_tokens) {
  return am_logp + cfg.lm_weight * lm_logp + cfg.ctc_weight * ctc_logp +
         cfg.length_bonus * static_cast<double>(num_tokens);
}

bool HypothesisBetter(const Hypothesis &a, const Hypothesis &b) {
  if (a.combined != b.combined) return a.combined > b.combined;
  return a.tokens < b.tokens;
}

namespace {

// One live beam entry: hypothesis scores plus every incremental state.
struct LiveHyp {
  Hypothesis hyp;
  models::DecodeState dec_state;
  Eigen::RowVectorXd am_next;  // AM log-probs for the next token
  lm::LmState lm_state;
  CtcPrefixScorer::State ctc_state;
};

struct Candidate {
  size_t parent;
  int token;
  Hypothesis hyp;
  CtcPrefixScorer::State ctc_state;
};

}  // namespace

std::vector<Hypothesis> BeamSearch(const models::RecognizerModel &model,
                                   const Mat &enc_states,
                                   const BeamConfig &cfg,
                                   const lm::LanguageModel *lm) {
  cfg.Validate();
  bool use_lm = cfg.lm_weight > 0.0;
  if (use_lm && lm == nullptr) {
    throw UsageError("lm_weight > 0 requires a language model");
  }
  if (use_lm && lm->vocab_size() != model.config().vocab_size) {
    throw DataError(Strprintf(
        "lm vocabulary size %d does not match model vocabulary %d",
        lm->vocab_size(), model.config().vocab_size));
  }
  bool use_ctc = cfg.ctc_weight > 0.0;
  std::unique_ptr<CtcPrefixScorer> ctc;
  if (use_ctc) {
    ctc = std::make_unique<CtcPrefixScorer>(model.CtcLogProbs(enc_states),
                                            0, kEosId);
  }

  long max_len = cfg.MaxDecodeLen(enc_states.rows());
  int vocab = model.config().vocab_size;

  std::vector<LiveHyp> live(1);
  live[0].dec_state = model.BeginDecode(enc_states);
  live[0].am_next = model.DecodeStep(&live[0].dec_state, kSosId, nullptr);
  if (use_lm) live[0].lm_state = lm->Begin();
  if (use_ctc) live[0].ctc_state = ctc->Initial();

  std::vector<Hypothesis> finished;

  for (long step = 1; step <= max_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * static_cast<size_t>(vocab));
    for (size_t p = 0; p < live.size(); ++p) {
      const LiveHyp &parent = live[p];
      for (int tok = 0; tok < vocab; ++tok) {
        Candidate cand;
        cand.parent = p;
        cand.token = tok;
        cand.hyp.tokens = parent.hyp.tokens;
        cand.hyp.tokens.push_back(tok);
        cand.hyp.am_logp = parent.hyp.am_logp + parent.am_next(tok);
        cand.hyp.lm_logp =
            parent.hyp.lm_logp +
            (use_lm ? parent.lm_state.next_logp(tok) : 0.0);
        if (use_ctc) {
          int last = parent.hyp.tokens.empty() ? -1 : parent.hyp.tokens.back();
          if (tok == kEosId) {
            cand.hyp.ctc_logp = ctc->FinalScore(parent.ctc_state);
            cand.ctc_state = parent.ctc_state;
          } else if (tok == 0) {
            // Blank never extends a labeling; keep it effectively dead.
            cand.hyp.ctc_logp = kNegInf;
            cand.ctc_state = parent.ctc_state;
          } else {
            cand.hyp.ctc_logp = ctc->ExtendScore(parent.ctc_state, last, tok,
                                                 &cand.ctc_state);
          }
        }
        cand.hyp.finished = tok == kEosId;
        cand.hyp.combined =
            CombinedScore(cfg, cand.hyp.am_logp, cand.hyp.lm_logp,
                          cand.hyp.ctc_logp, cand.hyp.tokens.size());
        candidates.push_back(std::move(cand));
      }
    }

    size_t keep = std::min(candidates.size(),
                           static_cast<size_t>(cfg.beam_size));
    std::partial_sort(candidates.begin(),
                      candidates.begin() + static_cast<long>(keep),
                      candidates.end(),
                      [](const Candidate &a, const Candidate &b) {
                        return HypothesisBetter(a.hyp, b.hyp);
                      });
    candidates.resize(keep);

    std::vector<LiveHyp> next_live;
    for (Candidate &cand : candidates) {
      if (cand.hyp.finished) {
        finished.push_back(std::move(cand.hyp));
        continue;
      }
      if (step == max_len) {
        // Length limit reached: retire as-is, without an eos score.
        finished.push_back(std::move(cand.hyp));
        continue;
      }
      LiveHyp child;
      child.hyp = std::move(cand.hyp);
      child.dec_state = live[cand.parent].dec_state;
      child.am_next = model.DecodeStep(&child.dec_state, cand.token, nullptr);
      if (use_lm) {
        child.lm_state = live[cand.parent].lm_state;
        lm->Advance(&child.lm_state, cand.token);
      }
      if (use_ctc) child.ctc_state = std::move(cand.ctc_state);
      next_live.push_back(std::move(child));
    }
    live = std::move(next_live);
  }

  std::sort(finished.begin(), finished.end(), HypothesisBetter);
  if (finished.size() > static_cast<size_t>(cfg.beam_size)) {
    finished.resize(static_cast<size_t>(cfg.beam_size));
  }
  return finished;
}

std::vector<int> GreedyDecode(const models::RecognizerModel &model,
                              const Mat &enc_states, long max_len,
                              Mat *attention) {
  if (attention != nullptr) *attention = Mat(0, enc_states.rows());
  std::vector<int> out;
  if (max_len <= 0) return out;
  models::DecodeState state = model.BeginDecode(enc_states);
  int token = kSosId;
  for (long step = 0; step < max_len; ++step) {
    Eigen::RowVectorXd attn_row;
    Eigen::RowVectorXd logp = model.DecodeStep(
        &state, token, attention != nullptr ? &attn_row : nullptr);
    if (attention != nullptr) {
      attention->conservativeResize(attention->rows() + 1, Eigen::NoChange);
      attention->row(attention->rows() - 1) = attn_row;
    }
    long argmax = 0;
    logp.maxCoeff(&argmax);
    token = static_cast<int>(argmax);
    if (token == kEosId) break;
    out.push_back(token);
  }
  return out;
}

CtcPrefixScorer::CtcPrefixScorer(Mat ctc_logp, int blank, int eos)
    : logp_(std::move(ctc_logp)), blank_(blank), eos_(eos) {
  if (blank_ < 0 || blank_ >= logp_.cols() || eos_ < 0 ||
      eos_ >= logp_.cols()) {
    throw UsageError("CtcPrefixScorer: blank/eos out of range");
  }
}

CtcPrefixScorer::State CtcPrefixScorer::Initial() const {
  long frames = logp_.rows();
  State s;
  s.log_prob_blank = Vec(frames);
  s.log_prob_nonblank = Vec::Constant(frames, kNegInf);
  double acc = 0.0;
  for (long t = 0; t < frames; ++t) {
    acc += logp_(t, blank_);
    s.log_prob_blank(t) = acc;
  }
  s.prefix_logp = 0.0;  // empty prefix is a prefix of everything
  return s;
}

double CtcPrefixScorer::ExtendScore(const State &state, int last_token,
                                    int token, State *next) const {
  if (token == blank_ || token == eos_) {
    throw UsageError("CtcPrefixScorer: cannot extend with blank or eos");
  }
  long frames = logp_.rows();
  next->log_prob_blank = Vec::Constant(frames, kNegInf);
  next->log_prob_nonblank = Vec::Constant(frames, kNegInf);

  double psi = kNegInf;
  for (long t = 0; t < frames; ++t) {
    // Mass of paths where g just finished at t-1 and c starts at t.
    double prev_blank = t > 0 ? state.log_prob_blank(t - 1) : kNegInf;
    double prev_nonblank =
        t > 0 ? state.log_prob_nonblank(t - 1) : kNegInf;
    double phi;
    if (last_token < 0) {
      // Empty prefix: c may start at any frame along pure-blank paths,
      // including frame 0.
      phi = t > 0 ? prev_blank : 0.0;
    } else {
      phi = last_token != token ? nn::LogAdd(prev_blank, prev_nonblank)
                                : prev_blank;
    }
    double emit = logp_(t, token);
    double nb_prev = t > 0 ? next->log_prob_nonblank(t - 1) : kNegInf;
    next->log_prob_nonblank(t) = nn::LogAdd(nb_prev, phi) + emit;
    double b_prev = t > 0 ? next->log_prob_blank(t - 1) : kNegInf;
    double ended =
        t > 0 ? nn::LogAdd(b_prev, next->log_prob_nonblank(t - 1)) : kNegInf;
    next->log_prob_blank(t) = ended + logp_(t, blank_);
    psi = nn::LogAdd(psi, phi + emit);
  }
  next->prefix_logp = psi;
  return psi;
}

double CtcPrefixScorer::FinalScore(const State &state) const {
  long frames = logp_.rows();
  return nn::LogAdd(state.log_prob_blank(frames - 1),
                    state.log_prob_nonblank(frames - 1));
}

void WriteNbest(const std::string &path,
                const std::vector<NbestEntry> &entries) {
  std::ostringstream os;
  for (const NbestEntry &e : entries) {
    if (e.utt_id.find('\t') != std::string::npos ||
        e.text.find('\t') != std::string::npos) {
      throw DataError("n-best fields may not contain tabs");
    }
    os << e.utt_id << "\t" << e.rank << "\t" << Strprintf("%.17g", e.combined)
       << "\t" << Strprintf("%.17g", e.am_logp) << "\t"
       << Strprintf("%.17g", e.lm_logp) << "\t" << e.text << "\n";
  }
  WriteFile(path, os.str());
}

std::vector<NbestEntry> ReadNbest(const std::string &path) {
  std::vector<NbestEntry> out;
  std::vector<std::string> lines = ReadLines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> fields = SplitString(lines[i], '\t');
    if (fields.size() != 6) {
      throw FormatError(Strprintf("n-best line %zu has %zu fields, want 6",
                                  i + 1, fields.size()));
    }
    NbestEntry e;
    e.utt_id = fields[0];
    try {
      e.rank = std::stoi(fields[1]);
      e.combined = std::stod(fields[2]);
      e.am_logp = std::stod(fields[3]);
      e.lm_logp = std::stod(fields[4]);
    } catch (const std::exception &) {
      throw FormatError("bad numeric field in n-best line: " + lines[i]);
    }
    e.text = fields[5];
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace decoding
}  // namespace lyrec

// lyrec/lm.h
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

#ifndef LYREC_LM_H_
#define LYREC_LM_H_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lyrec/nn/layers.h"
#include "lyrec/nn/tensor.h"

namespace lyrec {
namespace lm {

// Language models score token sequences over the recognizer vocabulary
// (the full id space, reserved ids included). Sequences are conditioned
// on an implicit sos start; eos is scored like any other token when the
// caller includes it.

struct LmState {
  // Distribution over the next token given everything consumed so far.
  Eigen::RowVectorXd next_logp;
  std::vector<int> context;  // n-gram context / transformer prefix
  std::vector<Mat> hs, cs;   // recurrent layers
  std::vector<std::pair<Mat, Mat>> kv;  // transformer K/V caches
  long step = 0;
};

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual int vocab_size() const = 0;
  // State conditioned on sos only; next_logp is P(first token | sos).
  virtual LmState Begin() const = 0;
  virtual void Advance(LmState *state, int token) const = 0;
};

// Per-token conditional log-probabilities of a sequence (sos-start).
std::vector<double> ScoreSteps(const LanguageModel &lm,
                               const std::vector<int> &tokens);
// Sum of ScoreSteps.
double ScoreSequence(const LanguageModel &lm, const std::vector<int> &tokens);

// exp(-(1/N) * sum log P), eos appended to and scored for every
// sequence, N counting it too.
double Perplexity(const LanguageModel &lm,
                  const std::vector<std::vector<int>> &corpus);

// Count model with interpolated absolute discounting: for a seen context
// h with total count T, distinct successor count D,
//   P(w|h) = max(c(h,w) - d, 0)/T + (d * D / T) * P(w|h'),
// terminating in the uniform distribution 1/V. Unseen contexts defer to
// the next lower order directly.
class NGramLM : public LanguageModel {
 public:
  // Uniform unigram floor only (no counts).
  static NGramLM Uniform(int vocab_size);
  // Trains on token sequences; eos is appended, contexts sos-padded.
  static NGramLM Train(const std::vector<std::vector<int>> &corpus, int order,
                       double discount, int vocab_size);

  int order() const { return order_; }
  double discount() const { return discount_; }
  int vocab_size() const override { return vocab_size_; }

  double LogProb(const std::vector<int> &context, int token) const;

  LmState Begin() const override;
  void Advance(LmState *state, int token) const override;

  // ARPA-style text sections per order with log10 probabilities and
  // log10 backoff weights; token fields are vocabulary ids.
  void SaveArpa(const std::string &path) const;
  static NGramLM LoadArpa(const std::string &path);

 private:
  NGramLM(int order, double discount, int vocab_size)
      : order_(order), discount_(discount), vocab_size_(vocab_size) {}

  struct ContextStats {
    std::map<int, int64_t> counts;
    int64_t total = 0;
  };

  Eigen::RowVectorXd NextLogProbsFor(const std::vector<int> &context) const;
  double CountLogProb(const std::vector<int> &context, int token) const;
  double ArpaLogProb(const std::vector<int> &context, int token) const;

  int order_;
  double discount_;
  int vocab_size_;
  // tables_[k] maps length-k contexts to successor stats.
  std::vector<std::map<std::vector<int>, ContextStats>> tables_;
  // Loaded ARPA files score through probability tables instead.
  bool arpa_mode_ = false;
  std::vector<std::map<std::vector<int>, std::map<int, double>>> arpa_;
  std::vector<std::map<std::vector<int>, double>> context_bows_;
};

struct NeuralLMConfig {
  enum class Kind { kRecurrent, kTransformer };
  Kind kind = Kind::kRecurrent;
  int num_layers = 2;
  long hidden = 650;
  int heads = 4;  // transformer only
  int vocab_size = 0;
  uint64_t seed = 1;

  void Validate() const;
};

// Published presets: recurrent 2 x 650; transformer 8 layers, 4 heads,
// hidden 1024. Desk variants are small enough to overfit in tests.
NeuralLMConfig RecurrentLmPreset(int vocab_size, uint64_t seed);
NeuralLMConfig TransformerLmPreset(int vocab_size, uint64_t seed);
NeuralLMConfig DeskRecurrentLmConfig(int vocab_size, uint64_t seed);
NeuralLMConfig DeskTransformerLmConfig(int vocab_size, uint64_t seed);

class NeuralLM : public LanguageModel {
 public:
  explicit NeuralLM(const NeuralLMConfig &cfg);

  const NeuralLMConfig &config() const { return cfg_; }
  nn::ParamStore &params() { return params_; }
  const nn::ParamStore &params() const { return params_; }

  // Teacher-forced logits (len x V) for input rows [sos, t_1, ...].
  nn::Tensor ForwardT(const std::vector<int> &input_tokens, bool train,
                      Rng *rng) const;
  // Mean cross-entropy of the sequence (eos appended).
  nn::Tensor SequenceNll(const std::vector<int> &tokens, bool train,
                         Rng *rng) const;

  int vocab_size() const override { return cfg_.vocab_size; }
  LmState Begin() const override;
  void Advance(LmState *state, int token) const override;

  std::vector<std::pair<std::string, Mat>> ExportTensors() const;
  void ImportTensors(const std::vector<std::pair<std::string, Mat>> &state);
  std::string SerializeConfig() const;
  static NeuralLMConfig DeserializeConfig(const std::string &text);

 private:
  Eigen::RowVectorXd StepEval(LmState *state, int token) const;

  NeuralLMConfig cfg_;
  nn::ParamStore params_;
  nn::EmbeddingLayer emb_;
  std::vector<nn::LstmCell> cells_;                  // recurrent
  std::vector<nn::TransformerEncoderLayer> blocks_;  // transformer
  nn::LayerNormLayer final_ln_;
  nn::Linear out_;
};

// Neural LM checkpoint reusing the recognizer container format.
void SaveNeuralLm(const std::string &path, const NeuralLM &lm);
std::unique_ptr<NeuralLM> LoadNeuralLm(const std::string &path);

}  // namespace lm
}  // namespace lyrec

#endif  // LYREC_LM_H_

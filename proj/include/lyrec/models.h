// lyrec/models.h
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

#ifndef LYREC_MODELS_H_
#define LYREC_MODELS_H_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lyrec/checkpoint.h"
#include "lyrec/features.h"
#include "lyrec/nn/layers.h"
#include "lyrec/nn/tensor.h"

namespace lyrec {
namespace models {

enum class EncoderKind { kTransformer, kConformer, kBilstm };

std::string EncoderKindName(EncoderKind kind);
EncoderKind EncoderKindFromName(const std::string &name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kTransformer;
  int num_blocks = 12;
  int attention_heads = 4;
  long model_dim = 256;
  long ff_units = 2048;
  double dropout = 0.1;
  int conv_kernel = 15;  // conformer depthwise kernel, odd
  int lstm_hidden = 512;  // per direction, bilstm encoder

  // Frame-rate reduction of the front end.
  int SubsamplingFactor() const {
    return kind == EncoderKind::kBilstm ? 1 : 4;
  }
  // Dimensionality of encoder output states.
  long OutputDim() const {
    return kind == EncoderKind::kBilstm ? 2L * lstm_hidden : model_dim;
  }
  void Validate() const;
};

enum class DecoderKind { kTransformer, kLstm };

struct DecoderConfig {
  DecoderKind kind = DecoderKind::kTransformer;
  int num_blocks = 6;
  int attention_heads = 4;
  long model_dim = 256;
  long ff_units = 2048;
  double dropout = 0.1;
  int lstm_hidden = 512;  // lstm decoder
  void Validate() const;
};

// Joint objective: loss = ctc_weight * L_ctc + (1 - ctc_weight) * L_att.
struct LossSpec {
  double ctc_weight = 0.3;
  double label_smoothing = 0.1;
  void Validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  LossSpec loss;
  int vocab_size = 0;
  long input_dim = 0;    // feature dimension D
  int stack_layers = 1;  // K; > 1 enables trainable layer fusion
  uint64_t seed = 1;

  void Validate() const;
  std::string Serialize() const;
  static ModelConfig Deserialize(const std::string &text);
};

// Paper presets (block counts, heads, ff units, dropout as published) and
// desk presets small enough for test-time training. `preset` names:
// baseline-transformer, conformer-downstream, probe-bilstm,
// desk-transformer, desk-conformer, desk-probe.
ModelConfig MakePresetConfig(const std::string &preset, int vocab_size,
                             long input_dim, int stack_layers,
                             uint64_t seed);
std::vector<std::string> PresetNames();

struct LossBreakdown {
  nn::Tensor total;  // 1x1, differentiable
  double total_value = 0.0;
  double attention_value = 0.0;
  double ctc_value = 0.0;
};

// Incremental decoding state; one per live hypothesis.
struct DecodeState {
  // transformer decoder
  std::vector<nn::TransformerDecoderLayer::StepState> layers;
  long step = 0;
  // lstm decoder
  Mat h, c, context;
  // shared
  Mat enc;       // encoder states (needed by the lstm path)
  Mat enc_keys;  // projected attention keys (lstm path)
};

class RecognizerModel {
 public:
  explicit RecognizerModel(const ModelConfig &cfg);

  const ModelConfig &config() const { return cfg_; }
  nn::ParamStore &params() { return params_; }
  const nn::ParamStore &params() const { return params_; }

  // Actual constructed depth (not just the config request).
  int NumEncoderBlocks() const;
  int NumDecoderBlocks() const;

  bool HasFusion() const { return fusion_logits_.Defined(); }
  nn::Tensor FusionLogits() const { return fusion_logits_; }
  // softmax(logits); uniform 1/K before training.
  Vec FusionWeightValues() const;

  // Per-dim normalization fitted on the train split; applied inside
  // Encode/ComputeLoss when present.
  void SetNormalizer(const features::FeatureNormalizer &norm);
  const std::optional<features::FeatureNormalizer> &normalizer() const {
    return normalizer_;
  }

  // Training-path encoder; H = ceil(T / subsampling). `rng` drives
  // dropout and may be null when train == false.
  nn::Tensor EncodeT(const features::FeatureStack &stack, bool train,
                     Rng *rng) const;
  // Eval-mode encoder (no gradient, no dropout); deterministic.
  Mat Encode(const features::FeatureStack &stack) const;

  // Teacher-forced decoder logits (len x V) for input token rows
  // [sos, y_1, ..., y_{n-1}].
  nn::Tensor DecoderForwardT(const std::vector<int> &input_tokens,
                             const nn::Tensor &enc, bool train,
                             Rng *rng) const;

  // CTC projection of encoder states (H x V logits).
  nn::Tensor CtcLogitsT(const nn::Tensor &enc) const;
  Mat CtcLogProbs(const Mat &enc) const;  // eval, log-softmaxed

  // Joint attention/CTC loss for one utterance. `targets` excludes
  // sos/eos. Throws NumericError when CTC cannot align (H < labels).
  LossBreakdown ComputeLoss(const features::FeatureStack &stack,
                            const std::vector<int> &targets, bool train,
                            Rng *rng) const;

  // --- incremental decoding (eval mode) ---
  DecodeState BeginDecode(const Mat &enc) const;
  // Feeds one token and returns the next-token log-probabilities
  // (1 x V, normalized). `attn_row` receives the decoder's attention
  // over encoder frames for this step (head- and layer-averaged).
  Eigen::RowVectorXd DecodeStep(DecodeState *state, int token,
                                Eigen::RowVectorXd *attn_row) const;

  // Contract-checked convenience: runs the whole prefix (must start with
  // sos; eos may only be last) and returns the final step's log-probs.
  Eigen::RowVectorXd DecoderStepLogProbs(const std::vector<int> &prefix,
                                         const Mat &enc,
                                         Mat *attn_rows = nullptr) const;

  // --- checkpoint state ---
  std::vector<std::pair<std::string, Mat>> ExportTensors() const;
  void ImportTensors(const std::vector<std::pair<std::string, Mat>> &state);

 private:
  struct BilstmEncoder;
  struct LstmDecoder;

  nn::Tensor FuseStack(const features::FeatureStack &stack) const;

  ModelConfig cfg_;
  nn::ParamStore params_;
  nn::Tensor fusion_logits_;  // 1 x K when stack_layers > 1
  std::optional<features::FeatureNormalizer> normalizer_;

  // transformer/conformer front end
  nn::Linear sub_lin1_, sub_lin2_;
  std::vector<nn::TransformerEncoderLayer> enc_transformer_;
  std::vector<nn::ConformerLayer> enc_conformer_;
  nn::LayerNormLayer enc_final_ln_;

  // bilstm encoder
  std::vector<nn::LstmCell> enc_lstm_fwd_, enc_lstm_bwd_;

  // transformer decoder
  nn::EmbeddingLayer dec_emb_;
  std::vector<nn::TransformerDecoderLayer> dec_layers_;
  nn::LayerNormLayer dec_final_ln_;
  nn::Linear dec_out_;

  // lstm decoder
  nn::LstmCell dec_lstm_;
  nn::Linear dec_att_q_, dec_att_k_, dec_lstm_out_;

  nn::Linear ctc_head_;
};

// BiLSTM probe (encoder 4 x 512 bidirectional, decoder 1 x 512) scaled by
// the chosen preset.
std::unique_ptr<RecognizerModel> MakeProbeBilstm(const ModelConfig &cfg);

// The on-disk container lives in lyrec/checkpoint.h and is shared with
// neural LM checkpoints.
using lyrec::Checkpoint;
using lyrec::LoadCheckpoint;
using lyrec::SaveCheckpoint;

// Normalizer <-> named buffer encoding used inside checkpoints.
std::vector<std::pair<std::string, Mat>> NormalizerToBuffers(
    const features::FeatureNormalizer &norm);
std::optional<features::FeatureNormalizer> NormalizerFromBuffers(
    const std::vector<std::pair<std::string, Mat>> &buffers);

// Builds the model a checkpoint describes and restores its parameters
// and normalizer.
std::unique_ptr<RecognizerModel> ModelFromCheckpoint(const Checkpoint &ckpt);

}  // namespace models
}  // namespace lyrec

#endif  // LYREC_MODELS_H_

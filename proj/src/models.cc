// lyrec/models.cc
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

#include "lyrec/models.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "lyrec/io.h"

namespace lyrec {
namespace models {

using nn::Tensor;

namespace {

// Reserved token ids shared with corpus::Vocabulary.
constexpr int kBlankId = 0;
constexpr int kSosId = 1;
constexpr int kEosId = 2;

Tensor MaybeDropout(const Tensor &x, double p, Rng *rng) {
  return p > 0.0 ? nn::Dropout(x, p, rng) : x;
}

}  // namespace

std::string EncoderKindName(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kTransformer:
      return "transformer";
    case EncoderKind::kConformer:
      return "conformer";
    case EncoderKind::kBilstm:
      return "bilstm";
  }
  throw UsageError("unknown encoder kind");
}

EncoderKind EncoderKindFromName(const std::string &name) {
  if (name == "transformer") return EncoderKind::kTransformer;
  if (name == "conformer") return EncoderKind::kConformer;
  if (name == "bilstm") return EncoderKind::kBilstm;
  throw DataError("unknown encoder kind '" + name + "'");
}

void EncoderConfig::Validate() const {
  if (num_blocks < 1) throw DataError("encoder num_blocks must be >= 1");
  if (kind != EncoderKind::kBilstm) {
    if (attention_heads < 1 || model_dim % attention_heads != 0) {
      throw DataError("model_dim must be divisible by attention_heads");
    }
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw DataError("dropout must be in [0, 1)");
  }
  if (kind == EncoderKind::kConformer && conv_kernel % 2 == 0) {
    throw DataError("conformer conv_kernel must be odd");
  }
  if (kind == EncoderKind::kBilstm && lstm_hidden < 1) {
    throw DataError("lstm_hidden must be >= 1");
  }
}

void DecoderConfig::Validate() const {
  if (num_blocks < 1) throw DataError("decoder num_blocks must be >= 1");
  if (kind == DecoderKind::kTransformer &&
      (attention_heads < 1 || model_dim % attention_heads != 0)) {
    throw DataError("model_dim must be divisible by attention_heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw DataError("dropout must be in [0, 1)");
  }
}

void LossSpec::Validate() const {
  if (ctc_weight < 0.0 || ctc_weight > 1.0) {
    throw DataError("ctc_weight must be in [0, 1]");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw DataError("label_smoothing must be in [0, 1)");
  }
}

void ModelConfig::Validate() const {
  encoder.Validate();
  decoder.Validate();
  loss.Validate();
  if (vocab_size < 6) throw DataError("vocab_size too small (reserved ids)");
  if (input_dim < 1) throw DataError("input_dim must be >= 1");
  if (stack_layers < 1) throw DataError("stack_layers must be >= 1");
}

std::string ModelConfig::Serialize() const {
  std::string s;
  s += "encoder.kind = " + EncoderKindName(encoder.kind) + "\n";
  s += Strprintf("encoder.num_blocks = %d\n", encoder.num_blocks);
  s += Strprintf("encoder.attention_heads = %d\n", encoder.attention_heads);
  s += Strprintf("encoder.model_dim = %ld\n", encoder.model_dim);
  s += Strprintf("encoder.ff_units = %ld\n", encoder.ff_units);
  s += Strprintf("encoder.dropout = %.17g\n", encoder.dropout);
  s += Strprintf("encoder.conv_kernel = %d\n", encoder.conv_kernel);
  s += Strprintf("encoder.lstm_hidden = %d\n", encoder.lstm_hidden);
  s += std::string("decoder.kind = ") +
       (decoder.kind == DecoderKind::kTransformer ? "transformer" : "lstm") +
       "\n";
  s += Strprintf("decoder.num_blocks = %d\n", decoder.num_blocks);
  s += Strprintf("decoder.attention_heads = %d\n", decoder.attention_heads);
  s += Strprintf("decoder.model_dim = %ld\n", decoder.model_dim);
  s += Strprintf("decoder.ff_units = %ld\n", decoder.ff_units);
  s += Strprintf("decoder.dropout = %.17g\n", decoder.dropout);
  s += Strprintf("decoder.lstm_hidden = %d\n", decoder.lstm_hidden);
  s += Strprintf("loss.ctc_weight = %.17g\n", loss.ctc_weight);
  s += Strprintf("loss.label_smoothing = %.17g\n", loss.label_smoothing);
  s += Strprintf("vocab_size = %d\n", vocab_size);
  s += Strprintf("input_dim = %ld\n", input_dim);
  s += Strprintf("stack_layers = %d\n", stack_layers);
  s += Strprintf("seed = %llu\n", static_cast<unsigned long long>(seed));
  return s;
}

ModelConfig ModelConfig::Deserialize(const std::string &text) {
  ModelConfig cfg;
  for (const auto &[key, value] : ParseKeyValueLines(text)) {
    try {
      if (key == "encoder.kind") {
        cfg.encoder.kind = EncoderKindFromName(value);
      } else if (key == "encoder.num_blocks") {
        cfg.encoder.num_blocks = std::stoi(value);
      } else if (key == "encoder.attention_heads") {
        cfg.encoder.attention_heads = std::stoi(value);
      } else if (key == "encoder.model_dim") {
        cfg.encoder.model_dim = std::stol(value);
      } else if (key == "encoder.ff_units") {
        cfg.encoder.ff_units = std::stol(value);
      } else if (key == "encoder.dropout") {
        cfg.encoder.dropout = std::stod(value);
      } else if (key == "encoder.conv_kernel") {
        cfg.encoder.conv_kernel = std::stoi(value);
      } else if (key == "encoder.lstm_hidden") {
        cfg.encoder.lstm_hidden = std::stoi(value);
      } else if (key == "decoder.kind") {
        cfg.decoder.kind = value == "lstm" ? DecoderKind::kLstm
                                           : DecoderKind::kTransformer;
      } else if (key == "decoder.num_blocks") {
        cfg.decoder.num_blocks = std::stoi(value);
      } else if (key == "decoder.attention_heads") {
        cfg.decoder.attention_heads = std::stoi(value);
      } else if (key == "decoder.model_dim") {
        cfg.decoder.model_dim = std::stol(value);
      } else if (key == "decoder.ff_units") {
        cfg.decoder.ff_units = std::stol(value);
      } else if (key == "decoder.dropout") {
        cfg.decoder.dropout = std::stod(value);
      } else if (key == "decoder.lstm_hidden") {
        cfg.decoder.lstm_hidden = std::stoi(value);
      } else if (key == "loss.ctc_weight") {
        cfg.loss.ctc_weight = std::stod(value);
      } else if (key == "loss.label_smoothing") {
        cfg.loss.label_smoothing = std::stod(value);
      } else if (key == "vocab_size") {
        cfg.vocab_size = std::stoi(value);
      } else if (key == "input_dim") {
        cfg.input_dim = std::stol(value);
      } else if (key == "stack_layers") {
        cfg.stack_layers = std::stoi(value);
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else {
        throw FormatError("unknown model config key '" + key + "'");
      }
    } catch (const std::invalid_argument &) {
      throw FormatError("bad value for model config key '" + key + "'");
    }
  }
  cfg.Validate();
  return cfg;
}

ModelConfig MakePresetConfig(const std::string &preset, int vocab_size,
                             long input_dim, int stack_layers,
                             uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.input_dim = input_dim;
  cfg.stack_layers = stack_layers;
  cfg.seed = seed;
  if (preset == "baseline-transformer") {
    cfg.encoder = {EncoderKind::kTransformer, 12, 4, 256, 2048, 0.1, 15, 512};
    cfg.decoder = {DecoderKind::kTransformer, 6, 4, 256, 2048, 0.1, 512};
  } else if (preset == "conformer-downstream") {
    cfg.encoder = {EncoderKind::kConformer, 12, 8, 256, 2048, 0.1, 15, 512};
    cfg.decoder = {DecoderKind::kTransformer, 8, 4, 256, 2048, 0.1, 512};
  } else if (preset == "probe-bilstm") {
    cfg.encoder = {EncoderKind::kBilstm, 4, 1, 256, 2048, 0.1, 15, 512};
    cfg.decoder = {DecoderKind::kLstm, 1, 1, 256, 2048, 0.1, 512};
  } else if (preset == "desk-transformer") {
    cfg.encoder = {EncoderKind::kTransformer, 2, 4, 64, 256, 0.0, 7, 64};
    cfg.decoder = {DecoderKind::kTransformer, 2, 4, 64, 256, 0.0, 64};
  } else if (preset == "desk-conformer") {
    cfg.encoder = {EncoderKind::kConformer, 2, 4, 64, 256, 0.0, 7, 64};
    cfg.decoder = {DecoderKind::kTransformer, 2, 4, 64, 256, 0.0, 64};
  } else if (preset == "desk-probe") {
    cfg.encoder = {EncoderKind::kBilstm, 2, 1, 64, 256, 0.0, 7, 64};
    cfg.decoder = {DecoderKind::kLstm, 1, 1, 64, 256, 0.0, 64};
  } else {
    throw DataError("unknown model preset '" + preset + "'");
  }
  return cfg;
}

std::vector<std::string> PresetNames() {
  return {"baseline-transformer", "conformer-downstream", "probe-bilstm",
          "desk-transformer", "desk-conformer", "desk-probe"};
}

RecognizerModel::RecognizerModel(const ModelConfig &cfg) : cfg_(cfg) {
  cfg_.Validate();
  Rng rng(cfg_.seed);

  if (cfg_.stack_layers > 1) {
    fusion_logits_ =
        params_.Create("fusion.logits", Mat::Zero(1, cfg_.stack_layers));
  }

  const EncoderConfig &enc = cfg_.encoder;
  if (enc.kind == EncoderKind::kBilstm) {
    long in = cfg_.input_dim;
    for (int i = 0; i < enc.num_blocks; ++i) {
      enc_lstm_fwd_.emplace_back(&params_,
                                 Strprintf("encoder.layer%d.fwd", i), in,
                                 enc.lstm_hidden, &rng);
      enc_lstm_bwd_.emplace_back(&params_,
                                 Strprintf("encoder.layer%d.bwd", i), in,
                                 enc.lstm_hidden, &rng);
      in = 2L * enc.lstm_hidden;
    }
  } else {
    sub_lin1_ = nn::Linear(&params_, "encoder.sub1", 3 * cfg_.input_dim,
                           enc.model_dim, &rng);
    sub_lin2_ = nn::Linear(&params_, "encoder.sub2", 3 * enc.model_dim,
                           enc.model_dim, &rng);
    for (int i = 0; i < enc.num_blocks; ++i) {
      if (enc.kind == EncoderKind::kTransformer) {
        enc_transformer_.emplace_back(&params_,
                                      Strprintf("encoder.block%d", i),
                                      enc.model_dim, enc.attention_heads,
                                      enc.ff_units, &rng);
      } else {
        enc_conformer_.emplace_back(&params_, Strprintf("encoder.block%d", i),
                                    enc.model_dim, enc.attention_heads,
                                    enc.ff_units, enc.conv_kernel, &rng);
      }
    }
    if (enc.kind == EncoderKind::kTransformer) {
      enc_final_ln_ =
          nn::LayerNormLayer(&params_, "encoder.final_ln", enc.model_dim);
    }
  }

  const DecoderConfig &dec = cfg_.decoder;
  long enc_out = enc.OutputDim();
  if (dec.kind == DecoderKind::kTransformer) {
    if (enc_out != dec.model_dim) {
      throw DataError(
          "transformer decoder requires encoder output dim == model_dim");
    }
    dec_emb_ = nn::EmbeddingLayer(&params_, "decoder.emb", cfg_.vocab_size,
                                  dec.model_dim, &rng);
    for (int i = 0; i < dec.num_blocks; ++i) {
      dec_layers_.emplace_back(&params_, Strprintf("decoder.block%d", i),
                               dec.model_dim, dec.attention_heads,
                               dec.ff_units, &rng);
    }
    dec_final_ln_ =
        nn::LayerNormLayer(&params_, "decoder.final_ln", dec.model_dim);
    dec_out_ = nn::Linear(&params_, "decoder.out", dec.model_dim,
                          cfg_.vocab_size, &rng);
  } else {
    long hidden = dec.lstm_hidden;
    dec_emb_ = nn::EmbeddingLayer(&params_, "decoder.emb", cfg_.vocab_size,
                                  hidden, &rng);
    dec_lstm_ = nn::LstmCell(&params_, "decoder.lstm", hidden + enc_out,
                             hidden, &rng);
    dec_att_q_ = nn::Linear(&params_, "decoder.att_q", hidden, hidden, &rng);
    dec_att_k_ = nn::Linear(&params_, "decoder.att_k", enc_out, hidden, &rng);
    dec_lstm_out_ = nn::Linear(&params_, "decoder.out", hidden + enc_out,
                               cfg_.vocab_size, &rng);
  }

  ctc_head_ = nn::Linear(&params_, "ctc.head", enc_out, cfg_.vocab_size, &rng);
}

int RecognizerModel::NumEncoderBlocks() const {
  if (!enc_transformer_.empty()) return static_cast<int>(enc_transformer_.size());
  if (!enc_conformer_.empty()) return static_cast<int>(enc_conformer_.size());
  return static_cast<int>(enc_lstm_fwd_.size());
}

int RecognizerModel::NumDecoderBlocks() const {
  if (!dec_layers_.empty()) return static_cast<int>(dec_layers_.size());
  return cfg_.decoder.kind == DecoderKind::kLstm ? 1 : 0;
}

Vec RecognizerModel::FusionWeightValues() const {
  if (!HasFusion()) {
    Vec one(1);
    one << 1.0;
    return one;
  }
  Eigen::RowVectorXd logits = fusion_logits_.Value().row(0);
  Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp().transpose();
  return (e / e.sum()).matrix();
}

void RecognizerModel::SetNormalizer(const features::FeatureNormalizer &norm) {
  normalizer_ = norm;
}

Tensor RecognizerModel::FuseStack(const features::FeatureStack &stack) const {
  stack.Validate();
  if (stack.K() != cfg_.stack_layers) {
    throw DataError(Strprintf("stack has %d layers, model expects %d",
                              stack.K(), cfg_.stack_layers));
  }
  if (stack.D() != cfg_.input_dim) {
    throw DataError(Strprintf("stack dim %ld, model expects %ld", stack.D(),
                              cfg_.input_dim));
  }
  const features::FeatureStack *src = &stack;
  features::FeatureStack normed;
  if (normalizer_.has_value()) {
    normed = normalizer_->Apply(stack);
    src = &normed;
  }
  if (!HasFusion()) return Tensor::Constant(src->layers[0]);

  Tensor weights = nn::SoftmaxRows(fusion_logits_);
  Tensor fused;
  for (int i = 0; i < src->K(); ++i) {
    Tensor term =
        nn::ScaleByScalar(Tensor::Constant(src->layers[static_cast<size_t>(i)]),
                          nn::SliceCols(weights, i, 1));
    fused = i == 0 ? term : nn::Add(fused, term);
  }
  return fused;
}

Tensor RecognizerModel::EncodeT(const features::FeatureStack &stack,
                                bool train, Rng *rng) const {
  Tensor x = FuseStack(stack);
  const EncoderConfig &enc = cfg_.encoder;
  double p = train ? enc.dropout : 0.0;

  if (enc.kind == EncoderKind::kBilstm) {
    for (size_t layer = 0; layer < enc_lstm_fwd_.size(); ++layer) {
      std::vector<Tensor> fwd =
          nn::LstmRunSequence({enc_lstm_fwd_[layer]}, x, false);
      std::vector<Tensor> bwd =
          nn::LstmRunSequence({enc_lstm_bwd_[layer]}, x, true);
      std::vector<Tensor> rows;
      for (size_t t = 0; t < fwd.size(); ++t) {
        rows.push_back(nn::ConcatCols({fwd[t], bwd[t]}));
      }
      x = nn::ConcatRows(rows);
      if (p > 0.0) x = nn::Dropout(x, p, rng);
    }
    return x;
  }

  // Two strided unfold+linear stages; total subsampling factor 4.
  Tensor h1 = nn::Relu(sub_lin1_.Forward(nn::TimeUnfold(x, 3, 2, 1)));
  Tensor h2 = nn::Relu(sub_lin2_.Forward(nn::TimeUnfold(h1, 3, 2, 1)));
  Tensor pe = Tensor::Constant(
      nn::SinusoidalPositionalEncoding(h2.Rows(), enc.model_dim));
  Tensor y = MaybeDropout(nn::Add(h2, pe), p, rng);
  if (enc.kind == EncoderKind::kTransformer) {
    for (const auto &block : enc_transformer_) {
      y = block.Forward(y, p, rng);
    }
    y = enc_final_ln_.Forward(y);
  } else {
    for (const auto &block : enc_conformer_) {
      y = block.Forward(y, p, rng);
    }
  }
  return y;
}

Mat RecognizerModel::Encode(const features::FeatureStack &stack) const {
  nn::NoGradGuard guard;
  return EncodeT(stack, false, nullptr).Value();
}

Tensor RecognizerModel::DecoderForwardT(const std::vector<int> &input_tokens,
                                        const nn::Tensor &enc, bool train,
                                        Rng *rng) const {
  if (input_tokens.empty()) {
    throw UsageError("decoder input must contain at least sos");
  }
  const DecoderConfig &dec = cfg_.decoder;
  double p = train ? dec.dropout : 0.0;

  if (dec.kind == DecoderKind::kTransformer) {
    long t_len = static_cast<long>(input_tokens.size());
    Tensor x = nn::Scale(dec_emb_.Forward(input_tokens),
                         std::sqrt(static_cast<double>(dec.model_dim)));
    x = nn::Add(x, Tensor::Constant(nn::SinusoidalPositionalEncoding(
                       t_len, dec.model_dim)));
    x = MaybeDropout(x, p, rng);
    Mat mask = nn::CausalMask(t_len);
    for (const auto &layer : dec_layers_) {
      x = layer.Forward(x, enc, mask, p, rng);
    }
    return dec_out_.Forward(dec_final_ln_.Forward(x));
  }

  // Attention LSTM decoder (probe).
  long enc_out_dim = cfg_.encoder.OutputDim();
  long hidden = dec.lstm_hidden;
  Tensor enc_keys = dec_att_k_.Forward(enc);
  Tensor h = Tensor::Constant(Mat::Zero(1, hidden));
  Tensor c = Tensor::Constant(Mat::Zero(1, hidden));
  Tensor ctx = Tensor::Constant(Mat::Zero(1, enc_out_dim));
  double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::vector<Tensor> out_rows;
  for (int token : input_tokens) {
    Tensor e = MaybeDropout(dec_emb_.Forward({token}), p, rng);
    Tensor x_in = nn::ConcatCols({e, ctx});
    dec_lstm_.Step(x_in, &h, &c);
    Tensor q = dec_att_q_.Forward(h);
    Tensor attn =
        nn::SoftmaxRows(nn::Scale(nn::MatMul(q, nn::Transpose(enc_keys)),
                                  scale));
    ctx = nn::MatMul(attn, enc);
    out_rows.push_back(dec_lstm_out_.Forward(nn::ConcatCols({h, ctx})));
  }
  return nn::ConcatRows(out_rows);
}

Tensor RecognizerModel::CtcLogitsT(const nn::Tensor &enc) const {
  return ctc_head_.Forward(enc);
}

Mat RecognizerModel::CtcLogProbs(const Mat &enc) const {
  Mat logits = ctc_head_.Forward(enc);
  for (long r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    logits.row(r).array() -= lse;
  }
  return logits;
}

LossBreakdown RecognizerModel::ComputeLoss(const features::FeatureStack &stack,
                                           const std::vector<int> &targets,
                                           bool train, Rng *rng) const {
  if (targets.empty()) throw DataError("ComputeLoss: empty target");
  for (int y : targets) {
    if (y < 0 || y >= cfg_.vocab_size) {
      throw DataError("ComputeLoss: target id outside vocabulary");
    }
  }
  Tensor enc = EncodeT(stack, train, rng);

  std::vector<int> dec_in;
  dec_in.push_back(kSosId);
  dec_in.insert(dec_in.end(), targets.begin(), targets.end());
  std::vector<int> dec_tgt = targets;
  dec_tgt.push_back(kEosId);

  Tensor logits = DecoderForwardT(dec_in, enc, train, rng);
  Tensor att = nn::LabelSmoothedNll(nn::LogSoftmaxRows(logits), dec_tgt,
                                    cfg_.loss.label_smoothing);

  LossBreakdown out;
  double lambda = cfg_.loss.ctc_weight;
  if (lambda > 0.0) {
    // CtcLoss throws NumericError when enc rows cannot fit the labels.
    Tensor ctc = nn::CtcLoss(CtcLogitsT(enc), targets, kBlankId);
    // Per-token normalization keeps the two terms on one scale.
    ctc = nn::Scale(ctc, 1.0 / static_cast<double>(targets.size()));
    out.ctc_value = ctc.Value()(0, 0);
    out.total = nn::Add(nn::Scale(ctc, lambda), nn::Scale(att, 1.0 - lambda));
  } else {
    out.total = att;
  }
  out.attention_value = att.Value()(0, 0);
  out.total_value = out.total.Value()(0, 0);
  if (!std::isfinite(out.total_value)) {
    throw NumericError("ComputeLoss: non-finite loss");
  }
  return out;
}

DecodeState RecognizerModel::BeginDecode(const Mat &enc) const {
  DecodeState state;
  state.enc = enc;
  if (cfg_.decoder.kind == DecoderKind::kTransformer) {
    for (const auto &layer : dec_layers_) {
      state.layers.push_back(layer.BeginStepping(enc));
    }
  } else {
    state.h = Mat::Zero(1, cfg_.decoder.lstm_hidden);
    state.c = Mat::Zero(1, cfg_.decoder.lstm_hidden);
    state.context = Mat::Zero(1, cfg_.encoder.OutputDim());
    state.enc_keys = dec_att_k_.Forward(enc);
  }
  return state;
}

Eigen::RowVectorXd RecognizerModel::DecodeStep(DecodeState *state, int token,
                                               Eigen::RowVectorXd *attn_row)
    const {
  const DecoderConfig &dec = cfg_.decoder;
  Eigen::RowVectorXd logits;

  if (dec.kind == DecoderKind::kTransformer) {
    Mat x = dec_emb_.Row(token) *
            std::sqrt(static_cast<double>(dec.model_dim));
    x += nn::SinusoidalPositionalEncoding(1, dec.model_dim, state->step);
    Mat attn_sum;
    for (size_t l = 0; l < dec_layers_.size(); ++l) {
      Mat attn_mean;
      x = dec_layers_[l].StepEval(&state->layers[l], x,
                                  attn_row ? &attn_mean : nullptr);
      if (attn_row) {
        if (l == 0) {
          attn_sum = attn_mean;
        } else {
          attn_sum += attn_mean;
        }
      }
    }
    if (attn_row) {
      *attn_row = attn_sum.row(0) / static_cast<double>(dec_layers_.size());
    }
    ++state->step;
    logits = dec_out_.Forward(dec_final_ln_.Forward(x)).row(0);
  } else {
    long hidden = dec.lstm_hidden;
    Mat e = dec_emb_.Row(token);
    Mat x_in(1, e.cols() + state->context.cols());
    x_in << e, state->context;
    dec_lstm_.StepEval(x_in, &state->h, &state->c);
    Mat q = dec_att_q_.Forward(state->h);
    Eigen::RowVectorXd scores =
        (q * state->enc_keys.transpose()).row(0) /
        std::sqrt(static_cast<double>(hidden));
    double mx = scores.maxCoeff();
    Eigen::ArrayXd e_scores = (scores.array() - mx).exp().transpose();
    Eigen::RowVectorXd attn =
        (e_scores / e_scores.sum()).matrix().transpose();
    if (attn_row) *attn_row = attn;
    state->context = attn * state->enc;
    Mat h_ctx(1, hidden + state->context.cols());
    h_ctx << state->h, state->context;
    ++state->step;
    logits = dec_lstm_out_.Forward(h_ctx).row(0);
  }

  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

Eigen::RowVectorXd RecognizerModel::DecoderStepLogProbs(
    const std::vector<int> &prefix, const Mat &enc, Mat *attn_rows) const {
  if (prefix.empty() || prefix[0] != kSosId) {
    throw UsageError("decoder prefix must begin with sos");
  }
  for (size_t i = 1; i + 1 < prefix.size(); ++i) {
    if (prefix[i] == kEosId) {
      throw UsageError("decoder prefix contains eos mid-sequence");
    }
  }
  DecodeState state = BeginDecode(enc);
  Eigen::RowVectorXd logp;
  if (attn_rows) *attn_rows = Mat(0, enc.rows());
  for (size_t i = 0; i < prefix.size(); ++i) {
    Eigen::RowVectorXd attn;
    logp = DecodeStep(&state, prefix[i], attn_rows ? &attn : nullptr);
    if (attn_rows) {
      attn_rows->conservativeResize(attn_rows->rows() + 1, Eigen::NoChange);
      attn_rows->row(attn_rows->rows() - 1) = attn;
    }
  }
  return logp;
}

std::vector<std::pair<std::string, Mat>> RecognizerModel::ExportTensors()
    const {
  std::vector<std::pair<std::string, Mat>> out;
  for (size_t i = 0; i < params_.params().size(); ++i) {
    out.emplace_back(params_.names()[i], params_.params()[i].Value());
  }
  return out;
}

void RecognizerModel::ImportTensors(
    const std::vector<std::pair<std::string, Mat>> &state) {
  std::map<std::string, const Mat *> by_name;
  for (const auto &[name, mat] : state) by_name[name] = &mat;
  for (size_t i = 0; i < params_.params().size(); ++i) {
    auto it = by_name.find(params_.names()[i]);
    if (it == by_name.end()) {
      throw DataError("checkpoint missing parameter " + params_.names()[i]);
    }
    nn::Tensor p = params_.params()[i];
    if (it->second->rows() != p.Rows() || it->second->cols() != p.Cols()) {
      throw DataError("checkpoint shape mismatch for " + params_.names()[i]);
    }
    p.MutableValue() = *it->second;
  }
}

std::unique_ptr<RecognizerModel> MakeProbeBilstm(const ModelConfig &cfg) {
  if (cfg.encoder.kind != EncoderKind::kBilstm ||
      cfg.decoder.kind != DecoderKind::kLstm) {
    throw DataError("probe model requires bilstm encoder and lstm decoder");
  }
  return std::make_unique<RecognizerModel>(cfg);
}

std::vector<std::pair<std::string, Mat>> NormalizerToBuffers(
    const features::FeatureNormalizer &norm) {
  std::vector<std::pair<std::string, Mat>> out;
  for (size_t i = 0; i < norm.mean.size(); ++i) {
    out.emplace_back(Strprintf("norm.layer%zu.mean", i),
                     norm.mean[i].transpose());
    out.emplace_back(Strprintf("norm.layer%zu.inv_std", i),
                     norm.inv_std[i].transpose());
  }
  return out;
}

std::optional<features::FeatureNormalizer> NormalizerFromBuffers(
    const std::vector<std::pair<std::string, Mat>> &buffers) {
  features::FeatureNormalizer norm;
  for (size_t i = 0;; ++i) {
    const Mat *mean = nullptr, *inv_std = nullptr;
    std::string mean_name = Strprintf("norm.layer%zu.mean", i);
    std::string std_name = Strprintf("norm.layer%zu.inv_std", i);
    for (const auto &[name, mat] : buffers) {
      if (name == mean_name) mean = &mat;
      if (name == std_name) inv_std = &mat;
    }
    if (mean == nullptr || inv_std == nullptr) break;
    norm.mean.push_back(mean->row(0).transpose());
    norm.inv_std.push_back(inv_std->row(0).transpose());
  }
  if (norm.mean.empty()) return std::nullopt;
  return norm;
}

std::unique_ptr<RecognizerModel> ModelFromCheckpoint(const Checkpoint &ckpt) {
  ModelConfig cfg = ModelConfig::Deserialize(ckpt.config_text);
  auto model = std::make_unique<RecognizerModel>(cfg);
  model->ImportTensors(ckpt.tensors);
  auto norm = NormalizerFromBuffers(ckpt.buffers);
  if (norm.has_value()) model->SetNormalizer(*norm);
  return model;
}

}  // namespace models
}  // namespace lyrec

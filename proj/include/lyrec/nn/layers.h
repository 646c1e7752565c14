// lyrec/nn/layers.h
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

#ifndef LYREC_NN_LAYERS_H_
#define LYREC_NN_LAYERS_H_

#include <string>
#include <vector>

#include "lyrec/nn/tensor.h"

namespace lyrec {
namespace nn {

// Layers carry their parameters and expose two forwards: a Tensor path
// used for training and an Eigen path used by incremental decoding. Both
// read the same parameter storage, and tests pin them to each other.

// Absolute sinusoidal position encoding rows offset..offset+t-1.
Mat SinusoidalPositionalEncoding(long t, long d, long offset = 0);

// Rows 0..2t-2 encode signed relative offsets -(t-1)..t-1 in order
// c -> c - (t-1), matching the RelGather layout.
Mat RelativePositionalEncoding(long t, long d);

// 0 on and below the diagonal, -1e9 above (future positions).
Mat CausalMask(long t);

struct Linear {
  Tensor w, b;

  Linear() = default;
  Linear(ParamStore *store, const std::string &name, long in, long out,
         Rng *rng);
  Tensor Forward(const Tensor &x) const;
  Mat Forward(const Mat &x) const;
};

struct LayerNormLayer {
  Tensor gamma, beta;

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore *store, const std::string &name, long dim);
  Tensor Forward(const Tensor &x) const;
  Mat Forward(const Mat &x) const;
};

struct EmbeddingLayer {
  Tensor table;  // V x d

  EmbeddingLayer() = default;
  EmbeddingLayer(ParamStore *store, const std::string &name, long vocab,
                 long dim, Rng *rng);
  Tensor Forward(const std::vector<int> &ids) const;
  Mat Row(int id) const;
};

struct MultiHeadAttention {
  int num_heads = 0;
  long model_dim = 0;
  Linear wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore *store, const std::string &name, long dim,
                     int heads, Rng *rng);

  // Full-sequence attention; `add_mask` (Tq x Tk) is added to the raw
  // scores when present.
  Tensor Forward(const Tensor &queries, const Tensor &keys_values,
                 const Mat *add_mask, double dropout_p, Rng *rng) const;

  // Attention over already-projected keys/values (for cached decoding).
  // When `attn_mean` is non-null it receives the head-averaged attention
  // (Tq x Tk).
  Mat AttendEval(const Mat &queries_in, const Mat &k_proj, const Mat &v_proj,
                 const Mat *add_mask, Mat *attn_mean) const;
  Mat ProjectKeys(const Mat &x) const { return wk.Forward(x); }
  Mat ProjectValues(const Mat &x) const { return wv.Forward(x); }
  Mat ForwardEval(const Mat &queries, const Mat &keys_values,
                  const Mat *add_mask, Mat *attn_mean) const;
};

enum class Activation { kRelu, kSwish };

struct FeedForward {
  Linear lin1, lin2;
  Activation act = Activation::kRelu;

  FeedForward() = default;
  FeedForward(ParamStore *store, const std::string &name, long dim, long ff,
              Activation act, Rng *rng);
  Tensor Forward(const Tensor &x, double dropout_p, Rng *rng) const;
  Mat Forward(const Mat &x) const;
};

// Pre-norm transformer encoder layer.
struct TransformerEncoderLayer {
  LayerNormLayer ln_attn, ln_ff;
  MultiHeadAttention attn;
  FeedForward ff;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParamStore *store, const std::string &name, long dim,
                          int heads, long ff_units, Rng *rng);
  // `add_mask` makes the block causal (used by the transformer LM).
  Tensor Forward(const Tensor &x, double dropout_p, Rng *rng,
                 const Mat *add_mask = nullptr) const;
};

// Conformer block: half-step FFN, relative-position MHSA, convolution
// module, half-step FFN, final layer norm.
struct ConformerLayer {
  LayerNormLayer ln_ff1, ln_attn, ln_conv, ln_ff2, ln_final;
  FeedForward ff1, ff2;
  MultiHeadAttention attn;
  Linear pos_proj;       // projects relative position encodings
  Tensor pos_bias_u;     // 1 x dim content bias
  Tensor pos_bias_v;     // 1 x dim position bias
  Linear conv_pointwise1;  // dim -> 2*dim, gated
  Tensor conv_kernel;      // k x dim depthwise
  Tensor conv_gamma, conv_beta;
  Linear conv_pointwise2;

  ConformerLayer() = default;
  ConformerLayer(ParamStore *store, const std::string &name, long dim,
                 int heads, long ff_units, int kernel, Rng *rng);
  Tensor Forward(const Tensor &x, double dropout_p, Rng *rng) const;
};

// Pre-norm transformer decoder layer with cached evaluation stepping.
struct TransformerDecoderLayer {
  LayerNormLayer ln_self, ln_cross, ln_ff;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(ParamStore *store, const std::string &name, long dim,
                          int heads, long ff_units, Rng *rng);

  Tensor Forward(const Tensor &x, const Tensor &enc, const Mat &causal_mask,
                 double dropout_p, Rng *rng) const;

  struct StepState {
    Mat self_k, self_v;  // grow one row per emitted token
    Mat enc_k, enc_v;    // fixed projections of the encoder states
  };
  StepState BeginStepping(const Mat &enc) const;
  // One incremental row; `cross_attn_mean` receives the head-averaged
  // cross-attention over encoder frames when non-null.
  Mat StepEval(StepState *state, const Mat &x_row,
               Mat *cross_attn_mean) const;
};

// Single LSTM cell; gate layout [input, forget, cell, output].
struct LstmCell {
  Tensor wx, wh, b;
  long hidden = 0;

  LstmCell() = default;
  LstmCell(ParamStore *store, const std::string &name, long input, long hidden,
           Rng *rng);
  void Step(const Tensor &x_row, Tensor *h, Tensor *c) const;
  void StepEval(const Mat &x_row, Mat *h, Mat *c) const;
};

// Unidirectional multi-layer LSTM over a sequence (Tensor path).
std::vector<Tensor> LstmRunSequence(const std::vector<LstmCell> &cells,
                                    const Tensor &x, bool reverse);

}  // namespace nn
}  // namespace lyrec

#endif  // LYREC_NN_LAYERS_H_

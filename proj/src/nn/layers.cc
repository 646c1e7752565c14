// lyrec/nn/layers.cc
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

#include "lyrec/nn/layers.h"

#include <cmath>

namespace lyrec {
namespace nn {

namespace {

void FillSinusoid(Mat *pe, long row, double pos, long d) {
  for (long c = 0; c < d; ++c) {
    double exponent = static_cast<double>(2 * (c / 2)) / static_cast<double>(d);
    double angle = pos / std::pow(10000.0, exponent);
    (*pe)(row, c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
}

}  // namespace

Mat SinusoidalPositionalEncoding(long t, long d, long offset) {
  Mat pe(t, d);
  for (long r = 0; r < t; ++r) {
    FillSinusoid(&pe, r, static_cast<double>(offset + r), d);
  }
  return pe;
}

Mat RelativePositionalEncoding(long t, long d) {
  Mat pe(2 * t - 1, d);
  for (long c = 0; c < 2 * t - 1; ++c) {
    FillSinusoid(&pe, c, static_cast<double>(c - (t - 1)), d);
  }
  return pe;
}

Mat CausalMask(long t) {
  Mat mask = Mat::Zero(t, t);
  for (long i = 0; i < t; ++i) {
    for (long j = i + 1; j < t; ++j) mask(i, j) = -1e9;
  }
  return mask;
}

Linear::Linear(ParamStore *store, const std::string &name, long in, long out,
               Rng *rng) {
  w = store->Create(name + ".w", XavierUniform(in, out, rng));
  b = store->Create(name + ".b", Mat::Zero(1, out));
}

Tensor Linear::Forward(const Tensor &x) const {
  return AddRowVec(MatMul(x, w), b);
}

Mat Linear::Forward(const Mat &x) const {
  return (x * w.Value()).rowwise() + b.Value().row(0);
}

LayerNormLayer::LayerNormLayer(ParamStore *store, const std::string &name,
                               long dim) {
  gamma = store->Create(name + ".gamma", Mat::Ones(1, dim));
  beta = store->Create(name + ".beta", Mat::Zero(1, dim));
}

Tensor LayerNormLayer::Forward(const Tensor &x) const {
  return LayerNorm(x, gamma, beta);
}

Mat LayerNormLayer::Forward(const Mat &x) const {
  Mat out(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) {
    double mean = x.row(r).mean();
    double var = (x.row(r).array() - mean).square().mean();
    double inv = 1.0 / std::sqrt(var + 1e-6);
    out.row(r) = (((x.row(r).array() - mean) * inv) *
                  gamma.Value().row(0).array()) +
                 beta.Value().row(0).array();
  }
  return out;
}

EmbeddingLayer::EmbeddingLayer(ParamStore *store, const std::string &name,
                               long vocab, long dim, Rng *rng) {
  table = store->Create(name + ".table", XavierUniform(vocab, dim, rng));
}

Tensor EmbeddingLayer::Forward(const std::vector<int> &ids) const {
  return GatherRows(table, ids);
}

Mat EmbeddingLayer::Row(int id) const { return table.Value().row(id); }

MultiHeadAttention::MultiHeadAttention(ParamStore *store,
                                       const std::string &name, long dim,
                                       int heads, Rng *rng)
    : num_heads(heads), model_dim(dim) {
  if (heads < 1 || dim % heads != 0) {
    throw UsageError("attention dim must be divisible by heads");
  }
  wq = Linear(store, name + ".wq", dim, dim, rng);
  wk = Linear(store, name + ".wk", dim, dim, rng);
  wv = Linear(store, name + ".wv", dim, dim, rng);
  wo = Linear(store, name + ".wo", dim, dim, rng);
}

Tensor MultiHeadAttention::Forward(const Tensor &queries,
                                   const Tensor &keys_values,
                                   const Mat *add_mask, double dropout_p,
                                   Rng *rng) const {
  Tensor q = wq.Forward(queries);
  Tensor k = wk.Forward(keys_values);
  Tensor v = wv.Forward(keys_values);
  long dh = model_dim / num_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  for (int h = 0; h < num_heads; ++h) {
    Tensor qh = SliceCols(q, h * dh, dh);
    Tensor kh = SliceCols(k, h * dh, dh);
    Tensor vh = SliceCols(v, h * dh, dh);
    Tensor scores = Scale(MatMul(qh, Transpose(kh)), scale);
    if (add_mask != nullptr) {
      scores = Add(scores, Tensor::Constant(*add_mask));
    }
    Tensor attn = SoftmaxRows(scores);
    if (dropout_p > 0.0) attn = Dropout(attn, dropout_p, rng);
    heads.push_back(MatMul(attn, vh));
  }
  return wo.Forward(ConcatCols(heads));
}

Mat MultiHeadAttention::AttendEval(const Mat &queries_in, const Mat &k_proj,
                                   const Mat &v_proj, const Mat *add_mask,
                                   Mat *attn_mean) const {
  Mat q = wq.Forward(queries_in);
  long dh = model_dim / num_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat out(q.rows(), model_dim);
  if (attn_mean != nullptr) {
    *attn_mean = Mat::Zero(q.rows(), k_proj.rows());
  }
  for (int h = 0; h < num_heads; ++h) {
    Mat qh = q.middleCols(h * dh, dh);
    Mat kh = k_proj.middleCols(h * dh, dh);
    Mat vh = v_proj.middleCols(h * dh, dh);
    Mat scores = (qh * kh.transpose()) * scale;
    if (add_mask != nullptr) scores += *add_mask;
    for (long r = 0; r < scores.rows(); ++r) {
      double mx = scores.row(r).maxCoeff();
      Eigen::ArrayXd e = (scores.row(r).array() - mx).exp();
      scores.row(r) = (e / e.sum()).matrix();
    }
    if (attn_mean != nullptr) {
      *attn_mean += scores / static_cast<double>(num_heads);
    }
    out.middleCols(h * dh, dh) = scores * vh;
  }
  return wo.Forward(out);
}

Mat MultiHeadAttention::ForwardEval(const Mat &queries, const Mat &keys_values,
                                    const Mat *add_mask,
                                    Mat *attn_mean) const {
  return AttendEval(queries, ProjectKeys(keys_values),
                    ProjectValues(keys_values), add_mask, attn_mean);
}

FeedForward::FeedForward(ParamStore *store, const std::string &name, long dim,
                         long ff, Activation act_in, Rng *rng)
    : act(act_in) {
  lin1 = Linear(store, name + ".lin1", dim, ff, rng);
  lin2 = Linear(store, name + ".lin2", ff, dim, rng);
}

Tensor FeedForward::Forward(const Tensor &x, double dropout_p,
                            Rng *rng) const {
  Tensor hidden = lin1.Forward(x);
  hidden = act == Activation::kRelu ? Relu(hidden) : Swish(hidden);
  if (dropout_p > 0.0) hidden = Dropout(hidden, dropout_p, rng);
  return lin2.Forward(hidden);
}

Mat FeedForward::Forward(const Mat &x) const {
  Mat hidden = lin1.Forward(x);
  if (act == Activation::kRelu) {
    hidden = hidden.cwiseMax(0.0);
  } else {
    hidden = (hidden.array() / (1.0 + (-hidden.array()).exp())).matrix();
  }
  return lin2.Forward(hidden);
}

TransformerEncoderLayer::TransformerEncoderLayer(ParamStore *store,
                                                 const std::string &name,
                                                 long dim, int heads,
                                                 long ff_units, Rng *rng) {
  ln_attn = LayerNormLayer(store, name + ".ln_attn", dim);
  attn = MultiHeadAttention(store, name + ".attn", dim, heads, rng);
  ln_ff = LayerNormLayer(store, name + ".ln_ff", dim);
  ff = FeedForward(store, name + ".ff", dim, ff_units, Activation::kRelu, rng);
}

namespace {

Tensor MaybeDropout(const Tensor &x, double p, Rng *rng) {
  return p > 0.0 ? Dropout(x, p, rng) : x;
}

}  // namespace

Tensor TransformerEncoderLayer::Forward(const Tensor &x, double dropout_p,
                                        Rng *rng, const Mat *add_mask) const {
  Tensor xn = ln_attn.Forward(x);
  Tensor x1 =
      Add(x, MaybeDropout(attn.Forward(xn, xn, add_mask, dropout_p, rng),
                          dropout_p, rng));
  Tensor x2 = Add(x1, MaybeDropout(ff.Forward(ln_ff.Forward(x1), dropout_p,
                                              rng),
                                   dropout_p, rng));
  return x2;
}

ConformerLayer::ConformerLayer(ParamStore *store, const std::string &name,
                               long dim, int heads, long ff_units, int kernel,
                               Rng *rng) {
  if (kernel % 2 == 0) throw UsageError("conformer conv kernel must be odd");
  ln_ff1 = LayerNormLayer(store, name + ".ln_ff1", dim);
  ff1 = FeedForward(store, name + ".ff1", dim, ff_units, Activation::kSwish,
                    rng);
  ln_attn = LayerNormLayer(store, name + ".ln_attn", dim);
  attn = MultiHeadAttention(store, name + ".attn", dim, heads, rng);
  pos_proj = Linear(store, name + ".pos_proj", dim, dim, rng);
  pos_bias_u = store->Create(name + ".pos_bias_u", Mat::Zero(1, dim));
  pos_bias_v = store->Create(name + ".pos_bias_v", Mat::Zero(1, dim));
  ln_conv = LayerNormLayer(store, name + ".ln_conv", dim);
  conv_pointwise1 =
      Linear(store, name + ".conv_pw1", dim, 2 * dim, rng);
  conv_kernel =
      store->Create(name + ".conv_kernel",
                    UniformInit(kernel, dim, -0.1, 0.1, rng));
  conv_gamma = store->Create(name + ".conv_gamma", Mat::Ones(1, dim));
  conv_beta = store->Create(name + ".conv_beta", Mat::Zero(1, dim));
  conv_pointwise2 = Linear(store, name + ".conv_pw2", dim, dim, rng);
  ln_ff2 = LayerNormLayer(store, name + ".ln_ff2", dim);
  ff2 = FeedForward(store, name + ".ff2", dim, ff_units, Activation::kSwish,
                    rng);
  ln_final = LayerNormLayer(store, name + ".ln_final", dim);
}

Tensor ConformerLayer::Forward(const Tensor &x, double dropout_p,
                               Rng *rng) const {
  long dim = attn.model_dim;
  int heads = attn.num_heads;
  long dh = dim / heads;

  // Half-step feed-forward.
  Tensor t1 = Add(
      x, Scale(MaybeDropout(ff1.Forward(ln_ff1.Forward(x), dropout_p, rng),
                            dropout_p, rng),
               0.5));

  // Relative-position multi-head self-attention (Transformer-XL form).
  Tensor xn = ln_attn.Forward(t1);
  long t_len = xn.Rows();
  Tensor rel = Tensor::Constant(RelativePositionalEncoding(t_len, dim));
  Tensor rel_proj = pos_proj.Forward(rel);
  Tensor q = attn.wq.Forward(xn);
  Tensor k = attn.wk.Forward(xn);
  Tensor v = attn.wv.Forward(xn);
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads_out;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = SliceCols(q, h * dh, dh);
    Tensor kh = SliceCols(k, h * dh, dh);
    Tensor vh = SliceCols(v, h * dh, dh);
    Tensor rh = SliceCols(rel_proj, h * dh, dh);
    Tensor q_content = AddRowVec(qh, SliceCols(pos_bias_u, h * dh, dh));
    Tensor q_position = AddRowVec(qh, SliceCols(pos_bias_v, h * dh, dh));
    Tensor content = MatMul(q_content, Transpose(kh));
    Tensor position = RelGather(MatMul(q_position, Transpose(rh)));
    Tensor attn_rows = SoftmaxRows(Scale(Add(content, position), scale));
    if (dropout_p > 0.0) attn_rows = Dropout(attn_rows, dropout_p, rng);
    heads_out.push_back(MatMul(attn_rows, vh));
  }
  Tensor attn_out = attn.wo.Forward(ConcatCols(heads_out));
  Tensor t2 = Add(t1, MaybeDropout(attn_out, dropout_p, rng));

  // Convolution module.
  Tensor cn = ln_conv.Forward(t2);
  Tensor pw = conv_pointwise1.Forward(cn);
  Tensor glu = CMul(SliceCols(pw, 0, dim),
                    Sigmoid(SliceCols(pw, dim, dim)));
  Tensor dw = DepthwiseConv(glu, conv_kernel);
  Tensor conv_out = conv_pointwise2.Forward(
      Swish(ChannelNorm(dw, conv_gamma, conv_beta)));
  Tensor t3 = Add(t2, MaybeDropout(conv_out, dropout_p, rng));

  // Second half-step feed-forward, then the block norm.
  Tensor t4 = Add(
      t3, Scale(MaybeDropout(ff2.Forward(ln_ff2.Forward(t3), dropout_p, rng),
                             dropout_p, rng),
                0.5));
  return ln_final.Forward(t4);
}

TransformerDecoderLayer::TransformerDecoderLayer(ParamStore *store,
                                                 const std::string &name,
                                                 long dim, int heads,
                                                 long ff_units, Rng *rng) {
  ln_self = LayerNormLayer(store, name + ".ln_self", dim);
  self_attn = MultiHeadAttention(store, name + ".self_attn", dim, heads, rng);
  ln_cross = LayerNormLayer(store, name + ".ln_cross", dim);
  cross_attn =
      MultiHeadAttention(store, name + ".cross_attn", dim, heads, rng);
  ln_ff = LayerNormLayer(store, name + ".ln_ff", dim);
  ff = FeedForward(store, name + ".ff", dim, ff_units, Activation::kRelu, rng);
}

Tensor TransformerDecoderLayer::Forward(const Tensor &x, const Tensor &enc,
                                        const Mat &causal_mask,
                                        double dropout_p, Rng *rng) const {
  Tensor xn = ln_self.Forward(x);
  Tensor x1 = Add(
      x, MaybeDropout(self_attn.Forward(xn, xn, &causal_mask, dropout_p, rng),
                      dropout_p, rng));
  Tensor cn = ln_cross.Forward(x1);
  Tensor x2 = Add(
      x1, MaybeDropout(cross_attn.Forward(cn, enc, nullptr, dropout_p, rng),
                       dropout_p, rng));
  Tensor x3 = Add(x2, MaybeDropout(ff.Forward(ln_ff.Forward(x2), dropout_p,
                                              rng),
                                   dropout_p, rng));
  return x3;
}

TransformerDecoderLayer::StepState TransformerDecoderLayer::BeginStepping(
    const Mat &enc) const {
  StepState state;
  state.self_k = Mat(0, self_attn.model_dim);
  state.self_v = Mat(0, self_attn.model_dim);
  state.enc_k = cross_attn.ProjectKeys(enc);
  state.enc_v = cross_attn.ProjectValues(enc);
  return state;
}

Mat TransformerDecoderLayer::StepEval(StepState *state, const Mat &x_row,
                                      Mat *cross_attn_mean) const {
  Mat xn = ln_self.Forward(x_row);
  Mat k_new = self_attn.ProjectKeys(xn);
  Mat v_new = self_attn.ProjectValues(xn);
  state->self_k.conservativeResize(state->self_k.rows() + 1, Eigen::NoChange);
  state->self_k.row(state->self_k.rows() - 1) = k_new.row(0);
  state->self_v.conservativeResize(state->self_v.rows() + 1, Eigen::NoChange);
  state->self_v.row(state->self_v.rows() - 1) = v_new.row(0);

  Mat x1 = x_row + self_attn.AttendEval(xn, state->self_k, state->self_v,
                                        nullptr, nullptr);
  Mat cn = ln_cross.Forward(x1);
  Mat x2 = x1 + cross_attn.AttendEval(cn, state->enc_k, state->enc_v, nullptr,
                                      cross_attn_mean);
  Mat x3 = x2 + ff.Forward(ln_ff.Forward(x2));
  return x3;
}

LstmCell::LstmCell(ParamStore *store, const std::string &name, long input,
                   long hidden_in, Rng *rng)
    : hidden(hidden_in) {
  wx = store->Create(name + ".wx", XavierUniform(input, 4 * hidden, rng));
  wh = store->Create(name + ".wh", XavierUniform(hidden, 4 * hidden, rng));
  Mat bias = Mat::Zero(1, 4 * hidden);
  bias.middleCols(hidden, hidden).setConstant(1.0);  // forget gate bias
  b = store->Create(name + ".b", bias);
}

void LstmCell::Step(const Tensor &x_row, Tensor *h, Tensor *c) const {
  Tensor z = AddRowVec(Add(MatMul(x_row, wx), MatMul(*h, wh)), b);
  Tensor i = Sigmoid(SliceCols(z, 0, hidden));
  Tensor f = Sigmoid(SliceCols(z, hidden, hidden));
  Tensor g = Tanh(SliceCols(z, 2 * hidden, hidden));
  Tensor o = Sigmoid(SliceCols(z, 3 * hidden, hidden));
  *c = Add(CMul(f, *c), CMul(i, g));
  *h = CMul(o, Tanh(*c));
}

void LstmCell::StepEval(const Mat &x_row, Mat *h, Mat *c) const {
  Mat z = ((x_row * wx.Value() + *h * wh.Value()).rowwise() +
           b.Value().row(0));
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  Mat i = z.middleCols(0, hidden).unaryExpr(sigmoid);
  Mat f = z.middleCols(hidden, hidden).unaryExpr(sigmoid);
  Mat g = z.middleCols(2 * hidden, hidden).array().tanh().matrix();
  Mat o = z.middleCols(3 * hidden, hidden).unaryExpr(sigmoid);
  *c = f.cwiseProduct(*c) + i.cwiseProduct(g);
  *h = o.cwiseProduct(c->array().tanh().matrix());
}

std::vector<Tensor> LstmRunSequence(const std::vector<LstmCell> &cells,
                                    const Tensor &x, bool reverse) {
  long t_len = x.Rows();
  std::vector<Tensor> inputs;
  for (long t = 0; t < t_len; ++t) inputs.push_back(SliceRows(x, t, 1));

  std::vector<Tensor> outputs = inputs;
  for (const LstmCell &cell : cells) {
    Tensor h = Tensor::Constant(Mat::Zero(1, cell.hidden));
    Tensor c = Tensor::Constant(Mat::Zero(1, cell.hidden));
    std::vector<Tensor> next(static_cast<size_t>(t_len));
    for (long step = 0; step < t_len; ++step) {
      long t = reverse ? t_len - 1 - step : step;
      cell.Step(outputs[static_cast<size_t>(t)], &h, &c);
      next[static_cast<size_t>(t)] = h;
    }
    outputs = std::move(next);
  }
  return outputs;
}

}  // namespace nn
}  // namespace lyrec

// lyrec/nn/tensor.h
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

#ifndef LYREC_NN_TENSOR_H_
#define LYREC_NN_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lyrec/common.h"
#include "lyrec/matrix.h"

namespace lyrec {
namespace nn {

// Define-by-run reverse-mode autodiff over 2-D double matrices. Graphs
// here are utterance-sized, so nodes simply own their values and the
// backward closures capture whatever intermediate matrices they need.

struct Node {
  Mat value;
  Mat grad;  // allocated on first touch
  bool requires_grad = false;
  uint64_t order = 0;  // creation index; descending order is a topo order
  std::vector<std::shared_ptr<Node>> parents;
  // Reads `self.grad`, accumulates into parents' grads. Empty for leaves.
  std::function<void(Node &self)> backward;

  void EnsureGrad() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
  }
};

// Thread-local switch; when off, ops do not record backward closures.
class GradMode {
 public:
  static bool Enabled();
  static void Set(bool on);
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::Enabled()) { GradMode::Set(false); }
  ~NoGradGuard() { GradMode::Set(prev_); }

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor Constant(Mat value);
  static Tensor Param(Mat value);  // requires_grad = true

  bool Defined() const { return node_ != nullptr; }
  const Mat &Value() const { return node_->value; }
  Mat &MutableValue() { return node_->value; }
  const Mat &Grad() const { return node_->grad; }
  Mat &MutableGrad() { return node_->grad; }
  bool RequiresGrad() const { return node_ && node_->requires_grad; }
  long Rows() const { return node_->value.rows(); }
  long Cols() const { return node_->value.cols(); }

  void ZeroGrad() {
    if (node_) node_->grad = Mat::Zero(node_->value.rows(), node_->value.cols());
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Runs reverse accumulation from a 1x1 scalar root.
void Backward(const Tensor &root);

// --- primitive ops ---------------------------------------------------------

Tensor Add(const Tensor &a, const Tensor &b);           // same shape
Tensor AddRowVec(const Tensor &a, const Tensor &bias);  // bias is 1 x C
Tensor Sub(const Tensor &a, const Tensor &b);
Tensor CMul(const Tensor &a, const Tensor &b);  // elementwise
Tensor Scale(const Tensor &a, double s);
// s is 1x1; out = s * a. Gradient flows into both.
Tensor ScaleByScalar(const Tensor &a, const Tensor &s);
Tensor MatMul(const Tensor &a, const Tensor &b);
Tensor Transpose(const Tensor &a);
Tensor Tanh(const Tensor &a);
Tensor Sigmoid(const Tensor &a);
Tensor Relu(const Tensor &a);
Tensor Swish(const Tensor &a);  // x * sigmoid(x)
Tensor SoftmaxRows(const Tensor &a);
Tensor LogSoftmaxRows(const Tensor &a);
Tensor SliceCols(const Tensor &a, long c0, long n);
Tensor SliceRows(const Tensor &a, long r0, long n);
Tensor ConcatCols(const std::vector<Tensor> &parts);
Tensor ConcatRows(const std::vector<Tensor> &parts);
// Row gather; duplicate indices accumulate gradient.
Tensor GatherRows(const Tensor &a, const std::vector<int> &indices);
Tensor SumAll(const Tensor &a);   // 1x1
Tensor MeanAll(const Tensor &a);  // 1x1

// Row-wise layer normalization with learnable gain/bias (both 1 x C).
Tensor LayerNorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                 double eps = 1e-6);

// Column-wise (per-channel over time) normalization with learnable
// gain/bias (both 1 x C).
Tensor ChannelNorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                   double eps = 1e-6);

// Inverted dropout; identity when p == 0. Mask is drawn from `rng`.
Tensor Dropout(const Tensor &x, double p, Rng *rng);

// Sliding-window unfold over rows: output row t is the concatenation of
// input rows t*stride - pad .. t*stride - pad + k - 1 (zeros outside),
// giving shape T_out x (k * D) with T_out = (T + 2*pad - k) / stride + 1.
Tensor TimeUnfold(const Tensor &x, int kernel, int stride, int pad);

// Per-channel 1-D convolution over rows with same-length output;
// kernel is k x D, k odd.
Tensor DepthwiseConv(const Tensor &x, const Tensor &kernel);

// Relative-position gather: input is T x (2T-1) scores against relative
// offsets; output S[i][j] = M[i][T-1+i-j].
Tensor RelGather(const Tensor &m);

// Mean over rows of -(q . logp_row) where q is the label-smoothed target
// (1-eps on the target id, eps/V spread over all ids). `logp` is T x V of
// log-probabilities.
Tensor LabelSmoothedNll(const Tensor &logp, const std::vector<int> &targets,
                        double eps);

// CTC negative log-likelihood over `logits` (T x V, pre-softmax). Targets
// must not contain `blank`. Throws NumericError if the target cannot be
// aligned within T frames.
Tensor CtcLoss(const Tensor &logits, const std::vector<int> &targets,
               int blank);

// Plain-matrix CTC log-likelihood of a complete label sequence given
// per-frame log-probabilities; the oracle-side twin of CtcLoss.
double CtcLogLikelihood(const Mat &logp, const std::vector<int> &targets,
                        int blank);

// log(sum(exp(xs))) with empty input mapping to -inf.
double LogSumExp(const std::vector<double> &xs);
double LogAdd(double a, double b);

// --- parameter registry ----------------------------------------------------

// Named parameters of one model, in registration order. The order and
// names are stable for a fixed config, which is what checkpointing and
// the optimizer rely on.
class ParamStore {
 public:
  Tensor Create(const std::string &name, Mat init);
  const std::vector<Tensor> &params() const { return params_; }
  const std::vector<std::string> &names() const { return names_; }
  Tensor Find(const std::string &name) const;
  void ZeroGrad();
  long TotalSize() const;

 private:
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

// Seed-controlled initializers.
Mat XavierUniform(long rows, long cols, Rng *rng);
Mat UniformInit(long rows, long cols, double lo, double hi, Rng *rng);

}  // namespace nn
}  // namespace lyrec

#endif  // LYREC_NN_TENSOR_H_

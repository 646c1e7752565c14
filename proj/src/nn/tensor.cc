// lyrec/nn/tensor.cc
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

#include "lyrec/nn/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace lyrec {
namespace nn {

namespace {

std::atomic<uint64_t> g_node_counter{0};
thread_local bool g_grad_enabled = true;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::shared_ptr<Node> MakeNode(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->order = ++g_node_counter;
  return node;
}

bool TracksGrad(std::initializer_list<const Tensor *> inputs) {
  if (!GradMode::Enabled()) return false;
  for (const Tensor *t : inputs) {
    if (t->RequiresGrad()) return true;
  }
  return false;
}

// Builds the result node; records parents/backward only when some input
// needs gradient and grad mode is on.
Tensor MakeOp(Mat value, std::initializer_list<const Tensor *> inputs,
              std::function<void(Node &)> backward) {
  auto node = MakeNode(std::move(value));
  if (TracksGrad(inputs)) {
    node->requires_grad = true;
    for (const Tensor *t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(node);
}

void CheckSameShape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.Rows() != b.Rows() || a.Cols() != b.Cols()) {
    throw UsageError(Strprintf("%s: shape mismatch (%ldx%ld vs %ldx%ld)", op,
                               a.Rows(), a.Cols(), b.Rows(), b.Cols()));
  }
}

void AccumulateGrad(const std::shared_ptr<Node> &node, const Mat &g) {
  if (!node->requires_grad) return;
  node->EnsureGrad();
  node->grad += g;
}

}  // namespace

bool GradMode::Enabled() { return g_grad_enabled; }
void GradMode::Set(bool on) { g_grad_enabled = on; }

Tensor Tensor::Constant(Mat value) { return Tensor(MakeNode(std::move(value))); }

Tensor Tensor::Param(Mat value) {
  auto node = MakeNode(std::move(value));
  node->requires_grad = true;
  return Tensor(node);
}

void Backward(const Tensor &root) {
  if (!root.Defined() || root.Rows() != 1 || root.Cols() != 1) {
    throw UsageError("Backward expects a defined 1x1 scalar root");
  }
  if (!root.RequiresGrad()) return;

  // Collect the reachable grad-requiring subgraph.
  std::vector<std::shared_ptr<Node>> nodes;
  std::unordered_set<Node *> seen;
  std::vector<std::shared_ptr<Node>> stack{root.node()};
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    nodes.push_back(n);
    for (const auto &p : n->parents) {
      if (p->requires_grad) stack.push_back(p);
    }
  }
  // Creation order is a topological order of the DAG.
  std::sort(nodes.begin(), nodes.end(),
            [](const auto &a, const auto &b) { return a->order > b->order; });

  root.node()->EnsureGrad();
  root.node()->grad(0, 0) += 1.0;
  for (const auto &n : nodes) {
    if (n->backward) n->backward(*n);
  }
}

Tensor Add(const Tensor &a, const Tensor &b) {
  CheckSameShape(a, b, "Add");
  auto pa = a.node(), pb = b.node();
  return MakeOp(a.Value() + b.Value(), {&a, &b}, [pa, pb](Node &self) {
    AccumulateGrad(pa, self.grad);
    AccumulateGrad(pb, self.grad);
  });
}

Tensor AddRowVec(const Tensor &a, const Tensor &bias) {
  if (bias.Rows() != 1 || bias.Cols() != a.Cols()) {
    throw UsageError("AddRowVec: bias must be 1 x cols(a)");
  }
  auto pa = a.node(), pb = bias.node();
  Mat v = a.Value().rowwise() + bias.Value().row(0);
  return MakeOp(std::move(v), {&a, &bias}, [pa, pb](Node &self) {
    AccumulateGrad(pa, self.grad);
    AccumulateGrad(pb, self.grad.colwise().sum());
  });
}

Tensor Sub(const Tensor &a, const Tensor &b) {
  CheckSameShape(a, b, "Sub");
  auto pa = a.node(), pb = b.node();
  return MakeOp(a.Value() - b.Value(), {&a, &b}, [pa, pb](Node &self) {
    AccumulateGrad(pa, self.grad);
    AccumulateGrad(pb, -self.grad);
  });
}

Tensor CMul(const Tensor &a, const Tensor &b) {
  CheckSameShape(a, b, "CMul");
  auto pa = a.node(), pb = b.node();
  Mat va = a.Value(), vb = b.Value();
  return MakeOp(va.cwiseProduct(vb), {&a, &b}, [pa, pb, va, vb](Node &self) {
    AccumulateGrad(pa, self.grad.cwiseProduct(vb));
    AccumulateGrad(pb, self.grad.cwiseProduct(va));
  });
}

Tensor Scale(const Tensor &a, double s) {
  auto pa = a.node();
  return MakeOp(a.Value() * s, {&a}, [pa, s](Node &self) {
    AccumulateGrad(pa, self.grad * s);
  });
}

Tensor ScaleByScalar(const Tensor &a, const Tensor &s) {
  if (s.Rows() != 1 || s.Cols() != 1) {
    throw UsageError("ScaleByScalar: scale must be 1x1");
  }
  auto pa = a.node(), ps = s.node();
  Mat va = a.Value();
  double sv = s.Value()(0, 0);
  return MakeOp(va * sv, {&a, &s}, [pa, ps, va, sv](Node &self) {
    AccumulateGrad(pa, self.grad * sv);
    Mat gs(1, 1);
    gs(0, 0) = self.grad.cwiseProduct(va).sum();
    AccumulateGrad(ps, gs);
  });
}

Tensor MatMul(const Tensor &a, const Tensor &b) {
  if (a.Cols() != b.Rows()) {
    throw UsageError(Strprintf("MatMul: inner dims differ (%ld vs %ld)",
                               a.Cols(), b.Rows()));
  }
  auto pa = a.node(), pb = b.node();
  Mat va = a.Value(), vb = b.Value();
  return MakeOp(va * vb, {&a, &b}, [pa, pb, va, vb](Node &self) {
    AccumulateGrad(pa, self.grad * vb.transpose());
    AccumulateGrad(pb, va.transpose() * self.grad);
  });
}

Tensor Transpose(const Tensor &a) {
  auto pa = a.node();
  return MakeOp(a.Value().transpose(), {&a}, [pa](Node &self) {
    AccumulateGrad(pa, self.grad.transpose());
  });
}

Tensor Tanh(const Tensor &a) {
  auto pa = a.node();
  Mat v = a.Value().array().tanh().matrix();
  return MakeOp(v, {&a}, [pa, v](Node &self) {
    AccumulateGrad(pa,
                   self.grad.cwiseProduct((1.0 - v.array().square()).matrix()));
  });
}

Tensor Sigmoid(const Tensor &a) {
  auto pa = a.node();
  Mat v = (1.0 / (1.0 + (-a.Value().array()).exp())).matrix();
  return MakeOp(v, {&a}, [pa, v](Node &self) {
    Mat d = (v.array() * (1.0 - v.array())).matrix();
    AccumulateGrad(pa, self.grad.cwiseProduct(d));
  });
}

Tensor Relu(const Tensor &a) {
  auto pa = a.node();
  Mat v = a.Value().cwiseMax(0.0);
  Mat mask = (a.Value().array() > 0.0).cast<double>().matrix();
  return MakeOp(std::move(v), {&a}, [pa, mask](Node &self) {
    AccumulateGrad(pa, self.grad.cwiseProduct(mask));
  });
}

Tensor Swish(const Tensor &a) {
  auto pa = a.node();
  Mat x = a.Value();
  Mat sig = (1.0 / (1.0 + (-x.array()).exp())).matrix();
  Mat v = x.cwiseProduct(sig);
  return MakeOp(v, {&a}, [pa, x, sig](Node &self) {
    Mat d = (sig.array() + x.array() * sig.array() * (1.0 - sig.array()))
                .matrix();
    AccumulateGrad(pa, self.grad.cwiseProduct(d));
  });
}

namespace {

Mat SoftmaxRowsValue(const Mat &x) {
  Mat out(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) {
    double mx = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - mx).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

}  // namespace

Tensor SoftmaxRows(const Tensor &a) {
  auto pa = a.node();
  Mat v = SoftmaxRowsValue(a.Value());
  return MakeOp(v, {&a}, [pa, v](Node &self) {
    Mat g(v.rows(), v.cols());
    for (long r = 0; r < v.rows(); ++r) {
      double dot = self.grad.row(r).dot(v.row(r));
      g.row(r) = v.row(r).cwiseProduct(
          (self.grad.row(r).array() - dot).matrix());
    }
    AccumulateGrad(pa, g);
  });
}

Tensor LogSoftmaxRows(const Tensor &a) {
  auto pa = a.node();
  const Mat &x = a.Value();
  Mat v(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) {
    double mx = x.row(r).maxCoeff();
    double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    v.row(r) = (x.row(r).array() - lse).matrix();
  }
  return MakeOp(v, {&a}, [pa, v](Node &self) {
    Mat g(v.rows(), v.cols());
    for (long r = 0; r < v.rows(); ++r) {
      double gsum = self.grad.row(r).sum();
      g.row(r) = self.grad.row(r) -
                 (v.row(r).array().exp() * gsum).matrix();
    }
    AccumulateGrad(pa, g);
  });
}

Tensor SliceCols(const Tensor &a, long c0, long n) {
  if (c0 < 0 || n < 1 || c0 + n > a.Cols()) {
    throw UsageError("SliceCols: range out of bounds");
  }
  auto pa = a.node();
  long rows = a.Rows(), cols = a.Cols();
  return MakeOp(a.Value().middleCols(c0, n), {&a},
                [pa, c0, n, rows, cols](Node &self) {
                  Mat g = Mat::Zero(rows, cols);
                  g.middleCols(c0, n) = self.grad;
                  AccumulateGrad(pa, g);
                });
}

Tensor SliceRows(const Tensor &a, long r0, long n) {
  if (r0 < 0 || n < 1 || r0 + n > a.Rows()) {
    throw UsageError("SliceRows: range out of bounds");
  }
  auto pa = a.node();
  long rows = a.Rows(), cols = a.Cols();
  return MakeOp(a.Value().middleRows(r0, n), {&a},
                [pa, r0, n, rows, cols](Node &self) {
                  Mat g = Mat::Zero(rows, cols);
                  g.middleRows(r0, n) = self.grad;
                  AccumulateGrad(pa, g);
                });
}

Tensor ConcatCols(const std::vector<Tensor> &parts) {
  if (parts.empty()) throw UsageError("ConcatCols: empty input");
  long rows = parts[0].Rows(), cols = 0;
  for (const Tensor &p : parts) {
    if (p.Rows() != rows) throw UsageError("ConcatCols: row mismatch");
    cols += p.Cols();
  }
  Mat v(rows, cols);
  long off = 0;
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<long> widths;
  for (const Tensor &p : parts) {
    v.middleCols(off, p.Cols()) = p.Value();
    off += p.Cols();
    nodes.push_back(p.node());
    widths.push_back(p.Cols());
  }
  std::vector<const Tensor *> ptrs;
  for (const Tensor &p : parts) ptrs.push_back(&p);

  auto node = MakeNode(std::move(v));
  bool track = GradMode::Enabled();
  bool any = false;
  if (track) {
    for (const Tensor &p : parts) any = any || p.RequiresGrad();
  }
  if (track && any) {
    node->requires_grad = true;
    node->parents = nodes;
    node->backward = [nodes, widths](Node &self) {
      long o = 0;
      for (size_t i = 0; i < nodes.size(); ++i) {
        AccumulateGrad(nodes[i], self.grad.middleCols(o, widths[i]));
        o += widths[i];
      }
    };
  }
  return Tensor(node);
}

Tensor ConcatRows(const std::vector<Tensor> &parts) {
  if (parts.empty()) throw UsageError("ConcatRows: empty input");
  long cols = parts[0].Cols(), rows = 0;
  for (const Tensor &p : parts) {
    if (p.Cols() != cols) throw UsageError("ConcatRows: col mismatch");
    rows += p.Rows();
  }
  Mat v(rows, cols);
  long off = 0;
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<long> heights;
  for (const Tensor &p : parts) {
    v.middleRows(off, p.Rows()) = p.Value();
    off += p.Rows();
    nodes.push_back(p.node());
    heights.push_back(p.Rows());
  }
  auto node = MakeNode(std::move(v));
  bool any = false;
  if (GradMode::Enabled()) {
    for (const Tensor &p : parts) any = any || p.RequiresGrad();
  }
  if (any) {
    node->requires_grad = true;
    node->parents = nodes;
    node->backward = [nodes, heights](Node &self) {
      long o = 0;
      for (size_t i = 0; i < nodes.size(); ++i) {
        AccumulateGrad(nodes[i], self.grad.middleRows(o, heights[i]));
        o += heights[i];
      }
    };
  }
  return Tensor(node);
}

Tensor GatherRows(const Tensor &a, const std::vector<int> &indices) {
  for (int idx : indices) {
    if (idx < 0 || idx >= a.Rows()) {
      throw UsageError("GatherRows: index out of range");
    }
  }
  auto pa = a.node();
  Mat v(static_cast<long>(indices.size()), a.Cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    v.row(static_cast<long>(i)) = a.Value().row(indices[i]);
  }
  long rows = a.Rows(), cols = a.Cols();
  return MakeOp(std::move(v), {&a}, [pa, indices, rows, cols](Node &self) {
    Mat g = Mat::Zero(rows, cols);
    for (size_t i = 0; i < indices.size(); ++i) {
      g.row(indices[i]) += self.grad.row(static_cast<long>(i));
    }
    AccumulateGrad(pa, g);
  });
}

Tensor SumAll(const Tensor &a) {
  auto pa = a.node();
  Mat v(1, 1);
  v(0, 0) = a.Value().sum();
  long rows = a.Rows(), cols = a.Cols();
  return MakeOp(std::move(v), {&a}, [pa, rows, cols](Node &self) {
    AccumulateGrad(pa, Mat::Constant(rows, cols, self.grad(0, 0)));
  });
}

Tensor MeanAll(const Tensor &a) {
  return Scale(SumAll(a), 1.0 / static_cast<double>(a.Rows() * a.Cols()));
}

Tensor LayerNorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                 double eps) {
  if (gamma.Rows() != 1 || gamma.Cols() != x.Cols() || beta.Rows() != 1 ||
      beta.Cols() != x.Cols()) {
    throw UsageError("LayerNorm: gamma/beta must be 1 x cols(x)");
  }
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  const Mat &xv = x.Value();
  long rows = xv.rows(), cols = xv.cols();
  Mat xhat(rows, cols);
  Vec inv_sigma(rows);
  for (long r = 0; r < rows; ++r) {
    double mean = xv.row(r).mean();
    double var = (xv.row(r).array() - mean).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    xhat.row(r) = ((xv.row(r).array() - mean) * is).matrix();
  }
  Mat v = (xhat.array().rowwise() * gamma.Value().row(0).array()).matrix();
  v.rowwise() += beta.Value().row(0);
  Mat gv = gamma.Value();
  return MakeOp(std::move(v), {&x, &gamma, &beta},
                [px, pg, pb, xhat, inv_sigma, gv](Node &self) {
                  long rows = xhat.rows(), cols = xhat.cols();
                  Mat dx(rows, cols);
                  for (long r = 0; r < rows; ++r) {
                    Eigen::RowVectorXd dxhat =
                        self.grad.row(r).cwiseProduct(gv.row(0));
                    double m1 = dxhat.mean();
                    double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                    dx.row(r) = inv_sigma(r) *
                                (dxhat.array() - m1 -
                                 xhat.row(r).array() * m2)
                                    .matrix();
                  }
                  AccumulateGrad(px, dx);
                  AccumulateGrad(pg,
                                 self.grad.cwiseProduct(xhat).colwise().sum());
                  AccumulateGrad(pb, self.grad.colwise().sum());
                });
}

Tensor ChannelNorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                   double eps) {
  if (gamma.Rows() != 1 || gamma.Cols() != x.Cols() || beta.Rows() != 1 ||
      beta.Cols() != x.Cols()) {
    throw UsageError("ChannelNorm: gamma/beta must be 1 x cols(x)");
  }
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  const Mat &xv = x.Value();
  long rows = xv.rows(), cols = xv.cols();
  Mat xhat(rows, cols);
  Vec inv_sigma(cols);
  for (long c = 0; c < cols; ++c) {
    double mean = xv.col(c).mean();
    double var = (xv.col(c).array() - mean).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(c) = is;
    xhat.col(c) = ((xv.col(c).array() - mean) * is).matrix();
  }
  Mat v = (xhat.array().rowwise() * gamma.Value().row(0).array()).matrix();
  v.rowwise() += beta.Value().row(0);
  Mat gv = gamma.Value();
  return MakeOp(std::move(v), {&x, &gamma, &beta},
                [px, pg, pb, xhat, inv_sigma, gv](Node &self) {
                  long rows = xhat.rows(), cols = xhat.cols();
                  Mat dx(rows, cols);
                  for (long c = 0; c < cols; ++c) {
                    Vec dxhat = self.grad.col(c) * gv(0, c);
                    double m1 = dxhat.mean();
                    double m2 = dxhat.cwiseProduct(xhat.col(c)).mean();
                    dx.col(c) = inv_sigma(c) *
                                (dxhat.array() - m1 -
                                 xhat.col(c).array() * m2)
                                    .matrix();
                  }
                  AccumulateGrad(px, dx);
                  AccumulateGrad(pg,
                                 self.grad.cwiseProduct(xhat).colwise().sum());
                  AccumulateGrad(pb, self.grad.colwise().sum());
                });
}

Tensor Dropout(const Tensor &x, double p, Rng *rng) {
  if (p < 0.0 || p >= 1.0) throw UsageError("Dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  if (rng == nullptr) throw UsageError("Dropout: rng required when p > 0");
  double keep = 1.0 - p;
  Mat mask(x.Rows(), x.Cols());
  for (long r = 0; r < mask.rows(); ++r) {
    for (long c = 0; c < mask.cols(); ++c) {
      mask(r, c) = rng->Uniform() < keep ? 1.0 / keep : 0.0;
    }
  }
  auto px = x.node();
  return MakeOp(x.Value().cwiseProduct(mask), {&x}, [px, mask](Node &self) {
    AccumulateGrad(px, self.grad.cwiseProduct(mask));
  });
}

Tensor TimeUnfold(const Tensor &x, int kernel, int stride, int pad) {
  if (kernel < 1 || stride < 1 || pad < 0) {
    throw UsageError("TimeUnfold: bad kernel/stride/pad");
  }
  long t_in = x.Rows(), d = x.Cols();
  long t_out = (t_in + 2 * pad - kernel) / stride + 1;
  if (t_out < 1) throw UsageError("TimeUnfold: output would be empty");
  Mat v = Mat::Zero(t_out, kernel * d);
  for (long t = 0; t < t_out; ++t) {
    for (int j = 0; j < kernel; ++j) {
      long src = t * stride + j - pad;
      if (src < 0 || src >= t_in) continue;
      v.block(t, j * d, 1, d) = x.Value().row(src);
    }
  }
  auto px = x.node();
  return MakeOp(std::move(v), {&x},
                [px, kernel, stride, pad, t_in, d, t_out](Node &self) {
                  Mat g = Mat::Zero(t_in, d);
                  for (long t = 0; t < t_out; ++t) {
                    for (int j = 0; j < kernel; ++j) {
                      long src = t * stride + j - pad;
                      if (src < 0 || src >= t_in) continue;
                      g.row(src) += self.grad.block(t, j * d, 1, d);
                    }
                  }
                  AccumulateGrad(px, g);
                });
}

Tensor DepthwiseConv(const Tensor &x, const Tensor &kernel) {
  long k = kernel.Rows(), d = x.Cols();
  if (kernel.Cols() != d) throw UsageError("DepthwiseConv: channel mismatch");
  if (k % 2 == 0) throw UsageError("DepthwiseConv: kernel must be odd");
  long t_in = x.Rows();
  long pad = (k - 1) / 2;
  Mat xv = x.Value(), kv = kernel.Value();
  Mat v = Mat::Zero(t_in, d);
  for (long t = 0; t < t_in; ++t) {
    for (long j = 0; j < k; ++j) {
      long src = t + j - pad;
      if (src < 0 || src >= t_in) continue;
      v.row(t) += xv.row(src).cwiseProduct(kv.row(j));
    }
  }
  auto px = x.node(), pk = kernel.node();
  return MakeOp(std::move(v), {&x, &kernel},
                [px, pk, xv, kv, t_in, k, d, pad](Node &self) {
                  Mat gx = Mat::Zero(t_in, d);
                  Mat gk = Mat::Zero(k, d);
                  for (long t = 0; t < t_in; ++t) {
                    for (long j = 0; j < k; ++j) {
                      long src = t + j - pad;
                      if (src < 0 || src >= t_in) continue;
                      gx.row(src) += self.grad.row(t).cwiseProduct(kv.row(j));
                      gk.row(j) += self.grad.row(t).cwiseProduct(xv.row(src));
                    }
                  }
                  AccumulateGrad(px, gx);
                  AccumulateGrad(pk, gk);
                });
}

Tensor RelGather(const Tensor &m) {
  long t = m.Rows();
  if (m.Cols() != 2 * t - 1) {
    throw UsageError("RelGather: input must be T x (2T-1)");
  }
  Mat v(t, t);
  for (long i = 0; i < t; ++i) {
    for (long j = 0; j < t; ++j) {
      v(i, j) = m.Value()(i, t - 1 + i - j);
    }
  }
  auto pm = m.node();
  return MakeOp(std::move(v), {&m}, [pm, t](Node &self) {
    Mat g = Mat::Zero(t, 2 * t - 1);
    for (long i = 0; i < t; ++i) {
      for (long j = 0; j < t; ++j) {
        g(i, t - 1 + i - j) += self.grad(i, j);
      }
    }
    AccumulateGrad(pm, g);
  });
}

Tensor LabelSmoothedNll(const Tensor &logp, const std::vector<int> &targets,
                        double eps) {
  long t = logp.Rows(), v = logp.Cols();
  if (static_cast<long>(targets.size()) != t) {
    throw UsageError("LabelSmoothedNll: target length mismatch");
  }
  if (eps < 0.0 || eps >= 1.0) {
    throw UsageError("LabelSmoothedNll: eps must be in [0, 1)");
  }
  for (int y : targets) {
    if (y < 0 || y >= v) throw UsageError("LabelSmoothedNll: target id range");
  }
  double uniform = eps / static_cast<double>(v);
  double loss = 0.0;
  for (long r = 0; r < t; ++r) {
    loss -= (1.0 - eps) * logp.Value()(r, targets[static_cast<size_t>(r)]);
    loss -= uniform * logp.Value().row(r).sum();
  }
  loss /= static_cast<double>(t);

  auto pl = logp.node();
  Mat out(1, 1);
  out(0, 0) = loss;
  return MakeOp(std::move(out), {&logp},
                [pl, targets, eps, uniform, t, v](Node &self) {
                  double go = self.grad(0, 0);
                  Mat g = Mat::Constant(
                      t, v, -go * uniform / static_cast<double>(t));
                  for (long r = 0; r < t; ++r) {
                    g(r, targets[static_cast<size_t>(r)]) -=
                        go * (1.0 - eps) / static_cast<double>(t);
                  }
                  AccumulateGrad(pl, g);
                });
}

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double LogSumExp(const std::vector<double> &xs) {
  double acc = kNegInf;
  for (double x : xs) acc = LogAdd(acc, x);
  return acc;
}

namespace {

// Extended CTC label sequence: blanks interleaved around the targets.
std::vector<int> CtcExtendedLabels(const std::vector<int> &targets,
                                   int blank) {
  std::vector<int> ext;
  ext.push_back(blank);
  for (int y : targets) {
    ext.push_back(y);
    ext.push_back(blank);
  }
  return ext;
}

// Alpha recursion over log-probs; returns alpha (T x S) and the final
// log-likelihood.
double CtcAlpha(const Mat &logp, const std::vector<int> &ext, int blank,
                Mat *alpha_out) {
  long t_len = logp.rows();
  long s_len = static_cast<long>(ext.size());
  Mat alpha = Mat::Constant(t_len, s_len, kNegInf);
  alpha(0, 0) = logp(0, ext[0]);
  if (s_len > 1) alpha(0, 1) = logp(0, ext[1]);
  for (long t = 1; t < t_len; ++t) {
    for (long s = 0; s < s_len; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = LogAdd(acc, alpha(t - 1, s - 1));
      if (s >= 2 && ext[static_cast<size_t>(s)] != blank &&
          ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)]) {
        acc = LogAdd(acc, alpha(t - 1, s - 2));
      }
      alpha(t, s) = acc + logp(t, ext[static_cast<size_t>(s)]);
    }
  }
  double ll = alpha(t_len - 1, s_len - 1);
  if (s_len > 1) ll = LogAdd(ll, alpha(t_len - 1, s_len - 2));
  if (alpha_out != nullptr) *alpha_out = std::move(alpha);
  return ll;
}

}  // namespace

double CtcLogLikelihood(const Mat &logp, const std::vector<int> &targets,
                        int blank) {
  std::vector<int> ext = CtcExtendedLabels(targets, blank);
  return CtcAlpha(logp, ext, blank, nullptr);
}

Tensor CtcLoss(const Tensor &logits, const std::vector<int> &targets,
               int blank) {
  long t_len = logits.Rows(), v = logits.Cols();
  if (blank < 0 || blank >= v) throw UsageError("CtcLoss: blank out of range");
  for (int y : targets) {
    if (y < 0 || y >= v) throw UsageError("CtcLoss: target id out of range");
    if (y == blank) throw UsageError("CtcLoss: targets may not contain blank");
  }
  // Minimum frames: one per label plus one per repeated adjacent pair.
  long need = static_cast<long>(targets.size());
  for (size_t i = 1; i < targets.size(); ++i) {
    if (targets[i] == targets[i - 1]) ++need;
  }
  if (t_len < need || targets.empty()) {
    throw NumericError(Strprintf(
        "CtcLoss: %zu labels need at least %ld frames, have %ld",
        targets.size(), need, t_len));
  }

  // Internal log-softmax; the op consumes raw logits.
  Mat logp(t_len, v);
  for (long r = 0; r < t_len; ++r) {
    double mx = logits.Value().row(r).maxCoeff();
    double lse =
        mx + std::log((logits.Value().row(r).array() - mx).exp().sum());
    logp.row(r) = (logits.Value().row(r).array() - lse).matrix();
  }

  std::vector<int> ext = CtcExtendedLabels(targets, blank);
  long s_len = static_cast<long>(ext.size());
  Mat alpha;
  double ll = CtcAlpha(logp, ext, blank, &alpha);
  if (!std::isfinite(ll)) {
    throw NumericError("CtcLoss: no feasible alignment");
  }

  // Beta excludes the emission at t, so alpha + beta is the full path mass.
  Mat beta = Mat::Constant(t_len, s_len, kNegInf);
  beta(t_len - 1, s_len - 1) = 0.0;
  if (s_len > 1) beta(t_len - 1, s_len - 2) = 0.0;
  for (long t = t_len - 2; t >= 0; --t) {
    for (long s = 0; s < s_len; ++s) {
      double acc = beta(t + 1, s) + logp(t + 1, ext[static_cast<size_t>(s)]);
      if (s + 1 < s_len) {
        acc = LogAdd(acc,
                     beta(t + 1, s + 1) +
                         logp(t + 1, ext[static_cast<size_t>(s + 1)]));
      }
      if (s + 2 < s_len && ext[static_cast<size_t>(s + 2)] != blank &&
          ext[static_cast<size_t>(s + 2)] != ext[static_cast<size_t>(s)]) {
        acc = LogAdd(acc,
                     beta(t + 1, s + 2) +
                         logp(t + 1, ext[static_cast<size_t>(s + 2)]));
      }
      beta(t, s) = acc;
    }
  }

  // grad wrt logits = softmax - gamma, with gamma the symbol posterior.
  Mat grad_logits(t_len, v);
  for (long t = 0; t < t_len; ++t) {
    grad_logits.row(t) = logp.row(t).array().exp().matrix();
  }
  for (long t = 0; t < t_len; ++t) {
    for (long s = 0; s < s_len; ++s) {
      double gamma = std::exp(alpha(t, s) + beta(t, s) - ll);
      grad_logits(t, ext[static_cast<size_t>(s)]) -= gamma;
    }
  }

  auto pl = logits.node();
  Mat out(1, 1);
  out(0, 0) = -ll;
  return MakeOp(std::move(out), {&logits}, [pl, grad_logits](Node &self) {
    AccumulateGrad(pl, self.grad(0, 0) * grad_logits);
  });
}

Tensor ParamStore::Create(const std::string &name, Mat init) {
  for (const std::string &n : names_) {
    if (n == name) throw UsageError("duplicate parameter name " + name);
  }
  Tensor t = Tensor::Param(std::move(init));
  params_.push_back(t);
  names_.push_back(name);
  return t;
}

Tensor ParamStore::Find(const std::string &name) const {
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return params_[i];
  }
  throw DataError("parameter not found: " + name);
}

void ParamStore::ZeroGrad() {
  for (Tensor &t : params_) t.ZeroGrad();
}

long ParamStore::TotalSize() const {
  long n = 0;
  for (const Tensor &t : params_) n += t.Rows() * t.Cols();
  return n;
}

Mat XavierUniform(long rows, long cols, Rng *rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return UniformInit(rows, cols, -limit, limit, rng);
}

Mat UniformInit(long rows, long cols, double lo, double hi, Rng *rng) {
  Mat m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) m(r, c) = rng->Uniform(lo, hi);
  }
  return m;
}

}  // namespace nn
}  // namespace lyrec

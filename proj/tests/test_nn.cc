// tests/test_nn.cc
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "lyrec/nn/tensor.h"

using namespace lyrec;
using namespace lyrec::nn;

namespace {

Mat RandomMat(long r, long c, Rng *rng, double scale = 1.0) {
  Mat m(r, c);
  for (long i = 0; i < r; ++i) {
    for (long j = 0; j < c; ++j) m(i, j) = scale * rng->Normal();
  }
  return m;
}

// Central-difference check of d(scalar)/d(param) for every coordinate.
// `build` must recompute the scalar from the params' current values.
void CheckGradients(const std::vector<Tensor> &params,
                    const std::function<Tensor()> &build, double h = 1e-5,
                    double tol = 1e-6) {
  for (Tensor p : params) p.ZeroGrad();
  Tensor loss = build();
  Backward(loss);

  for (Tensor p : params) {
    for (long r = 0; r < p.Rows(); ++r) {
      for (long c = 0; c < p.Cols(); ++c) {
        double saved = p.MutableValue()(r, c);
        p.MutableValue()(r, c) = saved + h;
        double up = build().Value()(0, 0);
        p.MutableValue()(r, c) = saved - h;
        double down = build().Value()(0, 0);
        p.MutableValue()(r, c) = saved;
        double numeric = (up - down) / (2.0 * h);
        double analytic = p.Grad().size() > 0 ? p.Grad()(r, c) : 0.0;
        double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1.0});
        CHECK(std::fabs(numeric - analytic) / denom <= tol);
      }
    }
  }
}

}  // namespace

TEST_CASE("Gradients of the dense chain ops") {
  Rng rng(1);
  Tensor a = Tensor::Param(RandomMat(3, 4, &rng));
  Tensor b = Tensor::Param(RandomMat(4, 5, &rng));
  Tensor bias = Tensor::Param(RandomMat(1, 5, &rng));
  CheckGradients({a, b, bias}, [&] {
    return MeanAll(Tanh(AddRowVec(MatMul(a, b), bias)));
  });
}

TEST_CASE("Gradients of elementwise ops") {
  Rng rng(2);
  Tensor a = Tensor::Param(RandomMat(4, 3, &rng));
  Tensor b = Tensor::Param(RandomMat(4, 3, &rng));
  CheckGradients({a, b}, [&] { return SumAll(CMul(Sigmoid(a), Swish(b))); });
  CheckGradients({a, b}, [&] { return SumAll(Sub(Scale(a, 1.7), b)); });
}

TEST_CASE("Gradients of relu away from the kink") {
  Rng rng(3);
  Mat init = RandomMat(4, 4, &rng);
  // Push values away from zero where relu is non-differentiable.
  init = init.unaryExpr(
      [](double x) { return std::fabs(x) < 0.2 ? x + 0.5 : x; });
  Tensor a = Tensor::Param(init);
  CheckGradients({a}, [&] { return SumAll(Relu(a)); });
}

TEST_CASE("Gradients of softmax and log-softmax") {
  Rng rng(4);
  Tensor a = Tensor::Param(RandomMat(3, 6, &rng));
  Tensor w = Tensor::Param(RandomMat(3, 6, &rng));
  CheckGradients({a, w}, [&] { return SumAll(CMul(SoftmaxRows(a), w)); });
  CheckGradients({a, w}, [&] { return SumAll(CMul(LogSoftmaxRows(a), w)); });
}

TEST_CASE("Gradients of layer norm") {
  Rng rng(5);
  Tensor x = Tensor::Param(RandomMat(4, 6, &rng));
  Tensor gamma = Tensor::Param(Mat::Ones(1, 6) + 0.1 * RandomMat(1, 6, &rng));
  Tensor beta = Tensor::Param(RandomMat(1, 6, &rng));
  Tensor w = Tensor::Constant(RandomMat(4, 6, &rng));
  CheckGradients({x, gamma, beta},
                 [&] { return SumAll(CMul(LayerNorm(x, gamma, beta), w)); },
                 1e-5, 1e-5);
}

TEST_CASE("Gradients of slicing, concatenation and gather") {
  Rng rng(6);
  Tensor a = Tensor::Param(RandomMat(5, 6, &rng));
  CheckGradients({a}, [&] {
    Tensor left = SliceCols(a, 0, 3);
    Tensor right = SliceCols(a, 3, 3);
    Tensor top = SliceRows(a, 0, 2);
    Tensor joined = ConcatCols({left, right});
    Tensor stacked = ConcatRows({joined, GatherRows(a, {0, 0, 4})});
    return MeanAll(CMul(stacked, stacked));
  });
}

TEST_CASE("Gradients of ScaleByScalar") {
  Rng rng(7);
  Tensor a = Tensor::Param(RandomMat(3, 3, &rng));
  Tensor s = Tensor::Param(Mat::Constant(1, 1, 0.7));
  CheckGradients({a, s}, [&] { return SumAll(ScaleByScalar(Tanh(a), s)); });
}

TEST_CASE("Gradients of TimeUnfold and DepthwiseConv") {
  Rng rng(8);
  Tensor x = Tensor::Param(RandomMat(7, 3, &rng));
  Tensor proj = Tensor::Param(RandomMat(9, 4, &rng));
  CheckGradients({x, proj}, [&] {
    Tensor unfolded = TimeUnfold(x, 3, 2, 1);
    return MeanAll(Tanh(MatMul(unfolded, proj)));
  });

  Tensor kernel = Tensor::Param(RandomMat(5, 3, &rng, 0.5));
  CheckGradients({x, kernel},
                 [&] { return MeanAll(Swish(DepthwiseConv(x, kernel))); });
}

TEST_CASE("TimeUnfold output length matches the subsampling contract") {
  Rng rng(9);
  for (long t = 2; t <= 17; ++t) {
    Tensor x = Tensor::Constant(RandomMat(t, 2, &rng));
    Tensor u = TimeUnfold(x, 3, 2, 1);
    CHECK(u.Rows() == (t + 2 - 3) / 2 + 1);  // == ceil(t/2)
    CHECK(u.Rows() == (t + 1) / 2);
  }
}

TEST_CASE("Gradients of RelGather") {
  Rng rng(10);
  long t = 5;
  Tensor m = Tensor::Param(RandomMat(t, 2 * t - 1, &rng));
  Tensor w = Tensor::Constant(RandomMat(t, t, &rng));
  CheckGradients({m}, [&] { return SumAll(CMul(RelGather(m), w)); });

  // Value layout: S[i][j] = M[i][T-1+i-j].
  Tensor s = RelGather(m);
  for (long i = 0; i < t; ++i) {
    for (long j = 0; j < t; ++j) {
      CHECK(s.Value()(i, j) == m.Value()(i, t - 1 + i - j));
    }
  }
}

TEST_CASE("Gradients of dropout with a replayed mask") {
  Rng rng(11);
  Tensor x = Tensor::Param(RandomMat(6, 5, &rng));
  // Rebuild with an identically seeded stream so the mask replays.
  CheckGradients({x}, [&] {
    Rng dropout_rng(1234);
    return MeanAll(Dropout(x, 0.4, &dropout_rng));
  });
}

TEST_CASE("Gradients of the label-smoothed NLL") {
  Rng rng(12);
  Tensor logits = Tensor::Param(RandomMat(5, 7, &rng));
  std::vector<int> targets = {1, 0, 6, 3, 3};
  CheckGradients({logits}, [&] {
    return LabelSmoothedNll(LogSoftmaxRows(logits), targets, 0.1);
  });
}

TEST_CASE("Label-smoothed NLL at the optimum equals the entropy floor") {
  // With p == q the cross entropy attains its minimum H(q).
  long v = 9;
  double eps = 0.1;
  std::vector<int> targets = {2, 5};
  double q_true = 1.0 - eps + eps / static_cast<double>(v);
  double q_other = eps / static_cast<double>(v);
  Mat logits(2, v);
  for (long r = 0; r < 2; ++r) {
    for (long c = 0; c < v; ++c) {
      logits(r, c) = std::log(c == targets[static_cast<size_t>(r)] ? q_true
                                                                   : q_other);
    }
  }
  double floor = -(q_true * std::log(q_true) +
                   static_cast<double>(v - 1) * q_other * std::log(q_other));
  Tensor t = Tensor::Constant(logits);
  Tensor loss = LabelSmoothedNll(LogSoftmaxRows(t), targets, eps);
  CHECK(loss.Value()(0, 0) == doctest::Approx(floor).epsilon(1e-10));
}

namespace {

// Brute-force CTC: sum the probability of every frame-label path whose
// collapse (dedup, then strip blanks) equals the target.
double BruteForceCtc(const Mat &logp, const std::vector<int> &targets,
                     int blank) {
  long t_len = logp.rows(), v = logp.cols();
  double total = -std::numeric_limits<double>::infinity();
  std::vector<int> path(static_cast<size_t>(t_len), 0);
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    double lp = 0.0;
    for (long t = 0; t < t_len; ++t) {
      int s = path[static_cast<size_t>(t)];
      lp += logp(t, s);
      if (s != prev && s != blank) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed == targets) total = LogAdd(total, lp);
    long pos = 0;
    while (pos < t_len) {
      if (++path[static_cast<size_t>(pos)] < v) break;
      path[static_cast<size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == t_len) break;
  }
  return total;
}

}  // namespace

TEST_CASE("CtcLogLikelihood matches path enumeration") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    long t_len = 5, v = 3;
    Mat logits = RandomMat(t_len, v, &rng);
    Mat logp(t_len, v);
    for (long r = 0; r < t_len; ++r) {
      double mx = logits.row(r).maxCoeff();
      double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
      logp.row(r) = (logits.row(r).array() - lse).matrix();
    }
    std::vector<std::vector<int>> target_sets = {
        {1}, {2}, {1, 2}, {1, 1}, {2, 1, 2}};
    for (const auto &targets : target_sets) {
      double fast = CtcLogLikelihood(logp, targets, 0);
      double slow = BruteForceCtc(logp, targets, 0);
      CHECK(fast == doctest::Approx(slow).epsilon(1e-9));
    }
  }
}

TEST_CASE("CtcLoss gradient matches finite differences") {
  Rng rng(14);
  Tensor logits = Tensor::Param(RandomMat(6, 4, &rng));
  std::vector<int> targets = {1, 2, 2};
  CheckGradients({logits}, [&] { return CtcLoss(logits, targets, 0); }, 1e-5,
                 1e-5);
}

TEST_CASE("CtcLoss rejects infeasible and malformed targets") {
  Rng rng(15);
  Tensor logits = Tensor::Param(RandomMat(2, 4, &rng));
  CHECK_THROWS_AS(CtcLoss(logits, {1, 2, 3}, 0), NumericError);
  CHECK_THROWS_AS(CtcLoss(logits, {1, 1}, 0), NumericError);  // needs 3 frames
  CHECK_THROWS_AS(CtcLoss(logits, {0}, 0), UsageError);       // blank target
}

TEST_CASE("Gradient accumulates across two backward passes") {
  Tensor p = Tensor::Param(Mat::Constant(1, 1, 2.0));
  Tensor l1 = SumAll(CMul(p, p));
  Backward(l1);
  Tensor l2 = SumAll(CMul(p, p));
  Backward(l2);
  CHECK(p.Grad()(0, 0) == doctest::Approx(8.0));  // 2 * dx^2/dx at x=2
  p.ZeroGrad();
  CHECK(p.Grad()(0, 0) == 0.0);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Tensor p = Tensor::Param(Mat::Constant(2, 2, 1.5));
  NoGradGuard guard;
  Tensor y = SumAll(Tanh(p));
  CHECK_FALSE(y.RequiresGrad());
}

TEST_CASE("Diamond-shaped graphs accumulate both paths") {
  // y = sum(a*a + a), so dy/da = 2a + 1.
  Tensor a = Tensor::Param(Mat::Constant(2, 2, 3.0));
  Tensor y = SumAll(Add(CMul(a, a), a));
  Backward(y);
  CHECK(a.Grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("ParamStore registration and lookup") {
  ParamStore store;
  Rng rng(16);
  Tensor w = store.Create("enc.w", RandomMat(3, 3, &rng));
  store.Create("enc.b", RandomMat(1, 3, &rng));
  CHECK(store.params().size() == 2);
  CHECK(store.TotalSize() == 12);
  CHECK(store.Find("enc.w").node() == w.node());
  CHECK_THROWS_AS(store.Find("nope"), DataError);
  CHECK_THROWS_AS(store.Create("enc.w", Mat::Zero(1, 1)), UsageError);
}

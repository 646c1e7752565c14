// lyrec/harness/optimizer.cc
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

#include <cmath>

#include "lyrec/harness.h"

namespace lyrec {
namespace harness {

double LrSchedule(long step, long model_dim, double lr_scale, long warmup) {
  if (step < 1) throw UsageError("LrSchedule: step must be >= 1");
  if (model_dim < 1 || warmup < 1) {
    throw UsageError("LrSchedule: model_dim and warmup must be >= 1");
  }
  double s = static_cast<double>(step);
  double ramp = s * std::pow(static_cast<double>(warmup), -1.5);
  double decay = 1.0 / std::sqrt(s);
  return lr_scale / std::sqrt(static_cast<double>(model_dim)) *
         std::min(decay, ramp);
}

AdamOptimizer::AdamOptimizer(nn::ParamStore *params, const AdamConfig &cfg)
    : params_(params), cfg_(cfg) {
  for (const nn::Tensor &p : params_->params()) {
    m_.push_back(Mat::Zero(p.Rows(), p.Cols()));
    v_.push_back(Mat::Zero(p.Rows(), p.Cols()));
  }
}

void AdamOptimizer::Step(double lr) {
  // Global-norm clipping over all gradients at once.
  double norm_sq = 0.0;
  for (const nn::Tensor &p : params_->params()) {
    if (p.Grad().size() > 0) norm_sq += p.Grad().squaredNorm();
  }
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double norm = std::sqrt(norm_sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }

  ++step_;
  double t = static_cast<double>(step_);
  double bias1 = 1.0 - std::pow(cfg_.beta1, t);
  double bias2 = 1.0 - std::pow(cfg_.beta2, t);
  const auto &params = params_->params();
  for (size_t i = 0; i < params.size(); ++i) {
    nn::Tensor p = params[i];
    if (p.Grad().size() == 0) continue;
    Mat g = p.Grad() * scale;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] +
            (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat m_hat = m_[i] / bias1;
    Mat v_hat = v_[i] / bias2;
    p.MutableValue() -=
        lr * (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
  }
}

void AdamOptimizer::ZeroGrad() { params_->ZeroGrad(); }

std::vector<std::pair<std::string, Mat>> AdamOptimizer::ExportM() const {
  std::vector<std::pair<std::string, Mat>> out;
  for (size_t i = 0; i < m_.size(); ++i) {
    out.emplace_back(params_->names()[i], m_[i]);
  }
  return out;
}

std::vector<std::pair<std::string, Mat>> AdamOptimizer::ExportV() const {
  std::vector<std::pair<std::string, Mat>> out;
  for (size_t i = 0; i < v_.size(); ++i) {
    out.emplace_back(params_->names()[i], v_[i]);
  }
  return out;
}

void AdamOptimizer::ImportState(
    uint64_t step, const std::vector<std::pair<std::string, Mat>> &m,
    const std::vector<std::pair<std::string, Mat>> &v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw DataError("optimizer state size mismatch");
  }
  step_ = step;
  for (size_t i = 0; i < m.size(); ++i) {
    if (m[i].first != params_->names()[i] ||
        v[i].first != params_->names()[i]) {
      throw DataError("optimizer state name mismatch at " + m[i].first);
    }
    m_[i] = m[i].second;
    v_[i] = v[i].second;
  }
}

}  // namespace harness
}  // namespace lyrec

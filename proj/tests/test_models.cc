// tests/test_models.cc
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
#include <filesystem>
#include <fstream>

#include "lyrec/models.h"

using namespace lyrec;
using namespace lyrec::models;

namespace {

features::FeatureStack RandomStack(int k, int t, int d, uint64_t seed) {
  Rng rng(seed);
  features::FeatureStack stack;
  stack.frame_rate = 100.0;
  for (int i = 0; i < k; ++i) {
    Mat m(t, d);
    for (long r = 0; r < t; ++r) {
      for (long c = 0; c < d; ++c) m(r, c) = rng.Normal();
    }
    stack.layers.push_back(std::move(m));
  }
  return stack;
}

ModelConfig DeskConfig(const std::string &preset = "desk-transformer",
                       int vocab = 16, long dim = 8, int k = 1,
                       uint64_t seed = 3) {
  return MakePresetConfig(preset, vocab, dim, k, seed);
}

double RowEntropy(const Eigen::RowVectorXd &logp) {
  double h = 0.0;
  for (long i = 0; i < logp.size(); ++i) {
    h -= std::exp(logp(i)) * logp(i);
  }
  return h;
}

}  // namespace

TEST_CASE("Encoder subsampling gives H = ceil(T/4)") {
  RecognizerModel model(DeskConfig());
  for (int t : {16, 17, 3, 1, 9}) {
    features::FeatureStack stack = RandomStack(1, t, 8, 11);
    Mat enc = model.Encode(stack);
    CHECK(enc.rows() == (t + 3) / 4);
    CHECK(enc.cols() == 64);
  }
}

TEST_CASE("Encoder eval mode is deterministic and finite on zeros") {
  RecognizerModel model(DeskConfig());
  features::FeatureStack stack = RandomStack(1, 13, 8, 12);
  Mat a = model.Encode(stack);
  Mat b = model.Encode(stack);
  CHECK(a == b);

  features::FeatureStack zeros;
  zeros.frame_rate = 100.0;
  zeros.layers.push_back(Mat::Zero(12, 8));
  Mat z = model.Encode(zeros);
  CHECK(z.allFinite());
}

TEST_CASE("Conformer and BiLSTM encoders run and have documented shapes") {
  RecognizerModel conf(DeskConfig("desk-conformer"));
  features::FeatureStack stack = RandomStack(1, 10, 8, 13);
  Mat enc = conf.Encode(stack);
  CHECK(enc.rows() == 3);  // ceil(10/4)
  CHECK(enc.cols() == 64);
  CHECK(enc.allFinite());

  RecognizerModel probe(DeskConfig("desk-probe"));
  Mat enc2 = probe.Encode(stack);
  CHECK(enc2.rows() == 10);   // no subsampling
  CHECK(enc2.cols() == 128);  // 2 * hidden
  CHECK(enc2.allFinite());
}

TEST_CASE("Decoder steps are normalized log-distributions") {
  for (const char *preset : {"desk-transformer", "desk-probe"}) {
    RecognizerModel model(DeskConfig(preset));
    features::FeatureStack stack = RandomStack(1, 12, 8, 14);
    Mat enc = model.Encode(stack);
    Eigen::RowVectorXd logp = model.DecoderStepLogProbs({1, 7, 9}, enc);
    double lse = std::log(logp.array().exp().sum());
    CHECK(std::fabs(lse) <= 1e-5);
    CHECK(logp.size() == 16);
  }
}

TEST_CASE("Decoder prefix validation") {
  RecognizerModel model(DeskConfig());
  features::FeatureStack stack = RandomStack(1, 12, 8, 15);
  Mat enc = model.Encode(stack);
  CHECK_THROWS_AS(model.DecoderStepLogProbs({7}, enc), UsageError);
  CHECK_THROWS_AS(model.DecoderStepLogProbs({1, 2, 7}, enc), UsageError);
  CHECK_NOTHROW(model.DecoderStepLogProbs({1, 7, 2}, enc));  // eos last is ok
}

TEST_CASE("Incremental decoding matches the full teacher-forced pass") {
  for (const char *preset : {"desk-transformer", "desk-probe"}) {
    RecognizerModel model(DeskConfig(preset));
    features::FeatureStack stack = RandomStack(1, 12, 8, 16);
    Mat enc_eval = model.Encode(stack);

    std::vector<int> prefix = {1, 7, 9, 12, 5};

    // Incremental path with cached decoder state.
    DecodeState state = model.BeginDecode(enc_eval);
    std::vector<Eigen::RowVectorXd> cached;
    for (int tok : prefix) {
      cached.push_back(model.DecodeStep(&state, tok, nullptr));
    }

    // Cache-free recomputation of each step from scratch.
    for (size_t len = 1; len <= prefix.size(); ++len) {
      std::vector<int> sub(prefix.begin(), prefix.begin() + len);
      Eigen::RowVectorXd fresh = model.DecoderStepLogProbs(sub, enc_eval);
      CHECK((fresh - cached[len - 1]).cwiseAbs().maxCoeff() <= 1e-5);
    }

    // Training-path forward agrees with the eval stepping path.
    nn::NoGradGuard guard;
    nn::Tensor enc_t = model.EncodeT(stack, false, nullptr);
    nn::Tensor logits = model.DecoderForwardT(prefix, enc_t, false, nullptr);
    for (size_t t = 0; t < prefix.size(); ++t) {
      Eigen::RowVectorXd row = logits.Value().row(static_cast<long>(t));
      double mx = row.maxCoeff();
      double lse = mx + std::log((row.array() - mx).exp().sum());
      Eigen::RowVectorXd logp = (row.array() - lse).matrix();
      CHECK((logp - cached[t]).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("Untrained decoder starts near uniform") {
  ModelConfig cfg = DeskConfig();
  RecognizerModel model(cfg);
  features::FeatureStack stack = RandomStack(1, 12, 8, 17);
  Mat enc = model.Encode(stack);
  Eigen::RowVectorXd logp = model.DecoderStepLogProbs({1}, enc);
  double entropy = RowEntropy(logp);
  CHECK(entropy > 0.8 * std::log(static_cast<double>(cfg.vocab_size)));
}

TEST_CASE("ComputeLoss is finite, positive, and composed as documented") {
  ModelConfig cfg = DeskConfig();
  RecognizerModel model(cfg);
  features::FeatureStack stack = RandomStack(1, 16, 8, 18);
  std::vector<int> targets = {7, 9, 12};
  LossBreakdown loss = model.ComputeLoss(stack, targets, false, nullptr);
  CHECK(std::isfinite(loss.total_value));
  CHECK(loss.total_value > 0.0);
  double lambda = cfg.loss.ctc_weight;
  CHECK(loss.total_value ==
        doctest::Approx(lambda * loss.ctc_value +
                        (1.0 - lambda) * loss.attention_value)
            .epsilon(1e-12));

  // Attention-only mode reduces to the label-smoothed cross entropy.
  ModelConfig att_only = cfg;
  att_only.loss.ctc_weight = 0.0;
  RecognizerModel model2(att_only);
  LossBreakdown l2 = model2.ComputeLoss(stack, targets, false, nullptr);
  CHECK(l2.total_value == doctest::Approx(l2.attention_value));
  CHECK(l2.ctc_value == 0.0);
}

TEST_CASE("ComputeLoss attention term matches stepwise decoding") {
  ModelConfig cfg = DeskConfig();
  cfg.loss.ctc_weight = 0.0;
  cfg.loss.label_smoothing = 0.0;
  RecognizerModel model(cfg);
  features::FeatureStack stack = RandomStack(1, 16, 8, 19);
  std::vector<int> targets = {7, 9, 12};
  LossBreakdown loss = model.ComputeLoss(stack, targets, false, nullptr);

  Mat enc = model.Encode(stack);
  std::vector<int> dec_tgt = targets;
  dec_tgt.push_back(2);           // eos
  std::vector<int> prefix = {1};  // sos
  double nll = 0.0;
  for (size_t t = 0; t < dec_tgt.size(); ++t) {
    Eigen::RowVectorXd logp = model.DecoderStepLogProbs(prefix, enc);
    nll -= logp(dec_tgt[t]);
    prefix.push_back(dec_tgt[t]);
  }
  nll /= static_cast<double>(dec_tgt.size());
  CHECK(loss.total_value == doctest::Approx(nll).epsilon(1e-8));
}

TEST_CASE("ComputeLoss flags CTC length violations") {
  ModelConfig cfg = DeskConfig();
  RecognizerModel model(cfg);
  // T=4 -> H=1 encoder frame but 3 labels.
  features::FeatureStack stack = RandomStack(1, 4, 8, 20);
  CHECK_THROWS_AS(model.ComputeLoss(stack, {7, 9, 12}, false, nullptr),
                  NumericError);
}

TEST_CASE("ComputeLoss gradient matches finite differences on a sample") {
  ModelConfig cfg = DeskConfig();
  cfg.encoder.num_blocks = 1;
  cfg.decoder.num_blocks = 1;
  RecognizerModel model(cfg);
  features::FeatureStack stack = RandomStack(1, 12, 8, 21);
  std::vector<int> targets = {7, 9};

  model.params().ZeroGrad();
  LossBreakdown loss = model.ComputeLoss(stack, targets, false, nullptr);
  nn::Backward(loss.total);

  Rng pick(22);
  const auto &params = model.params().params();
  for (int trial = 0; trial < 20; ++trial) {
    nn::Tensor p = params[static_cast<size_t>(
        pick.UniformInt(0, static_cast<int64_t>(params.size()) - 1))];
    long r = pick.UniformInt(0, p.Rows() - 1);
    long c = pick.UniformInt(0, p.Cols() - 1);
    double h = 1e-5;
    double saved = p.MutableValue()(r, c);
    p.MutableValue()(r, c) = saved + h;
    double up = model.ComputeLoss(stack, targets, false, nullptr).total_value;
    p.MutableValue()(r, c) = saved - h;
    double down =
        model.ComputeLoss(stack, targets, false, nullptr).total_value;
    p.MutableValue()(r, c) = saved;
    double numeric = (up - down) / (2.0 * h);
    double analytic = p.Grad().size() > 0 ? p.Grad()(r, c) : 0.0;
    if (std::fabs(numeric) < 1e-10 && std::fabs(analytic) < 1e-10) continue;
    double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
    CHECK(std::fabs(numeric - analytic) / denom <= 1e-4);
  }
}

TEST_CASE("Fusion logits receive gradient end to end") {
  ModelConfig cfg = DeskConfig("desk-transformer", 16, 8, 3);
  RecognizerModel model(cfg);
  REQUIRE(model.HasFusion());
  features::FeatureStack stack = RandomStack(3, 16, 8, 23);
  model.params().ZeroGrad();
  LossBreakdown loss = model.ComputeLoss(stack, {7, 9, 12}, false, nullptr);
  nn::Backward(loss.total);
  const Mat &g = model.FusionLogits().Grad();
  REQUIRE(g.size() == 3);
  CHECK(g.cwiseAbs().maxCoeff() > 0.0);

  Vec w = model.FusionWeightValues();
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(w.minCoeff() > 0.0);
}

TEST_CASE("Paper presets construct with the documented block counts") {
  ModelConfig baseline =
      MakePresetConfig("baseline-transformer", 64, 80, 1, 1);
  CHECK(baseline.encoder.num_blocks == 12);
  CHECK(baseline.encoder.attention_heads == 4);
  CHECK(baseline.encoder.ff_units == 2048);
  CHECK(baseline.encoder.dropout == 0.1);
  CHECK(baseline.decoder.num_blocks == 6);
  CHECK(baseline.decoder.ff_units == 2048);

  ModelConfig downstream =
      MakePresetConfig("conformer-downstream", 64, 80, 13, 1);
  CHECK(downstream.encoder.kind == EncoderKind::kConformer);
  CHECK(downstream.encoder.num_blocks == 12);
  CHECK(downstream.encoder.attention_heads == 8);
  CHECK(downstream.decoder.num_blocks == 8);

  ModelConfig probe = MakePresetConfig("probe-bilstm", 64, 80, 1, 1);
  CHECK(probe.encoder.kind == EncoderKind::kBilstm);
  CHECK(probe.encoder.num_blocks == 4);
  CHECK(probe.encoder.lstm_hidden == 512);
  CHECK(probe.decoder.num_blocks == 1);
  CHECK(probe.decoder.lstm_hidden == 512);
}

TEST_CASE("Desk probe parameter count is deterministic") {
  RecognizerModel a(DeskConfig("desk-probe", 16, 8, 1, 5));
  RecognizerModel b(DeskConfig("desk-probe", 16, 8, 1, 5));
  CHECK(a.params().TotalSize() == b.params().TotalSize());
  CHECK(a.params().names() == b.params().names());
  for (size_t i = 0; i < a.params().params().size(); ++i) {
    CHECK(a.params().params()[i].Value() == b.params().params()[i].Value());
  }
}

TEST_CASE("MakeProbeBilstm validates the architecture") {
  CHECK_THROWS_AS(MakeProbeBilstm(DeskConfig("desk-transformer")), DataError);
  auto probe = MakeProbeBilstm(DeskConfig("desk-probe"));
  CHECK(probe->NumEncoderBlocks() == 2);
}

TEST_CASE("Checkpoint round trip restores the exact model") {
  auto dir = std::filesystem::temp_directory_path() / "lyrec_ckpt_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::string path = (dir / "model.lckp").string();

  ModelConfig cfg = DeskConfig("desk-transformer", 16, 8, 2);
  RecognizerModel model(cfg);
  features::FeatureStack stack = RandomStack(2, 14, 8, 29);
  features::FeatureNormalizer norm =
      features::FeatureNormalizer::Fit({&stack});
  model.SetNormalizer(norm);

  Checkpoint ckpt;
  ckpt.config_text = cfg.Serialize();
  ckpt.tensors = model.ExportTensors();
  ckpt.buffers = NormalizerToBuffers(norm);
  ckpt.has_optimizer = true;
  ckpt.optimizer_step = 123;
  for (const auto &[name, mat] : ckpt.tensors) {
    ckpt.optimizer_m.emplace_back(name, Mat::Zero(mat.rows(), mat.cols()));
    ckpt.optimizer_v.emplace_back(name, Mat::Ones(mat.rows(), mat.cols()));
  }
  SaveCheckpoint(path, ckpt);

  Checkpoint loaded = LoadCheckpoint(path);
  CHECK(loaded.config_text == ckpt.config_text);
  CHECK(loaded.has_optimizer);
  CHECK(loaded.optimizer_step == 123);
  REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
  for (size_t i = 0; i < loaded.tensors.size(); ++i) {
    CHECK(loaded.tensors[i].first == ckpt.tensors[i].first);
    CHECK(loaded.tensors[i].second == ckpt.tensors[i].second);
  }

  auto restored = ModelFromCheckpoint(loaded);
  CHECK(restored->normalizer().has_value());
  Mat original = model.Encode(stack);
  Mat recovered = restored->Encode(stack);
  CHECK(original == recovered);
}

TEST_CASE("Corrupt checkpoints yield format errors") {
  auto dir = std::filesystem::temp_directory_path() / "lyrec_ckpt_bad";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::string path = (dir / "bad.lckp").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "garbage";
  }
  CHECK_THROWS_AS(LoadCheckpoint(path), FormatError);
}

TEST_CASE("Model config serialization round trips") {
  ModelConfig cfg = DeskConfig("desk-conformer", 20, 10, 4, 77);
  cfg.loss.ctc_weight = 0.25;
  ModelConfig back = ModelConfig::Deserialize(cfg.Serialize());
  CHECK(back.encoder.kind == cfg.encoder.kind);
  CHECK(back.encoder.num_blocks == cfg.encoder.num_blocks);
  CHECK(back.decoder.model_dim == cfg.decoder.model_dim);
  CHECK(back.loss.ctc_weight == cfg.loss.ctc_weight);
  CHECK(back.vocab_size == cfg.vocab_size);
  CHECK(back.stack_layers == cfg.stack_layers);
  CHECK(back.seed == cfg.seed);
}

// lyrec/harness.h
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

#ifndef LYREC_HARNESS_H_
#define LYREC_HARNESS_H_

#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lyrec/corpus.h"
#include "lyrec/decoding.h"
#include "lyrec/lm.h"
#include "lyrec/metrics.h"
#include "lyrec/models.h"

namespace lyrec {
namespace harness {

// --- configuration ----------------------------------------------------------

// Hierarchical `a.b.c = value` text config. Later assignments win, so CLI
// flags override file keys by merging on top.
class Config {
 public:
  Config() = default;
  static Config FromFile(const std::string &path);
  static Config FromString(const std::string &text);

  void Set(const std::string &key, const std::string &value);
  void Merge(const Config &overrides);
  bool Has(const std::string &key) const;

  std::string GetString(const std::string &key) const;
  std::string GetString(const std::string &key,
                        const std::string &fallback) const;
  long GetInt(const std::string &key, long fallback) const;
  double GetDouble(const std::string &key, double fallback) const;
  bool GetBool(const std::string &key, bool fallback) const;

  const std::map<std::string, std::string> &entries() const {
    return entries_;
  }
  std::string Serialize() const;

 private:
  std::map<std::string, std::string> entries_;
};

// --- learning rate schedule -------------------------------------------------

// lr = lr_scale * d_model^(-1/2) * min(step^(-1/2), step * warmup^(-3/2));
// linear ramp to the peak at step == warmup, inverse-sqrt decay after.
// step must be >= 1.
double LrSchedule(long step, long model_dim, double lr_scale, long warmup);

// --- optimizer ---------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables
};

class AdamOptimizer {
 public:
  AdamOptimizer(nn::ParamStore *params, const AdamConfig &cfg);

  // Applies accumulated gradients at the given learning rate.
  void Step(double lr);
  void ZeroGrad();
  uint64_t step_count() const { return step_; }

  // Optimizer state for checkpoints, aligned with the param store.
  std::vector<std::pair<std::string, Mat>> ExportM() const;
  std::vector<std::pair<std::string, Mat>> ExportV() const;
  void ImportState(uint64_t step,
                   const std::vector<std::pair<std::string, Mat>> &m,
                   const std::vector<std::pair<std::string, Mat>> &v);

 private:
  nn::ParamStore *params_;
  AdamConfig cfg_;
  uint64_t step_ = 0;
  std::vector<Mat> m_, v_;
};

// --- data pipeline -----------------------------------------------------------

struct FeatureSourceSpec {
  enum class Kind { kMel, kPseudoSsl };
  Kind kind = Kind::kMel;
  features::MelConfig mel;
  int layers = 4;  // pseudo-ssl stack depth
  uint64_t seed = 0;

  int StackLayers() const { return kind == Kind::kMel ? 1 : layers; }
  static FeatureSourceSpec Parse(const std::string &text);  // mel | pseudo:K
  std::string Name() const;
};

struct PreparedUtterance {
  std::string id;
  std::string split;
  std::string normalized_text;
  std::vector<int> targets;  // token ids, no sos/eos
  features::FeatureStack stack;
};

struct PreparedCorpus {
  corpus::Vocabulary vocab;
  features::FeatureNormalizer normalizer;  // fitted on the train split
  std::vector<PreparedUtterance> utterances;

  std::vector<const PreparedUtterance *> Split(const std::string &name) const;
};

// Loads audio through the manifest (paths resolved against the manifest
// location), extracts features, builds the vocabulary from the train
// split and fits the normalizer on it.
PreparedCorpus PrepareCorpus(const std::string &manifest_path,
                             corpus::TokenUnit unit,
                             const FeatureSourceSpec &features);
// Same pipeline over in-memory audio (synthetic corpora, mixes).
PreparedCorpus PrepareFromAudio(const corpus::Manifest &manifest,
                                const std::vector<corpus::AudioSegment> &audio,
                                corpus::TokenUnit unit,
                                const FeatureSourceSpec &features);

// --- training ----------------------------------------------------------------

struct TrainConfig {
  std::string model_preset = "desk-transformer";
  double lr_scale = 1.0;
  long warmup_steps = 25000;
  int max_epochs = 100;
  int patience = 3;
  int avg_top_k = 10;
  // Literal single-best selection instead of parameter averaging.
  bool select_single_best = false;
  long batch_frame_budget = 4096;
  double clip_norm = 5.0;
  double ctc_weight = 0.3;
  double label_smoothing = 0.1;
  bool skip_ctc_violations = true;
  // Split used for the per-epoch dev metric; memorization experiments
  // point it at "train".
  std::string dev_split = "dev";
  uint64_t seed = 1;

  void Validate() const;
};

// Named presets pinning the published schedules: `baseline` (lr 1.0,
// 25000 warmup, 100 epochs, 10-best averaging), `ssl-downstream`
// (lr 0.0025, 40000 warmup, <= 50 epochs, early stop) and desk-*
// presets sized for minutes-scale runs.
TrainConfig TrainPreset(const std::string &name);

// Stop after `patience` consecutive non-improving epochs (strictly
// smaller dev loss counts as improvement).
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Feeds one epoch's dev loss; returns true when training should stop.
  bool Update(double dev_loss);
  bool improved_last() const { return improved_last_; }
  double best() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int non_improving_ = 0;
  bool improved_last_ = false;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double lr = 0.0;
  bool improved = false;
};

struct TrainResult {
  std::unique_ptr<models::RecognizerModel> model;  // averaged final model
  std::vector<EpochLog> log;
  int stopped_epoch = 0;
  double best_dev_loss = 0.0;
  std::vector<std::string> skipped_utterances;
  std::string final_checkpoint;  // empty when out_dir was empty
};

// Trains a recognizer on the prepared corpus. When `out_dir` is
// non-empty, per-epoch checkpoints and the final averaged model are
// written there. Throws NumericError (with step and utterance id) on a
// non-finite loss.
TrainResult Train(const PreparedCorpus &corpus, const TrainConfig &cfg,
                  const std::string &out_dir);

// Parameter-wise average of equally-shaped checkpoints.
std::vector<std::pair<std::string, Mat>> AverageTensorSets(
    const std::vector<std::vector<std::pair<std::string, Mat>>> &sets);

struct LmTrainConfig {
  long steps = 1500;
  double lr = 5e-3;
  double clip_norm = 5.0;
  uint64_t seed = 1;
};

// Adam fine-tuning of a neural LM on token sequences; returns the final
// training-set perplexity.
double TrainNeuralLm(lm::NeuralLM *model,
                     const std::vector<std::vector<int>> &corpus,
                     const LmTrainConfig &cfg);

// --- evaluation --------------------------------------------------------------

struct EvalConfig {
  decoding::BeamConfig beam;
  bool use_beam = false;  // greedy by default
  double collapse_threshold = 0.5;
};

struct EvalResult {
  metrics::CorpusWer wer;
  double collapse_rate = 0.0;  // fraction of utterances with collapse
  std::vector<decoding::NbestEntry> nbest;
};

EvalResult Evaluate(const models::RecognizerModel &model,
                    const PreparedCorpus &corpus, const std::string &split,
                    const EvalConfig &eval,
                    const lm::LanguageModel *lm = nullptr);

// --- experiments -------------------------------------------------------------

enum class ExperimentKind { kMain, kLmAblation, kMusicAblation };

std::string ExperimentKindName(ExperimentKind kind);
ExperimentKind ExperimentKindFromName(const std::string &name);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kLmAblation;
  corpus::SynthConfig synth;  // used when manifest_path is empty
  std::string manifest_path;
  std::string feature_source = "mel";
  TrainConfig train;
  decoding::BeamConfig beam;
  // main experiment: presets and feature sources to sweep
  std::vector<std::string> model_presets = {"desk-transformer"};
  std::vector<std::string> feature_sources = {"mel", "pseudo:4"};
  // lm ablation
  int ngram_order = 4;
  double ngram_discount = 0.5;
  LmTrainConfig lm_train;
  // music ablation
  std::vector<double> mix_snrs_db = {60.0, 10.0, 0.0, -5.0};
  std::string train_condition = "clean";  // clean | mixed:<snr>
  uint64_t seed = 1;

  static ExperimentSpec FromConfig(const Config &config);
};

struct ExperimentRow {
  std::string label;
  bool ok = false;
  double wer_percent = 0.0;
  double perplexity = 0.0;
  double collapse_rate = 0.0;
  std::string error;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::kLmAblation;
  uint64_t seed = 0;
  std::vector<ExperimentRow> rows;

  std::string Serialize() const;
  static ExperimentReport Deserialize(const std::string &text);
};

ExperimentReport RunExperiment(const ExperimentSpec &spec);
void WriteReport(const std::string &path, const ExperimentReport &report);
ExperimentReport ReadReport(const std::string &path);

// Deterministic background-music track: slow chord progression plus a
// percussive noise pattern.
corpus::AudioSegment MakeMusicTrack(int sample_rate, size_t n_samples,
                                    uint64_t seed);

}  // namespace harness
}  // namespace lyrec

#endif  // LYREC_HARNESS_H_

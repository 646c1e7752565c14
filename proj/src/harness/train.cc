// lyrec/harness/train.cc
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

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lyrec/harness.h"

namespace lyrec {
namespace harness {

FeatureSourceSpec FeatureSourceSpec::Parse(const std::string &text) {
  FeatureSourceSpec spec;
  if (text == "mel") {
    spec.kind = Kind::kMel;
    return spec;
  }
  if (text.rfind("pseudo:", 0) == 0) {
    spec.kind = Kind::kPseudoSsl;
    try {
      spec.layers = std::stoi(text.substr(7));
    } catch (const std::exception &) {
      throw DataError("bad pseudo stack depth in '" + text + "'");
    }
    if (spec.layers < 1) throw DataError("pseudo stack depth must be >= 1");
    return spec;
  }
  throw DataError("unknown feature source '" + text +
                  "' (want mel or pseudo:<K>)");
}

std::string FeatureSourceSpec::Name() const {
  return kind == Kind::kMel ? "mel" : Strprintf("pseudo:%d", layers);
}

std::vector<const PreparedUtterance *> PreparedCorpus::Split(
    const std::string &name) const {
  std::vector<const PreparedUtterance *> out;
  for (const PreparedUtterance &u : utterances) {
    if (u.split == name) out.push_back(&u);
  }
  return out;
}

namespace {

features::FeatureStack ExtractStack(const corpus::AudioSegment &audio,
                                    const FeatureSourceSpec &spec) {
  if (spec.kind == FeatureSourceSpec::Kind::kMel) {
    return features::MelSpectrogram(audio, spec.mel);
  }
  return features::PseudoSslExtract(audio, spec.mel, spec.layers, spec.seed);
}

PreparedCorpus PrepareImpl(
    const corpus::Manifest &manifest,
    const std::function<corpus::AudioSegment(const corpus::ManifestEntry &)>
        &load_audio,
    corpus::TokenUnit unit, const FeatureSourceSpec &features_spec) {
  manifest.Validate(false);
  PreparedCorpus out;
  out.vocab = corpus::BuildVocabulary(manifest, unit);

  for (const corpus::ManifestEntry &entry : manifest.entries) {
    corpus::AudioSegment audio = load_audio(entry);
    if (audio.sample_rate != manifest.sample_rate) {
      throw DataError("utterance '" + entry.id +
                      "' sample rate differs from the manifest");
    }
    PreparedUtterance utt;
    utt.id = entry.id;
    utt.split = entry.split;
    utt.normalized_text = corpus::NormalizeText(entry.raw_transcript);
    utt.targets = out.vocab.Tokenize(entry.raw_transcript);
    utt.stack = ExtractStack(audio, features_spec);
    out.utterances.push_back(std::move(utt));
  }

  std::vector<const features::FeatureStack *> train_stacks;
  for (const PreparedUtterance &u : out.utterances) {
    if (u.split == "train") train_stacks.push_back(&u.stack);
  }
  if (train_stacks.empty()) throw DataError("no train utterances prepared");
  out.normalizer = features::FeatureNormalizer::Fit(train_stacks);
  return out;
}

}  // namespace

PreparedCorpus PrepareCorpus(const std::string &manifest_path,
                             corpus::TokenUnit unit,
                             const FeatureSourceSpec &features_spec) {
  corpus::Manifest manifest = corpus::Manifest::Load(manifest_path);
  std::filesystem::path base =
      std::filesystem::path(manifest_path).parent_path();
  return PrepareImpl(
      manifest,
      [&](const corpus::ManifestEntry &entry) {
        std::filesystem::path p(entry.audio_path);
        if (p.is_relative()) p = base / p;
        return corpus::ReadWav(p.string(), entry.id);
      },
      unit, features_spec);
}

PreparedCorpus PrepareFromAudio(const corpus::Manifest &manifest,
                                const std::vector<corpus::AudioSegment> &audio,
                                corpus::TokenUnit unit,
                                const FeatureSourceSpec &features_spec) {
  if (audio.size() != manifest.entries.size()) {
    throw DataError("audio list does not match manifest entries");
  }
  return PrepareImpl(
      manifest,
      [&](const corpus::ManifestEntry &entry) {
        for (size_t i = 0; i < manifest.entries.size(); ++i) {
          if (manifest.entries[i].id == entry.id) return audio[i];
        }
        throw DataError("audio not found for " + entry.id);
      },
      unit, features_spec);
}

bool EarlyStopping::Update(double dev_loss) {
  improved_last_ = dev_loss < best_;
  if (improved_last_) {
    best_ = dev_loss;
    non_improving_ = 0;
  } else {
    ++non_improving_;
  }
  return non_improving_ >= patience_;
}

void TrainConfig::Validate() const {
  if (warmup_steps < 1) throw DataError("warmup_steps must be >= 1");
  if (avg_top_k < 1) throw DataError("avg_top_k must be >= 1");
  if (max_epochs < 1) throw DataError("max_epochs must be >= 1");
  if (patience < 1) throw DataError("patience must be >= 1");
  if (batch_frame_budget < 1) {
    throw DataError("batch_frame_budget must be >= 1");
  }
}

TrainConfig TrainPreset(const std::string &name) {
  TrainConfig cfg;
  if (name == "baseline") {
    cfg.model_preset = "baseline-transformer";
    cfg.lr_scale = 1.0;
    cfg.warmup_steps = 25000;
    cfg.max_epochs = 100;
    cfg.patience = 100;  // the published run trains the full budget
    cfg.avg_top_k = 10;
  } else if (name == "ssl-downstream") {
    cfg.model_preset = "conformer-downstream";
    cfg.lr_scale = 0.0025;
    cfg.warmup_steps = 40000;
    cfg.max_epochs = 50;
    cfg.patience = 3;
    cfg.avg_top_k = 10;
  } else if (name == "probe") {
    cfg.model_preset = "probe-bilstm";
    cfg.lr_scale = 0.5;
    cfg.warmup_steps = 4000;
    cfg.max_epochs = 100;
    cfg.patience = 100;
    cfg.avg_top_k = 5;  // the probe study keeps the best five models
  } else if (name == "desk-transformer" || name == "desk-conformer" ||
             name == "desk-probe") {
    cfg.model_preset = name;
    cfg.lr_scale = 2.0;
    cfg.warmup_steps = 150;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    cfg.avg_top_k = 1;
    cfg.ctc_weight = 0.3;
    cfg.label_smoothing = 0.0;
  } else {
    throw DataError("unknown train preset '" + name + "'");
  }
  return cfg;
}

std::vector<std::pair<std::string, Mat>> AverageTensorSets(
    const std::vector<std::vector<std::pair<std::string, Mat>>> &sets) {
  if (sets.empty()) throw DataError("no tensor sets to average");
  std::vector<std::pair<std::string, Mat>> out = sets[0];
  for (size_t s = 1; s < sets.size(); ++s) {
    if (sets[s].size() != out.size()) {
      throw DataError("tensor sets differ in size");
    }
    for (size_t i = 0; i < out.size(); ++i) {
      if (sets[s][i].first != out[i].first) {
        throw DataError("tensor sets differ in names");
      }
      out[i].second += sets[s][i].second;
    }
  }
  for (auto &[name, mat] : out) {
    mat /= static_cast<double>(sets.size());
  }
  return out;
}

namespace {

// Mean eval-mode loss over a split; CTC-infeasible utterances are
// skipped the same way training skips them.
double EvalLoss(const models::RecognizerModel &model,
                const std::vector<const PreparedUtterance *> &split) {
  double total = 0.0;
  long counted = 0;
  for (const PreparedUtterance *utt : split) {
    if (utt->targets.empty()) continue;
    try {
      total += model.ComputeLoss(utt->stack, utt->targets, false, nullptr)
                   .total_value;
      ++counted;
    } catch (const NumericError &) {
      continue;
    }
  }
  if (counted == 0) throw DataError("no scorable utterances in dev split");
  return total / static_cast<double>(counted);
}

void CheckFusionWeights(const models::RecognizerModel &model) {
  if (!model.HasFusion()) return;
  Vec w = model.FusionWeightValues();
  if (std::fabs(w.sum() - 1.0) > 1e-6 || w.minCoeff() <= 0.0) {
    throw NumericError("fusion weights left the simplex");
  }
}

}  // namespace

TrainResult Train(const PreparedCorpus &corpus, const TrainConfig &cfg,
                  const std::string &out_dir) {
  cfg.Validate();
  std::vector<const PreparedUtterance *> train = corpus.Split("train");
  std::vector<const PreparedUtterance *> dev = corpus.Split(cfg.dev_split);
  if (train.empty()) throw DataError("train split is empty");
  if (dev.empty()) {
    throw DataError("dev split '" + cfg.dev_split + "' is empty");
  }

  const features::FeatureStack &probe_stack = train[0]->stack;
  models::ModelConfig model_cfg = models::MakePresetConfig(
      cfg.model_preset, corpus.vocab.size(), probe_stack.D(),
      probe_stack.K(), cfg.seed);
  model_cfg.loss.ctc_weight = cfg.ctc_weight;
  model_cfg.loss.label_smoothing = cfg.label_smoothing;

  auto model = std::make_unique<models::RecognizerModel>(model_cfg);
  model->SetNormalizer(corpus.normalizer);

  AdamConfig adam_cfg;
  adam_cfg.clip_norm = cfg.clip_norm;
  AdamOptimizer optimizer(&model->params(), adam_cfg);

  Rng run_rng(MixSeed(cfg.seed, 0x7a11));
  Rng dropout_rng = run_rng.Fork(1);
  Rng shuffle_rng = run_rng.Fork(2);

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  TrainResult result;
  struct Snapshot {
    double dev_loss;
    int epoch;
    std::vector<std::pair<std::string, Mat>> tensors;
  };
  std::vector<Snapshot> best;  // kept sorted by dev loss ascending
  EarlyStopping stopper(cfg.patience);
  long model_dim = model_cfg.decoder.model_dim;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Seeded shuffle; identical seeds give identical epoch orders.
    std::vector<const PreparedUtterance *> order = train;
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.UniformInt(
          0, static_cast<int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    long epoch_counted = 0;
    long batch_frames = 0;
    long batch_utts = 0;
    double last_lr = 0.0;
    optimizer.ZeroGrad();

    auto flush_batch = [&]() {
      if (batch_utts == 0) return;
      // Average accumulated gradients over the batch.
      for (nn::Tensor p : model->params().params()) {
        if (p.Grad().size() > 0) {
          p.MutableGrad() /= static_cast<double>(batch_utts);
        }
      }
      last_lr = LrSchedule(static_cast<long>(optimizer.step_count()) + 1,
                           model_dim, cfg.lr_scale, cfg.warmup_steps);
      optimizer.Step(last_lr);
      CheckFusionWeights(*model);
      optimizer.ZeroGrad();
      batch_frames = 0;
      batch_utts = 0;
    };

    for (const PreparedUtterance *utt : order) {
      if (utt->targets.empty()) continue;
      models::LossBreakdown loss;
      try {
        loss = model->ComputeLoss(utt->stack, utt->targets, true,
                                  &dropout_rng);
      } catch (const NumericError &e) {
        if (cfg.skip_ctc_violations &&
            std::string(e.what()).find("CtcLoss") != std::string::npos) {
          result.skipped_utterances.push_back(utt->id);
          continue;
        }
        throw NumericError(Strprintf(
            "training aborted at step %llu on utterance '%s': %s",
            static_cast<unsigned long long>(optimizer.step_count()),
            utt->id.c_str(), e.what()));
      }
      if (!std::isfinite(loss.total_value)) {
        throw NumericError(Strprintf(
            "non-finite loss at step %llu on utterance '%s'",
            static_cast<unsigned long long>(optimizer.step_count()),
            utt->id.c_str()));
      }
      nn::Backward(loss.total);
      epoch_loss += loss.total_value;
      ++epoch_counted;
      ++batch_utts;
      batch_frames += utt->stack.T();
      if (batch_frames >= cfg.batch_frame_budget) flush_batch();
    }
    flush_batch();
    if (epoch_counted == 0) {
      throw DataError("every train utterance was skipped");
    }

    double dev_loss = EvalLoss(*model, dev);
    bool stop = stopper.Update(dev_loss);

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(epoch_counted);
    log.dev_loss = dev_loss;
    log.lr = last_lr;
    log.improved = stopper.improved_last();
    result.log.push_back(log);

    Snapshot snap;
    snap.dev_loss = dev_loss;
    snap.epoch = epoch;
    snap.tensors = model->ExportTensors();
    best.push_back(std::move(snap));
    std::stable_sort(best.begin(), best.end(),
                     [](const Snapshot &a, const Snapshot &b) {
                       return a.dev_loss < b.dev_loss;
                     });
    if (best.size() > static_cast<size_t>(cfg.avg_top_k)) {
      best.resize(static_cast<size_t>(cfg.avg_top_k));
    }

    if (!out_dir.empty()) {
      Checkpoint ckpt;
      ckpt.config_text = model_cfg.Serialize();
      ckpt.tensors = model->ExportTensors();
      ckpt.buffers = models::NormalizerToBuffers(corpus.normalizer);
      ckpt.has_optimizer = true;
      ckpt.optimizer_step = optimizer.step_count();
      ckpt.optimizer_m = optimizer.ExportM();
      ckpt.optimizer_v = optimizer.ExportV();
      SaveCheckpoint((std::filesystem::path(out_dir) /
                      Strprintf("ckpt-epoch%03d.lckp", epoch))
                         .string(),
                     ckpt);
    }

    result.stopped_epoch = epoch;
    if (stop) break;
  }

  // Final model: parameter-wise average of the retained snapshots (or
  // the single best when configured).
  std::vector<std::vector<std::pair<std::string, Mat>>> sets;
  if (cfg.select_single_best || cfg.avg_top_k == 1) {
    sets.push_back(best[0].tensors);
  } else {
    for (const Snapshot &s : best) sets.push_back(s.tensors);
  }
  model->ImportTensors(AverageTensorSets(sets));

  result.best_dev_loss = stopper.best();
  if (!out_dir.empty()) {
    Checkpoint final_ckpt;
    final_ckpt.config_text = model_cfg.Serialize();
    final_ckpt.tensors = model->ExportTensors();
    final_ckpt.buffers = models::NormalizerToBuffers(corpus.normalizer);
    result.final_checkpoint =
        (std::filesystem::path(out_dir) / "final.lckp").string();
    SaveCheckpoint(result.final_checkpoint, final_ckpt);
  }
  result.model = std::move(model);
  return result;
}

double TrainNeuralLm(lm::NeuralLM *model,
                     const std::vector<std::vector<int>> &corpus,
                     const LmTrainConfig &cfg) {
  if (corpus.empty()) throw DataError("lm training corpus is empty");
  AdamConfig adam_cfg;
  adam_cfg.clip_norm = cfg.clip_norm;
  AdamOptimizer optimizer(&model->params(), adam_cfg);
  Rng rng(MixSeed(cfg.seed, 0x1a5));

  for (long step = 0; step < cfg.steps; ++step) {
    const std::vector<int> &seq =
        corpus[static_cast<size_t>(step) % corpus.size()];
    if (seq.empty()) continue;
    optimizer.ZeroGrad();
    nn::Tensor loss = model->SequenceNll(seq, true, &rng);
    if (!std::isfinite(loss.Value()(0, 0))) {
      throw NumericError(Strprintf("non-finite LM loss at step %ld", step));
    }
    nn::Backward(loss);
    optimizer.Step(cfg.lr);
  }
  return lm::Perplexity(*model, corpus);
}

EvalResult Evaluate(const models::RecognizerModel &model,
                    const PreparedCorpus &corpus, const std::string &split,
                    const EvalConfig &eval, const lm::LanguageModel *lm) {
  std::vector<const PreparedUtterance *> utts = corpus.Split(split);
  if (utts.empty()) throw DataError("split '" + split + "' is empty");

  EvalResult out;
  std::vector<std::pair<std::string, std::vector<int>>> refs, hyps;
  long collapsed = 0;
  for (const PreparedUtterance *utt : utts) {
    Mat enc = model.Encode(utt->stack);
    std::vector<int> hyp_tokens;
    if (eval.use_beam) {
      std::vector<decoding::Hypothesis> nbest =
          decoding::BeamSearch(model, enc, eval.beam, lm);
      if (!nbest.empty()) {
        hyp_tokens = nbest[0].tokens;
        if (!hyp_tokens.empty() && hyp_tokens.back() == 2) {
          hyp_tokens.pop_back();
        }
      }
      for (size_t rank = 0; rank < nbest.size(); ++rank) {
        std::vector<int> text_tokens = nbest[rank].tokens;
        if (!text_tokens.empty() && text_tokens.back() == 2) {
          text_tokens.pop_back();
        }
        out.nbest.push_back({utt->id, static_cast<int>(rank) + 1,
                             nbest[rank].combined, nbest[rank].am_logp,
                             nbest[rank].lm_logp,
                             corpus.vocab.Detokenize(text_tokens)});
      }
      // Collapse diagnostics ride on a greedy pass for the attention.
      Mat attn;
      decoding::GreedyDecode(model, enc,
                             eval.beam.MaxDecodeLen(enc.rows()), &attn);
      if (attn.rows() > 0) {
        metrics::AttentionStats stats = metrics::ComputeAttentionStats(
            {attn}, eval.collapse_threshold);
        if (stats.collapse) ++collapsed;
      }
    } else {
      Mat attn;
      hyp_tokens = decoding::GreedyDecode(
          model, enc, eval.beam.MaxDecodeLen(enc.rows()), &attn);
      if (attn.rows() > 0) {
        metrics::AttentionStats stats = metrics::ComputeAttentionStats(
            {attn}, eval.collapse_threshold);
        if (stats.collapse) ++collapsed;
      }
      out.nbest.push_back({utt->id, 1, 0.0, 0.0, 0.0,
                           corpus.vocab.Detokenize(hyp_tokens)});
    }
    refs.emplace_back(utt->id, utt->targets);
    hyps.emplace_back(utt->id, hyp_tokens);
  }
  out.wer = metrics::ComputeCorpusWer(refs, hyps);
  out.collapse_rate =
      static_cast<double>(collapsed) / static_cast<double>(utts.size());
  return out;
}

}  // namespace harness
}  // namespace lyrec

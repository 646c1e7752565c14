// lyrec/harness/experiment.cc
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
#include <sstream>

#include "lyrec/harness.h"
#include "lyrec/io.h"

namespace lyrec {
namespace harness {

std::string ExperimentKindName(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kMain:
      return "main";
    case ExperimentKind::kLmAblation:
      return "lm-ablation";
    case ExperimentKind::kMusicAblation:
      return "music-ablation";
  }
  throw UsageError("unknown experiment kind");
}

ExperimentKind ExperimentKindFromName(const std::string &name) {
  if (name == "main") return ExperimentKind::kMain;
  if (name == "lm-ablation") return ExperimentKind::kLmAblation;
  if (name == "music-ablation") return ExperimentKind::kMusicAblation;
  throw DataError("unknown experiment kind '" + name + "'");
}

ExperimentSpec ExperimentSpec::FromConfig(const Config &config) {
  ExperimentSpec spec;
  spec.kind = ExperimentKindFromName(
      config.GetString("experiment.kind", "lm-ablation"));
  spec.seed = static_cast<uint64_t>(config.GetInt("experiment.seed", 1));
  spec.manifest_path = config.GetString("experiment.manifest", "");
  spec.feature_source = config.GetString("experiment.features", "mel");

  spec.synth.n_utts = static_cast<int>(config.GetInt("synth.n_utts", 24));
  spec.synth.vocab_size =
      static_cast<int>(config.GetInt("synth.vocab_size", 5));
  spec.synth.seed = spec.seed;
  spec.synth.repetitive = config.GetBool("synth.repetitive", false);
  spec.synth.n_templates =
      static_cast<int>(config.GetInt("synth.n_templates", 4));
  spec.synth.dev_fraction = config.GetDouble("synth.dev_fraction", 0.125);
  spec.synth.test_fraction = config.GetDouble("synth.test_fraction", 0.25);

  spec.train = TrainPreset(config.GetString("train.preset",
                                            "desk-transformer"));
  spec.train.seed = spec.seed;
  spec.train.max_epochs = static_cast<int>(
      config.GetInt("train.max_epochs", spec.train.max_epochs));
  spec.train.patience =
      static_cast<int>(config.GetInt("train.patience", spec.train.patience));
  spec.train.avg_top_k = static_cast<int>(
      config.GetInt("train.avg_top_k", spec.train.avg_top_k));
  spec.train.lr_scale =
      config.GetDouble("train.lr_scale", spec.train.lr_scale);
  spec.train.warmup_steps = config.GetInt("train.warmup_steps",
                                          spec.train.warmup_steps);
  spec.train.ctc_weight =
      config.GetDouble("train.ctc_weight", spec.train.ctc_weight);

  spec.beam.beam_size =
      static_cast<int>(config.GetInt("beam.size", spec.beam.beam_size));
  spec.beam.lm_weight = config.GetDouble("beam.lm_weight", 0.3);
  spec.beam.length_bonus = config.GetDouble("beam.length_bonus", 0.0);

  spec.ngram_order =
      static_cast<int>(config.GetInt("lm.ngram_order", spec.ngram_order));
  spec.ngram_discount =
      config.GetDouble("lm.ngram_discount", spec.ngram_discount);
  spec.lm_train.steps = config.GetInt("lm.train_steps", spec.lm_train.steps);
  spec.lm_train.lr = config.GetDouble("lm.train_lr", spec.lm_train.lr);
  spec.lm_train.seed = spec.seed;

  if (config.Has("experiment.mix_snrs")) {
    spec.mix_snrs_db.clear();
    for (const std::string &part :
         SplitString(config.GetString("experiment.mix_snrs"), ',')) {
      spec.mix_snrs_db.push_back(std::stod(part));
    }
  }
  spec.train_condition =
      config.GetString("experiment.train_condition", "clean");

  if (config.Has("experiment.presets")) {
    spec.model_presets =
        SplitString(config.GetString("experiment.presets"), ',');
  }
  if (config.Has("experiment.feature_sources")) {
    spec.feature_sources =
        SplitString(config.GetString("experiment.feature_sources"), ',');
  }
  return spec;
}

std::string ExperimentReport::Serialize() const {
  std::ostringstream os;
  os << "# lyrec experiment report\n";
  os << "kind\t" << ExperimentKindName(kind) << "\n";
  os << "seed\t" << seed << "\n";
  for (const ExperimentRow &row : rows) {
    os << "row\t" << row.label << "\t"
       << (row.ok ? "status=ok" : "status=failed");
    if (row.ok) {
      os << Strprintf("\twer=%.6f", row.wer_percent);
      os << Strprintf("\tppl=%.6f", row.perplexity);
      os << Strprintf("\tcollapse_rate=%.6f", row.collapse_rate);
    } else {
      os << "\terror=" << row.error;
    }
    os << "\n";
  }
  return os.str();
}

ExperimentReport ExperimentReport::Deserialize(const std::string &text) {
  ExperimentReport report;
  for (const std::string &line : SplitString(text, '\n')) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields = SplitString(line, '\t');
    if (fields[0] == "kind" && fields.size() == 2) {
      report.kind = ExperimentKindFromName(fields[1]);
    } else if (fields[0] == "seed" && fields.size() == 2) {
      report.seed = std::stoull(fields[1]);
    } else if (fields[0] == "row" && fields.size() >= 3) {
      ExperimentRow row;
      row.label = fields[1];
      row.ok = fields[2] == "status=ok";
      for (size_t i = 3; i < fields.size(); ++i) {
        if (fields[i].rfind("wer=", 0) == 0) {
          row.wer_percent = std::stod(fields[i].substr(4));
        } else if (fields[i].rfind("ppl=", 0) == 0) {
          row.perplexity = std::stod(fields[i].substr(4));
        } else if (fields[i].rfind("collapse_rate=", 0) == 0) {
          row.collapse_rate = std::stod(fields[i].substr(14));
        } else if (fields[i].rfind("error=", 0) == 0) {
          row.error = fields[i].substr(6);
        }
      }
      report.rows.push_back(row);
    } else {
      throw FormatError("bad report line: " + line);
    }
  }
  return report;
}

void WriteReport(const std::string &path, const ExperimentReport &report) {
  WriteFile(path, report.Serialize());
}

ExperimentReport ReadReport(const std::string &path) {
  std::string text;
  for (const std::string &line : ReadLines(path)) text += line + "\n";
  return ExperimentReport::Deserialize(text);
}

corpus::AudioSegment MakeMusicTrack(int sample_rate, size_t n_samples,
                                    uint64_t seed) {
  Rng rng(MixSeed(seed, 0xbead));
  corpus::AudioSegment music;
  music.id = "music";
  music.sample_rate = sample_rate;
  music.samples.assign(n_samples, 0.0);

  // Chord changes every half second over a small pentatonic-ish set.
  const double roots[] = {110.0, 130.8, 146.8, 98.0};
  size_t chord_len = static_cast<size_t>(sample_rate / 2);
  for (size_t start = 0; start < n_samples; start += chord_len) {
    double root = roots[rng.UniformInt(0, 3)];
    double freqs[3] = {root, root * 1.5, root * 2.0};
    size_t end = std::min(n_samples, start + chord_len);
    for (size_t i = start; i < end; ++i) {
      double t = static_cast<double>(i) / sample_rate;
      double v = 0.0;
      for (double f : freqs) v += std::sin(2.0 * M_PI * f * t);
      music.samples[i] += 0.25 * v;
    }
  }
  // Percussive noise bursts on a steady eighth-note grid.
  size_t beat = static_cast<size_t>(sample_rate / 4);
  for (size_t start = 0; start < n_samples; start += beat) {
    size_t end = std::min(n_samples, start + beat / 6);
    for (size_t i = start; i < end; ++i) {
      double decay = 1.0 - static_cast<double>(i - start) /
                               static_cast<double>(beat / 6 + 1);
      music.samples[i] += 0.2 * decay * rng.Normal();
    }
  }
  double peak = music.Peak();
  if (peak > 1.0) {
    for (double &s : music.samples) s /= peak;
  }
  return music;
}

namespace {

std::vector<std::vector<int>> SplitTokenSequences(
    const PreparedCorpus &corpus, const std::string &split) {
  std::vector<std::vector<int>> out;
  for (const PreparedUtterance *utt : corpus.Split(split)) {
    if (!utt->targets.empty()) out.push_back(utt->targets);
  }
  return out;
}

corpus::SynthConfig SynthForSpec(const ExperimentSpec &spec) {
  corpus::SynthConfig synth = spec.synth;
  synth.seed = spec.seed;
  return synth;
}

PreparedCorpus PrepareForSpec(const ExperimentSpec &spec,
                              const std::string &feature_source) {
  FeatureSourceSpec features = FeatureSourceSpec::Parse(feature_source);
  features.mel.n_mels = 40;
  features.seed = spec.seed;
  if (!spec.manifest_path.empty()) {
    return PrepareCorpus(spec.manifest_path, corpus::TokenUnit::kChar,
                         features);
  }
  corpus::SynthResult synth = corpus::GenerateSyntheticCorpus(
      SynthForSpec(spec));
  return PrepareFromAudio(synth.manifest, synth.audio,
                          corpus::TokenUnit::kChar, features);
}

ExperimentRow FailedRow(const std::string &label, const std::string &error) {
  ExperimentRow row;
  row.label = label;
  row.ok = false;
  row.error = error;
  return row;
}

ExperimentReport RunLmAblation(const ExperimentSpec &spec) {
  ExperimentReport report;
  report.kind = spec.kind;
  report.seed = spec.seed;

  PreparedCorpus corpus = PrepareForSpec(spec, spec.feature_source);
  TrainResult trained = Train(corpus, spec.train, "");
  std::vector<std::vector<int>> train_text =
      SplitTokenSequences(corpus, "train");
  std::vector<std::vector<int>> test_text =
      SplitTokenSequences(corpus, "test");

  EvalConfig eval;
  eval.use_beam = true;
  eval.beam = spec.beam;

  // Row 1: count model.
  try {
    lm::NGramLM ngram = lm::NGramLM::Train(train_text, spec.ngram_order,
                                           spec.ngram_discount,
                                           corpus.vocab.size());
    EvalResult res = Evaluate(*trained.model, corpus, "test", eval, &ngram);
    report.rows.push_back({Strprintf("%d-gram", spec.ngram_order), true,
                           res.wer.wer_percent,
                           lm::Perplexity(ngram, test_text),
                           res.collapse_rate, ""});
  } catch (const Error &e) {
    report.rows.push_back(FailedRow(
        Strprintf("%d-gram", spec.ngram_order), e.what()));
  }

  // Rows 2 and 3: neural models trained on the same transcripts.
  for (const char *kind : {"recurrent", "transformer"}) {
    try {
      lm::NeuralLMConfig cfg =
          std::string(kind) == "recurrent"
              ? lm::DeskRecurrentLmConfig(corpus.vocab.size(),
                                          MixSeed(spec.seed, 21))
              : lm::DeskTransformerLmConfig(corpus.vocab.size(),
                                            MixSeed(spec.seed, 22));
      lm::NeuralLM neural(cfg);
      TrainNeuralLm(&neural, train_text, spec.lm_train);
      EvalResult res = Evaluate(*trained.model, corpus, "test", eval,
                                &neural);
      report.rows.push_back({kind, true, res.wer.wer_percent,
                             lm::Perplexity(neural, test_text),
                             res.collapse_rate, ""});
    } catch (const Error &e) {
      report.rows.push_back(FailedRow(kind, e.what()));
    }
  }
  return report;
}

ExperimentReport RunMusicAblation(const ExperimentSpec &spec) {
  ExperimentReport report;
  report.kind = spec.kind;
  report.seed = spec.seed;

  corpus::SynthResult synth =
      corpus::GenerateSyntheticCorpus(SynthForSpec(spec));
  FeatureSourceSpec features = FeatureSourceSpec::Parse(spec.feature_source);
  features.mel.n_mels = 40;
  features.seed = spec.seed;

  auto mix_all = [&](double snr_db) {
    std::vector<corpus::AudioSegment> mixed;
    for (const corpus::AudioSegment &voice : synth.audio) {
      corpus::MixSpec mix;
      mix.music = MakeMusicTrack(voice.sample_rate, voice.samples.size(),
                                 spec.seed);
      mix.target_snr_db = snr_db;
      mixed.push_back(corpus::MixBackground(voice, mix).mixed);
    }
    return mixed;
  };

  // Train once on the requested condition.
  std::vector<corpus::AudioSegment> train_audio = synth.audio;
  if (spec.train_condition.rfind("mixed:", 0) == 0) {
    train_audio = mix_all(std::stod(spec.train_condition.substr(6)));
  } else if (spec.train_condition != "clean") {
    throw DataError("train_condition must be clean or mixed:<snr>");
  }
  PreparedCorpus train_corpus = PrepareFromAudio(
      synth.manifest, train_audio, corpus::TokenUnit::kChar, features);
  TrainConfig train_cfg = spec.train;
  TrainResult trained = Train(train_corpus, train_cfg, "");

  EvalConfig eval;
  eval.use_beam = false;
  eval.beam = spec.beam;

  // Clean row, then one row per SNR.
  try {
    EvalResult res = Evaluate(*trained.model, train_corpus, "test", eval);
    report.rows.push_back(
        {"clean", true, res.wer.wer_percent, 0.0, res.collapse_rate, ""});
  } catch (const Error &e) {
    report.rows.push_back(FailedRow("clean", e.what()));
  }
  for (double snr : spec.mix_snrs_db) {
    std::string label = Strprintf("mixed@%+gdB", snr);
    try {
      PreparedCorpus mixed_corpus = PrepareFromAudio(
          synth.manifest, mix_all(snr), corpus::TokenUnit::kChar, features);
      // Same model, same normalizer; only the eval audio changes.
      EvalResult res = Evaluate(*trained.model, mixed_corpus, "test", eval);
      report.rows.push_back(
          {label, true, res.wer.wer_percent, 0.0, res.collapse_rate, ""});
    } catch (const Error &e) {
      report.rows.push_back(FailedRow(label, e.what()));
    }
  }
  return report;
}

ExperimentReport RunMain(const ExperimentSpec &spec) {
  ExperimentReport report;
  report.kind = spec.kind;
  report.seed = spec.seed;
  for (const std::string &source : spec.feature_sources) {
    for (const std::string &preset : spec.model_presets) {
      std::string label = source + "+" + preset;
      try {
        PreparedCorpus corpus = PrepareForSpec(spec, source);
        TrainConfig cfg = spec.train;
        cfg.model_preset = preset;
        TrainResult trained = Train(corpus, cfg, "");
        EvalConfig eval;
        eval.use_beam = false;
        eval.beam = spec.beam;
        EvalResult res = Evaluate(*trained.model, corpus, "test", eval);
        report.rows.push_back(
            {label, true, res.wer.wer_percent, 0.0, res.collapse_rate, ""});
      } catch (const Error &e) {
        report.rows.push_back(FailedRow(label, e.what()));
      }
    }
  }
  return report;
}

}  // namespace

ExperimentReport RunExperiment(const ExperimentSpec &spec) {
  switch (spec.kind) {
    case ExperimentKind::kLmAblation:
      return RunLmAblation(spec);
    case ExperimentKind::kMusicAblation:
      return RunMusicAblation(spec);
    case ExperimentKind::kMain:
      return RunMain(spec);
  }
  throw UsageError("unknown experiment kind");
}

}  // namespace harness
}  // namespace lyrec

// lyrec/lm.cc
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

#include "lyrec/lm.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lyrec/checkpoint.h"
#include "lyrec/io.h"

namespace lyrec {
namespace lm {

namespace {

constexpr int kSosId = 1;
constexpr int kEosId = 2;

Eigen::RowVectorXd LogOfRow(const Eigen::RowVectorXd &probs) {
  return probs.array().log().matrix();
}

}  // namespace

std::vector<double> ScoreSteps(const LanguageModel &lm,
                               const std::vector<int> &tokens) {
  std::vector<double> steps;
  LmState state = lm.Begin();
  for (int tok : tokens) {
    if (tok < 0 || tok >= lm.vocab_size()) {
      throw DataError("lm score: token outside vocabulary");
    }
    steps.push_back(state.next_logp(tok));
    lm.Advance(&state, tok);
  }
  return steps;
}

double ScoreSequence(const LanguageModel &lm, const std::vector<int> &tokens) {
  double total = 0.0;
  for (double s : ScoreSteps(lm, tokens)) total += s;
  return total;
}

double Perplexity(const LanguageModel &lm,
                  const std::vector<std::vector<int>> &corpus) {
  if (corpus.empty()) throw DataError("perplexity of an empty corpus");
  double total = 0.0;
  long n = 0;
  for (const std::vector<int> &seq : corpus) {
    std::vector<int> with_eos = seq;
    with_eos.push_back(kEosId);
    total += ScoreSequence(lm, with_eos);
    n += static_cast<long>(with_eos.size());
  }
  return std::exp(-total / static_cast<double>(n));
}

NGramLM NGramLM::Uniform(int vocab_size) {
  if (vocab_size < 1) throw DataError("vocab_size must be >= 1");
  NGramLM model(1, 0.5, vocab_size);
  model.tables_.resize(1);
  return model;
}

NGramLM NGramLM::Train(const std::vector<std::vector<int>> &corpus, int order,
                       double discount, int vocab_size) {
  if (order < 1) throw DataError("n-gram order must be >= 1");
  if (!(discount > 0.0 && discount < 1.0)) {
    throw DataError("discount must be in (0, 1)");
  }
  if (corpus.empty()) throw DataError("n-gram training corpus is empty");
  if (vocab_size < 1) throw DataError("vocab_size must be >= 1");

  NGramLM model(order, discount, vocab_size);
  model.tables_.resize(static_cast<size_t>(order));
  for (const std::vector<int> &seq : corpus) {
    std::vector<int> history(static_cast<size_t>(order - 1), kSosId);
    std::vector<int> ext = seq;
    ext.push_back(kEosId);
    for (int token : ext) {
      if (token < 0 || token >= vocab_size) {
        throw DataError("n-gram training token outside vocabulary");
      }
      for (int k = 0; k < order; ++k) {
        std::vector<int> context(history.end() - k, history.end());
        ContextStats &stats = model.tables_[static_cast<size_t>(k)][context];
        ++stats.counts[token];
        ++stats.total;
      }
      history.push_back(token);
      if (static_cast<int>(history.size()) > order - 1) {
        history.erase(history.begin());
      }
    }
  }
  return model;
}

double NGramLM::LogProb(const std::vector<int> &context, int token) const {
  if (token < 0 || token >= vocab_size_) {
    throw DataError("n-gram token outside vocabulary");
  }
  return arpa_mode_ ? ArpaLogProb(context, token)
                    : CountLogProb(context, token);
}

double NGramLM::CountLogProb(const std::vector<int> &context,
                             int token) const {
  std::vector<int> ctx = context;
  if (static_cast<int>(ctx.size()) > order_ - 1) {
    ctx.assign(context.end() - (order_ - 1), context.end());
  }
  // Interpolated absolute discounting evaluated innermost-first.
  double p = 1.0 / static_cast<double>(vocab_size_);
  for (int k = 0; k <= static_cast<int>(ctx.size()); ++k) {
    std::vector<int> sub(ctx.end() - k, ctx.end());
    auto it = tables_[static_cast<size_t>(k)].find(sub);
    if (it == tables_[static_cast<size_t>(k)].end() || it->second.total == 0) {
      continue;  // unseen context: defer to the lower order as-is
    }
    const ContextStats &stats = it->second;
    double total = static_cast<double>(stats.total);
    auto cit = stats.counts.find(token);
    double c = cit == stats.counts.end()
                   ? 0.0
                   : static_cast<double>(cit->second);
    double disc = std::max(c - discount_, 0.0) / total;
    double bow =
        discount_ * static_cast<double>(stats.counts.size()) / total;
    p = disc + bow * p;
  }
  return std::log(p);
}

Eigen::RowVectorXd NGramLM::NextLogProbsFor(
    const std::vector<int> &context) const {
  Eigen::RowVectorXd row(vocab_size_);
  for (int tok = 0; tok < vocab_size_; ++tok) {
    row(tok) = LogProb(context, tok);
  }
  return row;
}

LmState NGramLM::Begin() const {
  LmState state;
  state.context.assign(static_cast<size_t>(order_ - 1), kSosId);
  state.next_logp = NextLogProbsFor(state.context);
  return state;
}

void NGramLM::Advance(LmState *state, int token) const {
  state->context.push_back(token);
  if (static_cast<int>(state->context.size()) > order_ - 1) {
    state->context.erase(state->context.begin());
  }
  ++state->step;
  state->next_logp = NextLogProbsFor(state->context);
}

void NGramLM::SaveArpa(const std::string &path) const {
  if (arpa_mode_) {
    throw UsageError("model loaded from an ARPA file is score-only");
  }
  std::ostringstream os;
  os << "\\data\\\n";
  // Extension beyond plain ARPA, needed for the exact uniform floor.
  os << "vocab=" << vocab_size_ << "\n";
  for (int k = 0; k < order_; ++k) {
    size_t n = 0;
    for (const auto &[context, stats] : tables_[static_cast<size_t>(k)]) {
      n += stats.counts.size();
    }
    os << "ngram " << (k + 1) << "=" << n << "\n";
  }
  for (int k = 0; k < order_; ++k) {
    os << "\n\\" << (k + 1) << "-grams:\n";
    for (const auto &[context, stats] : tables_[static_cast<size_t>(k)]) {
      for (const auto &[token, count] : stats.counts) {
        os << Strprintf("%.17g", LogProb(context, token) / std::log(10.0));
        for (int id : context) os << "\t" << id;
        os << "\t" << token << "\n";
      }
    }
  }
  // Backoff masses of every seen context, one section per context length.
  // Plain ARPA hangs these off n-gram lines, which cannot represent
  // contexts that never occur as tokens (sos padding); a dedicated
  // section can.
  for (int k = 0; k < order_; ++k) {
    os << "\n\\" << k << "-contexts:\n";
    for (const auto &[context, stats] : tables_[static_cast<size_t>(k)]) {
      if (stats.total == 0) continue;
      double bow = discount_ * static_cast<double>(stats.counts.size()) /
                   static_cast<double>(stats.total);
      os << Strprintf("%.17g", std::log10(bow));
      for (int id : context) os << "\t" << id;
      os << "\n";
    }
  }
  os << "\n\\end\\\n";
  WriteFile(path, os.str());
}

NGramLM NGramLM::LoadArpa(const std::string &path) {
  std::vector<std::string> lines = ReadLines(path);
  if (lines.empty() || lines[0] != "\\data\\") {
    throw FormatError("missing \\data\\ header in " + path);
  }
  // The serialized interpolated model is reconstructed as counts cannot
  // be recovered; probabilities and backoffs are stored directly.
  NGramLM model(1, 0.5, 1);
  model.arpa_mode_ = true;

  int order = 0;
  int vocab = 0;
  size_t i = 1;
  for (; i < lines.size() && !lines[i].empty(); ++i) {
    if (lines[i].rfind("vocab=", 0) == 0) {
      vocab = std::stoi(lines[i].substr(6));
    } else if (lines[i].rfind("ngram ", 0) == 0) {
      ++order;
    } else {
      throw FormatError("bad data line in " + path + ": " + lines[i]);
    }
  }
  if (order < 1) throw FormatError("no ngram sections declared in " + path);
  if (vocab < 1) throw FormatError("missing vocab= line in " + path);
  model.order_ = order;
  model.vocab_size_ = vocab;
  model.arpa_.resize(static_cast<size_t>(order));
  model.context_bows_.resize(static_cast<size_t>(order));

  bool in_grams = false;
  int current = 0;
  for (; i < lines.size(); ++i) {
    const std::string &line = lines[i];
    if (line.empty()) continue;
    if (line == "\\end\\") break;
    if (line[0] == '\\') {
      size_t dash = line.find('-');
      if (dash == std::string::npos) {
        throw FormatError("bad section header in " + path + ": " + line);
      }
      current = std::stoi(line.substr(1, dash - 1));
      in_grams = line.substr(dash) == "-grams:";
      int max_section = in_grams ? order : order - 1;
      int min_section = in_grams ? 1 : 0;
      if (current < min_section || current > max_section) {
        throw FormatError("bad section header in " + path + ": " + line);
      }
      continue;
    }
    std::vector<std::string> fields = SplitString(line, '\t');
    if (in_grams) {
      if (fields.size() != static_cast<size_t>(current) + 1) {
        throw FormatError("bad ngram line in " + path + ": " + line);
      }
      double logp = std::stod(fields[0]) * std::log(10.0);
      std::vector<int> ids;
      for (int f = 1; f <= current; ++f) {
        ids.push_back(std::stoi(fields[static_cast<size_t>(f)]));
      }
      std::vector<int> context(ids.begin(), ids.end() - 1);
      model.arpa_[static_cast<size_t>(current - 1)][context][ids.back()] =
          logp;
    } else {
      if (fields.size() != static_cast<size_t>(current) + 1) {
        throw FormatError("bad context line in " + path + ": " + line);
      }
      double logbow = std::stod(fields[0]) * std::log(10.0);
      std::vector<int> ids;
      for (int f = 1; f <= current; ++f) {
        ids.push_back(std::stoi(fields[static_cast<size_t>(f)]));
      }
      model.context_bows_[static_cast<size_t>(current)][ids] = logbow;
    }
  }
  return model;
}

double NGramLM::ArpaLogProb(const std::vector<int> &context,
                            int token) const {
  // Backoff evaluation: the longest stored n-gram wins; each missing
  // level contributes its context's backoff weight (absent = unseen
  // context = weight one).
  std::vector<int> ctx = context;
  if (static_cast<int>(ctx.size()) > order_ - 1) {
    ctx.assign(context.end() - (order_ - 1), context.end());
  }
  double bow_acc = 0.0;
  for (int k = static_cast<int>(ctx.size()); k >= 0; --k) {
    std::vector<int> sub(ctx.end() - k, ctx.end());
    auto table_it = arpa_[static_cast<size_t>(k)].find(sub);
    if (table_it != arpa_[static_cast<size_t>(k)].end()) {
      auto entry_it = table_it->second.find(token);
      if (entry_it != table_it->second.end()) {
        return bow_acc + entry_it->second;
      }
    }
    auto bow_it = context_bows_[static_cast<size_t>(k)].find(sub);
    if (bow_it != context_bows_[static_cast<size_t>(k)].end()) {
      bow_acc += bow_it->second;
    }
  }
  return bow_acc + std::log(1.0 / static_cast<double>(vocab_size_));
}

void NeuralLMConfig::Validate() const {
  if (num_layers < 1) throw DataError("lm num_layers must be >= 1");
  if (hidden < 1) throw DataError("lm hidden must be >= 1");
  if (kind == Kind::kTransformer && (heads < 1 || hidden % heads != 0)) {
    throw DataError("lm hidden must be divisible by heads");
  }
  if (vocab_size < 6) throw DataError("lm vocab_size too small");
}

NeuralLMConfig RecurrentLmPreset(int vocab_size, uint64_t seed) {
  return {NeuralLMConfig::Kind::kRecurrent, 2, 650, 4, vocab_size, seed};
}

NeuralLMConfig TransformerLmPreset(int vocab_size, uint64_t seed) {
  return {NeuralLMConfig::Kind::kTransformer, 8, 1024, 4, vocab_size, seed};
}

NeuralLMConfig DeskRecurrentLmConfig(int vocab_size, uint64_t seed) {
  return {NeuralLMConfig::Kind::kRecurrent, 1, 48, 4, vocab_size, seed};
}

NeuralLMConfig DeskTransformerLmConfig(int vocab_size, uint64_t seed) {
  return {NeuralLMConfig::Kind::kTransformer, 2, 48, 4, vocab_size, seed};
}

NeuralLM::NeuralLM(const NeuralLMConfig &cfg) : cfg_(cfg) {
  cfg_.Validate();
  Rng rng(cfg_.seed);
  emb_ = nn::EmbeddingLayer(&params_, "lm.emb", cfg_.vocab_size, cfg_.hidden,
                            &rng);
  if (cfg_.kind == NeuralLMConfig::Kind::kRecurrent) {
    for (int i = 0; i < cfg_.num_layers; ++i) {
      cells_.emplace_back(&params_, Strprintf("lm.layer%d", i), cfg_.hidden,
                          cfg_.hidden, &rng);
    }
  } else {
    for (int i = 0; i < cfg_.num_layers; ++i) {
      blocks_.emplace_back(&params_, Strprintf("lm.block%d", i), cfg_.hidden,
                           cfg_.heads, 4 * cfg_.hidden, &rng);
    }
    final_ln_ = nn::LayerNormLayer(&params_, "lm.final_ln", cfg_.hidden);
  }
  out_ = nn::Linear(&params_, "lm.out", cfg_.hidden, cfg_.vocab_size, &rng);
}

nn::Tensor NeuralLM::ForwardT(const std::vector<int> &input_tokens, bool train,
                              Rng *rng) const {
  (void)train;
  (void)rng;
  if (input_tokens.empty()) throw UsageError("lm forward needs input tokens");
  if (cfg_.kind == NeuralLMConfig::Kind::kRecurrent) {
    nn::Tensor x = emb_.Forward(input_tokens);
    std::vector<nn::Tensor> rows = nn::LstmRunSequence(cells_, x, false);
    return out_.Forward(nn::ConcatRows(rows));
  }
  long t_len = static_cast<long>(input_tokens.size());
  nn::Tensor x = nn::Scale(emb_.Forward(input_tokens),
                           std::sqrt(static_cast<double>(cfg_.hidden)));
  x = nn::Add(x, nn::Tensor::Constant(
                     nn::SinusoidalPositionalEncoding(t_len, cfg_.hidden)));
  Mat mask = nn::CausalMask(t_len);
  for (const auto &block : blocks_) {
    x = block.Forward(x, 0.0, nullptr, &mask);
  }
  return out_.Forward(final_ln_.Forward(x));
}

nn::Tensor NeuralLM::SequenceNll(const std::vector<int> &tokens, bool train,
                                 Rng *rng) const {
  std::vector<int> input;
  input.push_back(kSosId);
  input.insert(input.end(), tokens.begin(), tokens.end());
  std::vector<int> targets = tokens;
  targets.push_back(kEosId);
  nn::Tensor logits = ForwardT(input, train, rng);
  return nn::LabelSmoothedNll(nn::LogSoftmaxRows(logits), targets, 0.0);
}

LmState NeuralLM::Begin() const {
  LmState state;
  if (cfg_.kind == NeuralLMConfig::Kind::kRecurrent) {
    for (int i = 0; i < cfg_.num_layers; ++i) {
      state.hs.push_back(Mat::Zero(1, cfg_.hidden));
      state.cs.push_back(Mat::Zero(1, cfg_.hidden));
    }
  } else {
    state.kv.resize(static_cast<size_t>(cfg_.num_layers));
    for (auto &kv : state.kv) {
      kv.first = Mat(0, cfg_.hidden);
      kv.second = Mat(0, cfg_.hidden);
    }
  }
  state.next_logp = StepEval(&state, kSosId);
  return state;
}

void NeuralLM::Advance(LmState *state, int token) const {
  state->next_logp = StepEval(state, token);
}

Eigen::RowVectorXd NeuralLM::StepEval(LmState *state, int token) const {
  Eigen::RowVectorXd logits;
  if (cfg_.kind == NeuralLMConfig::Kind::kRecurrent) {
    Mat x = emb_.Row(token);
    for (size_t l = 0; l < cells_.size(); ++l) {
      cells_[l].StepEval(x, &state->hs[l], &state->cs[l]);
      x = state->hs[l];
    }
    logits = out_.Forward(x).row(0);
  } else {
    Mat x = emb_.Row(token) * std::sqrt(static_cast<double>(cfg_.hidden));
    x += nn::SinusoidalPositionalEncoding(1, cfg_.hidden, state->step);
    for (size_t l = 0; l < blocks_.size(); ++l) {
      const nn::TransformerEncoderLayer &block = blocks_[l];
      Mat xn = block.ln_attn.Forward(x);
      Mat k_new = block.attn.ProjectKeys(xn);
      Mat v_new = block.attn.ProjectValues(xn);
      Mat &k_cache = state->kv[l].first;
      Mat &v_cache = state->kv[l].second;
      k_cache.conservativeResize(k_cache.rows() + 1, Eigen::NoChange);
      k_cache.row(k_cache.rows() - 1) = k_new.row(0);
      v_cache.conservativeResize(v_cache.rows() + 1, Eigen::NoChange);
      v_cache.row(v_cache.rows() - 1) = v_new.row(0);
      x = x + block.attn.AttendEval(xn, k_cache, v_cache, nullptr, nullptr);
      x = x + block.ff.Forward(block.ln_ff.Forward(x));
    }
    logits = out_.Forward(final_ln_.Forward(x)).row(0);
  }
  ++state->step;
  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

std::vector<std::pair<std::string, Mat>> NeuralLM::ExportTensors() const {
  std::vector<std::pair<std::string, Mat>> out;
  for (size_t i = 0; i < params_.params().size(); ++i) {
    out.emplace_back(params_.names()[i], params_.params()[i].Value());
  }
  return out;
}

void NeuralLM::ImportTensors(
    const std::vector<std::pair<std::string, Mat>> &state) {
  if (state.size() != params_.params().size()) {
    throw DataError("lm checkpoint has wrong tensor count");
  }
  for (size_t i = 0; i < state.size(); ++i) {
    if (state[i].first != params_.names()[i]) {
      throw DataError("lm checkpoint name mismatch: " + state[i].first);
    }
    nn::Tensor p = params_.params()[i];
    if (state[i].second.rows() != p.Rows() ||
        state[i].second.cols() != p.Cols()) {
      throw DataError("lm checkpoint shape mismatch: " + state[i].first);
    }
    p.MutableValue() = state[i].second;
  }
}

std::string NeuralLM::SerializeConfig() const {
  std::string s;
  s += std::string("lm.kind = ") +
       (cfg_.kind == NeuralLMConfig::Kind::kRecurrent ? "recurrent"
                                                      : "transformer") +
       "\n";
  s += Strprintf("lm.num_layers = %d\n", cfg_.num_layers);
  s += Strprintf("lm.hidden = %ld\n", cfg_.hidden);
  s += Strprintf("lm.heads = %d\n", cfg_.heads);
  s += Strprintf("lm.vocab_size = %d\n", cfg_.vocab_size);
  s += Strprintf("lm.seed = %llu\n",
                 static_cast<unsigned long long>(cfg_.seed));
  return s;
}

NeuralLMConfig NeuralLM::DeserializeConfig(const std::string &text) {
  NeuralLMConfig cfg;
  for (const auto &[key, value] : ParseKeyValueLines(text)) {
    if (key == "lm.kind") {
      cfg.kind = value == "recurrent" ? NeuralLMConfig::Kind::kRecurrent
                                      : NeuralLMConfig::Kind::kTransformer;
    } else if (key == "lm.num_layers") {
      cfg.num_layers = std::stoi(value);
    } else if (key == "lm.hidden") {
      cfg.hidden = std::stol(value);
    } else if (key == "lm.heads") {
      cfg.heads = std::stoi(value);
    } else if (key == "lm.vocab_size") {
      cfg.vocab_size = std::stoi(value);
    } else if (key == "lm.seed") {
      cfg.seed = std::stoull(value);
    } else {
      throw FormatError("unknown lm config key '" + key + "'");
    }
  }
  cfg.Validate();
  return cfg;
}

void SaveNeuralLm(const std::string &path, const NeuralLM &lm) {
  Checkpoint ckpt;
  ckpt.config_text = lm.SerializeConfig();
  ckpt.tensors = lm.ExportTensors();
  SaveCheckpoint(path, ckpt);
}

std::unique_ptr<NeuralLM> LoadNeuralLm(const std::string &path) {
  Checkpoint ckpt = LoadCheckpoint(path);
  NeuralLMConfig cfg = NeuralLM::DeserializeConfig(ckpt.config_text);
  auto lm = std::make_unique<NeuralLM>(cfg);
  lm->ImportTensors(ckpt.tensors);
  return lm;
}

}  // namespace lm
}  // namespace lyrec

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styletx/checkpoint.hpp"
#include "styletx/data.hpp"
#include "styletx/layers.hpp"
#include "styletx/optim.hpp"

namespace styletx {

struct ClassifierConfig {
  std::size_t hidden = 1024;       // per direction
  std::size_t layers = 2;
  std::size_t embedding = 300;
  std::size_t mlp_hidden = 64;
  double dropout = 0.2;
  std::size_t epochs = 5;
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  double clip = 5.0;
  std::uint64_t seed = 2;

  void validate() const {
    if (hidden == 0 || layers == 0 || embedding == 0 || mlp_hidden == 0) {
      throw ConfigError("classifier sizes must be positive");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("classifier dropout must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("classifier batch size must be positive");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ClassifierConfig, hidden, layers, embedding, mlp_hidden, dropout, epochs,
                                   learning_rate, batch_size, clip, seed)

/// Bidirectional LSTM encoder; the concatenated final forward and backward
/// states of the top layer feed a tanh MLP with one output logit.
struct SentimentClassifier {
  ClassifierConfig config;
  EmbeddingTable embedding;
  LSTMStack encoder;
  DenseLayer head;
  DenseLayer output;

  SentimentClassifier(const ClassifierConfig& cfg, std::size_t vocab_size) : config(cfg) {
    config.validate();
    Rng rng(config.seed);
    embedding = EmbeddingTable("clf.embedding", vocab_size, config.embedding, rng);
    encoder = LSTMStack("clf.encoder", config.embedding, config.hidden, config.layers, Direction::bidirectional,
                        config.dropout, rng);
    head = DenseLayer("clf.head", encoder.output_width(), config.mlp_hidden, Activation::tanh, rng);
    output = DenseLayer("clf.output", config.mlp_hidden, 1, Activation::none, rng);
  }

  std::size_t vocab_size() const { return embedding.vocab_size(); }

  /// B x 1 logits; positive means positive sentiment.
  Var logits(Tape& tape, const Batch& batch, const RunOptions& options = {}) const {
    std::vector<Var> inputs;
    for (const auto& step : batch.source) inputs.push_back(embed(tape, embedding, step));
    RunOptions opts = options;
    opts.initial = nullptr;
    Var pooled = run_stack(tape, encoder, inputs, batch.source_lengths, opts).final_state.back().h;
    Var x = dropout(pooled, options.training ? config.dropout : 0.0, options.training, options.rng);
    return output.apply(tape, head.apply(tape, x));
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&embedding.table};
    for (auto* p : encoder.parameters()) out.push_back(p);
    for (auto* p : head.parameters()) out.push_back(p);
    for (auto* p : output.parameters()) out.push_back(p);
    return out;
  }
};

struct ClassifierEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double dev_loss = 0.0;
  double dev_accuracy = 0.0;
};

/// Per-example BCE summed over a batch with mixed labels.
inline Var classifier_loss_sum(Tape& tape, const Var& logits, std::span<const Sentiment> labels) {
  const std::size_t b = labels.size();
  Tensor pick = Tensor::zeros({b, 2});
  for (std::size_t j = 0; j < b; ++j) pick(j, labels[j] == Sentiment::positive ? 1 : 0) = -1.0;
  Var pair = concat({tape.constant(Tensor::zeros({b, 1})), logits}, 1);
  return sum(log_softmax(pair) * tape.constant(std::move(pick)));
}

struct ClassifierScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean BCE and accuracy with dropout off.
inline ClassifierScore score_classifier(const SentimentClassifier& clf, std::span<const EncodedExample> examples,
                                        std::size_t batch_size = 128) {
  ClassifierScore s;
  if (examples.empty()) return s;
  std::size_t correct = 0;
  for (const Batch& b : sequential_batches(examples, batch_size)) {
    Tape tape(Tape::Mode::inference);
    Var z = clf.logits(tape, b);
    for (std::size_t j = 0; j < b.size(); ++j) {
      if ((z.value()(j, 0) >= 0.0) == (b.labels[j] == Sentiment::positive)) ++correct;
    }
    s.loss += classifier_loss_sum(tape, z, b.labels).value().item();
  }
  s.loss /= double(examples.size());
  s.accuracy = double(correct) / double(examples.size());
  return s;
}

struct ClassifierRun {
  std::vector<ClassifierEpoch> curves;
};

/// BCE training with Adam and value clipping. `on_epoch` may stop early by
/// returning false.
inline ClassifierRun train_classifier(SentimentClassifier& clf, std::span<const EncodedExample> train,
                                      std::span<const EncodedExample> dev,
                                      const std::function<bool(const ClassifierEpoch&)>& on_epoch = nullptr) {
  if (train.empty()) throw DataError("classifier training split is empty");
  const auto& cfg = clf.config;
  Rng rng = Rng::derive(cfg.seed, 1);
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  const ClipSpec clip{-cfg.clip, cfg.clip};
  const auto params = clf.parameters();
  const std::size_t minibatches = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  ClassifierRun run;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (const Batch& b : bucket_batches(train, minibatches, rng)) {
      Tape tape;
      Var z = clf.logits(tape, b, {.training = true, .rng = &rng});
      Var total = classifier_loss_sum(tape, z, b.labels);
      const double value = total.value().item();
      if (!std::isfinite(value)) throw NumericError("non-finite classifier loss in epoch " + std::to_string(epoch));
      for (std::size_t j = 0; j < b.size(); ++j) {
        if ((z.value()(j, 0) >= 0.0) == (b.labels[j] == Sentiment::positive)) ++correct;
      }
      loss += value;
      adam_step(params, clip_by_value(tape.backward(scale(total, 1.0 / double(b.size()))).named(), clip), adam);
    }
    const ClassifierScore d = score_classifier(clf, dev);
    ClassifierEpoch e{epoch, loss / double(train.size()), double(correct) / double(train.size()), d.loss,
                      d.accuracy};
    run.curves.push_back(e);
    if (on_epoch && !on_epoch(e)) break;
  }
  return run;
}

struct Prediction {
  Sentiment label = Sentiment::negative;
  double probability = 0.5;   // of the positive class
};

inline Prediction classify_ids(const SentimentClassifier& clf, std::span<const TokenId> ids) {
  EncodedExample ex{std::vector<TokenId>(ids.begin(), ids.end()), Sentiment::positive};
  Tape tape(Tape::Mode::inference);
  const double z = clf.logits(tape, make_batch(std::span<const EncodedExample>(&ex, 1))).value().item();
  const double p = 1.0 / (1.0 + std::exp(-z));
  return {z >= 0.0 ? Sentiment::positive : Sentiment::negative, p};
}

/// Label and positive-class probability for a raw sentence. Out-of-vocabulary
/// words map to _UNK_; a sentence that cleans to nothing is an error.
inline Prediction classify(const SentimentClassifier& clf, const Vocabulary& vocab, std::string_view sentence) {
  const auto tokens = clean_text(sentence);
  if (tokens.empty()) throw DataError("sentence is empty after cleaning");
  return classify_ids(clf, vocab.encode(tokens));
}

/// Percentage of sentences classified as `target`. Sentences that clean to
/// nothing count as failures.
inline double transfer_accuracy(const SentimentClassifier& clf, const Vocabulary& vocab,
                                std::span<const std::string> sentences, Sentiment target) {
  if (sentences.empty()) throw DataError("transfer_accuracy of an empty set");
  std::size_t hits = 0;
  for (const auto& s : sentences) {
    const auto tokens = clean_text(s);
    if (tokens.empty()) continue;
    if (classify_ids(clf, vocab.encode(tokens)).label == target) ++hits;
  }
  return 100.0 * double(hits) / double(sentences.size());
}

inline void save_classifier(SentimentClassifier& clf, const std::filesystem::path& path, const std::string& run_id) {
  auto params = clf.parameters();
  snap_to_float32(params);
  Checkpoint ckpt;
  ckpt.kind = "classifier";
  ckpt.run_id = run_id;
  ckpt.config = clf.config;
  ckpt.extra = {{"vocab_size", clf.vocab_size()}};
  std::vector<const Parameter*> cp(params.begin(), params.end());
  ckpt.arrays = arrays_of(cp);
  write_checkpoint(path, ckpt);
}

inline SentimentClassifier classifier_from(const Checkpoint& ckpt) {
  if (ckpt.kind != "classifier") throw CheckpointError("checkpoint holds a " + ckpt.kind + " model, not a classifier");
  ClassifierConfig cfg;
  std::size_t vocab = 0;
  try {
    cfg = ckpt.config.get<ClassifierConfig>();
    vocab = ckpt.extra.at("vocab_size").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("classifier checkpoint config: ") + e.what());
  }
  SentimentClassifier clf(cfg, vocab);
  load_parameters(ckpt, clf.parameters());
  return clf;
}

inline SentimentClassifier load_classifier(const std::filesystem::path& path) {
  return classifier_from(read_checkpoint(path));
}

}  // namespace styletx

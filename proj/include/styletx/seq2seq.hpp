#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "styletx/autograd.hpp"
#include "styletx/data.hpp"
#include "styletx/layers.hpp"
#include "styletx/optim.hpp"
#include "styletx/rng.hpp"

namespace styletx {

enum class Variant { vanilla, reduced, reversed, bidirectional, reduced_bidirectional };

inline constexpr Variant kAllVariants[] = {Variant::vanilla, Variant::reduced, Variant::reversed,
                                           Variant::bidirectional, Variant::reduced_bidirectional};

/// Short name used on the command line and for run directories.
inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::reduced: return "reduced";
    case Variant::reversed: return "reversed";
    case Variant::bidirectional: return "bidi";
    case Variant::reduced_bidirectional: return "reduced-bidi";
  }
  return "?";
}

/// Name used in reports.
inline const char* display_name(Variant v) {
  switch (v) {
    case Variant::vanilla: return "Vanilla";
    case Variant::reduced: return "Reduced";
    case Variant::reversed: return "Reversed";
    case Variant::bidirectional: return "Bidirectional";
    case Variant::reduced_bidirectional: return "Reduced Bidirectional";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : kAllVariants) {
    if (s == variant_name(v)) return v;
  }
  if (s == "bidirectional") return Variant::bidirectional;
  if (s == "reduced_bidirectional" || s == "reduced-bidirectional") return Variant::reduced_bidirectional;
  throw ConfigError("unknown seq2seq variant '" + s + "'");
}

struct Seq2SeqConfig {
  Variant variant = Variant::vanilla;
  std::size_t layers = 2;
  /// Encoder output width; split into two halves when bidirectional.
  std::size_t hidden = 1024;
  std::size_t embedding = 300;
  std::size_t epochs = 300;
  double learning_rate = 0.01;
  double clip = 5.0;
  std::uint64_t seed = 2;
  std::size_t max_decode_len = kMaxSentenceLength + 1;
  std::size_t minibatches = 512;
  double dropout = 0.0;
  std::size_t reduced_records = kReducedRecords;
  Sentiment style = Sentiment::positive;

  bool reduced() const {
    return variant == Variant::reduced || variant == Variant::reduced_bidirectional;
  }
  bool reversed() const { return variant == Variant::reversed; }
  bool bidirectional() const {
    return variant == Variant::bidirectional || variant == Variant::reduced_bidirectional;
  }
  std::size_t encoder_hidden_per_direction() const { return bidirectional() ? hidden / 2 : hidden; }

  void validate() const {
    if (layers == 0 || hidden == 0 || embedding == 0) throw ConfigError("model sizes must be positive");
    if (bidirectional() && hidden % 2 != 0) {
      throw ConfigError("bidirectional encoder needs an even hidden width, got " + std::to_string(hidden));
    }
    if (max_decode_len == 0) throw ConfigError("max_decode_len must be at least 1");
    if (!(clip > 0.0)) throw ConfigError("clip bound must be positive");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
  }
};

inline void to_json(nlohmann::json& j, const Seq2SeqConfig& c) {
  j = {{"variant", variant_name(c.variant)},
       {"layers", c.layers},
       {"hidden", c.hidden},
       {"embedding", c.embedding},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"clip", c.clip},
       {"seed", c.seed},
       {"max_decode_len", c.max_decode_len},
       {"minibatches", c.minibatches},
       {"dropout", c.dropout},
       {"reduced_records", c.reduced_records},
       {"style", to_string(c.style)}};
}

inline void from_json(const nlohmann::json& j, Seq2SeqConfig& c) {
  c.variant = parse_variant(j.at("variant").get<std::string>());
  j.at("layers").get_to(c.layers);
  j.at("hidden").get_to(c.hidden);
  j.at("embedding").get_to(c.embedding);
  j.at("epochs").get_to(c.epochs);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("clip").get_to(c.clip);
  j.at("seed").get_to(c.seed);
  j.at("max_decode_len").get_to(c.max_decode_len);
  j.at("minibatches").get_to(c.minibatches);
  j.at("dropout").get_to(c.dropout);
  j.at("reduced_records").get_to(c.reduced_records);
  c.style = parse_sentiment(j.at("style").get<std::string>());
}

/// Shared embedding, encoder stack, unidirectional decoder stack and the
/// projection to vocabulary logits. Bound to one style corpus.
struct Seq2SeqModel {
  Seq2SeqConfig config;
  EmbeddingTable embedding;
  LSTMStack encoder;
  LSTMStack decoder;
  DenseLayer output;

  Seq2SeqModel(const Seq2SeqConfig& cfg, std::size_t vocab_size) : config(cfg) {
    config.validate();
    if (vocab_size <= kReservedTokens) throw ConfigError("vocabulary has no regular tokens");
    Rng rng(config.seed);
    embedding = EmbeddingTable("embedding", vocab_size, config.embedding, rng);
    encoder = LSTMStack("encoder", config.embedding, config.encoder_hidden_per_direction(),
                        config.layers,
                        config.bidirectional() ? Direction::bidirectional : Direction::forward,
                        config.dropout, rng);
    decoder = LSTMStack("decoder", config.embedding, encoder.output_width(), config.layers,
                        Direction::forward, config.dropout, rng);
    output = DenseLayer("output", decoder.output_width(), vocab_size, Activation::none, rng);
  }

  std::size_t vocab_size() const { return embedding.vocab_size(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&embedding.table};
    for (auto* p : encoder.parameters()) out.push_back(p);
    for (auto* p : decoder.parameters()) out.push_back(p);
    for (auto* p : output.parameters()) out.push_back(p);
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    auto all = const_cast<Seq2SeqModel*>(this)->parameters();
    return {all.begin(), all.end()};
  }
};

/// Applies the variant's source transformation (reversal) to a raw batch.
inline Batch prepare_batch(const Seq2SeqModel& model, Batch batch) {
  return model.config.reversed() ? reverse_source(std::move(batch)) : batch;
}

/// Final per-layer encoder state; directional halves are concatenated.
inline std::vector<LSTMState> encode_batch(Tape& tape, const Seq2SeqModel& model, const Batch& batch,
                                           const RunOptions& options = {}) {
  std::vector<Var> inputs;
  for (const auto& step : batch.source) inputs.push_back(embed(tape, model.embedding, step));
  RunOptions opts = options;
  opts.initial = nullptr;
  return run_stack(tape, model.encoder, inputs, batch.source_lengths, opts).final_state;
}

struct ForwardPass {
  Var logits;                    // (T_t * B) x V, time-major rows
  std::vector<Var> top_hidden;   // per decoder timestep, B x H
  SequenceLoss loss;
};

/// Teacher-forced encoder-decoder pass over a prepared batch.
inline ForwardPass forward(Tape& tape, const Seq2SeqModel& model, const Batch& batch,
                           const RunOptions& options = {}) {
  std::vector<LSTMState> state = encode_batch(tape, model, batch, options);
  std::vector<Var> inputs;
  for (const auto& step : batch.target_in) inputs.push_back(embed(tape, model.embedding, step));
  const std::vector<std::size_t> full(batch.size(), batch.target_steps());
  RunOptions dec = options;
  dec.initial = &state;
  ForwardPass pass;
  pass.top_hidden = run_stack(tape, model.decoder, inputs, full, dec).outputs;
  if (pass.top_hidden.empty()) throw DataError("batch has no target timesteps");
  pass.logits = model.output.apply(tape, concat(pass.top_hidden, 0));
  std::vector<TokenId> targets;
  std::vector<double> weights;
  for (std::size_t t = 0; t < batch.target_steps(); ++t) {
    targets.insert(targets.end(), batch.target_out[t].begin(), batch.target_out[t].end());
    weights.insert(weights.end(), batch.weights[t].begin(), batch.weights[t].end());
  }
  pass.loss = sequence_loss(pass.logits, targets, weights);
  return pass;
}

inline std::size_t weighted_tokens(const Batch& batch) {
  double total = 0.0;
  for (const auto& row : batch.weights) {
    for (double w : row) total += w;
  }
  return static_cast<std::size_t>(total);
}

/// Index of the largest entry in row `r`; ties go to the lowest index.
inline std::size_t argmax_row(const Tensor& logits, std::size_t r, std::size_t first = 0) {
  std::size_t best = first;
  for (std::size_t c = first + 1; c < logits.cols(); ++c) {
    if (logits(r, c) > logits(r, best)) best = c;
  }
  return best;
}

struct ReconstructionScore {
  double loss = 0.0;       // mean over real target tokens
  double accuracy = 0.0;   // fraction of real target tokens predicted, teacher forced
  std::size_t tokens = 0;
};

/// Teacher-forced reconstruction loss and token accuracy, no dropout.
inline ReconstructionScore evaluate_reconstruction(const Seq2SeqModel& model,
                                                   std::span<const EncodedExample> examples,
                                                   std::size_t batch_size = 64) {
  ReconstructionScore score;
  if (examples.empty()) return score;
  double nll = 0.0;
  std::size_t correct = 0;
  for (const Batch& raw : sequential_batches(examples, batch_size)) {
    const Batch batch = prepare_batch(model, raw);
    Tape tape(Tape::Mode::inference);
    ForwardPass pass = forward(tape, model, batch);
    const std::size_t tokens = weighted_tokens(batch);
    nll += pass.loss.value.value().item() * double(tokens);
    const Tensor& logits = pass.logits.value();
    const std::size_t b = batch.size();
    for (std::size_t t = 0; t < batch.target_steps(); ++t) {
      for (std::size_t j = 0; j < b; ++j) {
        if (batch.weights[t][j] > 0.0 && argmax_row(logits, t * b + j) == batch.target_out[t][j]) {
          ++correct;
        }
      }
    }
    score.tokens += tokens;
  }
  score.loss = nll / double(score.tokens);
  score.accuracy = double(correct) / double(score.tokens);
  return score;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;       // token-weighted mean training loss
  double accuracy = 0.0;   // dev token accuracy in [0, 1]
};

/// Training stopped on a non-finite value; the model holds the parameters
/// of the last completed epoch.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::size_t epoch)
      : NumericError(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

inline std::vector<Tensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

inline void restore(const std::vector<Parameter*>& params, const std::vector<Tensor>& saved) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = saved[i];
}

/// Applies backward -> clip -> Adam for one autoencoder batch.
class Seq2SeqTrainer {
 public:
  /// Optional extra term added to the reconstruction loss of a step.
  using ExtraLoss = std::function<std::optional<Var>(Tape&, const ForwardPass&, const Batch&)>;

  struct StepResult {
    double loss = 0.0;         // reconstruction loss
    double extra = 0.0;        // value of the extra term, 0 when absent
    std::size_t tokens = 0;
  };

  Seq2SeqTrainer(Seq2SeqModel& model, double learning_rate, double clip)
      : model_(model), params_(model.parameters()), clip_{-clip, clip},
        rng_(Rng::derive(model.config.seed, 1)) {
    adam_.learning_rate = learning_rate;
  }

  explicit Seq2SeqTrainer(Seq2SeqModel& model)
      : Seq2SeqTrainer(model, model.config.learning_rate, model.config.clip) {}

  StepResult step(const Batch& batch, const ExtraLoss& extra = nullptr) {
    Tape tape;
    RunOptions options{.training = true, .rng = &rng_};
    ForwardPass pass = forward(tape, model_, batch, options);
    StepResult result;
    result.loss = pass.loss.value.value().item();
    result.tokens = weighted_tokens(batch);
    if (!std::isfinite(result.loss)) throw NumericError("non-finite reconstruction loss");
    Var total = pass.loss.value;
    if (extra) {
      if (auto term = extra(tape, pass, batch)) {
        result.extra = term->value().item();
        total = total + *term;
      }
    }
    GradMap grads = clip_by_value(tape.backward(total).named(), clip_);
    adam_step(params_, grads, adam_);
    return result;
  }

  Rng& rng() { return rng_; }
  AdamState& adam() { return adam_; }
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  Seq2SeqModel& model_;
  std::vector<Parameter*> params_;
  ClipSpec clip_;
  AdamState adam_;
  Rng rng_;
};

struct TrainOptions {
  std::size_t epochs = 300;
  std::size_t minibatches = 512;
  /// Stop after this many optimisation steps; 0 means no cap.
  std::size_t max_iterations = 0;
  /// Called after every epoch; returning false stops training.
  std::function<bool(const EpochMetrics&)> on_epoch;
};

/// Epoch loop shared by the plain and adversarial trainers. `step` runs one
/// optimisation step on a prepared batch and returns its StepResult.
template <class StepFn>
std::vector<EpochMetrics> run_epochs(Seq2SeqModel& model, Rng& rng,
                                     std::span<const EncodedExample> train,
                                     std::span<const EncodedExample> dev, const TrainOptions& options,
                                     StepFn&& step) {
  if (train.empty()) throw DataError("training split is empty");
  const auto params = model.parameters();
  std::vector<Tensor> last_good = snapshot(params);
  std::vector<EpochMetrics> history;
  std::size_t iterations = 0;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    double nll = 0.0;
    std::size_t tokens = 0;
    try {
      for (const Batch& raw : bucket_batches(train, options.minibatches, rng)) {
        if (options.max_iterations && iterations >= options.max_iterations) break;
        const auto r = step(prepare_batch(model, raw));
        nll += r.loss * double(r.tokens);
        tokens += r.tokens;
        ++iterations;
      }
    } catch (const NumericError& e) {
      restore(params, last_good);
      throw TrainingAborted(std::string("training aborted in epoch ") + std::to_string(epoch) +
                                ": " + e.what(),
                            epoch);
    }
    if (tokens == 0) break;
    EpochMetrics m{epoch, nll / double(tokens), evaluate_reconstruction(model, dev).accuracy};
    if (!std::isfinite(m.loss)) {
      restore(params, last_good);
      throw TrainingAborted("non-finite epoch loss in epoch " + std::to_string(epoch), epoch);
    }
    last_good = snapshot(params);
    history.push_back(m);
    if (options.on_epoch && !options.on_epoch(m)) break;
    if (options.max_iterations && iterations >= options.max_iterations) break;
  }
  return history;
}

/// Autoencoder training: source equals target, teacher forcing, Adam.
inline std::vector<EpochMetrics> train(Seq2SeqModel& model, std::span<const EncodedExample> train_split,
                                       std::span<const EncodedExample> dev, const TrainOptions& options) {
  Seq2SeqTrainer trainer(model);
  return run_epochs(model, trainer.rng(), train_split, dev, options,
                    [&](const Batch& b) { return trainer.step(b); });
}

inline TrainOptions options_from(const Seq2SeqConfig& cfg) {
  TrainOptions o;
  o.epochs = cfg.epochs;
  o.minibatches = cfg.minibatches;
  return o;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct EncodedState {
  std::vector<Tensor> h;   // per layer, 1 x W
  std::vector<Tensor> c;
  bool empty_source = false;
};

/// Final encoder state for one source sequence (already reversed when the
/// variant asks for it). An empty source gives zeros and sets empty_source.
inline EncodedState encode(const Seq2SeqModel& model, std::span<const TokenId> source) {
  Tape tape(Tape::Mode::inference);
  EncodedExample ex{std::vector<TokenId>(source.begin(), source.end()), model.config.style};
  const Batch batch = make_batch(std::span<const EncodedExample>(&ex, 1));
  EncodedState out;
  out.empty_source = source.empty();
  for (const auto& layer : encode_batch(tape, model, batch)) {
    out.h.push_back(layer.h.value());
    out.c.push_back(layer.c.value());
  }
  return out;
}

/// Greedy decoding from _GO_: each step feeds the embedding of the previous
/// argmax back in. Candidates are _EOS_ and the regular tokens; ties go to
/// the lowest id. Stops at _EOS_ (not emitted) or after max_len tokens.
inline std::vector<TokenId> decode_greedy(const Seq2SeqModel& model, const EncodedState& state,
                                          std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  if (state.h.size() != model.decoder.layers()) {
    throw ShapeError("decoder has " + std::to_string(model.decoder.layers()) +
                     " layers, state has " + std::to_string(state.h.size()));
  }
  Tape tape(Tape::Mode::inference);
  std::vector<LSTMState> layers;
  for (std::size_t l = 0; l < state.h.size(); ++l) {
    layers.push_back({tape.constant(state.h[l]), tape.constant(state.c[l])});
  }
  std::vector<TokenId> out;
  TokenId previous = kGo;
  while (out.size() < max_len) {
    Var x = embed(tape, model.embedding, std::span<const TokenId>(&previous, 1));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l] = lstm_step(tape, model.decoder.forward_cells[l], x, layers[l].h, layers[l].c);
      x = layers[l].h;
    }
    const Tensor& logits = model.output.apply(tape, x).value();
    TokenId best = kEos;
    for (TokenId c = kReservedTokens; c < logits.cols(); ++c) {
      if (logits(0, c) > logits(0, best)) best = c;
    }
    if (best == kEos) break;
    out.push_back(best);
    previous = best;
  }
  return out;
}

/// Reconstructs already-clean tokens through the model's bottleneck.
inline std::vector<std::string> transfer_tokens(std::span<const std::string> tokens,
                                                const Seq2SeqModel& model, const Vocabulary& vocab) {
  if (vocab.size() != model.vocab_size()) {
    throw ShapeError("vocabulary has " + std::to_string(vocab.size()) + " entries, model expects " +
                     std::to_string(model.vocab_size()));
  }
  std::vector<TokenId> ids = vocab.encode(tokens);
  if (model.config.reversed()) std::reverse(ids.begin(), ids.end());
  return vocab.decode(decode_greedy(model, encode(model, ids), model.config.max_decode_len));
}

/// Rewrites a raw sentence in the style the model was trained on.
inline std::string transfer(std::string_view sentence, const Seq2SeqModel& model, const Vocabulary& vocab) {
  const auto tokens = clean_text(sentence);
  if (tokens.empty()) throw DataError("sentence is empty after cleaning");
  return join_tokens(transfer_tokens(tokens, model, vocab));
}

}  // namespace styletx

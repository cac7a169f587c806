#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "styletx/checkpoint.hpp"
#include "styletx/layers.hpp"
#include "styletx/optim.hpp"
#include "styletx/seq2seq.hpp"

namespace styletx {

struct AdvConfig {
  double lambda = 0.1;
  std::size_t disc_steps = 1;
  double learning_rate = 1e-4;
  std::size_t iterations = 2000;
  bool minibatch_stat = true;
  std::size_t disc_hidden = 64;
  double clip = 5.0;
  /// Consecutive low-loss discriminator steps before a collapse warning.
  std::size_t collapse_window = 100;
  double collapse_threshold = 0.01;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("adversarial weight must be >= 0");
    if (disc_steps == 0) throw ConfigError("need at least one discriminator step per generator step");
    if (disc_hidden == 0) throw ConfigError("discriminator hidden width must be positive");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
  }
};

/// Masked mean over target timesteps of the decoder's top-layer states.
/// Padding steps are multiplied by zero, so extra padding changes nothing.
inline Var decoder_features(Tape& tape, std::span<const Var> top_hidden, const Batch& batch) {
  if (top_hidden.size() != batch.target_steps()) {
    throw ShapeError("decoder_features: " + std::to_string(top_hidden.size()) + " hidden states for " +
                     std::to_string(batch.target_steps()) + " target steps");
  }
  const std::size_t b = batch.size();
  const std::size_t width = top_hidden.front().shape()[1];
  std::vector<double> total(b, 0.0);
  for (const auto& row : batch.weights) {
    for (std::size_t j = 0; j < b; ++j) total[j] += row[j];
  }
  std::optional<Var> acc;
  for (std::size_t t = 0; t < top_hidden.size(); ++t) {
    Tensor w = Tensor::zeros({b, width});
    for (std::size_t j = 0; j < b; ++j) {
      const double coeff = total[j] > 0.0 ? batch.weights[t][j] / total[j] : 0.0;
      for (std::size_t k = 0; k < width; ++k) w(j, k) = coeff;
    }
    Var term = top_hidden[t] * tape.constant(std::move(w));
    acc = acc ? *acc + term : term;
  }
  return *acc;
}

/// Features of a prepared batch from an evaluation-mode forward pass.
inline Tensor decoder_features(const Seq2SeqModel& model, const Batch& prepared) {
  Tape tape(Tape::Mode::inference);
  ForwardPass pass = forward(tape, model, prepared);
  return decoder_features(tape, pass.top_hidden, prepared).value();
}

/// Two dense layers over pooled decoder features, giving one logit per row.
/// With the minibatch statistic each row also sees its batch's mean row.
struct Discriminator {
  bool minibatch_stat = true;
  DenseLayer hidden;
  DenseLayer output;

  Discriminator() = default;
  Discriminator(std::size_t feature_width, std::size_t hidden_width, bool use_minibatch_stat, Rng& rng)
      : minibatch_stat(use_minibatch_stat),
        hidden("disc.hidden", feature_width * (use_minibatch_stat ? 2 : 1), hidden_width, Activation::tanh, rng),
        output("disc.output", hidden_width, 1, Activation::none, rng) {}

  std::size_t feature_width() const {
    return hidden.weight.value.rows() / (minibatch_stat ? 2 : 1);
  }

  /// B x 1 logits. When `frozen`, the weights enter the tape as constants so
  /// no gradient reaches them.
  Var logits(Tape& tape, const Var& features, bool frozen = false) const {
    const Shape& s = features.shape();
    if (s.size() != 2 || s[1] != feature_width() || s[0] == 0) {
      throw ShapeError("discriminator expects B x " + std::to_string(feature_width()) + " features, got " +
                       to_string(s));
    }
    Var x = features;
    if (minibatch_stat) {
      const double inv = 1.0 / double(s[0]);
      Var mean_rows = matmul(tape.constant(Tensor::full({s[0], s[0]}, inv)), features);
      x = concat({features, mean_rows}, 1);
    }
    auto bind = [&](const Parameter& p) { return frozen ? tape.constant(p.value) : tape.parameter(p); };
    Var h = styletx::tanh(matmul(x, bind(hidden.weight)) + bind(hidden.bias));
    return matmul(h, bind(output.weight)) + bind(output.bias);
  }

  Tensor probabilities(const Tensor& features) const {
    Tape tape(Tape::Mode::inference);
    return sigmoid(logits(tape, tape.constant(features))).value();
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out = hidden.parameters();
    for (auto* p : output.parameters()) out.push_back(p);
    return out;
  }
};

/// Mean BCE with real rows labelled 1 and fake rows labelled 0.
inline Var discriminator_loss(Tape& tape, const Discriminator& disc, const Var& real, const Var& fake) {
  const double n = double(real.shape()[0] + fake.shape()[0]);
  Var total = binary_cross_entropy_sum(tape, disc.logits(tape, real), true) +
              binary_cross_entropy_sum(tape, disc.logits(tape, fake), false);
  return scale(total, 1.0 / n);
}

/// One update of the discriminator on detached features.
inline double discriminator_step(Discriminator& disc, const Tensor& real, const Tensor& fake, AdamState& adam,
                                 const ClipSpec& clip = {}) {
  if (real.rows() == 0 || fake.rows() == 0 || real.size() == 0 || fake.size() == 0) {
    throw DataError("discriminator_step needs nonempty real and fake batches");
  }
  Tape tape;
  Var loss = discriminator_loss(tape, disc, tape.constant(real), tape.constant(fake));
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw NumericError("non-finite discriminator loss");
  adam_step(disc.parameters(), clip_by_value(tape.backward(loss).named(), clip), adam);
  return value;
}

/// Non-saturating generator term: BCE of the real batch's features toward
/// label 1 under a frozen discriminator.
inline Var generator_adversarial_term(Tape& tape, const Discriminator& disc, const Var& features) {
  const double n = double(features.shape()[0]);
  return scale(binary_cross_entropy_sum(tape, disc.logits(tape, features, true), true), 1.0 / n);
}

/// Empirical distribution of sentence lengths in a training split.
class LengthHistogram {
 public:
  LengthHistogram() = default;
  explicit LengthHistogram(std::span<const EncodedExample> split) {
    for (const auto& ex : split) {
      if (ex.ids.size() >= counts_.size()) counts_.resize(ex.ids.size() + 1, 0);
      ++counts_[ex.ids.size()];
      ++total_;
    }
    if (total_ == 0) throw DataError("length histogram of an empty split");
  }

  std::size_t sample(Rng& rng) const {
    std::size_t r = rng.below(total_);
    for (std::size_t len = 0; len < counts_.size(); ++len) {
      if (r < counts_[len]) return len;
      r -= counts_[len];
    }
    return counts_.size() - 1;
  }

  double cdf(std::size_t len) const {
    std::size_t acc = 0;
    for (std::size_t l = 0; l <= len && l < counts_.size(); ++l) acc += counts_[l];
    return double(acc) / double(total_);
  }

  std::size_t max_length() const { return counts_.empty() ? 0 : counts_.size() - 1; }
  std::size_t total() const { return total_; }

 private:
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

/// Random sentences: lengths from the histogram, tokens uniform over the
/// regular (non-reserved) vocabulary.
inline std::vector<EncodedExample> sample_fake_examples(std::size_t vocab_size, const LengthHistogram& lengths,
                                                        std::size_t count, Rng& rng) {
  if (vocab_size <= kReservedTokens) throw DataError("vocabulary has no regular tokens to sample");
  std::vector<EncodedExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<TokenId> ids(lengths.sample(rng));
    for (auto& id : ids) id = kReservedTokens + rng.below(vocab_size - kReservedTokens);
    out.push_back({std::move(ids), Sentiment::positive});
  }
  return out;
}

inline Batch sample_fake_batch(std::size_t vocab_size, const LengthHistogram& lengths, std::size_t count,
                               Rng& rng) {
  const auto ex = sample_fake_examples(vocab_size, lengths, count, rng);
  return make_batch(ex);
}

/// Generator and discriminator under one trainer, each with its own Adam.
class AdversarialTrainer {
 public:
  struct StepResult {
    double loss = 0.0;          // reconstruction loss
    double adversarial = 0.0;   // generator term before weighting
    double disc_loss = 0.0;     // last discriminator step
    std::size_t tokens = 0;
  };

  AdversarialTrainer(Seq2SeqModel& model, Discriminator& disc, const AdvConfig& cfg, LengthHistogram lengths)
      : model_(model), disc_(disc), cfg_(cfg), lengths_(std::move(lengths)),
        generator_(model, cfg.learning_rate, cfg.clip), fake_rng_(Rng::derive(model.config.seed, 2)),
        clip_{-cfg.clip, cfg.clip} {
    cfg_.validate();
    if (disc.feature_width() != model.decoder.output_width()) {
      throw ShapeError("discriminator width " + std::to_string(disc.feature_width()) +
                       " does not match decoder width " + std::to_string(model.decoder.output_width()));
    }
    disc_adam_.learning_rate = cfg.learning_rate;
  }

  StepResult step(const Batch& batch) {
    StepResult r;
    for (std::size_t k = 0; k < cfg_.disc_steps; ++k) {
      const Tensor real = decoder_features(model_, batch);
      const Tensor fake =
          decoder_features(model_, prepare_batch(model_, sample_fake_batch(model_.vocab_size(), lengths_,
                                                                           batch.size(), fake_rng_)));
      r.disc_loss = discriminator_step(disc_, real, fake, disc_adam_, clip_);
      track_collapse(r.disc_loss);
    }
    const double lambda = cfg_.lambda;
    Seq2SeqTrainer::ExtraLoss extra = nullptr;
    if (lambda > 0.0) {
      extra = [&](Tape& tape, const ForwardPass& pass, const Batch& b) -> std::optional<Var> {
        Var term = generator_adversarial_term(tape, disc_, decoder_features(tape, pass.top_hidden, b));
        return scale(term, lambda);
      };
    }
    const auto g = generator_.step(batch, extra);
    r.loss = g.loss;
    r.adversarial = lambda > 0.0 ? g.extra / lambda : 0.0;
    r.tokens = g.tokens;
    return r;
  }

  Rng& rng() { return generator_.rng(); }
  const std::vector<std::string>& warnings() const { return warnings_; }
  AdamState& disc_adam() { return disc_adam_; }

 private:
  void track_collapse(double loss) {
    low_streak_ = loss < cfg_.collapse_threshold ? low_streak_ + 1 : 0;
    if (low_streak_ == cfg_.collapse_window) {
      warnings_.push_back("possible mode collapse: discriminator loss below " +
                          std::to_string(cfg_.collapse_threshold) + " for " +
                          std::to_string(cfg_.collapse_window) + " consecutive steps (step " +
                          std::to_string(disc_steps_ + 1) + ")");
    }
    ++disc_steps_;
  }

  Seq2SeqModel& model_;
  Discriminator& disc_;
  AdvConfig cfg_;
  LengthHistogram lengths_;
  Seq2SeqTrainer generator_;
  AdamState disc_adam_;
  Rng fake_rng_;
  ClipSpec clip_;
  std::size_t low_streak_ = 0;
  std::size_t disc_steps_ = 0;
  std::vector<std::string> warnings_;
};

/// Adversarial fine-tuning capped at cfg.iterations generator steps.
inline std::vector<EpochMetrics> train_adversarial(Seq2SeqModel& model, Discriminator& disc, const AdvConfig& cfg,
                                                   std::span<const EncodedExample> train_split,
                                                   std::span<const EncodedExample> dev, TrainOptions options,
                                                   std::vector<std::string>* warnings = nullptr) {
  AdversarialTrainer trainer(model, disc, cfg, LengthHistogram(train_split));
  options.max_iterations = cfg.iterations;
  if (options.epochs == 0) options.epochs = 1;
  auto history = run_epochs(model, trainer.rng(), train_split, dev, options,
                            [&](const Batch& b) { return trainer.step(b); });
  if (warnings) *warnings = trainer.warnings();
  return history;
}

}  // namespace styletx

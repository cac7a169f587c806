#include <cmath>

#include <gtest/gtest.h>

#include "styletx/adversarial.hpp"
#include "support/gradient_cases.hpp"

using namespace styletx;
using styletx::fixtures::random_tensor;

namespace {

Seq2SeqConfig small_config() {
  Seq2SeqConfig c;
  c.hidden = 6;
  c.embedding = 4;
  c.seed = 9;
  c.learning_rate = 1e-3;
  return c;
}

std::vector<EncodedExample> corpus(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EncodedExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<TokenId> ids(1 + rng.below(5));
    for (auto& id : ids) id = kReservedTokens + rng.below(vocab - kReservedTokens);
    out.push_back({ids, Sentiment::positive});
  }
  return out;
}

void zero_all(const std::vector<Parameter*>& params) {
  for (auto* p : params) std::fill(p->value.values.begin(), p->value.values.end(), 0.0);
}

double loss_of(const Discriminator& d, const Tensor& real, const Tensor& fake) {
  Tape tape(Tape::Mode::inference);
  return discriminator_loss(tape, d, tape.constant(real), tape.constant(fake)).value().item();
}

}  // namespace

TEST(DecoderFeatures, SingleTimestepIsThatState) {
  std::vector<EncodedExample> ex{{{}, Sentiment::positive}, {{}, Sentiment::positive}};
  const Batch b = make_batch(ex);
  ASSERT_EQ(b.target_steps(), 1u);
  Rng rng(1);
  Tape tape(Tape::Mode::inference);
  const Tensor h = random_tensor({2, 3}, rng);
  std::vector<Var> hs{tape.constant(h)};
  EXPECT_EQ(decoder_features(tape, hs, b).value().values, h.values);
}

TEST(DecoderFeatures, PaddingLeavesFeaturesUnchanged) {
  Seq2SeqModel m(small_config(), 12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ex = corpus(4, 12, seed);
    const Batch b = make_batch(ex);
    const Tensor base = decoder_features(m, b);
    EXPECT_EQ(decoder_features(m, pad_batch(b, 3, 2)).values, base.values);
  }
}

TEST(DecoderFeatures, ZeroDecoderGivesZeroFeatures) {
  Seq2SeqModel m(small_config(), 12);
  zero_all(m.parameters());
  const auto ex = corpus(3, 12, 2);
  for (double v : decoder_features(m, make_batch(ex)).values) EXPECT_EQ(v, 0.0);
}

TEST(FakeBatch, SingleRegularTokenVocabulary) {
  const auto train = corpus(20, 12, 3);
  LengthHistogram hist(train);
  Rng rng(4);
  for (const auto& ex : sample_fake_examples(kReservedTokens + 1, hist, 30, rng)) {
    for (auto id : ex.ids) EXPECT_EQ(id, kReservedTokens);
  }
}

TEST(FakeBatch, SeededTwiceIsIdentical) {
  LengthHistogram hist(corpus(20, 12, 3));
  Rng a(7), b(7);
  const Batch x = sample_fake_batch(12, hist, 8, a);
  const Batch y = sample_fake_batch(12, hist, 8, b);
  EXPECT_EQ(x.source, y.source);
  EXPECT_EQ(x.source_lengths, y.source_lengths);
  for (const auto& row : x.source) {
    for (auto id : row) EXPECT_TRUE(id == kPad || id >= kReservedTokens);
  }
}

TEST(FakeBatch, LengthsFollowTrainingHistogram) {
  std::vector<EncodedExample> train;
  Rng gen(11);
  for (int i = 0; i < 500; ++i) {
    train.push_back({std::vector<TokenId>(gen.below(3) == 0 ? 1 + gen.below(10) : 3 + gen.below(2), 5),
                     Sentiment::positive});
  }
  LengthHistogram hist(train);
  Rng rng(12);
  const auto fakes = sample_fake_examples(20, hist, 10000, rng);
  std::vector<std::size_t> counts(hist.max_length() + 1, 0);
  for (const auto& f : fakes) ++counts[f.ids.size()];
  double ks = 0.0, acc = 0.0;
  for (std::size_t len = 0; len <= hist.max_length(); ++len) {
    acc += double(counts[len]) / 10000.0;
    ks = std::max(ks, std::abs(acc - hist.cdf(len)));
  }
  EXPECT_LE(ks, 0.1);
}

TEST(Discriminator, UninformativeGivesLn2) {
  Rng rng(1);
  Discriminator d(3, 4, true, rng);
  zero_all(d.parameters());
  EXPECT_NEAR(loss_of(d, random_tensor({2, 3}, rng), random_tensor({5, 3}, rng)), std::log(2.0), 1e-15);
  for (double p : d.probabilities(random_tensor({4, 3}, rng)).values) EXPECT_EQ(p, 0.5);
}

TEST(Discriminator, PerfectSeparationDrivesLossToZero) {
  Rng rng(2);
  Discriminator d(1, 1, false, rng);
  d.hidden.weight.value = Tensor::matrix({{1.0}});
  d.hidden.bias.value = Tensor::vector({0.0});
  d.output.weight.value = Tensor::matrix({{40.0}});
  d.output.bias.value = Tensor::vector({0.0});
  const Tensor real = Tensor::matrix({{5.0}, {6.0}}), fake = Tensor::matrix({{-5.0}, {-6.0}});
  const double loss = loss_of(d, real, fake);
  EXPECT_GE(loss, 0.0);
  EXPECT_LT(loss, 1e-15);
}

TEST(Discriminator, IdenticalSetsOptimumIsOneHalf) {
  // Brute force over the output bias with zero weights: the loss
  // -(log s(b) + log(1 - s(b)))/2 is minimised at b = 0.
  Rng rng(3);
  Discriminator d(2, 3, true, rng);
  const Tensor feats = random_tensor({4, 2}, rng);
  zero_all(d.parameters());
  double best_b = 0.0, best = 1e9;
  for (int i = -200; i <= 200; ++i) {
    d.output.bias.value[0] = i * 0.01;
    const double l = loss_of(d, feats, feats);
    if (l < best) best = l, best_b = i * 0.01;
  }
  EXPECT_NEAR(best_b, 0.0, 1e-12);
  EXPECT_NEAR(best, std::log(2.0), 1e-12);

  Discriminator trained(2, 3, true, rng);
  AdamState adam;
  adam.learning_rate = 0.01;
  for (int step = 0; step < 400; ++step) discriminator_step(trained, feats, feats, adam);
  for (double p : trained.probabilities(feats).values) EXPECT_NEAR(p, 0.5, 0.02);
}

TEST(Discriminator, LossFallsOnSeparableFeatures) {
  Rng rng(4);
  Tensor real = random_tensor({8, 3}, rng, 0.3), fake = random_tensor({8, 3}, rng, 0.3);
  for (std::size_t j = 0; j < 8; ++j) {
    real(j, 0) += 1.0;
    fake(j, 0) -= 1.0;
  }
  Discriminator d(3, 4, true, rng);
  AdamState adam;
  adam.learning_rate = 1e-3;
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) losses.push_back(discriminator_step(d, real, fake, adam));
  std::vector<double> smooth;
  for (std::size_t i = 4; i < losses.size(); ++i) {
    smooth.push_back((losses[i] + losses[i - 1] + losses[i - 2] + losses[i - 3] + losses[i - 4]) / 5.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LT(smooth[i], smooth[i - 1]) << i;
}

TEST(Discriminator, WithoutMinibatchStatRowsAreIndependent) {
  Rng rng(5);
  Discriminator d(3, 4, false, rng);
  const Tensor one = random_tensor({1, 3}, rng);
  Tensor batch = random_tensor({5, 3}, rng);
  for (std::size_t k = 0; k < 3; ++k) batch(2, k) = one(0, k);
  EXPECT_EQ(d.probabilities(batch)[2], d.probabilities(one)[0]);

  Discriminator with_stat(3, 4, true, rng);
  EXPECT_NE(with_stat.probabilities(batch)[2], with_stat.probabilities(one)[0]);
}

TEST(Discriminator, RejectsBadInput) {
  Rng rng(6);
  Discriminator d(3, 4, true, rng);
  AdamState adam;
  EXPECT_THROW(discriminator_step(d, Tensor::zeros({0, 3}), Tensor::zeros({2, 3}), adam), DataError);
  EXPECT_THROW(d.probabilities(Tensor::zeros({2, 4})), ShapeError);
  const Tensor bad = Tensor::full({2, 3}, std::nan(""));
  EXPECT_THROW(discriminator_step(d, bad, bad, adam), NumericError);
}

TEST(AdversarialStep, SidesNeverUpdateEachOther) {
  Seq2SeqModel m(small_config(), 12);
  Rng rng(7);
  Discriminator d(m.decoder.output_width(), 5, true, rng);
  const auto train = corpus(16, 12, 8);
  AdvConfig cfg;
  cfg.learning_rate = 1e-2;
  LengthHistogram hist(train);
  const Batch batch = make_batch(train);

  // Discriminator update alone: model untouched.
  const auto model_sum = parameter_checksum(m.parameters());
  const auto disc_sum = parameter_checksum(d.parameters());
  AdamState adam;
  Rng fake_rng(1);
  discriminator_step(d, decoder_features(m, batch),
                     decoder_features(m, sample_fake_batch(12, hist, 16, fake_rng)), adam);
  EXPECT_EQ(parameter_checksum(m.parameters()), model_sum);
  EXPECT_NE(parameter_checksum(d.parameters()), disc_sum);

  // Generator update alone: discriminator untouched.
  Seq2SeqTrainer gen(m, 1e-2, 5.0);
  const auto disc_before = parameter_checksum(d.parameters());
  gen.step(batch, [&](Tape& tape, const ForwardPass& pass, const Batch& b) -> std::optional<Var> {
    return generator_adversarial_term(tape, d, decoder_features(tape, pass.top_hidden, b));
  });
  EXPECT_EQ(parameter_checksum(d.parameters()), disc_before);
  EXPECT_NE(parameter_checksum(m.parameters()), model_sum);
}

TEST(AdversarialStep, ZeroLambdaMatchesPlainTrainingBitwise) {
  const auto train = corpus(24, 12, 9);
  TrainOptions o;
  o.epochs = 3;
  o.minibatches = 4;
  Seq2SeqConfig c = small_config();
  c.dropout = 0.3;

  Seq2SeqModel plain(c, 12);
  Seq2SeqTrainer trainer(plain, 1e-2, 5.0);
  std::vector<std::uint64_t> plain_path;
  run_epochs(plain, trainer.rng(), train, train, o, [&](const Batch& b) {
    auto r = trainer.step(b);
    plain_path.push_back(parameter_checksum(plain.parameters()));
    return r;
  });

  auto adversarial_path = [&](double lambda) {
    Seq2SeqModel m(c, 12);
    Rng rng(99);
    Discriminator d(m.decoder.output_width(), 5, true, rng);
    AdvConfig cfg;
    cfg.lambda = lambda;
    cfg.learning_rate = 1e-2;
    cfg.disc_steps = 2;
    AdversarialTrainer adv(m, d, cfg, LengthHistogram(train));
    std::vector<std::uint64_t> path;
    run_epochs(m, adv.rng(), train, train, o, [&](const Batch& b) {
      auto r = adv.step(b);
      path.push_back(parameter_checksum(m.parameters()));
      return r;
    });
    return path;
  };
  ASSERT_EQ(plain_path.size(), 12u);
  EXPECT_EQ(adversarial_path(0.0), plain_path);
  EXPECT_NE(adversarial_path(0.5), plain_path);
}

TEST(AdversarialStep, CollapseWarningAfterLowLossStreak) {
  Seq2SeqModel m(small_config(), 12);
  Rng rng(10);
  Discriminator d(m.decoder.output_width(), 5, true, rng);
  const auto train = corpus(8, 12, 10);
  AdvConfig cfg;
  cfg.collapse_threshold = 100.0;
  cfg.collapse_window = 3;
  AdversarialTrainer adv(m, d, cfg, LengthHistogram(train));
  const Batch b = make_batch(train);
  adv.step(b);
  adv.step(b);
  EXPECT_TRUE(adv.warnings().empty());
  adv.step(b);
  ASSERT_EQ(adv.warnings().size(), 1u);
  EXPECT_NE(adv.warnings()[0].find("mode collapse"), std::string::npos);
  adv.step(b);
  EXPECT_EQ(adv.warnings().size(), 1u);
}

TEST(AdversarialStep, ConfigValidation) {
  AdvConfig cfg;
  cfg.disc_steps = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  Seq2SeqModel m(small_config(), 12);
  Rng rng(1);
  Discriminator wrong(m.decoder.output_width() + 1, 3, true, rng);
  EXPECT_THROW(AdversarialTrainer(m, wrong, AdvConfig{}, LengthHistogram(corpus(4, 12, 1))), ShapeError);
}

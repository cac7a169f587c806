// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion names
// as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "styletx/harness.hpp"
#include "styletx/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/gradient_cases.hpp"

using namespace styletx;
using fixtures::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 2) { return format_fixed(v, digits); }

std::vector<EncodedExample> random_corpus(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EncodedExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<TokenId> ids(1 + rng.below(kMaxSentenceLength));
    for (auto& id : ids) id = TokenId(kReservedTokens + rng.below(vocab - kReservedTokens));
    out.push_back({ids, Sentiment::positive});
  }
  return out;
}

Seq2SeqConfig desk_model(Variant v = Variant::vanilla) {
  Seq2SeqConfig c;
  c.variant = v;
  c.hidden = 64;
  c.embedding = 32;
  return c;
}

bool same_files(const std::filesystem::path& a, const std::filesystem::path& b, std::size_t& count) {
  count = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto other = b / std::filesystem::relative(e.path(), a);
    if (!std::filesystem::exists(other) || read_text(e.path()) != read_text(other)) return false;
    ++count;
  }
  return true;
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto start = Clock::now();
  auto cases = fixtures::primitive_cases();
  for (auto& c : fixtures::layer_cases()) cases.push_back(std::move(c));
  double worst = 0.0;
  std::string worst_name;
  std::size_t instances = 0;
  for (const auto& c : cases) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const double err = c.run(seed);
      ++instances;
      if (!(err <= worst)) {
        worst = err;
        worst_name = c.name;
      }
    }
  }

  // A gradient that is off by a factor of two must be caught.
  Rng rng(3);
  const Tensor x = fixtures::random_tensor({3, 4}, rng);
  Tensor trainable = x;
  trainable.requires_grad = true;
  Tape tape;
  Var leaf = tape.leaf(trainable);
  Tensor doubled = tape.backward(sum(styletx::tanh(leaf)))[leaf];
  for (auto& v : doubled.values) v *= 2.0;
  const auto numeric = numeric_gradient(
      [](std::span<const Tensor> p) {
        Tape t(Tape::Mode::inference);
        return sum(styletx::tanh(t.constant(p[0]))).value().item();
      },
      {x}, 1e-5);
  const double wrong = max_relative_error(std::vector<Tensor>{doubled}, numeric);
  const double elapsed = seconds_since(start);
  return {worst <= 1e-4 && std::abs(wrong - 1.0 / 3.0) < 1e-3 && elapsed < 120.0,
          std::to_string(cases.size()) + " cases x 20 seeds (" + std::to_string(instances) +
              " checks), max rel err " + format_general(worst) + " (" + worst_name +
              "), doubled gradient flagged at " + fmt(wrong, 4) + ", " + fmt(elapsed, 1) + " s"};
}

Outcome tiny_overfit() {
  const auto start = Clock::now();
  const auto corpus = synthetic::lexicon_corpus(64, 3);
  const Vocabulary vocab = build_vocab(corpus);
  const auto data = encode_all(vocab, corpus);
  Seq2SeqModel model(desk_model(), vocab.size());
  TrainOptions o;
  o.epochs = 500;
  o.minibatches = 8;
  std::vector<double> losses;
  double reached = 0.0;
  std::size_t epochs = 0;
  o.on_epoch = [&](const EpochMetrics& m) {
    losses.push_back(m.loss);
    reached = m.accuracy;
    epochs = m.epoch;
    return m.accuracy < 0.99;
  };
  train(model, data, data, o);
  const double elapsed = seconds_since(start);

  // 5-epoch moving average never higher than 20 epochs earlier.
  std::vector<double> smooth;
  for (std::size_t i = 4; i < losses.size(); ++i) {
    smooth.push_back((losses[i] + losses[i - 1] + losses[i - 2] + losses[i - 3] + losses[i - 4]) / 5.0);
  }
  std::size_t rises = 0;
  for (std::size_t i = 20; i < smooth.size(); ++i) rises += smooth[i] > smooth[i - 20];
  return {reached >= 0.99 && elapsed < 600.0 && rises == 0,
          "64 sentences, vocab " + std::to_string(vocab.size()) + ": " + fmt(100 * reached) + "% after " +
              std::to_string(epochs) + " epochs, " + fmt(elapsed, 1) + " s, windowed loss rises " +
              std::to_string(rises)};
}

Outcome masking_invariance() {
  double worst_loss = 0.0;
  std::size_t feature_mismatches = 0, batches = 0;
  for (Variant v : kAllVariants) {
    Seq2SeqConfig c;
    c.variant = v;
    c.hidden = 8;
    c.embedding = 5;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      c.seed = seed;
      Seq2SeqModel model(c, 30);
      const auto ex = random_corpus(6, 30, seed + 50);
      const Batch raw = make_batch(ex);
      const Batch padded = pad_batch(raw, 1 + seed % 4, 1 + seed % 3);
      Tape ta(Tape::Mode::inference), tb(Tape::Mode::inference);
      const double a = forward(ta, model, prepare_batch(model, raw)).loss.value.value().item();
      const double b = forward(tb, model, prepare_batch(model, padded)).loss.value.value().item();
      worst_loss = std::max(worst_loss, std::abs(a - b));
      feature_mismatches += decoder_features(model, prepare_batch(model, raw)).values !=
                            decoder_features(model, prepare_batch(model, padded)).values;
      ++batches;
    }
  }
  return {worst_loss < 1e-12 && feature_mismatches == 0,
          std::to_string(batches) + " batches over 5 variants: max loss change " + format_general(worst_loss) +
              ", feature mismatches " + std::to_string(feature_mismatches)};
}

ClassifierConfig desk_classifier(std::uint64_t seed) {
  RunConfig cfg;
  cfg.apply_file(profile_path("desk"));
  cfg.seed = seed;
  return cfg.classifier();
}

Outcome classifier_oracle() {
  const auto start = Clock::now();
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto train = synthetic::lexicon_corpus(1000, seed);
    const Vocabulary vocab = build_vocab(train);
    SentimentClassifier clf(desk_classifier(seed), vocab.size());
    const auto dev = encode_all(vocab, synthetic::lexicon_corpus(500, 50 + seed));
    const auto test = encode_all(vocab, synthetic::lexicon_corpus(2000, 100 + seed));
    // Stop on a separate dev set; score the untouched test set.
    std::size_t epochs = 0;
    train_classifier(clf, encode_all(vocab, train), dev, [&](const ClassifierEpoch& e) {
      epochs = e.epoch;
      return e.dev_accuracy < 0.98;
    });
    const double acc = 100.0 * score_classifier(clf, test).accuracy;
    pass = pass && acc >= 95.0 && epochs <= 20;
    detail += "seed " + std::to_string(seed) + ": " + fmt(acc) + "% in " + std::to_string(epochs) + " epochs; ";
  }
  const auto shuffled = synthetic::shuffle_labels(synthetic::lexicon_corpus(1000, 1), 5);
  const Vocabulary vocab = build_vocab(shuffled);
  SentimentClassifier clf(desk_classifier(2), vocab.size());
  train_classifier(clf, encode_all(vocab, shuffled), {});
  const double chance = 100.0 * score_classifier(clf, encode_all(vocab, synthetic::lexicon_corpus(2000, 2))).accuracy;
  pass = pass && std::abs(chance - 50.0) <= 5.0;
  detail += "shuffled labels: " + fmt(chance) + "%, " + fmt(seconds_since(start), 1) + " s";
  return {pass, detail};
}

Outcome end_to_end_transfer() {
  const auto start = Clock::now();
  const auto corpus = synthetic::antonym_corpus(1000, 7);
  const auto held_out = synthetic::antonym_corpus(100, 8);
  Splits splits;
  splits.positive.train = corpus.positive;
  splits.negative.train = corpus.negative;
  splits.positive.dev = std::vector<Example>(held_out.positive.begin(), held_out.positive.begin() + 20);
  splits.negative.dev = std::vector<Example>(held_out.negative.begin(), held_out.negative.begin() + 20);
  const ReducedCorpus reduced = reduce_corpus(splits, 800, 2000, 2);

  auto train_style = [&](Sentiment style) {
    Seq2SeqConfig c = desk_model(Variant::reduced);
    c.style = style;
    c.reduced_records = 800;
    Seq2SeqModel model(c, reduced.vocab.size());
    TrainOptions o;
    o.epochs = 10;
    o.minibatches = 64;
    train(model, encode_all(reduced.vocab, reduced.of(style)), encode_all(reduced.vocab, splits.of(style).dev), o);
    return model;
  };
  const Seq2SeqModel positive = train_style(Sentiment::positive);
  const Seq2SeqModel negative = train_style(Sentiment::negative);

  // Independent judge: own corpus, own vocabulary, own seed.
  const auto judge_corpus = synthetic::lexicon_corpus(1000, 1);
  const Vocabulary judge_vocab = build_vocab(judge_corpus);
  SentimentClassifier judge(desk_classifier(2), judge_vocab.size());
  judge.config.epochs = 5;
  train_classifier(judge, encode_all(judge_vocab, judge_corpus), {});
  const auto frozen = parameter_checksum(judge.parameters());

  std::vector<std::string> to_positive, to_negative;
  for (const auto& ex : held_out.negative) {
    to_positive.push_back(join_tokens(transfer_tokens(ex.tokens, positive, reduced.vocab)));
  }
  for (const auto& ex : held_out.positive) {
    to_negative.push_back(join_tokens(transfer_tokens(ex.tokens, negative, reduced.vocab)));
  }
  const double acc = transfer_accuracy(judge, judge_vocab, to_positive, Sentiment::positive);
  const double back = transfer_accuracy(judge, judge_vocab, to_negative, Sentiment::negative);
  const bool untouched = parameter_checksum(judge.parameters()) == frozen;
  const double elapsed = seconds_since(start);
  return {acc >= 80.0 && untouched && elapsed < 1800.0,
          "negative->positive " + fmt(acc) + "% (positive->negative " + fmt(back) + "%), e.g. \"" +
              join_tokens(held_out.negative[0].tokens) + "\" -> \"" + to_positive[0] + "\", " +
              fmt(elapsed, 1) + " s"};
}

Outcome variant_mechanics() {
  // Reversal is an involution and never touches the targets.
  std::size_t reversal_failures = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Batch b = make_batch(random_corpus(7, 40, seed));
    const Batch r = reverse_source(b);
    const Batch rr = reverse_source(r);
    bool ok = rr.source == b.source && r.target_in == b.target_in && r.target_out == b.target_out &&
              r.weights == b.weights;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const std::size_t len = b.source_lengths[j];
      for (std::size_t t = 0; t < len; ++t) ok = ok && r.source[t][j] == b.source[len - 1 - t][j];
    }
    reversal_failures += !ok;
  }

  // Bidirectional state concatenates two 512-wide directions.
  Seq2SeqConfig bc;
  bc.variant = Variant::bidirectional;
  bc.embedding = 8;
  const Seq2SeqModel bidi(bc, 20);
  const TokenId src[] = {5, 6, 7};
  const EncodedState state = encode(bidi, src);
  const bool width_ok = bidi.encoder.hidden_per_direction() == 512 && state.h.back().cols() == 1024 &&
                        bidi.encoder.output_width() == 1024;

  // Reduced runs: exactly 20,000 records per style and a vocabulary from them alone.
  Rng rng(17);
  Splits splits;
  for (std::size_t i = 0; i < 25000; ++i) {
    for (Sentiment s : {Sentiment::positive, Sentiment::negative}) {
      std::vector<std::string> tokens;
      for (int k = 0; k < 3; ++k) tokens.push_back("w" + std::to_string(rng.below(30000)));
      splits.of(s).train.push_back({tokens, s});
    }
  }
  splits.positive.dev = std::vector<Example>(splits.positive.train.begin(), splits.positive.train.begin() + 50);
  splits.negative.dev = std::vector<Example>(splits.negative.train.begin(), splits.negative.train.begin() + 50);
  splits.positive.test = splits.positive.dev;
  splits.negative.test = splits.negative.dev;
  const ReducedCorpus reduced = reduce_corpus(splits, kReducedRecords, kDefaultVocabSize, 2);
  std::vector<Example> subset = reduced.positive;
  subset.insert(subset.end(), reduced.negative.begin(), reduced.negative.end());
  std::vector<Example> everything = splits.positive.train;
  everything.insert(everything.end(), splits.negative.train.begin(), splits.negative.train.end());
  const bool vocab_from_subset = reduced.vocab == build_vocab(subset, kDefaultVocabSize) &&
                                 !(reduced.vocab == build_vocab(everything, kDefaultVocabSize));

  // The training loop of a reduced run sees every subset record exactly once per epoch.
  Seq2SeqConfig rc;
  rc.variant = Variant::reduced;
  rc.layers = 1;
  rc.hidden = 4;
  rc.embedding = 4;
  Seq2SeqModel model(rc, reduced.vocab.size());
  Seq2SeqTrainer trainer(model);
  TrainOptions o;
  o.epochs = 1;
  o.minibatches = 64;
  std::size_t seen = 0;
  const auto encoded = encode_all(reduced.vocab, reduced.positive);
  run_epochs(model, trainer.rng(), encoded, {}, o, [&](const Batch& b) {
    seen += b.size();
    return Seq2SeqTrainer::StepResult{0.0, 0.0, 1};
  });

  // The CLI path builds the same subset and vocabulary.
  TempDir dir("accept_reduced");
  write_splits(dir / "data", splits);
  RunConfig cfg = fixtures::tiny_config();
  cfg.data_dir = (dir / "data").string();
  cfg.reduced_records = kReducedRecords;
  cfg.vocab_size = kDefaultVocabSize;
  cfg.model.epochs = 1;
  cfg.model.minibatches = 64;
  cfg.model.hidden = 4;
  cfg.model.embedding = 4;
  cmd_train(cfg, "reduced", dir / "run");
  const bool cli_same = Vocabulary::load(dir / "run/vocab.txt") == reduced.vocab;

  const bool pass = reversal_failures == 0 && width_ok && reduced.positive.size() == kReducedRecords &&
                    reduced.negative.size() == kReducedRecords && vocab_from_subset && seen == kReducedRecords &&
                    cli_same;
  return {pass, "reversal failures " + std::to_string(reversal_failures) + ", bidirectional width " +
                    std::to_string(state.h.back().cols()) + " (2 x " +
                    std::to_string(bidi.encoder.hidden_per_direction()) + "), reduced records " +
                    std::to_string(reduced.positive.size()) + "/" + std::to_string(reduced.negative.size()) +
                    " of 25000, trained on " + std::to_string(seen) + ", vocabulary " +
                    std::to_string(reduced.vocab.size()) + (vocab_from_subset ? " from subset" : " NOT from subset") +
                    (cli_same ? ", CLI matches" : ", CLI differs")};
}

Outcome adversarial_coupling() {
  const auto start = Clock::now();
  const auto corpus = synthetic::lexicon_corpus(1000, 11);
  const Vocabulary vocab = build_vocab(corpus);
  const auto train_set = encode_all(vocab, corpus);
  const auto dev = encode_all(vocab, synthetic::lexicon_corpus(200, 12));

  // lambda = 0 follows the plain trajectory bit for bit.
  Seq2SeqConfig small = desk_model();
  small.hidden = 16;
  small.embedding = 8;
  small.dropout = 0.2;
  small.learning_rate = 1e-3;
  TrainOptions short_run;
  short_run.epochs = 2;
  short_run.minibatches = 32;
  std::vector<std::uint64_t> plain_path, zero_path;
  {
    Seq2SeqModel m(small, vocab.size());
    Seq2SeqTrainer t(m);
    run_epochs(m, t.rng(), train_set, dev, short_run, [&](const Batch& b) {
      auto r = t.step(b);
      plain_path.push_back(parameter_checksum(m.parameters()));
      return r;
    });
  }
  {
    Seq2SeqModel m(small, vocab.size());
    Rng rng = Rng::derive(small.seed, 3);
    Discriminator d(m.decoder.output_width(), 16, true, rng);
    AdvConfig ac;
    ac.lambda = 0.0;
    ac.learning_rate = small.learning_rate;
    AdversarialTrainer t(m, d, ac, LengthHistogram(train_set));
    run_epochs(m, t.rng(), train_set, dev, short_run, [&](const Batch& b) {
      auto r = t.step(b);
      zero_path.push_back(parameter_checksum(m.parameters()));
      return r;
    });
  }
  const bool bitwise = plain_path == zero_path && !plain_path.empty();

  // Each side's update leaves the other side's parameters untouched.
  std::size_t leaks = 0, steps = 0;
  {
    Seq2SeqModel m(small, vocab.size());
    Rng rng = Rng::derive(small.seed, 3);
    Discriminator d(m.decoder.output_width(), 16, true, rng);
    Seq2SeqTrainer gen(m, 1e-3, 5.0);
    AdamState disc_adam;
    disc_adam.learning_rate = 1e-3;
    LengthHistogram hist(train_set);
    Rng fake_rng(4);
    for (const Batch& raw : bucket_batches(train_set, 20, gen.rng())) {
      const Batch b = prepare_batch(m, raw);
      const auto model_before = parameter_checksum(m.parameters());
      discriminator_step(d, decoder_features(m, b),
                         decoder_features(m, sample_fake_batch(vocab.size(), hist, b.size(), fake_rng)), disc_adam);
      leaks += parameter_checksum(m.parameters()) != model_before;
      const auto disc_before = parameter_checksum(d.parameters());
      gen.step(b, [&](Tape& tape, const ForwardPass& pass, const Batch& bb) -> std::optional<Var> {
        return scale(generator_adversarial_term(tape, d, decoder_features(tape, pass.top_hidden, bb)), 0.1);
      });
      leaks += parameter_checksum(d.parameters()) != disc_before;
      ++steps;
    }
  }

  // Desk run: 2000 adversarial iterations from a warm start against a paired
  // lambda = 0 run with the same settings.
  RunConfig desk;
  desk.apply_file(profile_path("desk"));
  Seq2SeqConfig base = desk_model();
  base.seed = 2;
  Seq2SeqModel warm(base, vocab.size());
  TrainOptions pre;
  pre.epochs = 10;
  pre.minibatches = 64;
  train(warm, train_set, dev, pre);
  const auto warm_weights = snapshot(warm.parameters());
  const double warm_acc = 100.0 * evaluate_reconstruction(warm, dev).accuracy;

  auto fine_tune = [&](double lambda, std::vector<std::string>* warnings) {
    Seq2SeqModel m(base, vocab.size());
    restore(m.parameters(), warm_weights);
    Rng rng = Rng::derive(base.seed, 3);
    Discriminator d(m.decoder.output_width(), desk.adv.disc_hidden, desk.adv.minibatch_stat, rng);
    AdvConfig ac = desk.adv;
    ac.lambda = lambda;
    TrainOptions o;
    o.epochs = 1000;
    o.minibatches = 64;
    train_adversarial(m, d, ac, train_set, dev, o, warnings);
    return 100.0 * evaluate_reconstruction(m, dev).accuracy;
  };
  std::vector<std::string> warnings;
  const double adv_acc = fine_tune(desk.adv.lambda, &warnings);
  const double paired_acc = fine_tune(0.0, nullptr);
  const double gap = std::abs(adv_acc - paired_acc);
  const double elapsed = seconds_since(start);
  return {bitwise && leaks == 0 && gap <= 5.0,
          std::string("lambda=0 path ") + (bitwise ? "identical" : "DIFFERS") + " over " +
              std::to_string(plain_path.size()) + " steps; cross-updates " + std::to_string(leaks) + " in " +
              std::to_string(steps) + " alternations; " + std::to_string(desk.adv.iterations) +
              " iterations at lambda " + format_general(desk.adv.lambda) + ": recon " + fmt(adv_acc) +
              "% vs paired " + fmt(paired_acc) + "% (warm start " + fmt(warm_acc) + "%, gap " + fmt(gap) +
              ", warnings " + std::to_string(warnings.size()) + "), " + fmt(elapsed, 1) + " s"};
}

Outcome reproducibility() {
  TempDir dir("accept_repro");
  RunConfig cfg = fixtures::tiny_config();
  fixtures::write_synthetic_reviews(dir / "raw.jsonl", 600, 21, 7);
  cmd_preprocess(cfg, dir / "raw.jsonl", dir / "data_a");
  cmd_preprocess(cfg, dir / "raw.jsonl", dir / "data_b");
  std::size_t split_files = 0;
  const bool splits_same = same_files(dir / "data_a", dir / "data_b", split_files);

  cfg.data_dir = (dir / "data_a").string();
  cmd_build_vocab(cfg, dir / "vocab");
  cfg.data_vocab = (dir / "vocab/vocab.txt").string();
  for (Variant v : kAllVariants) cmd_train(cfg, variant_name(v), dir / ("models/" + std::string(variant_name(v))));
  cmd_train(cfg, "vanilla", dir / "vanilla_again");
  const bool metrics_same =
      read_text(dir / "models/vanilla/metrics.csv") == read_text(dir / "vanilla_again/metrics.csv");

  // Save -> load gives bit-identical logits and decodes.
  bool exact = true;
  for (Variant v : kAllVariants) {
    Seq2SeqConfig c = cfg.seq2seq(v);
    Seq2SeqModel m(c, 40);
    TrainOptions o;
    o.epochs = 1;
    o.minibatches = 4;
    const auto data = random_corpus(20, 40, 5);
    train(m, data, data, o);
    save_model(m, dir / "bit.ckpt", variant_name(v), "bit");
    const Seq2SeqModel loaded = load_model(dir / "bit.ckpt");
    const Batch b = prepare_batch(m, make_batch(data));
    Tape ta(Tape::Mode::inference), tb(Tape::Mode::inference);
    exact = exact && forward(ta, m, b).logits.value().values == forward(tb, loaded, b).logits.value().values;
    for (const auto& ex : data) {
      exact = exact && decode_greedy(m, encode(m, ex.ids), c.max_decode_len) ==
                             decode_greedy(loaded, encode(loaded, ex.ids), c.max_decode_len);
    }
  }

  cmd_train(cfg, "classifier", dir / "clf");
  const EvalSummary eval = cmd_evaluate(cfg, dir / "models", dir / "clf/model.ckpt", dir / "eval");
  cmd_evaluate(cfg, dir / "models", dir / "clf/model.ckpt", dir / "eval_again");
  const std::string report = read_text(dir / "eval/report.csv");
  const std::string samples = read_text(dir / "eval/samples.txt");
  std::string expected_head = "model,recon_loss,recon_acc,transfer_acc\n";
  bool rows_ok = std::count(report.begin(), report.end(), '\n') == 6 && report.rfind(expected_head, 0) == 0 &&
                 report.find("NA") == std::string::npos;
  std::size_t pos = expected_head.size();
  for (Variant v : kAllVariants) {
    rows_ok = rows_ok && report.compare(pos, std::string(display_name(v)).size() + 1,
                                        std::string(display_name(v)) + ",") == 0;
    pos = report.find('\n', pos) + 1;
  }
  std::size_t blocks = 0;
  for (auto at = samples.find("Ground truth: "); at != std::string::npos; at = samples.find("Ground truth: ", at + 1)) {
    ++blocks;
  }
  const bool samples_ok = blocks == cfg.eval_samples &&
                          std::count(samples.begin(), samples.end(), '\n') == std::ptrdiff_t(blocks * 7);
  const bool eval_same = report == read_text(dir / "eval_again/report.csv") &&
                         samples == read_text(dir / "eval_again/samples.txt");
  return {splits_same && metrics_same && exact && rows_ok && samples_ok && eval_same && eval.missing == 0,
          std::to_string(split_files) + " preprocess files " + (splits_same ? "identical" : "DIFFER") +
              ", metrics " + (metrics_same ? "identical" : "DIFFER") + ", checkpoints " +
              (exact ? "forward-bit-exact" : "NOT exact") + ", report " + (rows_ok ? "5 rows" : "MALFORMED") +
              ", samples " + std::to_string(blocks) + " blocks" + (eval_same ? ", rerun identical" : ", rerun DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  g_log = nullptr;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-check", gradient_check},
      {"tiny-overfit", tiny_overfit},
      {"masking-invariance", masking_invariance},
      {"classifier-oracle", classifier_oracle},
      {"end-to-end-transfer", end_to_end_transfer},
      {"variant-mechanics", variant_mechanics},
      {"adversarial-coupling", adversarial_coupling},
      {"reproducibility", reproducibility},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, check] = criteria[i];
    if (!only.empty() && !only.count(name)) continue;
    Outcome r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    failures += !r.pass;
    std::cout << (r.pass ? "PASS " : "FAIL ") << i + 1 << " " << name << ": " << r.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

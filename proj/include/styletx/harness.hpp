#pragma once

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "styletx/adversarial.hpp"
#include "styletx/checkpoint.hpp"
#include "styletx/classifier.hpp"
#include "styletx/config.hpp"
#include "styletx/data.hpp"
#include "styletx/report.hpp"
#include "styletx/seq2seq.hpp"

namespace styletx {

namespace fs = std::filesystem;

/// 0 success, 1 usage or config, 2 data, 3 numeric abort.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  return 2;
}

inline std::ostream* g_log = &std::cerr;

inline void log_line(const std::string& line) {
  if (g_log) *g_log << line << std::endl;
}

/// Stable identifier of a training run: kind, resolved config, output dir.
inline std::string make_run_id(const std::string& kind, const RunConfig& cfg, const fs::path& out) {
  return hex64(fnv1a(kind + "\n" + cfg.to_text() + "\n" + fs::weakly_canonical(fs::absolute(out)).string()));
}

inline void write_resolved_config(const RunConfig& cfg, const fs::path& out) {
  write_text(out / "config.txt", cfg.to_text());
}

inline Vocabulary vocabulary_from_config(const RunConfig& cfg) {
  if (cfg.data_vocab.empty()) throw DataError("no vocabulary given (set data.vocab or pass --vocab)");
  if (!fs::exists(cfg.data_vocab)) throw DataError("vocabulary file not found: " + cfg.data_vocab);
  return Vocabulary::load(cfg.data_vocab);
}

inline Splits splits_from_config(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw DataError("no data directory given (set data.dir or pass --data)");
  return read_splits(cfg.data_dir);
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessStats {
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::size_t bad_stars = 0;
  std::size_t neutral = 0;
  std::size_t empty = 0;
  std::size_t too_long = 0;
  std::size_t balanced_out = 0;
  std::size_t kept = 0;
  Splits splits;

  std::size_t accounted() const {
    return malformed + bad_stars + neutral + empty + too_long + balanced_out + kept;
  }
};

inline std::string stats_csv(const PreprocessStats& s) {
  std::string out = "stat,count\n";
  auto row = [&](const std::string& k, std::size_t v) { out += k + "," + std::to_string(v) + "\n"; };
  row("lines", s.lines);
  row("malformed", s.malformed);
  row("bad_stars", s.bad_stars);
  row("neutral", s.neutral);
  row("empty", s.empty);
  row("too_long", s.too_long);
  row("balanced_out", s.balanced_out);
  row("kept", s.kept);
  for (Sentiment side : {Sentiment::positive, Sentiment::negative}) {
    const auto& set = s.splits.of(side);
    row(std::string(short_name(side)) + "_train", set.train.size());
    row(std::string(short_name(side)) + "_dev", set.dev.size());
    row(std::string(short_name(side)) + "_test", set.test.size());
  }
  return out;
}

/// Reads JSON-lines reviews, labels, cleans, filters, balances and writes
/// pos/ and neg/ train, dev and test files plus stats.
inline PreprocessStats cmd_preprocess(const RunConfig& cfg, const fs::path& raw, const fs::path& out) {
  const ReviewFile file = read_reviews(raw);
  PreprocessStats stats;
  stats.lines = file.lines;
  stats.malformed = file.malformed;
  stats.bad_stars = file.bad_stars;
  std::vector<Example> examples;
  for (const auto& r : file.reviews) {
    const StarLabel label = label_from_stars(r.stars);
    if (label == StarLabel::drop) {
      ++stats.neutral;
      continue;
    }
    auto tokens = clean_text(r.text);
    if (tokens.empty()) {
      ++stats.empty;
    } else if (tokens.size() > cfg.max_len) {
      ++stats.too_long;
    } else {
      examples.push_back({std::move(tokens), label == StarLabel::positive ? Sentiment::positive : Sentiment::negative});
    }
  }
  if (examples.empty()) throw DataError("no examples survived preprocessing of " + raw.string());
  stats.splits = balance_and_split(examples, cfg.seed, cfg.min_class_size);
  for (Sentiment side : {Sentiment::positive, Sentiment::negative}) {
    const auto& set = stats.splits.of(side);
    stats.kept += set.train.size() + set.dev.size() + set.test.size();
  }
  stats.balanced_out = examples.size() - stats.kept;

  write_splits(out, stats.splits);
  write_text(out / "stats.csv", stats_csv(stats));

  std::map<std::size_t, std::pair<std::size_t, std::size_t>> lengths;
  std::string balance = "split,positive,negative\n";
  for (const char* part : {"train", "dev", "test"}) {
    std::size_t counts[2] = {0, 0};
    for (Sentiment side : {Sentiment::positive, Sentiment::negative}) {
      const auto& set = stats.splits.of(side);
      const auto& split = std::string(part) == "train" ? set.train : std::string(part) == "dev" ? set.dev : set.test;
      counts[side == Sentiment::positive ? 0 : 1] = split.size();
      for (const auto& ex : split) {
        auto& slot = lengths[ex.tokens.size()];
        (side == Sentiment::positive ? slot.first : slot.second)++;
      }
    }
    balance += std::string(part) + "," + std::to_string(counts[0]) + "," + std::to_string(counts[1]) + "\n";
  }
  std::string hist = "length,positive,negative\n";
  for (std::size_t len = 1; len <= cfg.max_len; ++len) {
    const auto it = lengths.find(len);
    const auto c = it == lengths.end() ? std::pair<std::size_t, std::size_t>{0, 0} : it->second;
    hist += std::to_string(len) + "," + std::to_string(c.first) + "," + std::to_string(c.second) + "\n";
  }
  write_text(out / "length_hist.csv", hist);
  write_text(out / "class_balance.csv", balance);
  write_resolved_config(cfg, out);
  log_line("preprocess: " + std::to_string(stats.lines) + " lines, " + std::to_string(stats.kept) + " kept");
  return stats;
}

// ---------------------------------------------------------------------------
// build-vocab
// ---------------------------------------------------------------------------

/// Vocabulary over the training splits of both classes.
inline Vocabulary cmd_build_vocab(const RunConfig& cfg, const fs::path& out) {
  const Splits splits = splits_from_config(cfg);
  std::vector<Example> train = splits.positive.train;
  train.insert(train.end(), splits.negative.train.begin(), splits.negative.train.end());
  Vocabulary vocab = build_vocab(train, cfg.vocab_size);
  fs::create_directories(out);
  vocab.save(out / "vocab.txt");
  write_resolved_config(cfg, out);
  log_line("build-vocab: " + std::to_string(vocab.size()) + " entries");
  return vocab;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& train_kinds() {
  static const std::vector<std::string> kinds{"vanilla", "reduced",     "reversed",  "bidi",
                                              "reduced-bidi", "adversarial", "classifier"};
  return kinds;
}

struct TrainSummary {
  std::vector<EpochMetrics> history;
  std::vector<std::string> warnings;
  std::string run_id;
};

inline void write_curves(const fs::path& out, const std::string& title, const std::vector<Series>& loss,
                         const std::vector<Series>& accuracy) {
  write_text(out / "loss.svg", line_plot_svg(title + " loss", "epoch", "loss", loss));
  write_text(out / "accuracy.svg", line_plot_svg(title + " accuracy", "epoch", "accuracy", accuracy));
}

inline void write_training_artifacts(const fs::path& out, const std::string& kind,
                                     const std::vector<EpochMetrics>& history) {
  write_text(out / "metrics.csv", metrics_csv(history));
  write_curves(out, kind, {series_of("train loss", history, false)}, {series_of("dev accuracy", history, true)});
}

inline std::function<bool(const EpochMetrics&)> epoch_logger(const std::string& kind,
                                                             std::vector<EpochMetrics>& history) {
  return [&history, kind](const EpochMetrics& m) {
    history.push_back(m);
    log_line(kind + " epoch " + std::to_string(m.epoch) + " loss " + format_general(m.loss) + " accuracy " +
             format_general(m.accuracy));
    return true;
  };
}

inline TrainSummary train_classifier_kind(const RunConfig& cfg, const fs::path& out, const std::string& run_id) {
  const Splits splits = splits_from_config(cfg);
  const Vocabulary vocab = vocabulary_from_config(cfg);
  auto both = [&](auto pick) {
    std::vector<Example> all = pick(splits.positive);
    const auto& neg = pick(splits.negative);
    all.insert(all.end(), neg.begin(), neg.end());
    return encode_all(vocab, all);
  };
  const auto train = both([](const SplitSet& s) { return s.train; });
  const auto dev = both([](const SplitSet& s) { return s.dev; });
  SentimentClassifier clf(cfg.classifier(), vocab.size());
  TrainSummary summary;
  summary.run_id = run_id;
  std::vector<ClassifierEpoch> curves;
  train_classifier(clf, train, dev, [&](const ClassifierEpoch& e) {
    curves.push_back(e);
    summary.history.push_back({e.epoch, e.train_loss, e.dev_accuracy});
    log_line("classifier epoch " + std::to_string(e.epoch) + " loss " + format_general(e.train_loss) +
             " dev accuracy " + format_general(e.dev_accuracy));
    return true;
  });
  fs::create_directories(out);
  save_classifier(clf, out / "model.ckpt", run_id);
  vocab.save(out / "vocab.txt");
  write_text(out / "metrics.csv", metrics_csv(summary.history));
  std::string full = "epoch,train_loss,train_accuracy,dev_loss,dev_accuracy\n";
  Series tl{"train", {}, {}}, dl{"dev", {}, {}}, ta{"train", {}, {}}, da{"dev", {}, {}};
  for (const auto& e : curves) {
    full += std::to_string(e.epoch) + "," + format_general(e.train_loss) + "," + format_general(e.train_accuracy) +
            "," + format_general(e.dev_loss) + "," + format_general(e.dev_accuracy) + "\n";
    for (auto* s : {&tl, &dl, &ta, &da}) s->x.push_back(double(e.epoch));
    tl.y.push_back(e.train_loss);
    dl.y.push_back(e.dev_loss);
    ta.y.push_back(e.train_accuracy);
    da.y.push_back(e.dev_accuracy);
  }
  write_text(out / "curves.csv", full);
  write_curves(out, "classifier", {tl, dl}, {ta, da});
  return summary;
}

/// Trains one model kind and writes model.ckpt, vocab.txt, metrics.csv,
/// loss.svg, accuracy.svg and config.txt under `out`.
inline TrainSummary cmd_train(const RunConfig& cfg, const std::string& kind, const fs::path& out) {
  cfg.validate();
  if (std::find(train_kinds().begin(), train_kinds().end(), kind) == train_kinds().end()) {
    throw ConfigError("unknown model kind '" + kind + "'");
  }
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  const std::string run_id = make_run_id(kind, cfg, out);
  if (kind == "classifier") return train_classifier_kind(cfg, out, run_id);

  const bool adversarial = kind == "adversarial";
  const Variant variant = adversarial ? Variant::vanilla : parse_variant(kind);
  const Seq2SeqConfig mc = cfg.seq2seq(variant);
  const Splits splits = splits_from_config(cfg);
  const Sentiment style = mc.style;

  Vocabulary vocab;
  std::vector<Example> train_examples;
  if (mc.reduced()) {
    ReducedCorpus reduced = reduce_corpus(splits, cfg.reduced_records, cfg.vocab_size, cfg.seed);
    vocab = reduced.vocab;
    train_examples = reduced.of(style);
    log_line(kind + ": " + std::to_string(train_examples.size()) + " training records, vocabulary " +
             std::to_string(vocab.size()));
  } else {
    vocab = vocabulary_from_config(cfg);
    train_examples = splits.of(style).train;
  }
  const auto train_set = encode_all(vocab, train_examples);
  const auto dev_set = encode_all(vocab, splits.of(style).dev);
  vocab.save(out / "vocab.txt");

  Seq2SeqModel model(mc, vocab.size());
  Discriminator disc;
  std::vector<Parameter*> extra;
  TrainSummary summary;
  summary.run_id = run_id;
  TrainOptions options = options_from(mc);
  options.on_epoch = epoch_logger(kind, summary.history);

  auto finish = [&] {
    save_model(model, out / "model.ckpt", kind, run_id, extra);
    write_training_artifacts(out, kind, summary.history);
  };
  try {
    if (adversarial) {
      if (!cfg.adv_init.empty()) {
        load_into(model, fs::path(cfg.adv_init));
        log_line("adversarial: warm start from " + cfg.adv_init);
      }
      Rng disc_rng = Rng::derive(cfg.seed, 3);
      disc = Discriminator(model.decoder.output_width(), cfg.adv.disc_hidden, cfg.adv.minibatch_stat, disc_rng);
      extra = disc.parameters();
      AdvConfig ac = cfg.adv;
      ac.clip = mc.clip;
      AdversarialTrainer trainer(model, disc, ac, LengthHistogram(train_set));
      options.max_iterations = ac.iterations;
      try {
        run_epochs(model, trainer.rng(), train_set, dev_set, options, [&](const Batch& b) { return trainer.step(b); });
      } catch (...) {
        summary.warnings = trainer.warnings();
        throw;
      }
      summary.warnings = trainer.warnings();
      std::string log;
      for (const auto& w : summary.warnings) {
        log += w + "\n";
        log_line("warning: " + w);
      }
      write_text(out / "warnings.log", log);
    } else {
      train(model, train_set, dev_set, options);
    }
  } catch (const TrainingAborted& e) {
    finish();
    log_line(kind + ": " + e.what() + "; last good parameters saved");
    throw;
  }
  finish();
  return summary;
}

// ---------------------------------------------------------------------------
// transfer
// ---------------------------------------------------------------------------

inline std::string cmd_transfer(const std::string& sentence, const fs::path& checkpoint,
                                const std::optional<fs::path>& vocab_path = std::nullopt) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  if (ckpt.kind == "classifier") throw ConfigError("checkpoint " + checkpoint.string() + " holds a classifier");
  const Seq2SeqModel model = model_from(ckpt);
  const Vocabulary vocab = Vocabulary::load(vocab_path ? *vocab_path : checkpoint.parent_path() / "vocab.txt");
  return transfer(sentence, model, vocab);
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvalSummary {
  std::vector<EvalRow> rows;
  std::vector<std::string> sources;
  std::size_t missing = 0;
};

/// Scores the five variants under `models_dir` against a frozen classifier
/// and writes report.csv and samples.txt. Absent models become NA rows.
inline EvalSummary cmd_evaluate(const RunConfig& cfg, const fs::path& models_dir, const fs::path& classifier_path,
                                const fs::path& out) {
  const Checkpoint clf_ckpt = read_checkpoint(classifier_path);
  const SentimentClassifier clf = classifier_from(clf_ckpt);
  const Vocabulary clf_vocab = Vocabulary::load(classifier_path.parent_path() / "vocab.txt");
  auto clf_params = const_cast<SentimentClassifier&>(clf).parameters();
  const auto frozen = parameter_checksum(clf_params);
  const Splits splits = splits_from_config(cfg);

  EvalSummary summary;
  std::optional<Sentiment> style;
  for (Variant v : kAllVariants) {
    EvalRow row;
    row.model = display_name(v);
    const fs::path dir = models_dir / variant_name(v);
    if (!fs::exists(dir / "model.ckpt")) {
      log_line("evaluate: missing " + (dir / "model.ckpt").string());
      ++summary.missing;
      summary.rows.push_back(row);
      continue;
    }
    const Checkpoint ckpt = read_checkpoint(dir / "model.ckpt");
    if (ckpt.run_id == clf_ckpt.run_id) {
      throw ConfigError("classifier " + classifier_path.string() + " comes from the same run as " +
                        (dir / "model.ckpt").string());
    }
    const Seq2SeqModel model = model_from(ckpt);
    if (model.config.variant != v) {
      throw ConfigError((dir / "model.ckpt").string() + " holds a " + variant_name(model.config.variant) +
                        " model");
    }
    if (style && *style != model.config.style) throw ConfigError("models are bound to different styles");
    style = model.config.style;
    const Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
    const auto recon = evaluate_reconstruction(model, encode_all(vocab, splits.of(*style).test));
    row.recon_loss = recon.loss;
    row.recon_accuracy = 100.0 * recon.accuracy;
    std::vector<std::string> outputs;
    for (const auto& ex : splits.of(opposite(*style)).test) {
      outputs.push_back(join_tokens(transfer_tokens(ex.tokens, model, vocab)));
    }
    row.transfer_accuracy = transfer_accuracy(clf, clf_vocab, outputs, *style);
    outputs.resize(std::min(outputs.size(), cfg.eval_samples));
    row.samples = outputs;
    log_line("evaluate: " + row.model + " recon " + format_fixed(*row.recon_accuracy, 2) + "% transfer " +
             format_fixed(*row.transfer_accuracy, 2) + "%");
    summary.rows.push_back(row);
  }
  if (parameter_checksum(clf_params) != frozen) throw NumericError("classifier parameters changed during scoring");
  if (style) {
    const auto& source = splits.of(opposite(*style)).test;
    for (std::size_t i = 0; i < std::min(source.size(), cfg.eval_samples); ++i) {
      summary.sources.push_back(join_tokens(source[i].tokens));
    }
  }
  fs::create_directories(out);
  write_text(out / "report.csv", eval_report_csv(summary.rows));
  write_text(out / "samples.txt", samples_text(summary.sources, summary.rows));
  write_resolved_config(cfg, out);
  return summary;
}

}  // namespace styletx

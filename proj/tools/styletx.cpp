#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "styletx/harness.hpp"

namespace {

struct CommonFlags {
  std::optional<std::string> profile;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_out) {
  cmd->add_option("--profile", f.profile, "Scale profile")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--config", f.config, "key=value config file");
  cmd->add_option("--set", f.overrides, "Override one key (key=value); repeatable");
  cmd->add_option("--seed", f.seed, "Random seed (default 2)");
  auto* out = cmd->add_option("--out", f.out, "Output directory");
  if (needs_out) out->required();
}

// defaults < profile < config file < --set < dedicated flags < --seed
styletx::RunConfig resolve(const CommonFlags& f) {
  styletx::RunConfig cfg;
  if (f.profile) cfg.apply_file(styletx::profile_path(*f.profile));
  if (f.config) cfg.apply_file(*f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw styletx::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void finish(styletx::RunConfig& cfg, const CommonFlags& f) {
  if (f.seed) cfg.seed = *f.seed;
  cfg.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentiment style transfer with sequence autoencoders"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress logging");

  CommonFlags pre_flags, vocab_flags, train_flags, eval_flags;
  std::string raw, data_dir, vocab_path, kind, models_dir, classifier, model_ckpt, init;
  std::vector<std::string> words;

  auto* pre = app.add_subcommand("preprocess", "Clean, label, balance and split raw reviews");
  add_common(pre, pre_flags, true);
  pre->add_option("--input", raw, "JSON-lines review file")->required();

  auto* bv = app.add_subcommand("build-vocab", "Build the vocabulary from the training splits");
  add_common(bv, vocab_flags, true);
  bv->add_option("--data", data_dir, "Preprocessed data directory");

  auto* tr = app.add_subcommand("train", "Train one model kind");
  add_common(tr, train_flags, true);
  tr->add_option("kind", kind, "Model kind")->required()->check(CLI::IsMember(styletx::train_kinds()));
  tr->add_option("--data", data_dir, "Preprocessed data directory");
  tr->add_option("--vocab", vocab_path, "Vocabulary file");
  tr->add_option("--init", init, "Warm-start checkpoint for the adversarial kind");

  auto* tf = app.add_subcommand("transfer", "Rewrite one sentence with a trained model");
  tf->add_option("--model", model_ckpt, "Model checkpoint")->required();
  tf->add_option("--vocab", vocab_path, "Vocabulary file (default: next to the checkpoint)");
  tf->add_option("sentence", words, "Sentence to transfer")->required();

  auto* ev = app.add_subcommand("evaluate", "Score the five variants against a frozen classifier");
  add_common(ev, eval_flags, true);
  ev->add_option("--models", models_dir, "Directory with one subdirectory per variant")->required();
  ev->add_option("--classifier", classifier, "Classifier checkpoint")->required();
  ev->add_option("--data", data_dir, "Preprocessed data directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (quiet) styletx::g_log = nullptr;

  try {
    if (*pre) {
      auto cfg = resolve(pre_flags);
      finish(cfg, pre_flags);
      styletx::cmd_preprocess(cfg, raw, pre_flags.out);
    } else if (*bv) {
      auto cfg = resolve(vocab_flags);
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      finish(cfg, vocab_flags);
      styletx::cmd_build_vocab(cfg, vocab_flags.out);
    } else if (*tr) {
      auto cfg = resolve(train_flags);
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      if (!vocab_path.empty()) cfg.data_vocab = vocab_path;
      if (!init.empty()) cfg.adv_init = init;
      finish(cfg, train_flags);
      styletx::cmd_train(cfg, kind, train_flags.out);
    } else if (*tf) {
      std::string sentence;
      for (const auto& w : words) sentence += (sentence.empty() ? "" : " ") + w;
      std::optional<std::filesystem::path> vocab;
      if (!vocab_path.empty()) vocab = vocab_path;
      std::cout << styletx::cmd_transfer(sentence, model_ckpt, vocab) << "\n";
    } else if (*ev) {
      auto cfg = resolve(eval_flags);
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      finish(cfg, eval_flags);
      const auto summary = styletx::cmd_evaluate(cfg, models_dir, classifier, eval_flags.out);
      if (summary.missing > 0) {
        std::cerr << "styletx: " << summary.missing << " model checkpoint(s) missing; rows marked NA\n";
        return 2;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "styletx: " << e.what() << "\n";
    return styletx::exit_code_for(e);
  }
  return 0;
}

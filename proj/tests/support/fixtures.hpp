#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "styletx/harness.hpp"
#include "styletx/synthetic.hpp"

namespace styletx::fixtures {

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("styletx_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Small enough that a full preprocess/train/evaluate cycle takes seconds.
inline RunConfig tiny_config() {
  RunConfig cfg;
  cfg.vocab_size = 200;
  cfg.reduced_records = 40;
  cfg.min_class_size = 1;
  cfg.model.layers = 1;
  cfg.model.hidden = 8;
  cfg.model.embedding = 6;
  cfg.model.epochs = 2;
  cfg.model.minibatches = 4;
  cfg.adv.iterations = 0;
  cfg.adv.disc_hidden = 4;
  cfg.clf.layers = 1;
  cfg.clf.hidden = 8;
  cfg.clf.embedding = 6;
  cfg.clf.mlp_hidden = 4;
  cfg.clf.epochs = 2;
  cfg.clf.batch_size = 16;
  cfg.eval_samples = 3;
  return cfg;
}

inline void write_synthetic_reviews(const std::filesystem::path& path, std::size_t count, std::uint64_t seed,
                                    std::size_t neutral_every = 0) {
  write_text(path, synthetic::review_jsonl(count, seed, neutral_every));
}

}  // namespace styletx::fixtures

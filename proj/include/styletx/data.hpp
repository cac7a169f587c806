#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "styletx/rng.hpp"
#include "styletx/tensor.hpp"

namespace styletx {

inline constexpr std::size_t kMaxSentenceLength = 10;
inline constexpr std::size_t kDefaultVocabSize = 10000;
inline constexpr std::size_t kReducedRecords = 20000;
inline constexpr const char* kNumberToken = "_NUM_";

enum class Sentiment { negative = 0, positive = 1 };

inline const char* to_string(Sentiment s) { return s == Sentiment::positive ? "positive" : "negative"; }
/// Directory name used for processed splits.
inline const char* short_name(Sentiment s) { return s == Sentiment::positive ? "pos" : "neg"; }
inline Sentiment opposite(Sentiment s) {
  return s == Sentiment::positive ? Sentiment::negative : Sentiment::positive;
}

inline Sentiment parse_sentiment(const std::string& s) {
  if (s == "positive" || s == "pos") return Sentiment::positive;
  if (s == "negative" || s == "neg") return Sentiment::negative;
  throw ConfigError("unknown sentiment '" + s + "'");
}

// ---------------------------------------------------------------------------
// Cleaning and labelling
// ---------------------------------------------------------------------------

/// Lowercases, strips every character outside [a-z0-9 ], collapses each
/// digit run to _NUM_ and splits on whitespace. An existing _NUM_ token is
/// kept, so cleaning already-clean text is a no-op.
inline std::vector<std::string> clean_text(std::string_view raw) {
  std::vector<std::string> tokens;
  std::istringstream words{std::string(raw)};
  std::string word;
  while (words >> word) {
    if (word == kNumberToken) {
      tokens.push_back(word);
      continue;
    }
    std::string kept;
    for (unsigned char ch : word) {
      const auto lower = static_cast<unsigned char>(std::tolower(ch));
      if ((lower >= 'a' && lower <= 'z') || (lower >= '0' && lower <= '9')) kept += char(lower);
    }
    // Digit runs become their own _NUM_ tokens: "45min" -> _NUM_ min.
    std::string current;
    bool in_digits = false;
    for (char ch : kept) {
      const bool digit = ch >= '0' && ch <= '9';
      if (digit) {
        if (!in_digits) {
          if (!current.empty()) tokens.push_back(std::move(current));
          current.clear();
          tokens.push_back(kNumberToken);
        }
        in_digits = true;
      } else {
        in_digits = false;
        current += ch;
      }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
  }
  return tokens;
}

enum class StarLabel { positive, negative, drop };

/// >3 stars positive, <3 negative, exactly 3 neutral and dropped.
inline StarLabel label_from_stars(double stars) {
  if (!std::isfinite(stars)) throw DataError("non-numeric star rating");
  if (stars > 3.0) return StarLabel::positive;
  if (stars < 3.0) return StarLabel::negative;
  return StarLabel::drop;
}

struct RawReview {
  std::string text;
  double stars = 0.0;
};

struct Example {
  std::vector<std::string> tokens;
  Sentiment sentiment = Sentiment::positive;

  bool operator==(const Example&) const = default;
};

struct ReviewFile {
  std::vector<RawReview> reviews;
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::size_t bad_stars = 0;
};

/// Parses one review per line: {"text": "...", "stars": 4}. Lines that are
/// not objects with a string text field are counted as malformed; a
/// non-numeric stars field is counted separately.
inline ReviewFile read_reviews(std::istream& in) {
  ReviewFile out;
  std::string line;
  while (std::getline(in, line)) {
    ++out.lines;
    nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object() || !record.contains("text") ||
        !record["text"].is_string()) {
      ++out.malformed;
      continue;
    }
    if (!record.contains("stars") || !record["stars"].is_number() || !(record["stars"].get<double>() >= 1.0) ||
        !(record["stars"].get<double>() <= 5.0)) {
      ++out.bad_stars;
      continue;
    }
    out.reviews.push_back({record["text"].get<std::string>(), record["stars"].get<double>()});
  }
  return out;
}

inline ReviewFile read_reviews(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read review file " + path.string());
  return read_reviews(in);
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kGo = 2;
inline constexpr TokenId kEos = 3;
inline constexpr std::size_t kReservedTokens = 4;

/// Token <-> id map. Ids 0..3 are _PAD_, _UNK_, _GO_, _EOS_.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// Regular tokens in id order, without the reserved prefix.
  explicit Vocabulary(const std::vector<std::string>& regular) {
    tokens_ = {"_PAD_", "_UNK_", "_GO_", "_EOS_"};
    for (const auto& t : regular) {
      if (index_.count(t) || is_reserved_name(t)) {
        throw DataError("duplicate or reserved vocabulary token '" + t + "'");
      }
      index_.emplace(t, tokens_.size());
      tokens_.push_back(t);
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw IndexError("token id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  std::vector<std::string> decode(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    for (auto id : ids) out.push_back(token(id));
    return out;
  }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read vocabulary " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    const Vocabulary reserved;
    if (lines.size() < kReservedTokens ||
        !std::equal(reserved.tokens_.begin(), reserved.tokens_.end(), lines.begin())) {
      throw DataError("vocabulary " + path.string() + " does not start with the reserved tokens");
    }
    return Vocabulary(std::vector<std::string>(lines.begin() + kReservedTokens, lines.end()));
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  static bool is_reserved_name(const std::string& t) {
    return t == "_PAD_" || t == "_UNK_" || t == "_GO_" || t == "_EOS_";
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// The max_size most frequent tokens, ties broken lexicographically.
inline Vocabulary build_vocab(std::span<const Example> corpus, std::size_t max_size = kDefaultVocabSize) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : corpus) {
    for (const auto& t : ex.tokens) ++counts[t];
  }
  if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens;
  for (auto& [t, n] : ranked) tokens.push_back(t);
  return Vocabulary(tokens);
}

// ---------------------------------------------------------------------------
// Balancing and splitting
// ---------------------------------------------------------------------------

struct SplitSet {
  std::vector<Example> train, dev, test;
};

struct Splits {
  SplitSet positive;
  SplitSet negative;

  SplitSet& of(Sentiment s) { return s == Sentiment::positive ? positive : negative; }
  const SplitSet& of(Sentiment s) const { return s == Sentiment::positive ? positive : negative; }
};

/// Downsamples the larger class to the size of the smaller one, then gives
/// each class a seeded 80/10/10 train/dev/test split. Both classes end up
/// with identical split sizes.
inline Splits balance_and_split(std::span<const Example> examples, std::uint64_t seed,
                                std::size_t min_class_size = 10) {
  std::vector<Example> pos, neg;
  for (const auto& ex : examples) (ex.sentiment == Sentiment::positive ? pos : neg).push_back(ex);
  if (pos.size() < min_class_size || neg.size() < min_class_size) {
    throw DataError("class too small to split: " + std::to_string(pos.size()) + " positive, " +
                    std::to_string(neg.size()) + " negative (minimum " +
                    std::to_string(min_class_size) + ")");
  }
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  const std::size_t n = std::min(pos.size(), neg.size());
  pos.resize(n);
  neg.resize(n);
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_dev = n / 10;
  auto cut = [&](const std::vector<Example>& all) {
    SplitSet s;
    s.train.assign(all.begin(), all.begin() + n_train);
    s.dev.assign(all.begin() + n_train, all.begin() + n_train + n_dev);
    s.test.assign(all.begin() + n_train + n_dev, all.end());
    return s;
  };
  return {cut(pos), cut(neg)};
}

/// Seeded subset of exactly `count` records (all of them when fewer exist).
inline std::vector<Example> subsample(std::span<const Example> examples, std::size_t count,
                                      std::uint64_t seed) {
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(std::min(count, order.size()));
  std::sort(order.begin(), order.end());
  std::vector<Example> out;
  for (auto i : order) out.push_back(examples[i]);
  return out;
}

/// Training data for the reduced variants: `records` examples per style
/// drawn from the train splits, and a vocabulary rebuilt from those
/// subsets alone (still shared by both styles).
struct ReducedCorpus {
  std::vector<Example> positive;
  std::vector<Example> negative;
  Vocabulary vocab;

  const std::vector<Example>& of(Sentiment s) const {
    return s == Sentiment::positive ? positive : negative;
  }
};

inline ReducedCorpus reduce_corpus(const Splits& splits, std::size_t records, std::size_t vocab_size,
                                   std::uint64_t seed) {
  ReducedCorpus out;
  out.positive = subsample(splits.positive.train, records, Rng::derive(seed, 10).next_u64());
  out.negative = subsample(splits.negative.train, records, Rng::derive(seed, 11).next_u64());
  std::vector<Example> both = out.positive;
  both.insert(both.end(), out.negative.begin(), out.negative.end());
  out.vocab = build_vocab(both, vocab_size);
  return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct EncodedExample {
  std::vector<TokenId> ids;
  Sentiment sentiment = Sentiment::positive;
};

inline std::vector<EncodedExample> encode_all(const Vocabulary& vocab, std::span<const Example> examples) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({vocab.encode(ex.tokens), ex.sentiment});
  return out;
}

/// Padded, time-major batch. Row t of each grid holds timestep t for every
/// sequence. Targets are the source shifted: target_in = [_GO_, tokens...],
/// target_out = [tokens..., _EOS_].
struct Batch {
  std::vector<std::vector<TokenId>> source;      // T_s x B
  std::vector<std::vector<TokenId>> target_in;   // T_t x B
  std::vector<std::vector<TokenId>> target_out;  // T_t x B
  std::vector<std::vector<double>> weights;      // T_t x B, 0 at padding
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;
  std::vector<Sentiment> labels;

  std::size_t size() const { return source_lengths.size(); }
  std::size_t source_steps() const { return source.size(); }
  std::size_t target_steps() const { return target_in.size(); }
};

inline Batch make_batch(std::span<const EncodedExample> examples) {
  Batch b;
  const std::size_t n = examples.size();
  std::size_t max_len = 0;
  for (const auto& ex : examples) max_len = std::max(max_len, ex.ids.size());
  b.source.assign(max_len, std::vector<TokenId>(n, kPad));
  b.target_in.assign(max_len + 1, std::vector<TokenId>(n, kPad));
  b.target_out.assign(max_len + 1, std::vector<TokenId>(n, kPad));
  b.weights.assign(max_len + 1, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    const auto& ids = examples[j].ids;
    b.source_lengths.push_back(ids.size());
    b.target_lengths.push_back(ids.size() + 1);
    b.labels.push_back(examples[j].sentiment);
    b.target_in[0][j] = kGo;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      b.source[t][j] = ids[t];
      b.target_in[t + 1][j] = ids[t];
      b.target_out[t][j] = ids[t];
      b.weights[t][j] = 1.0;
    }
    b.target_out[ids.size()][j] = kEos;
    b.weights[ids.size()][j] = 1.0;
  }
  return b;
}

/// Extends every grid with `extra` padding timesteps.
inline Batch pad_batch(Batch b, std::size_t extra_source, std::size_t extra_target) {
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < extra_source; ++i) b.source.emplace_back(n, kPad);
  for (std::size_t i = 0; i < extra_target; ++i) {
    b.target_in.emplace_back(n, kPad);
    b.target_out.emplace_back(n, kPad);
    b.weights.emplace_back(n, 0.0);
  }
  return b;
}

inline std::size_t batch_size_for(std::size_t examples, std::size_t target_minibatches) {
  if (target_minibatches == 0) throw ConfigError("minibatches per epoch must be positive");
  return std::max<std::size_t>(1, (examples + target_minibatches - 1) / target_minibatches);
}

/// Batches of ceil(N / target) sequences with near-equal lengths.
///
/// Examples are shuffled, stably sorted by length, cut into consecutive
/// chunks, and the chunk order is shuffled again.
inline std::vector<Batch> bucket_batches(std::span<const EncodedExample> split,
                                         std::size_t target_minibatches, Rng& rng) {
  const std::size_t batch_size = batch_size_for(split.size(), target_minibatches);
  std::vector<std::size_t> order(split.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return split[a].ids.size() < split[b].ids.size();
  });
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<EncodedExample> chunk;
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
      chunk.push_back(split[order[k]]);
    }
    batches.push_back(make_batch(chunk));
  }
  rng.shuffle(batches);
  return batches;
}

/// Fixed-order batches of `batch_size` for evaluation.
inline std::vector<Batch> sequential_batches(std::span<const EncodedExample> split, std::size_t batch_size) {
  std::vector<Batch> out;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    out.push_back(make_batch(split.subspan(start, std::min(batch_size, split.size() - start))));
  }
  return out;
}

/// Reverses the real prefix of every source sequence. Targets are untouched.
inline Batch reverse_source(Batch batch) {
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const std::size_t len = batch.source_lengths[j];
    for (std::size_t t = 0; t < len / 2; ++t) {
      std::swap(batch.source[t][j], batch.source[len - 1 - t][j]);
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Processed split files
// ---------------------------------------------------------------------------

inline void write_split(const std::filesystem::path& path, std::span<const Example> examples) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) out << (i ? " " : "") << ex.tokens[i];
    out << '\n';
  }
}

inline std::vector<Example> read_split(const std::filesystem::path& path, Sentiment sentiment) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read split file " + path.string());
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    Example ex;
    ex.sentiment = sentiment;
    std::istringstream words(line);
    std::string w;
    while (words >> w) ex.tokens.push_back(w);
    out.push_back(std::move(ex));
  }
  return out;
}

/// Layout: <dir>/{pos,neg}/{train,dev,test}.txt
inline std::filesystem::path split_path(const std::filesystem::path& dir, Sentiment s,
                                        const std::string& split) {
  return dir / short_name(s) / (split + ".txt");
}

inline void write_splits(const std::filesystem::path& dir, const Splits& splits) {
  for (Sentiment s : {Sentiment::positive, Sentiment::negative}) {
    write_split(split_path(dir, s, "train"), splits.of(s).train);
    write_split(split_path(dir, s, "dev"), splits.of(s).dev);
    write_split(split_path(dir, s, "test"), splits.of(s).test);
  }
}

inline Splits read_splits(const std::filesystem::path& dir) {
  Splits out;
  for (Sentiment s : {Sentiment::positive, Sentiment::negative}) {
    out.of(s).train = read_split(split_path(dir, s, "train"), s);
    out.of(s).dev = read_split(split_path(dir, s, "dev"), s);
    out.of(s).test = read_split(split_path(dir, s, "test"), s);
  }
  return out;
}

inline std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace styletx

#pragma once

// Templated review sentences whose sentiment is fixed by one cue word.

#include <string>
#include <utility>
#include <vector>

#include "styletx/data.hpp"
#include "styletx/rng.hpp"

namespace styletx::synthetic {

/// Positive cue and its negative counterpart.
inline const std::vector<std::pair<std::string, std::string>>& cue_pairs() {
  static const std::vector<std::pair<std::string, std::string>> pairs{
      {"good", "bad"},           {"great", "terrible"},    {"amazing", "awful"},
      {"excellent", "poor"},     {"delicious", "disgusting"}, {"friendly", "rude"},
      {"fresh", "stale"},        {"perfect", "horrible"},  {"wonderful", "dreadful"},
      {"fantastic", "mediocre"}, {"tasty", "bland"},       {"clean", "dirty"},
      {"fast", "slow"},          {"helpful", "unhelpful"}, {"lovely", "nasty"},
      {"superb", "lousy"},       {"awesome", "gross"},     {"pleasant", "unpleasant"},
      {"cheap", "overpriced"},   {"best", "worst"}};
  return pairs;
}

inline const std::vector<std::string>& nouns() {
  static const std::vector<std::string> words{
      "food",  "service", "staff", "place", "pizza",  "coffee",  "burger", "waiter", "menu",  "price",
      "atmosphere", "music", "room", "bar", "sushi", "salad", "dessert", "owner", "table", "location"};
  return words;
}

/// {n} is a noun, {c} a cue word. Every template is at most ten tokens.
inline const std::vector<std::string>& templates() {
  static const std::vector<std::string> t{
      "the {n} was {c}",
      "the {n} is {c}",
      "{c} {n}",
      "really {c} {n} here",
      "we thought the {n} was {c}",
      "the {n} here is always {c}",
      "what a {c} {n}",
      "my {n} was {c} today",
      "honestly the {n} was {c} and the {m} too",
      "the {n} and the {m} were {c}",
  };
  return t;
}

inline std::string fill(const std::string& tmpl, const std::string& noun, const std::string& other_noun,
                        const std::string& cue) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}') {
      const char key = tmpl[i + 1];
      out += key == 'n' ? noun : key == 'm' ? other_noun : cue;
      i += 2;
    } else {
      out += tmpl[i];
    }
  }
  return out;
}

struct Skeleton {
  std::size_t tmpl;
  std::size_t noun;
  std::size_t other_noun;
  std::size_t cue;
};

inline Skeleton draw(Rng& rng) {
  Skeleton s{rng.below(templates().size()), rng.below(nouns().size()), 0, rng.below(cue_pairs().size())};
  s.other_noun = (s.noun + 1 + rng.below(nouns().size() - 1)) % nouns().size();
  return s;
}

inline Example render(const Skeleton& s, Sentiment label) {
  const auto& pair = cue_pairs()[s.cue];
  const std::string& cue = label == Sentiment::positive ? pair.first : pair.second;
  return {clean_text(fill(templates()[s.tmpl], nouns()[s.noun], nouns()[s.other_noun], cue)), label};
}

/// Labelled sentences, alternating positive and negative.
inline std::vector<Example> lexicon_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(render(draw(rng), i % 2 == 0 ? Sentiment::positive : Sentiment::negative));
  }
  return out;
}

/// The same corpus with labels permuted at random.
inline std::vector<Example> shuffle_labels(std::vector<Example> corpus, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sentiment> labels;
  for (const auto& ex : corpus) labels.push_back(ex.sentiment);
  rng.shuffle(labels);
  for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i].sentiment = labels[i];
  return corpus;
}

/// Parallel sentences: entry i of `positive` and `negative` share template
/// and nouns and differ only in the cue word.
struct AntonymCorpus {
  std::vector<Example> positive;
  std::vector<Example> negative;
};

inline AntonymCorpus antonym_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  AntonymCorpus out;
  for (std::size_t i = 0; i < count; ++i) {
    const Skeleton s = draw(rng);
    out.positive.push_back(render(s, Sentiment::positive));
    out.negative.push_back(render(s, Sentiment::negative));
  }
  return out;
}

/// Review records as newline-delimited JSON, for exercising preprocessing.
/// Stars: 4-5 positive, 1-2 negative, every `neutral_every`-th record 3.
inline std::string review_jsonl(std::size_t count, std::uint64_t seed, std::size_t neutral_every = 0) {
  Rng rng(seed);
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    const Skeleton s = draw(rng);
    const bool positive = rng.bernoulli(0.5);
    int stars = positive ? 4 + int(rng.below(2)) : 1 + int(rng.below(2));
    if (neutral_every && i % neutral_every == neutral_every - 1) stars = 3;
    const auto& pair = cue_pairs()[s.cue];
    std::string text = fill(templates()[s.tmpl], nouns()[s.noun], nouns()[s.other_noun],
                            positive ? pair.first : pair.second);
    text[0] = char(text[0] - 'a' + 'A');
    out += "{\"text\": \"" + text + "!\", \"stars\": " + std::to_string(stars) + "}\n";
  }
  return out;
}

}  // namespace styletx::synthetic

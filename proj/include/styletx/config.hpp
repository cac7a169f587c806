#pragma once

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "styletx/adversarial.hpp"
#include "styletx/classifier.hpp"
#include "styletx/data.hpp"
#include "styletx/seq2seq.hpp"

namespace styletx {

/// Every knob of a run. Defaults are the full-scale values.
struct RunConfig {
  std::uint64_t seed = 2;

  std::string data_dir;
  std::string data_vocab;
  std::size_t vocab_size = kDefaultVocabSize;
  std::size_t max_len = kMaxSentenceLength;
  std::size_t reduced_records = kReducedRecords;
  std::size_t min_class_size = 10;

  Seq2SeqConfig model;
  AdvConfig adv;
  std::string adv_init;
  ClassifierConfig clf;
  std::size_t eval_samples = 10;

  /// Config used to build a model of the given variant.
  Seq2SeqConfig seq2seq(Variant v) const {
    Seq2SeqConfig c = model;
    c.variant = v;
    c.seed = seed;
    c.reduced_records = reduced_records;
    return c;
  }

  ClassifierConfig classifier() const {
    ClassifierConfig c = clf;
    c.seed = seed;
    return c;
  }

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Resolved `key=value` lines for every key, in a fixed order.
  std::string to_text() const {
    std::string out;
    for (const auto& k : keys()) out += k + "=" + get(k) + "\n";
    return out;
  }

  /// Applies `key=value` lines; `#` starts a comment.
  void apply(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = source + ":" + std::to_string(number) + ": ";
      if (eq == std::string::npos) throw ConfigError(where + "expected key=value, got '" + line + "'");
      try {
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
      }
    }
  }

  void apply_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    apply(in, path.string());
  }

  void validate() const {
    seq2seq(model.variant).validate();
    adv.validate();
    classifier().validate();
    if (max_len == 0) throw ConfigError("data.max_len must be positive");
    if (vocab_size == 0) throw ConfigError("data.vocab_size must be positive");
    if (reduced_records == 0) throw ConfigError("data.reduced_records must be positive");
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct ConfigField {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
ConfigField field(std::string key, T RunConfig::*member) {
  return {key,
          [key, member](RunConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, std::string>) {
              c.*member = v;
            } else if constexpr (std::is_same_v<T, bool>) {
              c.*member = parse_bool(key, v);
            } else {
              c.*member = parse_number<T>(key, v);
            }
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_same_v<T, std::string>) {
              return c.*member;
            } else if constexpr (std::is_same_v<T, bool>) {
              return std::string(c.*member ? "true" : "false");
            } else if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

template <class S, class T>
ConfigField nested(std::string key, S RunConfig::*outer, T S::*member) {
  return {key,
          [key, outer, member](RunConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>) {
              c.*outer.*member = parse_bool(key, v);
            } else {
              c.*outer.*member = parse_number<T>(key, v);
            }
          },
          [outer, member](const RunConfig& c) {
            if constexpr (std::is_same_v<T, bool>) {
              return std::string(c.*outer.*member ? "true" : "false");
            } else if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*outer.*member);
            } else {
              return std::to_string(c.*outer.*member);
            }
          }};
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back(field("seed", &RunConfig::seed));
    f.push_back(field("data.dir", &RunConfig::data_dir));
    f.push_back(field("data.vocab", &RunConfig::data_vocab));
    f.push_back(field("data.vocab_size", &RunConfig::vocab_size));
    f.push_back(field("data.max_len", &RunConfig::max_len));
    f.push_back(field("data.reduced_records", &RunConfig::reduced_records));
    f.push_back(field("data.min_class_size", &RunConfig::min_class_size));
    f.push_back(nested("model.layers", &RunConfig::model, &Seq2SeqConfig::layers));
    f.push_back(nested("model.hidden", &RunConfig::model, &Seq2SeqConfig::hidden));
    f.push_back(nested("model.embedding", &RunConfig::model, &Seq2SeqConfig::embedding));
    f.push_back(nested("model.dropout", &RunConfig::model, &Seq2SeqConfig::dropout));
    f.push_back(nested("train.epochs", &RunConfig::model, &Seq2SeqConfig::epochs));
    f.push_back(nested("train.lr", &RunConfig::model, &Seq2SeqConfig::learning_rate));
    f.push_back(nested("train.clip", &RunConfig::model, &Seq2SeqConfig::clip));
    f.push_back(nested("train.minibatches", &RunConfig::model, &Seq2SeqConfig::minibatches));
    f.push_back(nested("train.max_decode_len", &RunConfig::model, &Seq2SeqConfig::max_decode_len));
    f.push_back({"train.style",
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.model.style = parse_sentiment(v);
                   } catch (const DataError& e) {
                     throw ConfigError(e.what());
                   }
                 },
                 [](const RunConfig& c) { return std::string(to_string(c.model.style)); }});
    f.push_back(nested("adv.lambda", &RunConfig::adv, &AdvConfig::lambda));
    f.push_back(nested("adv.disc_steps", &RunConfig::adv, &AdvConfig::disc_steps));
    f.push_back(nested("adv.lr", &RunConfig::adv, &AdvConfig::learning_rate));
    f.push_back(nested("adv.iterations", &RunConfig::adv, &AdvConfig::iterations));
    f.push_back(nested("adv.minibatch_stat", &RunConfig::adv, &AdvConfig::minibatch_stat));
    f.push_back(nested("adv.disc_hidden", &RunConfig::adv, &AdvConfig::disc_hidden));
    f.push_back(field("adv.init", &RunConfig::adv_init));
    f.push_back(nested("clf.hidden", &RunConfig::clf, &ClassifierConfig::hidden));
    f.push_back(nested("clf.layers", &RunConfig::clf, &ClassifierConfig::layers));
    f.push_back(nested("clf.embedding", &RunConfig::clf, &ClassifierConfig::embedding));
    f.push_back(nested("clf.mlp_hidden", &RunConfig::clf, &ClassifierConfig::mlp_hidden));
    f.push_back(nested("clf.dropout", &RunConfig::clf, &ClassifierConfig::dropout));
    f.push_back(nested("clf.epochs", &RunConfig::clf, &ClassifierConfig::epochs));
    f.push_back(nested("clf.lr", &RunConfig::clf, &ClassifierConfig::learning_rate));
    f.push_back(nested("clf.batch_size", &RunConfig::clf, &ClassifierConfig::batch_size));
    f.push_back(field("eval.samples", &RunConfig::eval_samples));
    return f;
  }();
  return fields;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (f.key == key) return f.set(*this, value);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string RunConfig::get(const std::string& key) const {
  for (const auto& f : detail::config_fields()) {
    if (f.key == key) return f.get(*this);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : detail::config_fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

/// Directory holding the named profiles (paper.cfg, desk.cfg). The
/// STYLETX_PROFILE_DIR environment variable wins over the built-in path.
inline std::filesystem::path profile_dir() {
  if (const char* env = std::getenv("STYLETX_PROFILE_DIR"); env && *env) return env;
#ifdef STYLETX_PROFILE_DIR
  return STYLETX_PROFILE_DIR;
#else
  return "configs";
#endif
}

inline std::filesystem::path profile_path(const std::string& name) {
  if (name != "paper" && name != "desk") throw ConfigError("unknown profile '" + name + "' (expected paper or desk)");
  return profile_dir() / (name + ".cfg");
}

}  // namespace styletx

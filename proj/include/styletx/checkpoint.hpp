#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styletx/autograd.hpp"
#include "styletx/seq2seq.hpp"

namespace styletx {

static_assert(std::endian::native == std::endian::little, "checkpoint arrays are stored little-endian");

inline constexpr const char* kCheckpointMagic = "STYLETX-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s) { return fnv1a(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Checksum over names, shapes and exact double values.
inline std::uint64_t parameter_checksum(std::span<const Parameter* const> params) {
  std::uint64_t h = fnv1a("", 0);
  for (const auto* p : params) {
    h = fnv1a(p->name.data(), p->name.size(), h);
    for (auto d : p->value.shape) h = fnv1a(&d, sizeof d, h);
    h = fnv1a(p->value.values.data(), p->value.values.size() * sizeof(double), h);
  }
  return h;
}

inline std::uint64_t parameter_checksum(const std::vector<Parameter*>& params) {
  std::vector<const Parameter*> c(params.begin(), params.end());
  return parameter_checksum(std::span<const Parameter* const>(c));
}

/// Rounds every parameter to the nearest float32 so a saved model and the
/// in-memory one compute identical forwards.
inline void snap_to_float32(std::span<Parameter* const> params) {
  for (auto* p : params) {
    for (auto& v : p->value.values) v = static_cast<double>(static_cast<float>(v));
  }
}

inline void snap_to_float32(const std::vector<Parameter*>& params) {
  snap_to_float32(std::span<Parameter* const>(params));
}

struct NamedArray {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::string kind;
  std::string run_id;
  nlohmann::json config;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }
};

/// Layout:
///   STYLETX-CHECKPOINT
///   version 1
///   header <bytes> <fnv of header>
///   <json header>
///   <float32 arrays, little-endian, at the header's offsets>
inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string data;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& a : ckpt.arrays) {
    arrays.push_back({{"name", a.name}, {"shape", a.value.shape}, {"offset", data.size()}});
    for (double v : a.value.values) {
      const float f = static_cast<float>(v);
      char bytes[sizeof f];
      std::memcpy(bytes, &f, sizeof f);
      data.append(bytes, sizeof f);
    }
  }
  const nlohmann::json header{{"kind", ckpt.kind},
                              {"run_id", ckpt.run_id},
                              {"config", ckpt.config},
                              {"extra", ckpt.extra},
                              {"arrays", arrays},
                              {"data_bytes", data.size()},
                              {"data_fnv", hex64(fnv1a(data))}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << '\n'
      << "version " << kCheckpointVersion << '\n'
      << "header " << text.size() << ' ' << hex64(fnv1a(text)) << '\n'
      << text << '\n';
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  const std::string where = "checkpoint " + path.string() + ": ";
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw CheckpointError(where + "bad magic");
  if (!std::getline(in, line)) throw CheckpointError(where + "missing version");
  {
    std::istringstream ls(line);
    std::string word;
    int version = 0;
    if (!(ls >> word >> version) || word != "version") throw CheckpointError(where + "corrupt version line");
    if (version != kCheckpointVersion) {
      throw CheckpointError(where + "unsupported version " + std::to_string(version) + " (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
  }
  std::size_t header_bytes = 0;
  std::string header_fnv;
  if (!std::getline(in, line)) throw CheckpointError(where + "missing header line");
  {
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word >> header_bytes >> header_fnv) || word != "header" || header_bytes > (1u << 30)) {
      throw CheckpointError(where + "corrupt header line");
    }
  }
  std::string text(header_bytes, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_bytes)) || in.get() != '\n') {
    throw CheckpointError(where + "truncated header");
  }
  if (hex64(fnv1a(text)) != header_fnv) throw CheckpointError(where + "corrupt header (checksum mismatch)");
  const std::string data(std::istreambuf_iterator<char>(in), {});

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    header.at("kind").get_to(ckpt.kind);
    header.at("run_id").get_to(ckpt.run_id);
    ckpt.config = header.at("config");
    ckpt.extra = header.value("extra", nlohmann::json::object());
    const auto expected = header.at("data_bytes").get<std::size_t>();
    if (data.size() < expected) {
      throw CheckpointError(where + "truncated arrays (" + std::to_string(data.size()) + " of " +
                            std::to_string(expected) + " bytes)");
    }
    if (data.size() != expected || hex64(fnv1a(data)) != header.at("data_fnv").get<std::string>()) {
      throw CheckpointError(where + "corrupt array data (checksum mismatch)");
    }
    for (const auto& a : header.at("arrays")) {
      NamedArray arr;
      a.at("name").get_to(arr.name);
      const Shape shape = a.at("shape").get<Shape>();
      const auto offset = a.at("offset").get<std::size_t>();
      arr.value = Tensor::zeros(shape);
      const std::size_t n = arr.value.size();
      if (offset > data.size() || n > (data.size() - offset) / sizeof(float)) {
        throw CheckpointError(where + "array " + arr.name + " runs past the end of the data");
      }
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, data.data() + offset + i * sizeof f, sizeof f);
        arr.value[i] = f;
      }
      ckpt.arrays.push_back(std::move(arr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + "malformed header: " + e.what());
  }
  return ckpt;
}

inline std::vector<NamedArray> arrays_of(std::span<const Parameter* const> params) {
  std::vector<NamedArray> out;
  for (const auto* p : params) out.push_back({p->name, p->value});
  return out;
}

/// Copies the named arrays into `params`. Every parameter must be present
/// with its exact shape.
inline void load_parameters(const Checkpoint& ckpt, std::span<Parameter* const> params) {
  for (auto* p : params) {
    const NamedArray* a = ckpt.find(p->name);
    if (!a) throw ShapeError("checkpoint has no array named " + p->name);
    if (a->value.shape != p->value.shape) {
      throw ShapeError("shape mismatch for array " + p->name + ": checkpoint " + to_string(a->value.shape) +
                       ", model " + to_string(p->value.shape));
    }
  }
  for (auto* p : params) p->value.values = ckpt.find(p->name)->value.values;
}

inline void load_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
  load_parameters(ckpt, std::span<Parameter* const>(params));
}

// Seq2seq models -------------------------------------------------------------

/// Snaps the model to float32 and writes it. `extra_params` (for example a
/// discriminator) are stored alongside under their own names.
inline void save_model(Seq2SeqModel& model, const std::filesystem::path& path, const std::string& kind,
                       const std::string& run_id, const std::vector<Parameter*>& extra_params = {}) {
  auto params = model.parameters();
  params.insert(params.end(), extra_params.begin(), extra_params.end());
  snap_to_float32(params);
  Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.run_id = run_id;
  ckpt.config = model.config;
  ckpt.extra = {{"vocab_size", model.vocab_size()}};
  std::vector<const Parameter*> cp(params.begin(), params.end());
  ckpt.arrays = arrays_of(cp);
  write_checkpoint(path, ckpt);
}

inline void load_into(Seq2SeqModel& model, const Checkpoint& ckpt) { load_parameters(ckpt, model.parameters()); }

inline void load_into(Seq2SeqModel& model, const std::filesystem::path& path) {
  load_into(model, read_checkpoint(path));
}

inline Seq2SeqModel model_from(const Checkpoint& ckpt) {
  Seq2SeqConfig cfg;
  std::size_t vocab = 0;
  try {
    cfg = ckpt.config.get<Seq2SeqConfig>();
    vocab = ckpt.extra.at("vocab_size").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config is not a seq2seq config: ") + e.what());
  }
  Seq2SeqModel model(cfg, vocab);
  load_into(model, ckpt);
  return model;
}

inline Seq2SeqModel load_model(const std::filesystem::path& path) { return model_from(read_checkpoint(path)); }

}  // namespace styletx

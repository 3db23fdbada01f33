#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtamiq/errors.hpp"
#include "vtamiq/model.hpp"
#include "vtamiq/model_config.hpp"

namespace vtamiq {

// Layout (all integers little-endian):
//   "VTAMIQCK" | u32 version | u64 header length | JSON header
//   u64 parameter count
//   per parameter: u32 name length | name | u32 rank | u64 dims[rank] | u8 element bytes (4|8) | values
// The header holds {"model": ModelConfig, "precision": "float32"|"float64", ...caller metadata}.

inline constexpr char kCheckpointMagic[8] = {'V', 'T', 'A', 'M', 'I', 'Q', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
constexpr const char* precision_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

namespace detail {

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const std::string& what) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw CheckpointError("checkpoint truncated while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
  U v;
  std::memcpy(&v, b, sizeof(U));
  return v;
}

inline std::string get_bytes(std::istream& in, std::uint64_t n, const std::string& what) {
  if (n > (1ull << 32)) throw CheckpointError("checkpoint: implausible length for " + what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("checkpoint truncated while reading " + what);
  return s;
}

}  // namespace detail

/// Writes the model configuration and every parameter. `metadata` entries are merged into the header.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ParameterStore<T>& store,
                     const json& metadata = json::object()) {
  json header = metadata.is_object() ? metadata : json::object();
  header["model"] = cfg;
  header["precision"] = precision_name<T>();
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::put_le<std::uint64_t>(out, store.size());
  for (const auto& p : store) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) detail::put_le<std::uint64_t>(out, d);
    out.put(static_cast<char>(sizeof(T)));
    for (T v : p.value.values()) detail::put_le<T>(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

struct CheckpointHeader {
  ModelConfig model;
  std::string precision;
  json raw;
};

inline CheckpointHeader read_checkpoint_header(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError("not a checkpoint file");
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto len = detail::get_le<std::uint64_t>(in, "header length");
  CheckpointHeader h;
  try {
    h.raw = json::parse(detail::get_bytes(in, len, "header"));
    h.model = h.raw.at("model").get<ModelConfig>();
    h.precision = h.raw.at("precision").get<std::string>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (h.precision != "float32" && h.precision != "float64") throw CheckpointError("unknown precision '" + h.precision + "'");
  return h;
}

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint_header(in);
}

/// Rebuilds the model stored at `path`. Values stored in the other precision are converted.
/// If `expected` is given, the stored configuration must equal it.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, CheckpointHeader* header_out = nullptr,
                         const ModelConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  auto header = read_checkpoint_header(in);
  if (expected && json(*expected) != json(header.model)) {
    throw CheckpointError("checkpoint '" + path.string() + "' was written for a different model configuration");
  }
  Model<T> model(header.model);
  auto& store = model.parameters();
  const auto count = detail::get_le<std::uint64_t>(in, "parameter count");
  if (count != store.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " parameters, model has " + std::to_string(store.size()));
  }
  for (std::size_t k = 0; k < count; ++k) {
    const auto name = detail::get_bytes(in, detail::get_le<std::uint32_t>(in, "name length"), "parameter name");
    auto& p = store[k];
    if (name != p.name) throw CheckpointError("parameter " + std::to_string(k) + " is '" + name + "', expected '" + p.name + "'");
    const auto rank = detail::get_le<std::uint32_t>(in, name + " rank");
    if (rank > 8) throw CheckpointError("implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_le<std::uint64_t>(in, name + " shape");
    if (shape != p.value.shape()) {
      throw CheckpointError("'" + name + "' has shape " + shape_string(shape) + ", expected " + shape_string(p.value.shape()));
    }
    const int width = in.get();
    if (width == 4) {
      for (auto& v : p.value.values()) v = static_cast<T>(detail::get_le<float>(in, name));
    } else if (width == 8) {
      for (auto& v : p.value.values()) v = static_cast<T>(detail::get_le<double>(in, name));
    } else {
      throw CheckpointError("'" + name + "' has unsupported element width");
    }
    for (auto v : p.value.values())
      if (!std::isfinite(static_cast<double>(v))) throw CheckpointError("'" + name + "' holds non-finite values");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after the last parameter");
  if (header_out) *header_out = std::move(header);
  return model;
}

}  // namespace vtamiq

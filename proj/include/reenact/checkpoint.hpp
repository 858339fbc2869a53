#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reenact/errors.hpp"
#include "reenact/model.hpp"

namespace reenact {

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'R', 'N', 'C', 'K',
                                             'P', 'T', '0', '1'};

inline void append_f32_le(std::vector<unsigned char>& blob, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  blob.push_back(static_cast<unsigned char>(bits & 0xff));
  blob.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
  blob.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
  blob.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

inline float read_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void backbone_to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"stage_widths", c.stage_widths},
                     {"blocks_per_stage", c.blocks_per_stage},
                     {"input_resolution", c.input_resolution},
                     {"variant", c.variant}};
}

inline BackboneConfig backbone_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.stage_widths = j.at("stage_widths").get<std::vector<int>>();
  c.blocks_per_stage = j.at("blocks_per_stage").get<std::vector<int>>();
  c.input_resolution = j.at("input_resolution").get<int>();
  c.variant = j.at("variant").get<std::string>();
  return c;
}

}  // namespace detail

/// Single file: 8-byte magic, little-endian u64 manifest length, JSON
/// manifest (names, shapes, dtype, byte offsets), then one blob of
/// little-endian 32-bit floats. Round-trips are bit-exact for f32 models.
template <class Real>
void save_checkpoint(MultiStreamModel<Real>& model, const std::string& path) {
  nlohmann::json manifest;
  manifest["format"] = "reenact-checkpoint";
  manifest["version"] = 1;
  detail::backbone_to_json(manifest["backbone"], model.config());
  manifest["seed"] = model.seed();

  std::vector<unsigned char> blob;
  nlohmann::json tensors = nlohmann::json::array();
  auto add_entry = [&](const std::string& name, const char* kind,
                       const Shape& shape, const std::vector<Real>& values) {
    nlohmann::json t;
    t["name"] = name;
    t["kind"] = kind;
    t["shape"] = shape;
    t["dtype"] = "f32";
    t["offset"] = blob.size();
    t["count"] = values.size();
    tensors.push_back(std::move(t));
    for (Real v : values) detail::append_f32_le(blob, static_cast<float>(v));
  };
  for (const auto& p : model.parameters())
    add_entry(p.name, "param", p.tensor.shape(), p.tensor.values());
  for (const auto& b : model.buffers())
    add_entry(b.name, "buffer",
              {static_cast<std::int64_t>(b.data->size())}, *b.data);
  manifest["tensors"] = std::move(tensors);
  manifest["blob_bytes"] = blob.size();

  const std::string header = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(detail::kCheckpointMagic, 8);
  std::uint64_t len = header.size();
  unsigned char len_le[8];
  for (int i = 0; i < 8; ++i)
    len_le[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(len_le), 8);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(blob.data()),
          static_cast<std::streamsize>(blob.size()));
  if (!f) throw IoError("failed while writing checkpoint: " + path);
}

namespace detail {

struct RawCheckpoint {
  nlohmann::json manifest;
  std::vector<unsigned char> blob;
};

inline RawCheckpoint read_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (f.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IntegrityError("not recognizable as a checkpoint: " + path);
  unsigned char len_le[8];
  f.read(reinterpret_cast<char*>(len_le), 8);
  if (f.gcount() != 8) throw IntegrityError("truncated checkpoint header: " + path);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<std::uint64_t>(len_le[i]) << (8 * i);
  std::string header(len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(f.gcount()) != len)
    throw IntegrityError("truncated checkpoint manifest: " + path);

  RawCheckpoint raw;
  try {
    raw.manifest = nlohmann::json::parse(header);
  } catch (const std::exception& e) {
    throw IntegrityError("corrupt checkpoint manifest in " + path + ": " +
                         e.what());
  }
  const std::uint64_t blob_bytes = raw.manifest.at("blob_bytes").get<std::uint64_t>();
  raw.blob.resize(blob_bytes);
  f.read(reinterpret_cast<char*>(raw.blob.data()),
         static_cast<std::streamsize>(blob_bytes));
  if (static_cast<std::uint64_t>(f.gcount()) != blob_bytes)
    throw IntegrityError("checkpoint blob is truncated: " + path +
                         " (expected " + std::to_string(blob_bytes) + " bytes)");
  char extra;
  if (f.read(&extra, 1); f.gcount() != 0)
    throw IntegrityError("checkpoint has trailing bytes: " + path);
  return raw;
}

}  // namespace detail

/// Fills an existing model from a checkpoint; every tensor is matched by
/// name and shape, and the first mismatch is reported by parameter name.
template <class Real>
void load_checkpoint_into(MultiStreamModel<Real>& model,
                          const std::string& path) {
  auto raw = detail::read_checkpoint_file(path);

  std::size_t cursor = 0;
  auto take = [&](const std::string& name, const Shape& want_shape,
                  std::vector<Real>& dst) {
    if (cursor >= raw.manifest.at("tensors").size())
      throw IntegrityError("checkpoint " + path + " is missing tensor '" +
                           name + "'");
    const auto& t = raw.manifest.at("tensors")[cursor++];
    const std::string have_name = t.at("name").get<std::string>();
    if (have_name != name)
      throw IntegrityError("checkpoint tensor order mismatch: expected '" +
                           name + "', found '" + have_name + "'");
    const auto have_shape = t.at("shape").get<std::vector<std::int64_t>>();
    if (have_shape != want_shape)
      throw IntegrityError("shape mismatch for parameter '" + name +
                           "': checkpoint has " + shape_str(have_shape) +
                           ", model needs " + shape_str(want_shape));
    const std::size_t offset = t.at("offset").get<std::size_t>();
    const std::size_t count = t.at("count").get<std::size_t>();
    if (offset + 4 * count > raw.blob.size())
      throw IntegrityError("checkpoint blob overrun for tensor '" + name + "'");
    dst.resize(count);
    for (std::size_t i = 0; i < count; ++i)
      dst[i] =
          static_cast<Real>(detail::read_f32_le(raw.blob.data() + offset + 4 * i));
  };

  for (auto& p : model.parameters())
    take(p.name, p.tensor.shape(), p.tensor.values());
  for (auto& b : model.buffers())
    take(b.name, {static_cast<std::int64_t>(b.data->size())}, *b.data);
}

/// Rebuilds the model described by the checkpoint manifest and loads it.
template <class Real>
MultiStreamModel<Real> load_checkpoint(const std::string& path) {
  auto raw = detail::read_checkpoint_file(path);
  const BackboneConfig cfg =
      detail::backbone_from_json(raw.manifest.at("backbone"));
  const std::uint64_t seed = raw.manifest.value("seed", std::uint64_t{0});
  MultiStreamModel<Real> model(cfg, seed);
  load_checkpoint_into(model, path);
  return model;
}

}  // namespace reenact

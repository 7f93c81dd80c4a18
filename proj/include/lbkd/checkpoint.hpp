#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "lbkd/error.hpp"
#include "lbkd/models.hpp"

namespace lbkd {

// Checkpoint container, format version 1:
//
//   bytes 0..7    magic "LBKDCKPT"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  manifest length L, uint64 little-endian
//   next L bytes  UTF-8 JSON manifest:
//                   {"format_version": 1, "kind": "unet" | "bottleneck",
//                    "config": {...}, "meta": {...}, "payload_bytes": N,
//                    "tensors": [{"name", "shape", "offset", "count", "fnv1a64"}]}
//   next N bytes  payload: every tensor as IEEE-754 binary64 little-endian,
//                 at its manifest offset (bytes from payload start)
//
// fnv1a64 is the 64-bit FNV-1a hash of a tensor's payload bytes, written as
// 16 lowercase hex digits.
inline constexpr char kCheckpointMagic[8] = {'L', 'B', 'K', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;  // detached copies
};

namespace detail {

inline std::uint64_t fnv1a64(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline void append_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t read_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void append_doubles(std::string& out, std::span<const double> values) {
  for (double d : values) append_le(out, std::bit_cast<std::uint64_t>(d), 8);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    const std::size_t offset = payload.size();
    detail::append_doubles(payload, t.data());
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"count", t.size()},
                       {"fnv1a64", detail::hex64(detail::fnv1a64(
                                       reinterpret_cast<const unsigned char*>(payload.data()) + offset,
                                       payload.size() - offset))}});
  }
  const nlohmann::json manifest{{"format_version", kCheckpointVersion},
                                {"kind", ckpt.kind},
                                {"config", ckpt.config},
                                {"meta", ckpt.meta},
                                {"payload_bytes", payload.size()},
                                {"tensors", tensors}};
  const std::string header = manifest.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::append_le(out, kCheckpointVersion, 4);
  detail::append_le(out, header.size(), 8);
  out += header;
  out += payload;
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>") {
  auto fail = [&](const std::string& why) { return FormatError("corrupt checkpoint " + origin + ": " + why); };
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 20 || std::memcmp(raw, kCheckpointMagic, 8) != 0) throw fail("bad magic");
  const auto version = static_cast<std::uint32_t>(detail::read_le(raw + 8, 4));
  if (version != kCheckpointVersion) {
    throw fail("unsupported format version " + std::to_string(version) + " (expected " +
               std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t header_len = detail::read_le(raw + 12, 8);
  if (header_len > bytes.size() - 20) throw fail("manifest length exceeds file size");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("manifest is not valid JSON: ") + e.what());
  }
  const std::size_t payload_start = 20 + header_len;
  const std::size_t payload_size = bytes.size() - payload_start;
  Checkpoint ckpt;
  try {
    if (manifest.at("format_version").get<std::uint32_t>() != version) throw fail("version field mismatch");
    const auto declared = manifest.at("payload_bytes").get<std::size_t>();
    if (declared != payload_size) {
      throw fail("manifest declares " + std::to_string(declared) + " payload bytes, file holds " +
                 std::to_string(payload_size));
    }
    ckpt.kind = manifest.at("kind").get<std::string>();
    ckpt.config = manifest.at("config");
    ckpt.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (numel(shape) != count) {
        throw fail("tensor '" + name + "' shape " + to_string(shape) + " disagrees with count " +
                   std::to_string(count));
      }
      if (offset > payload_size || count * 8 > payload_size - offset) {
        throw fail("tensor '" + name + "' [" + std::to_string(offset) + ", +" + std::to_string(count * 8) +
                   ") lies outside the " + std::to_string(payload_size) + "-byte payload");
      }
      const unsigned char* p = raw + payload_start + offset;
      const auto hash = detail::hex64(detail::fnv1a64(p, count * 8));
      const auto expected = entry.at("fnv1a64").get<std::string>();
      if (hash != expected) {
        throw fail("tensor '" + name + "' content hash " + hash + " does not match manifest " + expected);
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<double>(detail::read_le(p + 8 * i, 8));
      ckpt.tensors.emplace_back(name, Tensor(shape, std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("manifest field error: ") + e.what());
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path.string());
}

inline void assign_parameters(const std::vector<NamedTensor>& params,
                              const std::vector<std::pair<std::string, Tensor>>& stored,
                              const std::string& origin) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : stored) by_name[name] = &t;
  if (by_name.size() != params.size()) {
    throw FormatError("checkpoint " + origin + " holds " + std::to_string(by_name.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint " + origin + " lacks tensor '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw FormatError("checkpoint " + origin + " tensor '" + p.name + "' has shape " +
                        to_string(it->second->shape()) + ", model expects " + to_string(p.tensor.shape()));
    }
    std::copy(it->second->data().begin(), it->second->data().end(), p.tensor.mutable_data().begin());
  }
}

inline Checkpoint make_checkpoint(const UNetModel& model, nlohmann::json meta = nlohmann::json::object()) {
  Checkpoint c{"unet", config_to_json(model.config()), std::move(meta), {}};
  for (const auto& p : model.parameters()) c.tensors.emplace_back(p.name, p.tensor.detach());
  return c;
}

inline UNetModel model_from_checkpoint(const Checkpoint& c, const std::string& origin = "<memory>") {
  if (c.kind != "unet") throw FormatError("checkpoint " + origin + " is a '" + c.kind + "', not a unet");
  UNetModel model(config_from_json(c.config, "checkpoint.config"), 0);
  assign_parameters(model.parameters(), c.tensors, origin);
  return model;
}

inline Checkpoint make_checkpoint(const BottleneckAdapter& adapter, nlohmann::json meta = nlohmann::json::object()) {
  std::vector<std::string> axes;
  for (auto a : adapter.axes()) axes.emplace_back(1, "CHW"[static_cast<std::size_t>(a)]);
  Checkpoint c{"bottleneck",
               {{"teacher_latent", adapter.input_shape()}, {"student_latent", adapter.output_shape()}, {"axes", axes}},
               std::move(meta),
               {}};
  for (const auto& p : adapter.parameters()) c.tensors.emplace_back(p.name, p.tensor.detach());
  return c;
}

inline BottleneckAdapter adapter_from_checkpoint(const Checkpoint& c, const std::string& origin = "<memory>") {
  if (c.kind != "bottleneck") throw FormatError("checkpoint " + origin + " is a '" + c.kind + "', not a bottleneck");
  std::vector<LatentAxis> axes;
  for (const auto& a : c.config.at("axes")) {
    const auto s = a.get<std::string>();
    axes.push_back(static_cast<LatentAxis>(std::string("CHW").find(s)));
  }
  BottleneckAdapter adapter(c.config.at("teacher_latent").get<LatentShape>(),
                            c.config.at("student_latent").get<LatentShape>(), axes, 0);
  assign_parameters(adapter.parameters(), c.tensors, origin);
  return adapter;
}

}  // namespace lbkd

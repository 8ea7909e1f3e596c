#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orthoseis/network.hpp"

namespace orthoseis {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and grid formats assume a little-endian host");

// Canonical JSON form of a network configuration: fixed key order, compact
// dump. The fingerprint hashes these exact bytes.
inline std::string config_to_json(const NetworkConfig& cfg) {
  nlohmann::ordered_json j;
  j["input_h"] = cfg.input_h;
  j["input_w"] = cfg.input_w;
  j["input_channels"] = cfg.input_channels;
  j["output_channels"] = cfg.output_channels;
  j["base_filters"] = cfg.base_filters;
  j["depth"] = cfg.depth;
  j["bottleneck_filters"] = cfg.bottleneck_filters;
  j["mode_fraction"] = cfg.mode_fraction;
  j["dropout_rate"] = cfg.dropout_rate;
  j["norm_groups"] = cfg.norm_groups;
  j["norm_eps"] = cfg.norm_eps;
  j["spectral_enabled"] = cfg.spectral_enabled;
  j["final_softmax"] = cfg.final_softmax;
  return j.dump();
}

inline NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  cfg.input_h = j.value("input_h", cfg.input_h);
  cfg.input_w = j.value("input_w", cfg.input_w);
  cfg.input_channels = j.value("input_channels", cfg.input_channels);
  cfg.output_channels = j.value("output_channels", cfg.output_channels);
  cfg.base_filters = j.value("base_filters", cfg.base_filters);
  cfg.depth = j.value("depth", cfg.depth);
  cfg.bottleneck_filters = j.value("bottleneck_filters", cfg.bottleneck_filters);
  cfg.mode_fraction = j.value("mode_fraction", cfg.mode_fraction);
  cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
  cfg.norm_groups = j.value("norm_groups", cfg.norm_groups);
  cfg.norm_eps = j.value("norm_eps", cfg.norm_eps);
  cfg.spectral_enabled = j.value("spectral_enabled", cfg.spectral_enabled);
  cfg.final_softmax = j.value("final_softmax", cfg.final_softmax);
  return cfg;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t config_fingerprint(const NetworkConfig& cfg) {
  const std::string j = config_to_json(cfg);
  return fnv1a64(j.data(), j.size());
}

namespace detail {

template <class V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::istream& is, const char* what) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  require(static_cast<bool>(is), std::string("checkpoint: truncated while reading ") + what);
  return v;
}

}  // namespace detail

// Layout (all integers little-endian):
//   "OSN1" | u32 version | u64 fingerprint | u64 json_len | config JSON |
//   u32 n_params | per parameter:
//     u16 name_len | name | u8 domain (0 real, 1 complex) | u8 ndims (3) |
//     u32 dims[3] | f32 payload (complex interleaves re, im)
template <class T>
void save_checkpoint(ModelState<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "save_checkpoint: cannot open " + path);
  os.write("OSN1", 4);
  detail::write_pod(os, std::uint32_t{1});
  const std::string json = config_to_json(model.config);
  detail::write_pod(os, fnv1a64(json.data(), json.size()));
  detail::write_pod(os, static_cast<std::uint64_t>(json.size()));
  os.write(json.data(), static_cast<std::streamsize>(json.size()));

  auto params = model.parameters();
  detail::write_pod(os, static_cast<std::uint32_t>(params.size()));
  std::vector<float> payload;
  for (Parameter<T>* p : params) {
    require(p->name.size() <= 0xFFFF, "save_checkpoint: parameter name too long");
    detail::write_pod(os, static_cast<std::uint16_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_pod(os, static_cast<std::uint8_t>(p->is_complex ? 1 : 0));
    detail::write_pod(os, std::uint8_t{3});
    const GridShape s = p->shape();
    detail::write_pod(os, static_cast<std::uint32_t>(s.h));
    detail::write_pod(os, static_cast<std::uint32_t>(s.w));
    detail::write_pod(os, static_cast<std::uint32_t>(s.c));
    payload.resize(static_cast<std::size_t>(p->scalar_count()));
    if (p->is_complex) {
      auto view = p->cvalue.real_view();
      for (Eigen::Index i = 0; i < view.size(); ++i) payload[i] = static_cast<float>(view[i]);
    } else {
      for (std::int64_t i = 0; i < p->value.size(); ++i) payload[i] = static_cast<float>(p->value[i]);
    }
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
  }
  require(static_cast<bool>(os), "save_checkpoint: write failed for " + path);
}

template <class T>
ModelState<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "load_checkpoint: cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, "OSN1", 4) == 0,
          "load_checkpoint: bad magic in " + path);
  const auto version = detail::read_pod<std::uint32_t>(is, "version");
  require(version == 1, "load_checkpoint: unsupported version " + std::to_string(version));
  const auto stored_fp = detail::read_pod<std::uint64_t>(is, "fingerprint");
  const auto json_len = detail::read_pod<std::uint64_t>(is, "json length");
  require(json_len < (1u << 20), "load_checkpoint: unreasonable config size");
  std::string json(json_len, '\0');
  is.read(json.data(), static_cast<std::streamsize>(json_len));
  require(static_cast<bool>(is), "load_checkpoint: truncated config");
  require(fnv1a64(json.data(), json.size()) == stored_fp,
          "load_checkpoint: config fingerprint mismatch in " + path);

  NetworkConfig cfg = config_from_json(nlohmann::json::parse(json));
  ModelState<T> model = build_model<T>(cfg);
  auto params = model.parameters();

  const auto n_params = detail::read_pod<std::uint32_t>(is, "parameter count");
  require(n_params == params.size(),
          "load_checkpoint: parameter count " + std::to_string(n_params) + " does not match " +
              std::to_string(params.size()));
  std::vector<float> payload;
  for (Parameter<T>* p : params) {
    const auto name_len = detail::read_pod<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    require(static_cast<bool>(is), "load_checkpoint: truncated while reading a parameter name");
    require(name == p->name,
            "load_checkpoint: expected parameter " + p->name + ", found " + name);
    const auto domain = detail::read_pod<std::uint8_t>(is, "domain");
    require(domain == (p->is_complex ? 1 : 0), "load_checkpoint: domain mismatch for " + p->name);
    const auto ndims = detail::read_pod<std::uint8_t>(is, "ndims");
    require(ndims == 3, "load_checkpoint: ndims must be 3");
    const GridShape expect = p->shape();
    const auto h = detail::read_pod<std::uint32_t>(is, "dim h");
    const auto w = detail::read_pod<std::uint32_t>(is, "dim w");
    const auto c = detail::read_pod<std::uint32_t>(is, "dim c");
    require(h == static_cast<std::uint32_t>(expect.h) && w == static_cast<std::uint32_t>(expect.w) &&
                c == static_cast<std::uint32_t>(expect.c),
            "load_checkpoint: shape mismatch for " + p->name);
    payload.resize(static_cast<std::size_t>(p->scalar_count()));
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    require(static_cast<bool>(is), "load_checkpoint: truncated payload for " + p->name);
    if (p->is_complex) {
      auto view = p->cvalue.real_view();
      for (Eigen::Index i = 0; i < view.size(); ++i) view[i] = static_cast<T>(payload[i]);
    } else {
      for (std::int64_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(payload[i]);
    }
  }
  return model;
}

}  // namespace orthoseis

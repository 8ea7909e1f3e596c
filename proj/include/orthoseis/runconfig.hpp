#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthoseis/baseline.hpp"
#include "orthoseis/network.hpp"
#include "orthoseis/patches.hpp"
#include "orthoseis/seismic.hpp"
#include "orthoseis/train.hpp"

namespace orthoseis {

// Dataset-level knobs beyond the section generator: how sections are cut
// into patches, which noise variants are materialized, and how sections are
// split across train/val/test.
struct DatasetPipeline {
  std::uint64_t seed = 0;
  int patch_h = 32;
  int patch_w = 32;
  std::vector<double> snr_db = {30.0, 20.0, 10.0, 0.0};
  double train_fraction = 0.8;
  double val_fraction = 0.1;
};

// Keys that belong to the I/O layer: patch stitching geometry, the
// normalization scheme applied to network inputs, and image export.
struct IoConfig {
  int patch_stride = 0;  // 0 = patch height/width (non-overlapping tiling)
  std::string norm_mode = "minmax_sym";
  std::string train_variant = "clean";
  bool export_images = true;
};

// One JSON document with sections {dataset, network, train, baseline, io}
// covering every tunable in the toolkit. Unknown keys are rejected so typos
// fail loudly instead of silently running with defaults.
struct RunConfig {
  DatasetSpec dataset;
  DatasetPipeline pipeline;  // parsed from extra keys in the "dataset" section
  NetworkConfig network;
  TrainConfig train;
  BpiConfig baseline;
  IoConfig io;
};

inline NormMode parse_norm_mode(const std::string& name) {
  if (name == "minmax_sym") return NormMode::kMinMaxSym;
  if (name == "zscore") return NormMode::kZScore;
  throw std::invalid_argument("config: io.norm_mode must be minmax_sym or zscore, got " + name);
}

inline void validate(const RunConfig& cfg) {
  validate(cfg.dataset);
  validate(cfg.network);
  require(cfg.pipeline.patch_h >= 1 && cfg.pipeline.patch_w >= 1,
          "config: dataset.patch_h and dataset.patch_w must be positive");
  for (double snr : cfg.pipeline.snr_db) {
    require(std::isfinite(snr), "config: dataset.snr_db entries must be finite");
  }
  require(cfg.pipeline.train_fraction > 0.0 && cfg.pipeline.val_fraction > 0.0 &&
              cfg.pipeline.train_fraction + cfg.pipeline.val_fraction < 1.0,
          "config: dataset split fractions must be positive and sum below one");
  require(cfg.train.epochs >= 0, "config: train.epochs must be non-negative");
  require(cfg.train.batch_size >= 1, "config: train.batch_size must be positive");
  require(cfg.baseline.max_iters >= 1, "config: baseline.max_iters must be positive");
  require(cfg.baseline.chi >= 0.0, "config: baseline.chi must be non-negative");
  parse_norm_mode(cfg.io.norm_mode);
  require(cfg.io.patch_stride >= 0, "config: io.patch_stride must be non-negative");
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  auto& d = j["dataset"];
  d["seed"] = cfg.pipeline.seed;
  d["time_samples"] = cfg.dataset.time_samples;
  d["traces"] = cfg.dataset.traces;
  d["sample_count"] = cfg.dataset.sample_count;
  d["layer_count_min"] = cfg.dataset.layer_count_min;
  d["layer_count_max"] = cfg.dataset.layer_count_max;
  d["thin_layer_fraction"] = cfg.dataset.thin_layer_fraction;
  d["impedance_min"] = cfg.dataset.impedance_min;
  d["impedance_max"] = cfg.dataset.impedance_max;
  d["min_reflection"] = cfg.dataset.min_reflection;
  d["dip_max"] = cfg.dataset.dip_max;
  d["wavelet_peak_hz"] = cfg.dataset.wavelet_peak_hz;
  d["dt_s"] = cfg.dataset.dt_s;
  d["wavelet_length"] = cfg.dataset.wavelet_length;
  d["patch_h"] = cfg.pipeline.patch_h;
  d["patch_w"] = cfg.pipeline.patch_w;
  d["snr_db"] = cfg.pipeline.snr_db;
  d["train_fraction"] = cfg.pipeline.train_fraction;
  d["val_fraction"] = cfg.pipeline.val_fraction;

  auto& n = j["network"];
  n["input_h"] = cfg.network.input_h;
  n["input_w"] = cfg.network.input_w;
  n["input_channels"] = cfg.network.input_channels;
  n["output_channels"] = cfg.network.output_channels;
  n["base_filters"] = cfg.network.base_filters;
  n["depth"] = cfg.network.depth;
  n["bottleneck_filters"] = cfg.network.bottleneck_filters;
  n["mode_fraction"] = cfg.network.mode_fraction;
  n["dropout_rate"] = cfg.network.dropout_rate;
  n["norm_groups"] = cfg.network.norm_groups;
  n["norm_eps"] = cfg.network.norm_eps;
  n["spectral_enabled"] = cfg.network.spectral_enabled;
  n["final_softmax"] = cfg.network.final_softmax;

  auto& t = j["train"];
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["lr"] = cfg.train.lr;
  t["beta1"] = cfg.train.beta1;
  t["beta2"] = cfg.train.beta2;
  t["adam_eps"] = cfg.train.adam_eps;
  t["loss_mse"] = cfg.train.loss_weights.mse;
  t["loss_ssim"] = cfg.train.loss_weights.ssim;
  t["loss_mae"] = cfg.train.loss_weights.mae;
  t["l1_weight"] = cfg.train.l1_weight;
  t["ssim_window"] = cfg.train.ssim_window;
  t["ssim_k1"] = cfg.train.ssim_k1;
  t["ssim_k2"] = cfg.train.ssim_k2;
  t["ssim_data_range"] = cfg.train.ssim_data_range;
  t["early_stop_patience"] = cfg.train.early_stop_patience;
  t["seed"] = cfg.train.seed;
  t["threads"] = cfg.train.threads;

  auto& b = j["baseline"];
  b["chi"] = cfg.baseline.chi;
  b["step"] = cfg.baseline.step;
  b["max_iters"] = cfg.baseline.max_iters;
  b["tol"] = cfg.baseline.tol;
  b["power_iterations"] = cfg.baseline.power_iterations;
  b["method"] = cfg.baseline.method == BpiMethod::kIsta ? "ista" : "fista";
  b["threads"] = cfg.baseline.threads;

  auto& io = j["io"];
  io["patch_stride"] = cfg.io.patch_stride;
  io["norm_mode"] = cfg.io.norm_mode;
  io["train_variant"] = cfg.io.train_variant;
  io["export_images"] = cfg.io.export_images;
  return j;
}

namespace detail {

template <class T>
void read_key(const nlohmann::json& section, const char* key, T& out) {
  if (section.contains(key)) out = section.at(key).get<T>();
}

inline void reject_unknown_keys(const nlohmann::json& section, const std::string& name,
                                std::initializer_list<const char*> known) {
  for (auto it = section.begin(); it != section.end(); ++it) {
    bool found = false;
    for (const char* k : known) {
      if (it.key() == k) {
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("config: unknown key " + name + "." + it.key());
  }
}

}  // namespace detail

// Parses a possibly partial config; absent keys keep their defaults, unknown
// keys or sections fail with the offending name.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  require(j.is_object(), "config: top level must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "dataset" && it.key() != "network" && it.key() != "train" &&
        it.key() != "baseline" && it.key() != "io") {
      throw std::invalid_argument("config: unknown section " + it.key());
    }
  }
  RunConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::reject_unknown_keys(
        d, "dataset",
        {"seed", "time_samples", "traces", "sample_count", "layer_count_min", "layer_count_max",
         "thin_layer_fraction", "impedance_min", "impedance_max", "min_reflection", "dip_max",
         "wavelet_peak_hz", "dt_s", "wavelet_length", "patch_h", "patch_w", "snr_db",
         "train_fraction", "val_fraction"});
    detail::read_key(d, "seed", cfg.pipeline.seed);
    detail::read_key(d, "time_samples", cfg.dataset.time_samples);
    detail::read_key(d, "traces", cfg.dataset.traces);
    detail::read_key(d, "sample_count", cfg.dataset.sample_count);
    detail::read_key(d, "layer_count_min", cfg.dataset.layer_count_min);
    detail::read_key(d, "layer_count_max", cfg.dataset.layer_count_max);
    detail::read_key(d, "thin_layer_fraction", cfg.dataset.thin_layer_fraction);
    detail::read_key(d, "impedance_min", cfg.dataset.impedance_min);
    detail::read_key(d, "impedance_max", cfg.dataset.impedance_max);
    detail::read_key(d, "min_reflection", cfg.dataset.min_reflection);
    detail::read_key(d, "dip_max", cfg.dataset.dip_max);
    detail::read_key(d, "wavelet_peak_hz", cfg.dataset.wavelet_peak_hz);
    detail::read_key(d, "dt_s", cfg.dataset.dt_s);
    detail::read_key(d, "wavelet_length", cfg.dataset.wavelet_length);
    detail::read_key(d, "patch_h", cfg.pipeline.patch_h);
    detail::read_key(d, "patch_w", cfg.pipeline.patch_w);
    detail::read_key(d, "snr_db", cfg.pipeline.snr_db);
    detail::read_key(d, "train_fraction", cfg.pipeline.train_fraction);
    detail::read_key(d, "val_fraction", cfg.pipeline.val_fraction);
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    detail::reject_unknown_keys(
        n, "network",
        {"input_h", "input_w", "input_channels", "output_channels", "base_filters", "depth",
         "bottleneck_filters", "mode_fraction", "dropout_rate", "norm_groups", "norm_eps",
         "spectral_enabled", "final_softmax"});
    detail::read_key(n, "input_h", cfg.network.input_h);
    detail::read_key(n, "input_w", cfg.network.input_w);
    detail::read_key(n, "input_channels", cfg.network.input_channels);
    detail::read_key(n, "output_channels", cfg.network.output_channels);
    detail::read_key(n, "base_filters", cfg.network.base_filters);
    detail::read_key(n, "depth", cfg.network.depth);
    detail::read_key(n, "bottleneck_filters", cfg.network.bottleneck_filters);
    detail::read_key(n, "mode_fraction", cfg.network.mode_fraction);
    detail::read_key(n, "dropout_rate", cfg.network.dropout_rate);
    detail::read_key(n, "norm_groups", cfg.network.norm_groups);
    detail::read_key(n, "norm_eps", cfg.network.norm_eps);
    detail::read_key(n, "spectral_enabled", cfg.network.spectral_enabled);
    detail::read_key(n, "final_softmax", cfg.network.final_softmax);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown_keys(
        t, "train",
        {"epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "loss_mse", "loss_ssim",
         "loss_mae", "l1_weight", "ssim_window", "ssim_k1", "ssim_k2", "ssim_data_range",
         "early_stop_patience", "seed", "threads"});
    detail::read_key(t, "epochs", cfg.train.epochs);
    detail::read_key(t, "batch_size", cfg.train.batch_size);
    detail::read_key(t, "lr", cfg.train.lr);
    detail::read_key(t, "beta1", cfg.train.beta1);
    detail::read_key(t, "beta2", cfg.train.beta2);
    detail::read_key(t, "adam_eps", cfg.train.adam_eps);
    detail::read_key(t, "loss_mse", cfg.train.loss_weights.mse);
    detail::read_key(t, "loss_ssim", cfg.train.loss_weights.ssim);
    detail::read_key(t, "loss_mae", cfg.train.loss_weights.mae);
    detail::read_key(t, "l1_weight", cfg.train.l1_weight);
    detail::read_key(t, "ssim_window", cfg.train.ssim_window);
    detail::read_key(t, "ssim_k1", cfg.train.ssim_k1);
    detail::read_key(t, "ssim_k2", cfg.train.ssim_k2);
    detail::read_key(t, "ssim_data_range", cfg.train.ssim_data_range);
    detail::read_key(t, "early_stop_patience", cfg.train.early_stop_patience);
    detail::read_key(t, "seed", cfg.train.seed);
    detail::read_key(t, "threads", cfg.train.threads);
  }
  if (j.contains("baseline")) {
    const auto& b = j.at("baseline");
    detail::reject_unknown_keys(
        b, "baseline", {"chi", "step", "max_iters", "tol", "power_iterations", "method", "threads"});
    detail::read_key(b, "chi", cfg.baseline.chi);
    detail::read_key(b, "step", cfg.baseline.step);
    detail::read_key(b, "max_iters", cfg.baseline.max_iters);
    detail::read_key(b, "tol", cfg.baseline.tol);
    detail::read_key(b, "power_iterations", cfg.baseline.power_iterations);
    if (b.contains("method")) {
      const std::string m = b.at("method").get<std::string>();
      if (m == "ista") {
        cfg.baseline.method = BpiMethod::kIsta;
      } else if (m == "fista") {
        cfg.baseline.method = BpiMethod::kFista;
      } else {
        throw std::invalid_argument("config: baseline.method must be ista or fista, got " + m);
      }
    }
    detail::read_key(b, "threads", cfg.baseline.threads);
  }
  if (j.contains("io")) {
    const auto& io = j.at("io");
    detail::reject_unknown_keys(io, "io",
                                {"patch_stride", "norm_mode", "train_variant", "export_images"});
    detail::read_key(io, "patch_stride", cfg.io.patch_stride);
    detail::read_key(io, "norm_mode", cfg.io.norm_mode);
    detail::read_key(io, "train_variant", cfg.io.train_variant);
    detail::read_key(io, "export_images", cfg.io.export_images);
  }
  validate(cfg);
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

inline void write_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "config: cannot write " + path);
  os << run_config_to_json(cfg).dump(2) << "\n";
  require(static_cast<bool>(os), "config: failed writing " + path);
}

// Flat `section.key = default` listing for command-line help.
inline std::string config_reference() {
  const nlohmann::ordered_json j = run_config_to_json(RunConfig{});
  std::ostringstream out;
  out << "Config keys (JSON, section.key = default):\n";
  for (const auto& [section, keys] : j.items()) {
    for (const auto& [key, value] : keys.items()) {
      out << "  " << section << "." << key << " = " << value.dump() << "\n";
    }
  }
  return out.str();
}

}  // namespace orthoseis

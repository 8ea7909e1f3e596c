#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "orthoseis/gridfile.hpp"
#include "orthoseis/image.hpp"
#include "orthoseis/runconfig.hpp"
#include "orthoseis/segy.hpp"

namespace orthoseis {

// "snr30" for 30 dB, "snr12.5" when fractional; the noiseless variant is
// always "clean".
inline std::string variant_name(double snr_db) {
  char buf[32];
  if (snr_db == std::floor(snr_db) && std::abs(snr_db) < 1e6) {
    std::snprintf(buf, sizeof(buf), "snr%lld", static_cast<long long>(snr_db));
  } else {
    std::snprintf(buf, sizeof(buf), "snr%g", snr_db);
  }
  return buf;
}

inline std::string section_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sec_%04d.osgd", index);
  return buf;
}

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Contiguous section-level split; sections never share patches across sets.
inline SplitIndices split_sections(int n, double train_fraction, double val_fraction) {
  require(n >= 3, "split_sections: need at least 3 sections, got " + std::to_string(n));
  const int n_train = std::max(1, static_cast<int>(n * train_fraction));
  const int n_val = std::max(1, static_cast<int>(n * val_fraction));
  require(n_train + n_val < n, "split_sections: split fractions leave no test sections");
  SplitIndices out;
  for (int i = 0; i < n_train; ++i) out.train.push_back(i);
  for (int i = n_train; i < n_train + n_val; ++i) out.val.push_back(i);
  for (int i = n_train + n_val; i < n; ++i) out.test.push_back(i);
  return out;
}

// Materializes a dataset directory:
//   inputs/clean/sec_NNNN.osgd        exact forward-model traces
//   inputs/<snrXX>/sec_NNNN.osgd      the same traces with calibrated noise
//   targets/reflectivity/sec_NNNN.osgd
//   targets/impedance/sec_NNNN.osgd
//   manifest.json                     files, splits, seeds, measured SNRs
// Everything derives from cfg.pipeline.seed, so a rerun with the same config
// writes byte-identical files. Returns the manifest.
inline nlohmann::ordered_json build_dataset(const RunConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  validate(cfg);
  const DatasetSpec& spec = cfg.dataset;
  const std::uint32_t dt_us = static_cast<std::uint32_t>(std::llround(spec.dt_s * 1e6));

  std::vector<std::string> variants = {"clean"};
  for (double snr : cfg.pipeline.snr_db) variants.push_back(variant_name(snr));

  for (const std::string& v : variants) fs::create_directories(fs::path(out_dir) / "inputs" / v);
  fs::create_directories(fs::path(out_dir) / "targets" / "reflectivity");
  fs::create_directories(fs::path(out_dir) / "targets" / "impedance");

  const SplitIndices splits =
      split_sections(spec.sample_count, cfg.pipeline.train_fraction, cfg.pipeline.val_fraction);

  double peak_train_reflectivity = 0.0;
  nlohmann::ordered_json sections = nlohmann::ordered_json::array();
  for (int i = 0; i < spec.sample_count; ++i) {
    RngState section_rng = RngState(cfg.pipeline.seed).split(static_cast<std::uint64_t>(i));
    const GeneratedSection<double> sec = generate_section<double>(spec, section_rng);
    const std::string name = section_file_name(i);

    write_grid((fs::path(out_dir) / "inputs" / "clean" / name).string(), sec.trace.data, dt_us);
    write_grid((fs::path(out_dir) / "targets" / "reflectivity" / name).string(),
               sec.reflectivity.data, dt_us);
    write_grid((fs::path(out_dir) / "targets" / "impedance" / name).string(), sec.impedance.data,
               dt_us);

    nlohmann::ordered_json entry;
    entry["name"] = name;
    nlohmann::ordered_json measured;
    for (std::size_t j = 0; j < cfg.pipeline.snr_db.size(); ++j) {
      RngState noise_rng = RngState(cfg.pipeline.seed)
                               .split(static_cast<std::uint64_t>(i))
                               .split(100 + static_cast<std::uint64_t>(j));
      RealGrid<double> noisy = add_noise_snr(sec.trace.data, cfg.pipeline.snr_db[j], noise_rng);
      const std::string v = variant_name(cfg.pipeline.snr_db[j]);
      write_grid((fs::path(out_dir) / "inputs" / v / name).string(), noisy, dt_us);
      measured[v] = measured_snr_db(sec.trace.data, noisy);
    }
    entry["measured_snr_db"] = std::move(measured);
    sections.push_back(std::move(entry));

    const bool in_train = i < static_cast<int>(splits.train.size());
    if (in_train) {
      peak_train_reflectivity =
          std::max(peak_train_reflectivity,
                   static_cast<double>(sec.reflectivity.data.data().abs().maxCoeff()));
    }
  }
  require(peak_train_reflectivity > 0.0, "build_dataset: training reflectivity is identically zero");

  nlohmann::ordered_json manifest;
  manifest["seed"] = cfg.pipeline.seed;
  manifest["dataset"] = run_config_to_json(cfg)["dataset"];
  manifest["variants"] = variants;
  nlohmann::ordered_json snr_map;
  for (double snr : cfg.pipeline.snr_db) snr_map[variant_name(snr)] = snr;
  manifest["snr_db"] = std::move(snr_map);
  nlohmann::ordered_json split_json;
  split_json["train"] = splits.train;
  split_json["val"] = splits.val;
  split_json["test"] = splits.test;
  manifest["splits"] = std::move(split_json);
  manifest["peak_train_reflectivity"] = peak_train_reflectivity;
  manifest["sections"] = std::move(sections);

  std::ofstream os(fs::path(out_dir) / "manifest.json");
  require(static_cast<bool>(os), "build_dataset: cannot write manifest.json");
  os << manifest.dump(2) << "\n";
  require(static_cast<bool>(os), "build_dataset: failed writing manifest.json");
  return manifest;
}

inline nlohmann::json load_manifest(const std::string& data_dir) {
  const std::string path = (std::filesystem::path(data_dir) / "manifest.json").string();
  std::ifstream is(path);
  require(static_cast<bool>(is), "load_manifest: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_manifest: " + path + " is not valid JSON: " + e.what());
  }
  return j;
}

// Re-reads every grid a manifest lists and checks shape and sampling
// interval against the dataset section. Throws on the first inconsistency.
inline void verify_dataset(const std::string& data_dir) {
  namespace fs = std::filesystem;
  const nlohmann::json manifest = load_manifest(data_dir);
  const auto& d = manifest.at("dataset");
  const int h = d.at("time_samples").get<int>();
  const int w = d.at("traces").get<int>();
  const std::uint32_t dt_us =
      static_cast<std::uint32_t>(std::llround(d.at("dt_s").get<double>() * 1e6));
  std::vector<std::string> dirs;
  for (const auto& v : manifest.at("variants")) {
    dirs.push_back("inputs/" + v.get<std::string>());
  }
  dirs.push_back("targets/reflectivity");
  dirs.push_back("targets/impedance");
  for (const auto& entry : manifest.at("sections")) {
    const std::string name = entry.at("name").get<std::string>();
    for (const std::string& dir : dirs) {
      const GridFile<double> g = read_grid<double>((fs::path(data_dir) / dir / name).string());
      require(g.data.h() == h && g.data.w() == w && g.data.c() == 1,
              "verify_dataset: " + dir + "/" + name + " has shape " + g.data.shape().str());
      require(g.dt_us == dt_us, "verify_dataset: " + dir + "/" + name + " has dt_us " +
                                    std::to_string(g.dt_us));
    }
  }
}

// Patch-level training sets. Inputs are normalized per patch, and each
// target is multiplied by the same per-patch factor: the network's group
// norms erase the input's absolute gain, and since trace and reflectivity
// are related linearly, scaling both sides identically keeps every
// input/target pair consistent with one gain-free mapping. A global
// target_scale (the training split's peak scaled |r|) then brings targets
// into [-1, 1]. Patches whose target window contains no interface are
// dropped: a constant target has no dynamic range, which both the SSIM term
// and the metrics refuse.
struct PatchDataset {
  std::vector<Sample<double>> train;
  std::vector<Sample<double>> val;
  std::vector<Sample<double>> test;
  double target_scale = 1.0;
};

namespace detail {

inline void append_section_patches(const std::string& data_dir, const std::string& variant,
                                   const std::string& name, int patch_h, int patch_w, int stride,
                                   NormMode mode, std::vector<Sample<double>>* out) {
  namespace fs = std::filesystem;
  const GridFile<double> input =
      read_grid<double>((fs::path(data_dir) / "inputs" / variant / name).string());
  const GridFile<double> target =
      read_grid<double>((fs::path(data_dir) / "targets" / "reflectivity" / name).string());
  auto [in_patches, in_index] = extract_patches(input.data, patch_h, patch_w, stride);
  auto [tg_patches, tg_index] = extract_patches(target.data, patch_h, patch_w, stride);
  require(in_patches.size() == tg_patches.size(),
          "append_section_patches: input and target tilings disagree");
  for (std::size_t k = 0; k < in_patches.size(); ++k) {
    if (tg_patches[k].data().maxCoeff() == tg_patches[k].data().minCoeff()) continue;
    auto [normalized, stats] = normalize(in_patches[k], mode);
    Sample<double> s;
    s.input = std::move(normalized);
    s.target = RealGrid<double>(tg_patches[k].shape());
    s.target.data() = tg_patches[k].data() * stats.scale;
    out->push_back(std::move(s));
  }
}

}  // namespace detail

inline PatchDataset load_patch_dataset(const std::string& data_dir, const std::string& variant,
                                       int patch_h, int patch_w, int stride, NormMode mode) {
  const nlohmann::json manifest = load_manifest(data_dir);
  bool known = false;
  for (const auto& v : manifest.at("variants")) known = known || v.get<std::string>() == variant;
  require(known, "load_patch_dataset: variant " + variant + " is not in the manifest");

  PatchDataset out;
  const auto& sections = manifest.at("sections");
  const auto& splits = manifest.at("splits");
  const auto load_split = [&](const char* key, std::vector<Sample<double>>* dst) {
    for (const auto& idx : splits.at(key)) {
      const std::string name = sections.at(idx.get<int>()).at("name").get<std::string>();
      detail::append_section_patches(data_dir, variant, name, patch_h, patch_w, stride, mode, dst);
    }
  };
  load_split("train", &out.train);
  load_split("val", &out.val);
  load_split("test", &out.test);

  double peak = 0.0;
  for (const Sample<double>& s : out.train) {
    peak = std::max(peak, static_cast<double>(s.target.data().abs().maxCoeff()));
  }
  require(peak > 0.0, "load_patch_dataset: training targets are identically zero");
  out.target_scale = peak;
  const double inv = 1.0 / peak;
  for (auto* split : {&out.train, &out.val, &out.test}) {
    for (Sample<double>& s : *split) s.target.data() *= inv;
  }
  return out;
}

// Patch-wise inference over a full section: tile, normalize each patch, run
// the network, undo both the global target_scale and the patch's own
// normalization factor to recover reflectivity units, stitch (overlaps
// average). Per-patch wall times land in per_patch_ms when given.
template <class T>
RealGrid<T> infer_section(ModelState<T>& model, const RealGrid<T>& section, int stride,
                          NormMode mode, double target_scale,
                          std::vector<double>* per_patch_ms = nullptr) {
  require(section.c() == model.config.input_channels,
          "infer_section: section has " + std::to_string(section.c()) + " channels, network wants " +
              std::to_string(model.config.input_channels));
  require(target_scale > 0.0, "infer_section: target_scale must be positive");
  auto [patches, index] = extract_patches(section, model.config.input_h, model.config.input_w,
                                          stride);
  std::vector<RealGrid<T>> preds;
  preds.reserve(patches.size());
  if (per_patch_ms) per_patch_ms->clear();
  for (const RealGrid<T>& patch : patches) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [normalized, stats] = normalize(patch, mode);
    RealGrid<T> pred = predict(model, normalized);
    pred.data() *= static_cast<T>(target_scale / stats.scale);
    preds.push_back(std::move(pred));
    if (per_patch_ms) {
      per_patch_ms->push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
  }
  return stitch_patches(preds, index);
}

// Reads either container by extension: .osgd natively, .sgy/.segy via the
// trace reader (dt from the binary header).
inline GridFile<double> read_section_file(const std::string& path) {
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".sgy" || ext == ".segy") {
    const SegyFile f = read_segy(path);
    GridFile<double> out;
    out.data = segy_to_grid<double>(f);
    out.dt_us = f.dt_us;
    return out;
  }
  return read_grid<double>(path);
}

// Mean objective per iteration across traces. Converged traces hold their
// last value, so each column stays a valid objective and the mean inherits
// the per-trace monotonicity.
inline void write_objective_csv(const std::string& path,
                                const std::vector<std::vector<double>>& histories) {
  require(!histories.empty(), "write_objective_csv: no histories");
  std::size_t rows = 0;
  for (const auto& h : histories) {
    require(!h.empty(), "write_objective_csv: empty objective history");
    rows = std::max(rows, h.size());
  }
  std::FILE* f = std::fopen(path.c_str(), "w");
  require(f != nullptr, "write_objective_csv: cannot open " + path);
  std::fprintf(f, "iter,mean_objective\n");
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (const auto& h : histories) sum += i < h.size() ? h[i] : h.back();
    std::fprintf(f, "%zu,%.12g\n", i, sum / static_cast<double>(histories.size()));
  }
  const bool ok = std::fclose(f) == 0;
  require(ok, "write_objective_csv: failed writing " + path);
}

// One metrics row per (method, variant) pair of prediction directories.
struct EvalRow {
  std::string method;
  std::string variant;
  double snr_db = std::numeric_limits<double>::infinity();
  MetricsRecord metrics;
};

// Walks pred_dir/<method>/<variant>/sec_NNNN.osgd, pairs every prediction
// with targets/reflectivity/<same name> from the dataset, and averages the
// per-section metrics. Predictions without a target, unknown variants, and
// empty directories are all errors.
inline std::vector<EvalRow> evaluate_predictions(const std::string& pred_dir,
                                                 const std::string& data_dir, int ssim_window) {
  namespace fs = std::filesystem;
  const nlohmann::json manifest = load_manifest(data_dir);
  std::vector<std::string> variant_order;
  for (const auto& v : manifest.at("variants")) variant_order.push_back(v.get<std::string>());

  require(fs::is_directory(pred_dir), "evaluate_predictions: " + pred_dir + " is not a directory");
  std::vector<std::string> methods;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.is_directory()) methods.push_back(e.path().filename().string());
  }
  std::sort(methods.begin(), methods.end());
  require(!methods.empty(), "evaluate_predictions: no method directories in " + pred_dir);

  std::vector<EvalRow> rows;
  for (const std::string& method : methods) {
    std::vector<std::string> variants;
    for (const auto& e : fs::directory_iterator(fs::path(pred_dir) / method)) {
      if (e.is_directory()) variants.push_back(e.path().filename().string());
    }
    std::sort(variants.begin(), variants.end(), [&](const std::string& a, const std::string& b) {
      const auto rank = [&](const std::string& v) {
        const auto it = std::find(variant_order.begin(), variant_order.end(), v);
        return it - variant_order.begin();
      };
      return rank(a) < rank(b);
    });
    require(!variants.empty(), "evaluate_predictions: method " + method + " has no variants");
    for (const std::string& variant : variants) {
      const bool known =
          std::find(variant_order.begin(), variant_order.end(), variant) != variant_order.end();
      require(known, "evaluate_predictions: variant " + variant + " is not in the manifest");

      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(fs::path(pred_dir) / method / variant)) {
        if (e.is_regular_file()) files.push_back(e.path().filename().string());
      }
      std::sort(files.begin(), files.end());
      require(!files.empty(),
              "evaluate_predictions: no prediction grids in " + method + "/" + variant);

      EvalRow row;
      row.method = method;
      row.variant = variant;
      if (manifest.at("snr_db").contains(variant)) {
        row.snr_db = manifest.at("snr_db").at(variant).get<double>();
      }
      for (const std::string& name : files) {
        const fs::path target_path = fs::path(data_dir) / "targets" / "reflectivity" / name;
        require(fs::exists(target_path),
                "evaluate_predictions: no target for " + method + "/" + variant + "/" + name);
        const RealGrid<double> pred =
            read_grid<double>((fs::path(pred_dir) / method / variant / name).string()).data;
        const RealGrid<double> target = read_grid<double>(target_path.string()).data;
        SsimConfig ssim;
        ssim.window = ssim_window;
        ssim.data_range =
            static_cast<double>(target.data().maxCoeff() - target.data().minCoeff());
        require(ssim.data_range > 0.0,
                "evaluate_predictions: target " + name + " has zero dynamic range");
        row.metrics.mae += metric_mae(pred, target);
        row.metrics.mse += metric_mse(pred, target);
        row.metrics.ssim += metric_ssim(pred, target, ssim);
        row.metrics.r2 += r2_score(pred, target);
      }
      const double n = static_cast<double>(files.size());
      row.metrics.mae /= n;
      row.metrics.mse /= n;
      row.metrics.ssim /= n;
      row.metrics.r2 /= n;
      row.metrics.count = static_cast<int>(files.size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void write_metrics_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  require(f != nullptr, "write_metrics_csv: cannot open " + path);
  std::fprintf(f, "method,variant,snr_db,mae,mse,ssim,r2,count\n");
  for (const EvalRow& r : rows) {
    std::fprintf(f, "%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", r.method.c_str(), r.variant.c_str(),
                 r.snr_db, r.metrics.mae, r.metrics.mse, r.metrics.ssim, r.metrics.r2,
                 r.metrics.count);
  }
  const bool ok = std::fclose(f) == 0;
  require(ok, "write_metrics_csv: failed writing " + path);
}

// Run directories follow out/<name>/{config.json, checkpoints, logs,
// figures, tables}; the name defaults to a local timestamp.
inline std::string timestamp_name() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

inline std::filesystem::path prepare_run_dir(const std::string& base, const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(base) / (name.empty() ? timestamp_name() : name);
  for (const char* sub : {"checkpoints", "logs", "figures", "tables"}) {
    fs::create_directories(dir / sub);
  }
  return dir;
}

inline void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "write_json_file: cannot open " + path);
  os << j.dump(2) << "\n";
  require(static_cast<bool>(os), "write_json_file: failed writing " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "read_json_file: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("read_json_file: " + path + " is not valid JSON: " + e.what());
  }
  return j;
}

}  // namespace orthoseis

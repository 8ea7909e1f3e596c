#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "orthoseis/checkpoint.hpp"
#include "orthoseis/pipeline.hpp"

namespace fs = std::filesystem;
using namespace orthoseis;

namespace {

int resolve_stride(const RunConfig& cfg) {
  if (cfg.io.patch_stride > 0) return cfg.io.patch_stride;
  return std::min(cfg.pipeline.patch_h, cfg.pipeline.patch_w);
}

void cmd_generate(const RunConfig& cfg, const fs::path& run_dir) {
  const fs::path data_dir = run_dir / "dataset";
  const nlohmann::ordered_json manifest = build_dataset(cfg, data_dir.string());
  verify_dataset(data_dir.string());
  std::printf("wrote %d sections x %zu variants to %s (peak train |r| %.6g)\n",
              cfg.dataset.sample_count, manifest.at("variants").size(), data_dir.c_str(),
              manifest.at("peak_train_reflectivity").get<double>());
}

void cmd_train(const RunConfig& cfg, const fs::path& run_dir, const std::string& data_dir,
               bool plain_unet) {
  require(cfg.network.input_h == cfg.pipeline.patch_h && cfg.network.input_w == cfg.pipeline.patch_w,
          "train: network input " + std::to_string(cfg.network.input_h) + "x" +
              std::to_string(cfg.network.input_w) + " does not match dataset patch " +
              std::to_string(cfg.pipeline.patch_h) + "x" + std::to_string(cfg.pipeline.patch_w));
  const int stride = resolve_stride(cfg);
  const NormMode mode = parse_norm_mode(cfg.io.norm_mode);
  PatchDataset data = load_patch_dataset(data_dir, cfg.io.train_variant, cfg.pipeline.patch_h,
                                         cfg.pipeline.patch_w, stride, mode);
  std::printf("loaded %zu train / %zu val / %zu test patches (variant %s)\n", data.train.size(),
              data.val.size(), data.test.size(), cfg.io.train_variant.c_str());

  NetworkConfig net = cfg.network;
  if (plain_unet) net.spectral_enabled = false;
  ModelState<double> model = build_model<double>(net);
  RngState init_rng = RngState(cfg.train.seed).split(0);
  init_params(model, init_rng);
  std::printf("%s with %lld parameters\n", plain_unet ? "plain u-net" : "spectral u-net",
              static_cast<long long>(param_count(net)));

  const FitResult<double> result = fit(model, data.train, data.val, cfg.train);
  write_epoch_csv((run_dir / "logs" / "epochs.csv").string(), result.epochs);

  const fs::path best_path = run_dir / "checkpoints" / "best.osn";
  const fs::path final_path = run_dir / "checkpoints" / "final.osn";
  save_checkpoint(model, best_path.string());
  const std::vector<std::vector<double>> best_values = clone_values(model);
  if (!result.final_values.empty()) assign_values(model, result.final_values);
  save_checkpoint(model, final_path.string());
  assign_values(model, best_values);

  nlohmann::ordered_json meta;
  meta["target_scale"] = data.target_scale;
  meta["variant"] = cfg.io.train_variant;
  meta["patch_h"] = cfg.pipeline.patch_h;
  meta["patch_w"] = cfg.pipeline.patch_w;
  meta["stride"] = stride;
  meta["norm_mode"] = cfg.io.norm_mode;
  meta["plain_unet"] = plain_unet;
  meta["best_epoch"] = result.best_epoch;
  meta["best_val_loss"] = result.best_val_loss;
  meta["early_stopped"] = result.early_stopped;
  write_json_file((run_dir / "checkpoints" / "meta.json").string(), meta);

  load_checkpoint<double>(best_path.string());
  load_checkpoint<double>(final_path.string());

  if (!result.epochs.empty()) {
    std::printf("best epoch %d, val loss %.9g%s\n", result.best_epoch, result.best_val_loss,
                result.early_stopped ? " (early stop)" : "");
  }
  if (!data.test.empty()) {
    const MetricsRecord m = evaluate(model, data.test, cfg.train.ssim_window, cfg.train.threads);
    std::printf("test: mae %.6g mse %.6g ssim %.6g r2 %.6g over %d patches\n", m.mae, m.mse,
                m.ssim, m.r2, m.count);
  }
}

void cmd_infer(const RunConfig& cfg, const fs::path& run_dir, const std::string& checkpoint_path,
               const std::string& input_path, const std::string& prediction_path) {
  ModelState<double> model = load_checkpoint<double>(checkpoint_path);
  const fs::path meta_path = fs::path(checkpoint_path).parent_path() / "meta.json";
  require(fs::exists(meta_path),
          "infer: no meta.json next to the checkpoint at " + meta_path.string());
  const nlohmann::json meta = read_json_file(meta_path.string());
  const double target_scale = meta.at("target_scale").get<double>();
  const int stride = meta.at("stride").get<int>();
  const NormMode mode = parse_norm_mode(meta.at("norm_mode").get<std::string>());

  const GridFile<double> input = read_section_file(input_path);
  std::vector<double> per_patch_ms;
  const RealGrid<double> prediction =
      infer_section(model, input.data, stride, mode, target_scale, &per_patch_ms);

  const fs::path pred_path =
      prediction_path.empty() ? run_dir / "prediction.osgd" : fs::path(prediction_path);
  if (pred_path.has_parent_path()) fs::create_directories(pred_path.parent_path());
  write_grid(pred_path.string(), prediction, input.dt_us);
  if (cfg.io.export_images) {
    export_section_image((run_dir / "figures" / "input.pgm").string(), input.data);
    export_section_image((run_dir / "figures" / "prediction.pgm").string(), prediction);
  }

  std::FILE* log = std::fopen((run_dir / "logs" / "infer.log").c_str(), "w");
  require(log != nullptr, "infer: cannot open infer.log");
  for (std::size_t i = 0; i < per_patch_ms.size(); ++i) {
    std::fprintf(log, "patch %zu: %.3f ms\n", i, per_patch_ms[i]);
  }
  const double total_ms = std::accumulate(per_patch_ms.begin(), per_patch_ms.end(), 0.0);
  std::fprintf(log, "total: %zu patches, %.3f ms, %.3f ms/patch\n", per_patch_ms.size(), total_ms,
               total_ms / std::max<std::size_t>(1, per_patch_ms.size()));
  require(std::fclose(log) == 0, "infer: failed writing infer.log");

  const GridFile<double> check = read_grid<double>(pred_path.string());
  require(check.data.shape() == prediction.shape(), "infer: prediction readback shape mismatch");
  std::printf("inferred %zu patches in %.3f ms (%.3f ms/patch) -> %s\n", per_patch_ms.size(),
              total_ms, total_ms / std::max<std::size_t>(1, per_patch_ms.size()),
              pred_path.c_str());
}

void cmd_baseline(const RunConfig& cfg, const fs::path& run_dir, const std::string& input_path) {
  const GridFile<double> input = read_section_file(input_path);
  const double dt_s = input.dt_us > 0 ? input.dt_us * 1e-6 : cfg.dataset.dt_s;
  const Wavelet<double> wavelet =
      ricker_wavelet<double>(cfg.dataset.wavelet_peak_hz, dt_s, cfg.dataset.wavelet_length);
  TraceSection<double> section;
  section.data = input.data;
  section.dt = dt_s;

  std::vector<std::vector<double>> histories;
  const ReflectivitySection<double> result =
      invert_section(section, wavelet, cfg.baseline, &histories);

  const fs::path out_path = run_dir / "reflectivity.osgd";
  write_grid(out_path.string(), result.data, input.dt_us);
  write_objective_csv((run_dir / "logs" / "objective.csv").string(), histories);
  if (cfg.io.export_images) {
    export_section_image((run_dir / "figures" / "input.pgm").string(), input.data);
    export_section_image((run_dir / "figures" / "reflectivity.pgm").string(), result.data);
  }

  const GridFile<double> check = read_grid<double>(out_path.string());
  require(check.data.shape() == result.data.shape(), "baseline: readback shape mismatch");
  double final_mean = 0.0;
  for (const auto& h : histories) final_mean += h.back();
  final_mean /= static_cast<double>(histories.size());
  std::printf("%s over %d traces: final mean objective %.9g -> %s\n",
              cfg.baseline.method == BpiMethod::kIsta ? "ista" : "fista", input.data.w(),
              final_mean, out_path.c_str());
}

void cmd_evaluate(const RunConfig& cfg, const fs::path& run_dir, const std::string& pred_dir,
                  const std::string& data_dir) {
  const std::vector<EvalRow> rows =
      evaluate_predictions(pred_dir, data_dir, cfg.train.ssim_window);
  const fs::path csv_path = run_dir / "tables" / "metrics.csv";
  write_metrics_csv(csv_path.string(), rows);

  std::ifstream is(csv_path);
  require(static_cast<bool>(is), "evaluate: cannot re-open " + csv_path.string());
  std::string line;
  std::size_t data_lines = 0;
  while (std::getline(is, line)) {
    if (!line.empty()) ++data_lines;
  }
  require(data_lines == rows.size() + 1, "evaluate: metrics.csv row count mismatch");

  std::printf("%-16s %-8s %8s %12s %12s %8s %8s\n", "method", "variant", "snr_db", "mae", "mse",
              "ssim", "r2");
  for (const EvalRow& r : rows) {
    std::printf("%-16s %-8s %8.4g %12.6g %12.6g %8.4f %8.4f\n", r.method.c_str(),
                r.variant.c_str(), r.snr_db, r.metrics.mae, r.metrics.mse, r.metrics.ssim,
                r.metrics.r2);
  }
  std::printf("wrote %zu rows -> %s\n", rows.size(), csv_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "orthoseis: seismic reflectivity inversion with a spectral u-net and a sparse-spike "
      "baseline"};
  app.require_subcommand(1);
  app.footer(config_reference());

  std::string config_path;
  std::string out_base = "out";
  std::string run_name;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "JSON run configuration (defaults apply when omitted)");
  app.add_option("--out", out_base, "parent directory for run outputs")->capture_default_str();
  app.add_option("--name", run_name, "run directory name (default: local timestamp)");
  CLI::Option* seed_opt =
      app.add_option("--seed", seed, "root seed, overrides dataset.seed and train.seed");
  app.add_option("--threads", threads,
                 "worker threads (0: ORTHOSEIS_THREADS or 1, results are thread-count invariant)");

  CLI::App* generate = app.add_subcommand("generate", "synthesize a layered-section dataset");

  CLI::App* train = app.add_subcommand("train", "fit the network on a generated dataset");
  std::string train_data;
  std::string ablation;
  train->add_option("--data", train_data, "dataset directory from a generate run")->required();
  train->add_option("--ablation", ablation, "ablation to train instead of the full network")
      ->check(CLI::IsMember({"plain-unet"}));

  CLI::App* infer = app.add_subcommand("infer", "run a checkpoint over a full section");
  std::string infer_checkpoint;
  std::string infer_input;
  std::string infer_prediction;
  infer->add_option("--checkpoint", infer_checkpoint, "checkpoint file (.osn)")->required();
  infer->add_option("--input", infer_input, "input section (.osgd, .sgy, .segy)")->required();
  infer->add_option("--prediction", infer_prediction,
                    "prediction grid path (default: <run dir>/prediction.osgd)");

  CLI::App* baseline = app.add_subcommand("baseline", "sparse-spike inversion of a section");
  std::string baseline_input;
  baseline->add_option("--input", baseline_input, "input section (.osgd, .sgy, .segy)")
      ->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "score prediction grids against targets");
  std::string eval_pred;
  std::string eval_data;
  evaluate->add_option("--pred", eval_pred, "directory of <method>/<variant>/sec_NNNN.osgd grids")
      ->required();
  evaluate->add_option("--data", eval_data, "dataset directory holding the targets")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed_opt->count() > 0) {
      cfg.pipeline.seed = seed;
      cfg.train.seed = seed;
    }
    const int resolved_threads = resolve_threads(threads);
    cfg.train.threads = resolved_threads;
    cfg.baseline.threads = resolved_threads;
    validate(cfg);

    const fs::path run_dir = prepare_run_dir(out_base, run_name);
    write_run_config((run_dir / "config.json").string(), cfg);

    if (generate->parsed()) {
      cmd_generate(cfg, run_dir);
    } else if (train->parsed()) {
      cmd_train(cfg, run_dir, train_data, ablation == "plain-unet");
    } else if (infer->parsed()) {
      cmd_infer(cfg, run_dir, infer_checkpoint, infer_input, infer_prediction);
    } else if (baseline->parsed()) {
      cmd_baseline(cfg, run_dir, baseline_input);
    } else if (evaluate->parsed()) {
      cmd_evaluate(cfg, run_dir, eval_pred, eval_data);
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

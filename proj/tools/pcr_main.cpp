#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "pcr/config.hpp"
#include "pcr/eval.hpp"
#include "pcr/filter.hpp"
#include "pcr/manifest.hpp"
#include "pcr/mask.hpp"
#include "pcr/runtime.hpp"
#include "pcr/synth.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

std::string joined_command(int argc, char** argv) {
  std::string cmd;
  for (int i = 0; i < argc; ++i) {
    if (i) cmd += ' ';
    cmd += argv[i];
  }
  return cmd;
}

void apply_overrides(pcr::PipelineConfig& cfg, const CommonOpts& opts) {
  std::string path = opts.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("PCR_CONFIG")) path = env;
  }
  if (!path.empty()) cfg.load_file(path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw pcr::ParameterError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

std::map<std::int64_t, fs::path> scan_frame_files(const fs::path& dir, const char* extension) {
  std::map<std::int64_t, fs::path> out;
  if (!fs::is_directory(dir)) throw pcr::IoError("not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != extension) continue;
    const std::string stem = entry.path().stem().string();
    if (stem.empty() || stem.find_first_not_of("0123456789") != std::string::npos) continue;
    out[std::stoll(stem)] = entry.path();
  }
  return out;
}

int cmd_filter(const fs::path& points_dir, const fs::path& detections_path, const fs::path& out_dir,
               pcr::PipelineConfig cfg, const std::string& command) {
  const auto start = std::chrono::steady_clock::now();
  if (!fs::exists(detections_path)) {
    std::cerr << "error: detections file not found: " << detections_path.string() << "\n";
    return kExitInput;
  }
  const auto point_files = scan_frame_files(points_dir, ".txt");
  auto detections = pcr::mask::group_by_frame(pcr::mask::read_detections_jsonl(detections_path));

  std::map<std::int64_t, bool> frame_ids;  // frame -> has points
  for (const auto& [frame, path] : point_files) frame_ids[frame] = true;
  for (const auto& [frame, dets] : detections) frame_ids.try_emplace(frame, false);
  if (frame_ids.empty()) {
    std::cerr << "error: no frames found under " << points_dir.string() << "\n";
    return kExitInput;
  }

  std::vector<pcr::runtime::FrameInput> inputs;
  for (const auto& [frame, has_points] : frame_ids) {
    pcr::runtime::FrameInput in;
    in.frame_id = frame;
    in.has_points = has_points;
    if (has_points) in.points = pcr::filter::read_points_file(point_files.at(frame), frame);
    const auto it = detections.find(frame);
    in.has_detections = it != detections.end();
    if (in.has_detections) in.detections = it->second;
    inputs.push_back(std::move(in));
  }

  const auto result = pcr::runtime::run_pipeline(inputs, cfg);

  fs::create_directories(out_dir / "outliers");
  pcr::RunManifest manifest;
  manifest.command = command;
  manifest.config_snapshot = cfg.snapshot();
  manifest.inputs.emplace_back(detections_path.string(), pcr::hash_file(detections_path));
  char name[64];
  for (const auto& frame : result.frames) {
    for (const auto& w : frame.warnings) std::cerr << "warning: " << w << "\n";
    if (frame.skipped) {
      std::cerr << "error record: " << frame.error << "\n";
      continue;
    }
    std::snprintf(name, sizeof(name), "%06lld.txt", static_cast<long long>(frame.frame_id));
    const fs::path path = out_dir / "outliers" / name;
    std::ofstream out(path);
    if (!out) throw pcr::IoError("cannot write " + path.string());
    out << pcr::runtime::outlier_file_text(frame);
    manifest.outputs.push_back(path.string());
  }
  {
    const fs::path timing_path = out_dir / "timing.csv";
    std::ofstream out(timing_path);
    if (!out) throw pcr::IoError("cannot write " + timing_path.string());
    out << pcr::runtime::timing_csv(result);
    manifest.outputs.push_back(timing_path.string());
  }
  manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pcr::write_manifest(out_dir / "run_manifest.json", manifest);
  return kExitOk;
}

int cmd_eval(const fs::path& est_path, const fs::path& gt_path, const std::string& mode,
             bool align, bool with_scale, int delta, const std::string& est_format,
             const std::string& gt_format, const fs::path& out_dir, const std::string& command) {
  const auto start = std::chrono::steady_clock::now();
  const auto parse_format = [](const std::string& f) {
    if (f == "kitti") return pcr::eval::TrajectoryFormat::Kitti;
    if (f == "tum") return pcr::eval::TrajectoryFormat::Tum;
    throw pcr::ParameterError("unknown trajectory format '" + f + "'");
  };
  const auto est = pcr::eval::parse_trajectory(est_path, parse_format(est_format));
  const auto gt = pcr::eval::parse_trajectory(gt_path, parse_format(gt_format));

  std::vector<double> errors;
  if (mode == "ape") {
    errors = pcr::eval::ape(est, gt, align, with_scale);
  } else if (mode == "rpe") {
    errors = pcr::eval::rpe(est, gt, delta);
  } else {
    throw pcr::ParameterError("mode must be ape or rpe");
  }
  const pcr::eval::ErrorStats stats = pcr::eval::stats(errors);

  fs::create_directories(out_dir);
  pcr::eval::write_stats_csv(out_dir / "stats.csv", mode, stats);
  pcr::eval::write_plot_csv(out_dir / "plot.csv", errors);
  std::printf("%s: max %.6f median %.6f min %.6f rmse %.6f (%zu samples)\n", mode.c_str(),
              stats.max, stats.median, stats.min, stats.rmse, errors.size());

  pcr::RunManifest manifest;
  manifest.command = command;
  manifest.inputs.emplace_back(est_path.string(), pcr::hash_file(est_path));
  manifest.inputs.emplace_back(gt_path.string(), pcr::hash_file(gt_path));
  manifest.outputs = {(out_dir / "stats.csv").string(), (out_dir / "plot.csv").string()};
  manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pcr::write_manifest(out_dir / "run_manifest.json", manifest);
  return kExitOk;
}

int cmd_synth(const std::string& scene_config, const std::vector<std::string>& scene_sets,
              const fs::path& out_dir, const std::string& command) {
  const auto start = std::chrono::steady_clock::now();
  pcr::synth::SceneConfig cfg;
  if (!scene_config.empty()) cfg.load_file(scene_config);
  for (const auto& kv : scene_sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw pcr::ParameterError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const auto scene = pcr::synth::generate_scene(cfg);
  pcr::synth::export_scene(scene, out_dir);
  if (scene.measured_precision && scene.measured_recall) {
    std::printf("scene: %d frames, mask precision %.4f recall %.4f\n", cfg.frames,
                *scene.measured_precision, *scene.measured_recall);
  } else {
    std::printf("scene: %d frames\n", cfg.frames);
  }

  pcr::RunManifest manifest;
  manifest.command = command;
  if (!scene_config.empty()) {
    manifest.inputs.emplace_back(scene_config, pcr::hash_file(scene_config));
  }
  manifest.outputs = {(out_dir / "manifest.json").string(),
                      (out_dir / "detections.jsonl").string()};
  manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pcr::write_manifest(out_dir / "run_manifest.json", manifest);
  return kExitOk;
}

int cmd_report(const fs::path& baseline_path, const fs::path& ours_path, const fs::path& out_path,
               const std::string& command) {
  const auto start = std::chrono::steady_clock::now();
  const auto baseline = pcr::eval::read_stats_csv(baseline_path);
  const auto ours = pcr::eval::read_stats_csv(ours_path);
  const auto report = pcr::eval::improvement_report(baseline, ours);
  pcr::eval::write_improvement_csv(out_path, baseline, ours, report);
  const auto show = [](const char* field, const std::optional<double>& v) {
    if (v) std::printf("%s: %+.2f%%\n", field, *v);
    else std::printf("%s: undefined (zero baseline)\n", field);
  };
  show("max", report.max);
  show("median", report.median);
  show("min", report.min);
  show("rmse", report.rmse);

  pcr::RunManifest manifest;
  manifest.command = command;
  manifest.inputs.emplace_back(baseline_path.string(), pcr::hash_file(baseline_path));
  manifest.inputs.emplace_back(ours_path.string(), pcr::hash_file(ours_path));
  manifest.outputs = {out_path.string()};
  manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pcr::write_manifest(out_path.parent_path() / "run_manifest.json", manifest);
  return kExitOk;
}

int cmd_confusion(const fs::path& pred_dir, const fs::path& labels_path, const fs::path& out_path,
                  const std::string& command) {
  const auto start = std::chrono::steady_clock::now();
  const auto pred_files = scan_frame_files(pred_dir, ".txt");
  if (pred_files.empty()) {
    throw pcr::IoError("no outlier files under " + pred_dir.string());
  }
  std::map<std::pair<std::int64_t, std::int64_t>, bool> predictions;
  for (const auto& [frame, path] : pred_files) {
    for (const auto& rec : pcr::eval::read_outlier_file(path)) {
      predictions[{rec.track_id, frame}] = rec.outlier;
    }
  }
  const auto labels = pcr::eval::read_label_file(labels_path);
  std::vector<std::uint8_t> pred, gt;
  std::size_t unmatched = 0;
  for (const auto& label : labels) {
    const auto it = predictions.find({label.track_id, label.frame_id});
    if (it == predictions.end()) {
      ++unmatched;
      continue;
    }
    pred.push_back(it->second ? 1 : 0);
    gt.push_back(label.gt_dynamic ? 1 : 0);
  }
  if (unmatched > 0) {
    std::cerr << "warning: " << unmatched << " labeled points had no prediction\n";
  }
  const auto report = pcr::eval::confusion(pred, gt);
  pcr::eval::write_confusion_csv(out_path, report);
  std::printf("tp %lld fp %lld fn %lld tn %lld\n", static_cast<long long>(report.tp),
              static_cast<long long>(report.fp), static_cast<long long>(report.fn),
              static_cast<long long>(report.tn));
  if (report.accuracy) std::printf("accuracy %.4f\n", *report.accuracy);
  if (report.precision) std::printf("precision %.4f\n", *report.precision);
  if (report.recall) std::printf("recall %.4f\n", *report.recall);
  if (report.f1) std::printf("f1 %.4f\n", *report.f1);

  pcr::RunManifest manifest;
  manifest.command = command;
  manifest.inputs.emplace_back(labels_path.string(), pcr::hash_file(labels_path));
  manifest.outputs = {out_path.string()};
  manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pcr::write_manifest(out_path.parent_path() / "run_manifest.json", manifest);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point cloud refinement pipeline"};
  app.require_subcommand(1);
  const std::string command = joined_command(argc, argv);

  CommonOpts common;

  auto* filter_cmd = app.add_subcommand("filter", "run the refinement pipeline over a sequence");
  std::string points_dir, detections_path, filter_out;
  int threads = 0;
  filter_cmd->add_option("--points", points_dir, "directory of per-frame points files")
      ->required();
  filter_cmd->add_option("--detections", detections_path, "detections JSONL")->required();
  filter_cmd->add_option("--out", filter_out, "output directory")->required();
  filter_cmd->add_option("--config", common.config_path, "flat key=value config file");
  filter_cmd->add_option("--set", common.overrides, "override config entries (key=value)");
  filter_cmd->add_option("--threads", threads, "worker threads (1 = reference mode)");

  auto* eval_cmd = app.add_subcommand("eval", "trajectory error metrics");
  std::string est_path, gt_path, mode = "ape", est_format = "kitti", gt_format = "kitti",
              eval_out;
  bool align = false, with_scale = false;
  int delta = 1;
  eval_cmd->add_option("--est", est_path, "estimated trajectory")->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth trajectory")->required();
  eval_cmd->add_option("--mode", mode, "ape or rpe");
  eval_cmd->add_flag("--align", align, "Umeyama-align before the error");
  eval_cmd->add_flag("--scale", with_scale, "include scale in the alignment");
  eval_cmd->add_option("--delta", delta, "rpe index gap");
  eval_cmd->add_option("--est-format", est_format, "kitti or tum");
  eval_cmd->add_option("--gt-format", gt_format, "kitti or tum");
  eval_cmd->add_option("--out", eval_out, "output directory")->required();

  auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic scene");
  std::string scene_config, synth_out;
  std::vector<std::string> scene_sets;
  synth_cmd->add_option("--config", scene_config, "scene config file");
  synth_cmd->add_option("--set", scene_sets, "override scene entries (key=value)");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  auto* report_cmd = app.add_subcommand("report", "improvement percentages between stats files");
  std::string base_path, ours_path, report_out;
  report_cmd->add_option("--baseline", base_path, "baseline stats CSV")->required();
  report_cmd->add_option("--ours", ours_path, "comparison stats CSV")->required();
  report_cmd->add_option("--out", report_out, "output CSV")->required();

  auto* confusion_cmd = app.add_subcommand("confusion", "filter quality against labels");
  std::string pred_dir, labels_path, confusion_out;
  confusion_cmd->add_option("--pred", pred_dir, "directory of outlier files")->required();
  confusion_cmd->add_option("--labels", labels_path, "label file")->required();
  confusion_cmd->add_option("--out", confusion_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (filter_cmd->parsed()) {
      pcr::PipelineConfig cfg;
      apply_overrides(cfg, common);
      if (threads > 0) cfg.threads = threads;
      return cmd_filter(points_dir, detections_path, filter_out, cfg, command);
    }
    if (eval_cmd->parsed()) {
      if (mode == "rpe" && delta < 1) {
        std::cerr << "error: --delta must be >= 1\n";
        return kExitInput;
      }
      return cmd_eval(est_path, gt_path, mode, align, with_scale, delta, est_format, gt_format,
                      eval_out, command);
    }
    if (synth_cmd->parsed()) return cmd_synth(scene_config, scene_sets, synth_out, command);
    if (report_cmd->parsed()) return cmd_report(base_path, ours_path, report_out, command);
    if (confusion_cmd->parsed()) {
      return cmd_confusion(pred_dir, labels_path, confusion_out, command);
    }
  } catch (const pcr::ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const pcr::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const pcr::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const pcr::MismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const pcr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const pcr::Error& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

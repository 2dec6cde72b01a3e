#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pcr/filter.hpp"
#include "pcr/pose.hpp"

namespace pcr {

/// Parses a flat `key = value` file: one assignment per line, `#` starts a
/// comment, values may be quoted. Throws ParseError with the line number.
std::vector<std::pair<std::string, std::string>> parse_flat_config(
    const std::filesystem::path& path);

/// Every tunable named by the pipeline, with its default. CLI overrides
/// take precedence over the config file, which takes precedence over
/// these values.
struct PipelineConfig {
  filter::FilterWeights weights;

  // detection post-processing
  double theta_conf = 0.25;
  double theta_nms = 0.45;
  bool nms_class_aware = true;
  int open_radius = 1;
  int close_radius = 1;
  double norm_mean[3] = {0.485, 0.456, 0.406};
  double norm_std[3] = {0.229, 0.224, 0.225};

  // ground plane
  int ransac_iters = 500;
  double ransac_tau = 0.05;
  double ground_alpha = 0.03;
  double ground_tau_min = 0.02;
  double ground_tau_max = 0.15;

  // pose refinement
  double huber_delta = 2.0;
  int refine_max_iters = 50;
  pose::KeyframePolicy keyframe;

  // camera
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int image_width = 640;
  int image_height = 480;

  // runtime
  double frame_period = 0.1;
  double t_threshold = 0.1;
  int hysteresis_frames = 3;
  std::string tier = "high";
  bool adaptive = false;
  int threads = 1;
  bool filtering_enabled = true;
  std::uint64_t seed = 1;

  /// Applies one key=value override. Throws ParameterError on unknown
  /// keys or unparseable values.
  void set(const std::string& key, const std::string& value);

  void load_file(const std::filesystem::path& path);

  /// Flat snapshot, one key=value per line, keys sorted.
  std::string snapshot() const;

  CameraIntrinsics intrinsics() const {
    return {fx, fy, cx, cy, image_width, image_height};
  }
};

}  // namespace pcr

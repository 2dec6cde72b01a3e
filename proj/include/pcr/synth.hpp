#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcr/eval.hpp"
#include "pcr/filter.hpp"
#include "pcr/geometry.hpp"
#include "pcr/mask.hpp"

namespace pcr::synth {

enum class CameraPathKind { Straight, Arc };

/// Axis-aligned translating box; points riding on it are labeled dynamic.
struct DynamicBody {
  Eigen::Vector3d center0 = Eigen::Vector3d::Zero();  // world, at frame 0
  Eigen::Vector3d size = Eigen::Vector3d::Zero();     // full extents, m
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // m/s, must be nonzero
};

/// World model: ground plane z = 0 strewn with static points, two static
/// walls beside the corridor, and translating boxes carrying the dynamic
/// points. The seed fully determines the output.
struct SceneConfig {
  std::uint64_t seed = 1;
  int n_static = 700;
  int n_dynamic = 260;

  double ground_extent = 50.0;  // corridor length along the path, m
  double ground_width = 14.0;   // full width, m
  double ground_start = 8.0;    // first ground sample ahead of the origin, m
  double wall_offset = 8.0;     // |y| of the walls, m
  double wall_height = 6.0;
  double wall_start = 10.0;

  int body_count = 3;
  Eigen::Vector3d body_size{3.5, 1.8, 1.6};
  double body_speed = 1.2;              // m/s, crossing traffic
  std::vector<DynamicBody> bodies;      // explicit override of the autogen

  CameraPathKind path = CameraPathKind::Straight;
  double camera_speed = 0.3;  // m/s
  double camera_height = 1.65;
  double arc_radius = 40.0;
  int frames = 20;
  double frame_period = 0.1;

  double pixel_noise_sigma = 0.3;
  double precision_target = 0.94;  // (0,1]; 1 disables the corruption
  double recall_target = 0.78;

  CameraIntrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};

  int dynamic_class_ids[3] = {2, 5, 7};  // rotate per body so NMS keeps crossers

  void set(const std::string& key, const std::string& value);
  void load_file(const std::filesystem::path& path);
};

/// One observed point of one frame. The observation carries the noisy
/// pixel and exact camera-frame depth; the true pixel and world position
/// back the oracle checks.
struct SynthPoint {
  filter::PointObservation obs;
  Eigen::Vector3d world_point = Eigen::Vector3d::Zero();
  Eigen::Vector2d true_pixel = Eigen::Vector2d::Zero();
  bool gt_dynamic = false;
};

struct SceneFrame {
  std::int64_t frame_id = 0;
  Pose cam_to_world;
  std::vector<SynthPoint> points;
  mask::SegMask gt_mask;
  mask::SegMask corrupted_mask;
  std::vector<mask::DetectionRecord> detections;  // corrupted, as exported
  /// Current world AABBs of the dynamic bodies (lo, hi pairs).
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> body_boxes;
};

struct Scene {
  SceneConfig config;
  std::vector<SceneFrame> frames;
  eval::Trajectory gt_trajectory;  // camera-to-world, KITTI layout
  std::optional<double> measured_precision;  // corrupted mask vs labels
  std::optional<double> measured_recall;
};

/// Deterministic under config.seed. Throws GenerationError when a frame
/// ends up with no visible points, ParameterError on inconsistent bodies.
Scene generate_scene(const SceneConfig& config);

/// Writes points/, masks/, gt_masks/, detections.jsonl, labels.txt,
/// gt_traj.txt, and manifest.json under the directory, creating it.
void export_scene(const Scene& scene, const std::filesystem::path& directory);

/// True when the ray through the (sub-)pixel hits any dynamic body of the
/// frame; the continuous counterpart of the rasterized gt mask.
bool gt_silhouette_contains(const Scene& scene, const SceneFrame& frame,
                            const Eigen::Vector2d& pixel);

/// Precision/recall of a mask set against the frame labels, evaluated at
/// each observation's rounded pixel. Absent when a rate has no support.
struct MaskRates {
  std::optional<double> precision;
  std::optional<double> recall;
};
MaskRates measure_mask_rates(const Scene& scene, bool corrupted);

}  // namespace pcr::synth

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcr/config.hpp"
#include "pcr/filter.hpp"
#include "pcr/mask.hpp"
#include "pcr/pose.hpp"

namespace pcr::runtime {

/// Per-frame stage timings in seconds.
struct StageTiming {
  double t_transfer = 0.0;
  double t_compute = 0.0;
  double t_sync = 0.0;
  double t_slam = 0.0;
  double t_inference = 0.0;
};

/// t_transfer + t_compute + t_sync. Throws ParameterError on negatives.
double total_time(const StageTiming& t);

/// max(t_slam, t_inference) + t_sync. Throws ParameterError on negatives.
double overlapped_time(double t_slam, double t_inference, double t_sync);

enum class QualityTier { High, Medium, Low };

const char* tier_name(QualityTier tier);
QualityTier tier_from_name(const std::string& name);

/// Budget knobs bound to each tier; High strictly dominates Medium
/// dominates Low.
struct TierParams {
  int ransac_iters = 500;
  double mask_scale = 1.0;  // 1, 1/2, or 1/4
  int vote_window = 5;
};

TierParams tier_params(QualityTier tier);

/// The raw piecewise tier: High above the threshold (strictly), Medium
/// above half of it, Low otherwise.
QualityTier raw_quality(double t_available, double t_threshold);

struct StreakState {
  QualityTier tier = QualityTier::High;
  int length = 0;
};

/// Debounced tier selection: the emitted tier leaves `prev` only after
/// hysteresis_frames consecutive frames of the same raw tier.
QualityTier select_quality(double t_available, double t_threshold, QualityTier prev,
                           int hysteresis_frames, StreakState& streak);

struct FrameInput {
  std::int64_t frame_id = 0;
  std::vector<filter::PointObservation> points;
  std::vector<mask::DetectionRecord> detections;
  bool has_points = true;      // false: frame is skipped with an error record
  bool has_detections = true;  // false: empty mask plus a warning
  /// World-frame anchor per point (parallel to `points`); empty when pose
  /// refinement has nothing to work against.
  std::vector<Eigen::Vector3d> map_points;
  std::optional<Pose> init_pose;  // world-to-camera seed
};

struct FrameOutput {
  std::int64_t frame_id = 0;
  std::vector<std::int64_t> track_ids;
  filter::FrameResult filter;
  std::optional<Pose> refined_pose;
  bool keyframe = false;
  QualityTier tier = QualityTier::High;
  StageTiming timing;
  std::vector<std::string> warnings;
  bool skipped = false;
  std::string error;
};

struct PipelineResult {
  std::vector<FrameOutput> frames;
};

/// Runs masks -> filter -> pose refinement -> keyframe decision per frame.
/// Mask construction for upcoming frames overlaps the current frame's
/// refinement when cfg.threads > 1; a per-frame barrier keeps frame t's
/// filter result merged before its pose refinement. Semantic outputs are
/// identical for any thread count; timing fields are not.
PipelineResult run_pipeline(const std::vector<FrameInput>& inputs, const PipelineConfig& cfg);

/// Text of one outlier file: `track_id outlier staticness s_seg s_motion
/// s_ground s_edge` per point.
std::string outlier_file_text(const FrameOutput& frame);

/// CSV with header frame,t_transfer,t_compute,t_sync,t_slam,t_inference,
/// t_overlapped,tier.
std::string timing_csv(const PipelineResult& result);

}  // namespace pcr::runtime

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcr/geometry.hpp"

namespace pcr::eval {

enum class TrajectoryFormat { Kitti, Tum };

struct Trajectory {
  std::vector<Pose> poses;
  TrajectoryFormat format = TrajectoryFormat::Kitti;

  bool has_timestamps() const;
  std::size_t size() const { return poses.size(); }
};

struct ErrorStats {
  double max = 0.0;
  double median = 0.0;
  double min = 0.0;
  double rmse = 0.0;
};

/// Confusion counts with positive class = dynamic. Ratios with a zero
/// denominator stay absent rather than collapsing to 0.
struct ConfusionReport {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  static ConfusionReport from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                     std::int64_t tn);
};

/// Closed-form least-squares similarity (rigid when with_scale = false)
/// mapping est translations onto gt translations, reflection-safe.
/// Throws MismatchError on length mismatch and DegenerateError for
/// collinear or coincident point sets.
SimilarityTransform umeyama_align(const Trajectory& est, const Trajectory& gt, bool with_scale);

/// Per-index translational error, optionally after Umeyama alignment.
/// Association is by index for equal lengths, by nearest timestamp
/// (within 0.01 s) when both trajectories carry timestamps.
std::vector<double> ape(const Trajectory& est, const Trajectory& gt, bool align, bool with_scale);

/// Relative-motion error over an index gap: the translation norm of
/// (Q_gt)⁻¹·Q_est per index. Throws ParameterError for delta < 1 and
/// MismatchError when delta >= length.
std::vector<double> rpe(const Trajectory& est, const Trajectory& gt, int delta);

/// max/median/min/rmse; even-length medians average the middle pair.
ErrorStats stats(std::span<const double> errors);

ConfusionReport confusion(std::span<const std::uint8_t> pred_dynamic,
                          std::span<const std::uint8_t> gt_dynamic);

/// Percent change per field: 100*(baseline - ours)/baseline; negative
/// means degradation; absent when the baseline field is zero.
struct ImprovementReport {
  std::optional<double> max;
  std::optional<double> median;
  std::optional<double> min;
  std::optional<double> rmse;
};

ImprovementReport improvement_report(const ErrorStats& baseline, const ErrorStats& ours);

/// KITTI: 12 reals per line, row-major [R|t]. TUM: timestamp tx ty tz
/// qx qy qz qw; quaternions are normalized on read (error beyond 1e-3)
/// and rotations snapped to the nearest orthonormal matrix when within
/// 1e-3.
Trajectory parse_trajectory(const std::filesystem::path& path, TrajectoryFormat format);
void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);

void write_stats_csv(const std::filesystem::path& path, const std::string& metric,
                     const ErrorStats& stats);
ErrorStats read_stats_csv(const std::filesystem::path& path, std::string* metric = nullptr);
void write_plot_csv(const std::filesystem::path& path, std::span<const double> errors);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionReport& report);
void write_improvement_csv(const std::filesystem::path& path, const ErrorStats& baseline,
                           const ErrorStats& ours, const ImprovementReport& report);

/// One line per point: track_id outlier(0|1) staticness s_seg s_motion
/// s_ground s_edge.
struct OutlierRecord {
  std::int64_t track_id = 0;
  bool outlier = false;
  double staticness = 1.0;
  double s_seg = 0.0;
  double s_motion = 0.0;
  double s_ground = 0.0;
  double s_edge = 0.0;
};
std::vector<OutlierRecord> read_outlier_file(const std::filesystem::path& path);

/// One line per labeled observation: track_id frame_id gt_dynamic(0|1).
struct LabelRecord {
  std::int64_t track_id = 0;
  std::int64_t frame_id = 0;
  bool gt_dynamic = false;
};
std::vector<LabelRecord> read_label_file(const std::filesystem::path& path);

}  // namespace pcr::eval

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "pcr/geometry.hpp"
#include "pcr/grid.hpp"
#include "pcr/mask.hpp"

namespace pcr::filter {

/// One tracked keypoint in one frame. point3d is camera-frame and may be
/// absent for 2D-only points.
struct PointObservation {
  std::int64_t track_id = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  std::optional<Eigen::Vector3d> point3d;
  std::int64_t frame_id = 0;
};

/// Badness components are in [0,1], 1 = strongly non-useful. staticness is
/// 1 minus their weighted sum, clamped to [0,1].
struct ScoreBreakdown {
  double s_seg = 0.0;
  double s_motion = 0.0;
  double s_ground = 0.0;
  double s_edge = 0.0;
  double weighted_badness = 0.0;
  double staticness = 1.0;
  bool outlier = false;
};

struct FilterWeights {
  double w_seg = 0.5;
  double w_motion = 0.2;
  double w_ground = 0.2;
  double w_edge = 0.1;
  double theta_threshold = 0.5;
  double v_max = 4.0;              // px/frame
  double tau_ground = 0.05;        // m
  double edge_margin_inner = 10.0;  // m0, px
  double edge_margin_outer = 40.0;  // m1, px
  double cluster_radius = 15.0;     // px
  int cluster_min_k = 3;
  double cluster_margin = 0.15;
  int vote_window = 5;  // frames; also the temporal-motion window
  double vote_quota = 0.6;

  /// Throws ParameterError when the weights do not sum to 1 (1e-9), the
  /// edge margins are misordered, or the vote quota leaves (0,1].
  void validate() const;
};

/// Pixel history of one track, frames strictly increasing.
struct Track {
  std::int64_t track_id = 0;
  std::vector<std::pair<std::int64_t, Eigen::Vector2d>> observations;
  std::vector<std::uint8_t> evidence;  // per-observation dynamic evidence votes
};

/// Accumulates pixel history and vote evidence across frames.
class TrackStore {
 public:
  /// Appends the observation to its track. Frames must arrive in order.
  void observe(const PointObservation& p);
  void record_evidence(std::int64_t track_id, bool evidence);
  const Track* find(std::int64_t track_id) const;

 private:
  std::unordered_map<std::int64_t, Track> tracks_;
};

/// Bilinear interpolation with border clamping.
double bilinear_sample(const Grid<float>& field, double x, double y);

/// 1 at the border, linear ramp between the margins, 0 inside.
double edge_score(const Eigen::Vector2d& pixel, int width, int height, double m0, double m1);

/// Mean displacement magnitude over the most recent min(window, available)
/// displacements at frames <= current_frame; 0 when no displacement exists.
double temporal_motion(const Track& track, int window, std::int64_t current_frame);

/// Dynamic when votes within the last `window` entries reach
/// ceil(quota * min(window, history length)). Empty history is static.
bool temporal_vote(std::span<const std::uint8_t> evidence, int window, double quota);

/// clamp(alpha * camera_height, tau_min, tau_max).
double adaptive_ground_threshold(double camera_height, double alpha, double tau_min,
                                 double tau_max);

struct RansacResult {
  Plane plane;
  std::vector<int> inliers;
  int iterations = 0;
};

/// Seeded 3-point RANSAC over point_plane_distance <= tau, early exit at
/// 0.99 confidence, final refit by fit_plane_svd on the best inlier set
/// (inliers returned against the refit plane). Ties in inlier count keep
/// the earlier iteration. Throws InsufficientDataError below 3 points and
/// DegenerateError when every sampled triple is degenerate.
RansacResult ransac_ground_plane(std::span<const Eigen::Vector3d> points, int n_iter, double tau,
                                 std::uint64_t seed);

/// Sky membership: the mask says sky at the pixel, or the pixel sits on
/// the sky side of the horizon with zero dynamic confidence and no valid
/// depth.
bool sky_test(const Eigen::Vector2d& pixel, bool has_depth, const mask::SegMask& seg,
              const std::optional<Eigen::Vector3d>& horizon, int image_width, int image_height);

/// Per-point score against mask, track history, and ground plane. The
/// outlier field carries only the staticness-threshold decision; the
/// frame-level stages may still force it later.
ScoreBreakdown score_point(const PointObservation& p, const mask::SegMask& seg,
                           const Track* track, const Plane* ground_plane,
                           const FilterWeights& w, int image_width, int image_height);

/// Single-pass neighbor expansion: a surviving point joins the outlier set
/// when at least min_k original outliers sit within `radius` pixels and
/// its staticness is below theta + margin. Never removes an outlier.
std::vector<std::uint8_t> cluster_expand(std::span<const PointObservation> points,
                                         std::vector<std::uint8_t> outliers,
                                         std::span<const double> staticness, double radius,
                                         int min_k, double theta, double margin);

struct FrameResult {
  std::vector<ScoreBreakdown> scores;
  std::vector<std::uint8_t> outliers;
};

struct FrameContext {
  const mask::SegMask* seg = nullptr;
  const mask::ClassPolicy* policy = nullptr;
  std::optional<Plane> ground_plane;
  std::optional<Eigen::Vector3d> horizon;
  FilterWeights weights;
  int image_width = 0;
  int image_height = 0;
  int n_workers = 1;
};

/// Full per-frame pass: scoring, fast-class immediate rejection, temporal
/// vote, sky test, then cluster expansion over their union. Appends the
/// frame's evidence to the track store. Results are independent of point
/// order and worker count.
FrameResult filter_frame(std::span<const PointObservation> points, TrackStore& tracks,
                         const FrameContext& ctx);

struct BlockMatchResult {
  int dx = 0;
  int dy = 0;
  bool confident = true;
};

/// Integer displacement minimizing the sum of squared differences of a
/// (2*patch_radius+1)^2 patch within +-search_radius; ties prefer the
/// smaller displacement norm, then lexicographic (dx, dy). A zero-variance
/// reference patch reports (0,0) with confident = false.
BlockMatchResult block_match_displacement(const Grid<float>& prev, const Grid<float>& next,
                                          int center_x, int center_y, int patch_radius,
                                          int search_radius);

/// Whitespace-separated `track_id u v [X Y Z]` per line; the 3D part is
/// optional per point.
std::vector<PointObservation> read_points_file(const std::filesystem::path& path,
                                               std::int64_t frame_id);
void write_points_file(const std::filesystem::path& path,
                       std::span<const PointObservation> points);

}  // namespace pcr::filter

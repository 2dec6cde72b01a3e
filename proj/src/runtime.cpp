#include "pcr/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <unordered_map>

#include "pcr/rng.hpp"

namespace pcr::runtime {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct MaskBuild {
  mask::SegMask seg;
  std::vector<std::string> warnings;
  double elapsed = 0.0;
};

mask::SegMask downscale(const mask::SegMask& in, int factor) {
  if (factor <= 1) return in;
  const int w = std::max(1, in.width / factor);
  const int h = std::max(1, in.height / factor);
  mask::SegMask out = mask::SegMask::empty(w, h);
  for (int y = 0; y < in.height; ++y) {
    const int oy = std::min(y / factor, h - 1);
    for (int x = 0; x < in.width; ++x) {
      const int ox = std::min(x / factor, w - 1);
      const float c = in.dynamic_confidence.at(x, y);
      if (c > out.dynamic_confidence.at(ox, oy)) {
        out.dynamic_confidence.at(ox, oy) = c;
        out.class_map.at(ox, oy) = in.class_map.at(x, y);
      } else if (out.class_map.at(ox, oy) == 0 && in.class_map.at(x, y) != 0 &&
                 out.dynamic_confidence.at(ox, oy) == 0.0f) {
        out.class_map.at(ox, oy) = in.class_map.at(x, y);
      }
      if (in.sky.at(x, y)) out.sky.at(ox, oy) = 1;
    }
  }
  return out;
}

MaskBuild build_mask(const FrameInput& frame, const PipelineConfig& cfg,
                     const mask::ClassPolicy& policy, const TierParams& tier) {
  const auto start = Clock::now();
  MaskBuild out;
  if (!frame.has_detections) {
    out.seg = mask::SegMask::empty(cfg.image_width, cfg.image_height);
    out.warnings.push_back("frame " + std::to_string(frame.frame_id) +
                           ": no detections, using an empty mask");
  } else {
    const auto kept = mask::nms(mask::filter_by_confidence(frame.detections, cfg.theta_conf),
                                cfg.theta_nms, cfg.nms_class_aware);
    mask::SegMask seg =
        mask::combine_masks(kept, policy, cfg.image_width, cfg.image_height, &out.warnings);
    const int factor = static_cast<int>(std::lround(1.0 / tier.mask_scale));
    seg = downscale(seg, factor);
    out.seg = mask::refine_mask(seg, cfg.open_radius, cfg.close_radius);
  }
  out.elapsed = seconds_since(start);
  return out;
}

}  // namespace

double total_time(const StageTiming& t) {
  if (t.t_transfer < 0 || t.t_compute < 0 || t.t_sync < 0) {
    throw ParameterError("stage timings must be >= 0");
  }
  return t.t_transfer + t.t_compute + t.t_sync;
}

double overlapped_time(double t_slam, double t_inference, double t_sync) {
  if (t_slam < 0 || t_inference < 0 || t_sync < 0) {
    throw ParameterError("stage timings must be >= 0");
  }
  return std::max(t_slam, t_inference) + t_sync;
}

const char* tier_name(QualityTier tier) {
  switch (tier) {
    case QualityTier::High: return "high";
    case QualityTier::Medium: return "medium";
    case QualityTier::Low: return "low";
  }
  return "high";
}

QualityTier tier_from_name(const std::string& name) {
  if (name == "high") return QualityTier::High;
  if (name == "medium") return QualityTier::Medium;
  if (name == "low") return QualityTier::Low;
  throw ParameterError("unknown quality tier '" + name + "'");
}

TierParams tier_params(QualityTier tier) {
  switch (tier) {
    case QualityTier::High: return {500, 1.0, 5};
    case QualityTier::Medium: return {200, 0.5, 3};
    case QualityTier::Low: return {100, 0.25, 2};
  }
  return {500, 1.0, 5};
}

QualityTier raw_quality(double t_available, double t_threshold) {
  if (!(t_threshold > 0.0)) throw ParameterError("t_threshold must be positive");
  if (t_available > t_threshold) return QualityTier::High;
  if (t_available > 0.5 * t_threshold) return QualityTier::Medium;
  return QualityTier::Low;
}

QualityTier select_quality(double t_available, double t_threshold, QualityTier prev,
                           int hysteresis_frames, StreakState& streak) {
  if (hysteresis_frames < 1) throw ParameterError("hysteresis_frames must be >= 1");
  const QualityTier raw = raw_quality(t_available, t_threshold);
  if (streak.length == 0 || raw != streak.tier) {
    streak.tier = raw;
    streak.length = 1;
  } else {
    ++streak.length;
  }
  if (raw != prev && streak.length >= hysteresis_frames) return raw;
  return prev;
}

PipelineResult run_pipeline(const std::vector<FrameInput>& inputs, const PipelineConfig& cfg) {
  PipelineConfig base = cfg;
  base.weights.validate();
  const CameraIntrinsics intrinsics = cfg.intrinsics();
  intrinsics.validate();
  const mask::ClassPolicy policy = mask::ClassPolicy::defaults();

  PipelineResult result;
  result.frames.resize(inputs.size());

  QualityTier tier = tier_from_name(cfg.tier);
  StreakState streak;
  double prev_critical_path = 0.0;

  // Mask construction overlaps refinement of earlier frames. With a fixed
  // tier the masks depend only on their own frame, so look-ahead workers
  // cannot change the outputs. The adaptive controller feeds measured
  // times back into the tier, so it forces inline builds.
  const bool overlapped = cfg.threads > 1 && !cfg.adaptive;
  const int lookahead = overlapped ? cfg.threads : 0;
  std::vector<std::future<MaskBuild>> mask_futures(inputs.size());
  const auto launch = [&](std::size_t i) {
    if (i >= inputs.size() || !inputs[i].has_points) return;
    const FrameInput* frame = &inputs[i];
    const TierParams tp = tier_params(tier);
    mask_futures[i] = std::async(std::launch::async, [frame, &base, &policy, tp] {
      return build_mask(*frame, base, policy, tp);
    });
  };
  for (int i = 0; i < lookahead && i < static_cast<int>(inputs.size()); ++i) launch(i);

  filter::TrackStore tracks;
  std::optional<Pose> last_pose;
  std::optional<double> camera_height;
  std::optional<std::int64_t> last_keyframe_frame;
  std::unordered_map<std::int64_t, Eigen::Vector2d> keyframe_pixels;

  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    const FrameInput& frame = inputs[idx];
    FrameOutput& out = result.frames[idx];
    out.frame_id = frame.frame_id;

    if (!frame.has_points) {
      out.skipped = true;
      out.error = "frame " + std::to_string(frame.frame_id) + ": missing points";
      out.tier = tier;
      launch(idx + lookahead);
      continue;
    }

    if (cfg.adaptive) {
      const double t_available = cfg.frame_period - prev_critical_path;
      tier = select_quality(t_available, cfg.t_threshold, tier, cfg.hysteresis_frames, streak);
    }
    out.tier = tier;
    const TierParams tp = tier_params(tier);

    const auto transfer_start = Clock::now();
    for (const auto& p : frame.points) tracks.observe(p);
    out.track_ids.reserve(frame.points.size());
    for (const auto& p : frame.points) out.track_ids.push_back(p.track_id);
    out.timing.t_transfer = seconds_since(transfer_start);

    // Barrier: the segmentation mask must be merged before this frame's
    // filtering and refinement.
    MaskBuild mask_build;
    const auto sync_start = Clock::now();
    if (mask_futures[idx].valid()) {
      mask_build = mask_futures[idx].get();
      out.timing.t_sync = seconds_since(sync_start);
    } else {
      mask_build = build_mask(frame, base, policy, tp);
      out.timing.t_sync = 0.0;
    }
    out.timing.t_inference = mask_build.elapsed;
    out.warnings = std::move(mask_build.warnings);
    launch(idx + lookahead);

    const auto slam_start = Clock::now();

    filter::FrameContext ctx;
    ctx.seg = &mask_build.seg;
    ctx.policy = &policy;
    ctx.weights = base.weights;
    ctx.weights.vote_window = tp.vote_window;
    ctx.image_width = cfg.image_width;
    ctx.image_height = cfg.image_height;
    ctx.n_workers = 1;

    if (cfg.filtering_enabled) {
      std::vector<Eigen::Vector3d> cloud;
      cloud.reserve(frame.points.size());
      for (const auto& p : frame.points) {
        if (p.point3d) cloud.push_back(*p.point3d);
      }
      if (cloud.size() >= 3) {
        const double tau = camera_height
                               ? filter::adaptive_ground_threshold(
                                     *camera_height, cfg.ground_alpha, cfg.ground_tau_min,
                                     cfg.ground_tau_max)
                               : cfg.ransac_tau;
        const std::uint64_t seed =
            splitmix64(cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(frame.frame_id));
        try {
          const auto ransac = filter::ransac_ground_plane(cloud, tp.ransac_iters, tau, seed);
          // Only accept planes roughly facing the camera's down axis.
          if (ransac.plane.normal().y() >= std::cos(M_PI / 4.0)) {
            ctx.ground_plane = ransac.plane;
            ctx.horizon = horizon_line(intrinsics, ransac.plane.normal());
            camera_height = point_plane_distance(Eigen::Vector3d::Zero(), ransac.plane);
          }
        } catch (const Error&) {
          // Degenerate cloud: proceed without a ground plane.
        }
      }
      out.filter = filter::filter_frame(frame.points, tracks, ctx);
    } else {
      for (const auto& p : frame.points) tracks.record_evidence(p.track_id, false);
      out.filter.scores.resize(frame.points.size());
      out.filter.outliers.assign(frame.points.size(), 0);
    }

    if (frame.map_points.size() == frame.points.size() && !frame.points.empty()) {
      const std::optional<Pose> init = frame.init_pose ? frame.init_pose : last_pose;
      if (init) {
        std::vector<pose::Correspondence> corr;
        corr.reserve(frame.points.size());
        for (std::size_t i = 0; i < frame.points.size(); ++i) {
          pose::Correspondence c;
          c.map_point = frame.map_points[i];
          c.observation = frame.points[i].pixel;
          c.info_weight =
              cfg.filtering_enabled ? std::max(out.filter.scores[i].staticness, 0.05) : 1.0;
          c.filtered = out.filter.outliers[i] != 0;
          corr.push_back(c);
        }
        try {
          const auto refined = pose::refine_pose(*init, corr, intrinsics,
                                                 {cfg.huber_delta}, cfg.refine_max_iters);
          out.refined_pose = refined.pose;
          if (refined.status == pose::RefineStatus::NoConvergence) {
            out.warnings.push_back("frame " + std::to_string(frame.frame_id) +
                                   ": refinement stalled, keeping best pose");
          }
        } catch (const Error& e) {
          out.warnings.push_back("frame " + std::to_string(frame.frame_id) +
                                 ": refinement failed (" + e.what() + ")");
          out.refined_pose = *init;
        }
        last_pose = out.refined_pose;
      }
    }

    const int n_filtered = static_cast<int>(
        std::count(out.filter.outliers.begin(), out.filter.outliers.end(), 1));
    const int n_matches = static_cast<int>(frame.points.size()) - n_filtered;
    const double dt = last_keyframe_frame
                          ? (frame.frame_id - *last_keyframe_frame) * cfg.frame_period
                          : 1e9;
    double q_motion = 0.0;
    if (last_keyframe_frame) {
      std::vector<double> displacements;
      for (const auto& p : frame.points) {
        const auto it = keyframe_pixels.find(p.track_id);
        if (it != keyframe_pixels.end()) displacements.push_back((p.pixel - it->second).norm());
      }
      if (!displacements.empty()) {
        std::sort(displacements.begin(), displacements.end());
        const std::size_t n = displacements.size();
        q_motion = n % 2 == 1 ? displacements[n / 2]
                              : 0.5 * (displacements[n / 2 - 1] + displacements[n / 2]);
      }
    }
    out.keyframe = pose::keyframe_decision(n_matches, n_filtered, dt, q_motion, cfg.keyframe);
    if (out.keyframe) {
      last_keyframe_frame = frame.frame_id;
      keyframe_pixels.clear();
      for (const auto& p : frame.points) keyframe_pixels[p.track_id] = p.pixel;
    }

    out.timing.t_slam = seconds_since(slam_start);
    out.timing.t_compute = out.timing.t_inference + out.timing.t_slam;
    prev_critical_path =
        overlapped_time(out.timing.t_slam, out.timing.t_inference, out.timing.t_sync);
  }

  return result;
}

std::string outlier_file_text(const FrameOutput& frame) {
  std::string out;
  char buf[256];
  for (std::size_t i = 0; i < frame.track_ids.size(); ++i) {
    const filter::ScoreBreakdown& s = frame.filter.scores[i];
    std::snprintf(buf, sizeof(buf), "%lld %d %.9f %.9f %.9f %.9f %.9f\n",
                  static_cast<long long>(frame.track_ids[i]),
                  frame.filter.outliers[i] ? 1 : 0, s.staticness, s.s_seg, s.s_motion, s.s_ground,
                  s.s_edge);
    out += buf;
  }
  return out;
}

std::string timing_csv(const PipelineResult& result) {
  std::string out = "frame,t_transfer,t_compute,t_sync,t_slam,t_inference,t_overlapped,tier\n";
  char buf[320];
  for (const auto& f : result.frames) {
    const double overlapped =
        overlapped_time(f.timing.t_slam, f.timing.t_inference, f.timing.t_sync);
    std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%s\n",
                  static_cast<long long>(f.frame_id), f.timing.t_transfer, f.timing.t_compute,
                  f.timing.t_sync, f.timing.t_slam, f.timing.t_inference, overlapped,
                  tier_name(f.tier));
    out += buf;
  }
  return out;
}

}  // namespace pcr::runtime

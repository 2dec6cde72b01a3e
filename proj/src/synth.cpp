#include "pcr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "pcr/rng.hpp"

namespace pcr::synth {

namespace {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Box = std::pair<Vec3, Vec3>;

/// Camera axes at heading 0: +x world is forward, y points down to the
/// ground, so the image v axis grows downward as usual.
Eigen::Matrix3d base_camera_rotation() {
  Eigen::Matrix3d r;
  r.col(0) = Vec3(0, -1, 0);  // camera x
  r.col(1) = Vec3(0, 0, -1);  // camera y
  r.col(2) = Vec3(1, 0, 0);   // camera z (forward)
  return r;
}

Eigen::Matrix3d yaw_rotation(double angle) {
  Eigen::Matrix3d r;
  r << std::cos(angle), -std::sin(angle), 0, std::sin(angle), std::cos(angle), 0, 0, 0, 1;
  return r;
}

Pose camera_pose(const SceneConfig& cfg, int frame) {
  const double s = cfg.camera_speed * cfg.frame_period * frame;
  Pose pose;
  pose.timestamp = cfg.frame_period * frame;
  if (cfg.path == CameraPathKind::Straight) {
    pose.rotation = base_camera_rotation();
    pose.translation = Vec3(s, 0.0, cfg.camera_height);
  } else {
    const double phi = s / cfg.arc_radius;
    pose.rotation = yaw_rotation(phi) * base_camera_rotation();
    pose.translation = Vec3(cfg.arc_radius * std::sin(phi),
                            cfg.arc_radius * (1.0 - std::cos(phi)), cfg.camera_height);
  }
  return pose;
}

bool ray_hits_box(const Vec3& origin, const Vec3& dir, const Box& box, double t_min) {
  double lo = t_min;
  double hi = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < box.first[a] || origin[a] > box.second[a]) return false;
      continue;
    }
    double t0 = (box.first[a] - origin[a]) / dir[a];
    double t1 = (box.second[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    if (lo > hi) return false;
  }
  return true;
}

Vec3 pixel_ray_world(const CameraIntrinsics& k, const Pose& cam_to_world, const Vec2& pixel) {
  const Vec3 dir_cam((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  return cam_to_world.rotation * dir_cam;
}

Box scaled_box(const Box& box, double scale) {
  const Vec3 center = 0.5 * (box.first + box.second);
  const Vec3 half = 0.5 * (box.second - box.first) * scale;
  return {center - half, center + half};
}

struct WorldPoint {
  Vec3 position;       // static: world; dynamic: offset from body center
  int body = -1;       // -1 for static points
  std::int64_t track_id = 0;
};

/// Rasterizes the silhouettes of the given boxes into a mask with the
/// given class ids and confidence; rays are cast through pixel centers.
void raster_boxes(mask::SegMask& seg, const CameraIntrinsics& k, const Pose& cam_to_world,
                  const std::vector<Box>& boxes, const std::vector<int>& class_ids,
                  float confidence) {
  const Pose world_to_cam = cam_to_world.inverse();
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    // Restrict the scan to the projected bounding rectangle when the box
    // is fully in front of the camera.
    int x0 = 0, y0 = 0, x1 = seg.width, y1 = seg.height;
    bool in_front = true;
    double px0 = 1e18, py0 = 1e18, px1 = -1e18, py1 = -1e18;
    for (int corner = 0; corner < 8 && in_front; ++corner) {
      const Vec3 w((corner & 1) ? boxes[b].second.x() : boxes[b].first.x(),
                   (corner & 2) ? boxes[b].second.y() : boxes[b].first.y(),
                   (corner & 4) ? boxes[b].second.z() : boxes[b].first.z());
      const Vec3 c = world_to_cam.apply(w);
      if (c.z() <= 0.2) {
        in_front = false;
        break;
      }
      const double u = k.fx * c.x() / c.z() + k.cx;
      const double v = k.fy * c.y() / c.z() + k.cy;
      px0 = std::min(px0, u);
      py0 = std::min(py0, v);
      px1 = std::max(px1, u);
      py1 = std::max(py1, v);
    }
    if (in_front) {
      x0 = std::clamp(static_cast<int>(std::floor(px0)), 0, seg.width);
      y0 = std::clamp(static_cast<int>(std::floor(py0)), 0, seg.height);
      x1 = std::clamp(static_cast<int>(std::ceil(px1)) + 1, 0, seg.width);
      y1 = std::clamp(static_cast<int>(std::ceil(py1)) + 1, 0, seg.height);
      if (px1 < px0) continue;  // behind-only box
    }
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const Vec3 dir = pixel_ray_world(k, cam_to_world, Vec2(x, y));
        if (ray_hits_box(cam_to_world.translation, dir, boxes[b], 0.2)) {
          if (confidence > seg.dynamic_confidence.at(x, y)) {
            seg.dynamic_confidence.at(x, y) = confidence;
            seg.class_map.at(x, y) = class_ids[b];
          }
        }
      }
    }
  }
}

std::vector<int> full_frame_rle(const Grid<std::uint8_t>& coverage) {
  std::vector<int> rle;
  int run = 0;
  bool fg = false;
  for (const std::uint8_t v : coverage.data()) {
    const bool cur = v != 0;
    if (cur == fg) {
      ++run;
    } else {
      rle.push_back(run);
      fg = cur;
      run = 1;
    }
  }
  rle.push_back(run);
  return rle;
}

}  // namespace

void SceneConfig::set(const std::string& key, const std::string& value) {
  const auto d = [&]() -> double {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw ParameterError("scene key '" + key + "': expected a number, got '" + value + "'");
    }
  };
  const auto i = [&]() -> int { return static_cast<int>(d()); };

  if (key == "seed") seed = static_cast<std::uint64_t>(d());
  else if (key == "n_static") n_static = i();
  else if (key == "n_dynamic") n_dynamic = i();
  else if (key == "ground_extent") ground_extent = d();
  else if (key == "ground_width") ground_width = d();
  else if (key == "ground_start") ground_start = d();
  else if (key == "wall_offset") wall_offset = d();
  else if (key == "wall_height") wall_height = d();
  else if (key == "wall_start") wall_start = d();
  else if (key == "body_count") body_count = i();
  else if (key == "body_size_x") body_size.x() = d();
  else if (key == "body_size_y") body_size.y() = d();
  else if (key == "body_size_z") body_size.z() = d();
  else if (key == "body_speed") body_speed = d();
  else if (key == "camera_path") {
    if (value == "straight") path = CameraPathKind::Straight;
    else if (value == "arc") path = CameraPathKind::Arc;
    else throw ParameterError("scene key 'camera_path': expected straight|arc");
  }
  else if (key == "camera_speed") camera_speed = d();
  else if (key == "camera_height") camera_height = d();
  else if (key == "arc_radius") arc_radius = d();
  else if (key == "frames") frames = i();
  else if (key == "frame_period") frame_period = d();
  else if (key == "pixel_noise_sigma") pixel_noise_sigma = d();
  else if (key == "precision_target") precision_target = d();
  else if (key == "recall_target") recall_target = d();
  else if (key == "fx") intrinsics.fx = d();
  else if (key == "fy") intrinsics.fy = d();
  else if (key == "cx") intrinsics.cx = d();
  else if (key == "cy") intrinsics.cy = d();
  else if (key == "image_width") intrinsics.width = i();
  else if (key == "image_height") intrinsics.height = i();
  else throw ParameterError("unknown scene key '" + key + "'");
}

void SceneConfig::load_file(const std::filesystem::path& path_in) {
  std::ifstream in(path_in);
  if (!in) throw IoError("cannot open scene config: " + path_in.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path_in.string() + ":" + std::to_string(line_no) +
                       ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

Scene generate_scene(const SceneConfig& config) {
  if (config.frames < 0 || config.n_static < 0 || config.n_dynamic < 0 ||
      config.body_count < 0) {
    throw ParameterError("scene counts must be >= 0");
  }
  if (!(config.precision_target > 0.0 && config.precision_target <= 1.0) ||
      !(config.recall_target > 0.0 && config.recall_target <= 1.0)) {
    throw ParameterError("corruption targets must lie in (0,1]");
  }
  config.intrinsics.validate();

  Scene scene;
  scene.config = config;

  // --- world construction -------------------------------------------------
  Rng rng_static(splitmix64(config.seed ^ 0x53544154ull));
  std::vector<WorldPoint> statics;
  statics.reserve(config.n_static);
  const int n_ground = static_cast<int>(std::lround(config.n_static * 0.55));
  for (int i = 0; i < config.n_static; ++i) {
    WorldPoint p;
    p.track_id = i;
    if (i < n_ground) {
      p.position = Vec3(config.ground_start + rng_static.uniform() * config.ground_extent,
                        (rng_static.uniform() - 0.5) * config.ground_width, 0.0);
    } else {
      const double side = rng_static.uniform() < 0.5 ? -1.0 : 1.0;
      p.position = Vec3(config.wall_start + rng_static.uniform() * config.ground_extent,
                        side * config.wall_offset,
                        0.2 + rng_static.uniform() * config.wall_height);
    }
    statics.push_back(p);
  }

  std::vector<DynamicBody> bodies = config.bodies;
  Rng rng_bodies(splitmix64(config.seed ^ 0x424f4459ull));
  if (bodies.empty() && config.n_dynamic > 0) {
    for (int b = 0; b < config.body_count; ++b) {
      DynamicBody body;
      const double lane = (b % 2 == 0) ? -4.0 : 4.0;
      body.size = config.body_size * rng_bodies.uniform(0.85, 1.25);
      body.center0 = Vec3(12.0 + 9.0 * b + rng_bodies.uniform(-1.5, 1.5),
                          lane + rng_bodies.uniform(-0.5, 0.5), body.size.z() * 0.5);
      const double dir = lane < 0 ? 1.0 : -1.0;  // cross toward the corridor
      body.velocity = Vec3(0.0, dir * config.body_speed * rng_bodies.uniform(0.8, 1.2), 0.0);
      bodies.push_back(body);
    }
  }
  if (config.n_dynamic > 0) {
    if (bodies.empty()) throw ParameterError("dynamic points require at least one body");
    for (const auto& b : bodies) {
      if (b.velocity.norm() <= 0.0) throw ParameterError("dynamic bodies must move");
      if (b.size.minCoeff() <= 0.0) throw ParameterError("body sizes must be positive");
    }
  }

  std::vector<int> body_class(bodies.size(), 2);
  for (std::size_t b = 0; b < bodies.size(); ++b) {
    body_class[b] = config.dynamic_class_ids[b % 3];
  }

  Rng rng_dyn(splitmix64(config.seed ^ 0x44594e00ull));
  std::vector<WorldPoint> dynamics;
  dynamics.reserve(config.n_dynamic);
  for (int i = 0; i < config.n_dynamic; ++i) {
    WorldPoint p;
    p.track_id = config.n_static + i;
    p.body = bodies.empty() ? -1 : static_cast<int>(i % bodies.size());
    if (p.body >= 0) {
      const Vec3 half = 0.5 * bodies[p.body].size;
      // Uniform on the box surface, faces weighted by area.
      const double ax = bodies[p.body].size.y() * bodies[p.body].size.z();
      const double ay = bodies[p.body].size.x() * bodies[p.body].size.z();
      const double az = bodies[p.body].size.x() * bodies[p.body].size.y();
      const double pick = rng_dyn.uniform() * (ax + ay + az);
      const double sign = rng_dyn.uniform() < 0.5 ? -1.0 : 1.0;
      const double u = rng_dyn.uniform() * 2.0 - 1.0;
      const double v = rng_dyn.uniform() * 2.0 - 1.0;
      if (pick < ax) p.position = Vec3(sign * half.x(), u * half.y(), v * half.z());
      else if (pick < ax + ay) p.position = Vec3(u * half.x(), sign * half.y(), v * half.z());
      else p.position = Vec3(u * half.x(), v * half.y(), sign * half.z());
    }
    dynamics.push_back(p);
  }

  // --- frames -------------------------------------------------------------
  const CameraIntrinsics& k = config.intrinsics;
  for (int f = 0; f < config.frames; ++f) {
    SceneFrame frame;
    frame.frame_id = f;
    frame.cam_to_world = camera_pose(config, f);
    const Pose world_to_cam = frame.cam_to_world.inverse();
    const double t = f * config.frame_period;

    for (std::size_t b = 0; b < bodies.size(); ++b) {
      const Vec3 center = bodies[b].center0 + bodies[b].velocity * t;
      frame.body_boxes.emplace_back(center - 0.5 * bodies[b].size,
                                    center + 0.5 * bodies[b].size);
    }

    Rng rng_noise(splitmix64(config.seed ^ (0x4e4f4953ull + 0x9e3779b9ull * (f + 1))));
    const auto emit = [&](const WorldPoint& wp) {
      const Vec3 world = wp.body < 0
                             ? wp.position
                             : bodies[wp.body].center0 + bodies[wp.body].velocity * t + wp.position;
      const Vec3 cam = world_to_cam.apply(world);
      const double nx = rng_noise.normal();  // drawn unconditionally so the
      const double ny = rng_noise.normal();  // stream is stable under culling
      if (cam.z() <= 0.2) return;
      const Vec2 true_pixel(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy);
      if (true_pixel.x() < 0 || true_pixel.x() >= k.width || true_pixel.y() < 0 ||
          true_pixel.y() >= k.height) {
        return;
      }
      const Vec2 noisy = true_pixel + config.pixel_noise_sigma * Vec2(nx, ny);
      if (noisy.x() < 0 || noisy.x() >= k.width || noisy.y() < 0 || noisy.y() >= k.height) {
        return;
      }
      if (wp.body < 0) {
        // Keep static points off the dynamic silhouettes so the labels
        // and the uncorrupted mask agree exactly.
        const Vec3 dir = frame.cam_to_world.rotation *
                         Vec3((true_pixel.x() - k.cx) / k.fx, (true_pixel.y() - k.cy) / k.fy, 1.0);
        for (const auto& box : frame.body_boxes) {
          if (ray_hits_box(frame.cam_to_world.translation, dir, box, 0.2)) return;
        }
      }
      SynthPoint sp;
      sp.obs.track_id = wp.track_id;
      sp.obs.pixel = noisy;
      sp.obs.point3d = cam;
      sp.obs.frame_id = f;
      sp.world_point = world;
      sp.true_pixel = true_pixel;
      sp.gt_dynamic = wp.body >= 0;
      frame.points.push_back(std::move(sp));
    };
    for (const auto& wp : statics) emit(wp);
    for (const auto& wp : dynamics) emit(wp);

    if (frame.points.empty() && (config.n_static + config.n_dynamic) > 0) {
      throw GenerationError("frame " + std::to_string(f) +
                            " has no visible points; widen the field of view or enlarge the "
                            "scene");
    }

    frame.gt_mask = mask::SegMask::empty(k.width, k.height);
    std::vector<Box> boxes;
    for (const auto& bb : frame.body_boxes) boxes.push_back(bb);
    raster_boxes(frame.gt_mask, k, frame.cam_to_world, boxes, body_class, 1.0f);

    scene.gt_trajectory.poses.push_back(frame.cam_to_world);
    scene.frames.push_back(std::move(frame));
  }
  scene.gt_trajectory.format = eval::TrajectoryFormat::Kitti;

  // --- detector corruption --------------------------------------------------
  const bool corrupt = config.precision_target < 1.0 || config.recall_target < 1.0;
  std::int64_t n_dynamic_obs = 0;
  for (const auto& fr : scene.frames) {
    for (const auto& p : fr.points) n_dynamic_obs += p.gt_dynamic ? 1 : 0;
  }

  double shrink = 1.0;
  if (corrupt && n_dynamic_obs > 0 && !bodies.empty()) {
    const auto recall_at = [&](double s) {
      std::int64_t hit = 0;
      for (const auto& fr : scene.frames) {
        for (const auto& p : fr.points) {
          if (!p.gt_dynamic) continue;
          const Vec3 dir = pixel_ray_world(k, fr.cam_to_world, p.obs.pixel);
          for (const auto& box : fr.body_boxes) {
            if (ray_hits_box(fr.cam_to_world.translation, dir, scaled_box(box, s), 0.2)) {
              ++hit;
              break;
            }
          }
        }
      }
      return static_cast<double>(hit) / static_cast<double>(n_dynamic_obs);
    };
    if (recall_at(1.0) > config.recall_target) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 45; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (recall_at(mid) >= config.recall_target) hi = mid;
        else lo = mid;
      }
      shrink = hi;
    }
  }

  // Spurious blob detections seeded at static observations pull the
  // precision down to its target.
  struct BlobCandidate {
    int frame = 0;
    int cx = 0;
    int cy = 0;
  };
  std::vector<BlobCandidate> chosen_blobs;
  if (corrupt && n_dynamic_obs > 0) {
    // Count true positives under the shrunken silhouettes.
    std::int64_t tp = 0;
    for (const auto& fr : scene.frames) {
      for (const auto& p : fr.points) {
        if (!p.gt_dynamic) continue;
        const Vec3 dir = pixel_ray_world(k, fr.cam_to_world, p.obs.pixel);
        for (const auto& box : fr.body_boxes) {
          if (ray_hits_box(fr.cam_to_world.translation, dir, scaled_box(box, shrink), 0.2)) {
            ++tp;
            break;
          }
        }
      }
    }
    const double needed_fp =
        static_cast<double>(tp) * (1.0 - config.precision_target) / config.precision_target;

    std::vector<BlobCandidate> candidates;
    std::vector<std::vector<Vec2>> static_pixels(scene.frames.size());
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
      for (const auto& p : scene.frames[f].points) {
        if (p.gt_dynamic) continue;
        static_pixels[f].push_back(p.obs.pixel);
        candidates.push_back({static_cast<int>(f),
                              static_cast<int>(std::lround(p.obs.pixel.x())),
                              static_cast<int>(std::lround(p.obs.pixel.y()))});
      }
    }
    Rng rng_shuffle(splitmix64(config.seed ^ 0x424c4f42ull));
    for (std::size_t i = candidates.size(); i > 1; --i) {
      std::swap(candidates[i - 1], candidates[rng_shuffle.index(i)]);
    }

    double fp = 0.0;
    for (const auto& cand : candidates) {
      if (fp >= needed_fp) break;
      // Blobs of the same frame must stay disjoint so per-class NMS keeps
      // them all.
      bool clash = false;
      for (const auto& b : chosen_blobs) {
        if (b.frame == cand.frame && std::abs(b.cx - cand.cx) < 6 &&
            std::abs(b.cy - cand.cy) < 6) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      int covered = 0;
      for (const auto& px : static_pixels[cand.frame]) {
        const int rx = static_cast<int>(std::lround(px.x()));
        const int ry = static_cast<int>(std::lround(px.y()));
        if (rx >= cand.cx - 2 && rx <= cand.cx + 2 && ry >= cand.cy - 2 && ry <= cand.cy + 2) {
          ++covered;
        }
      }
      chosen_blobs.push_back(cand);
      fp += covered;
    }
  }

  // --- corrupted detections and masks ---------------------------------------
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    SceneFrame& frame = scene.frames[f];
    for (std::size_t b = 0; b < frame.body_boxes.size(); ++b) {
      mask::SegMask raster = mask::SegMask::empty(k.width, k.height);
      raster_boxes(raster, k, frame.cam_to_world, {scaled_box(frame.body_boxes[b], shrink)},
                   {body_class[b]}, 1.0f);
      int x0 = k.width, y0 = k.height, x1 = -1, y1 = -1;
      Grid<std::uint8_t> coverage(k.width, k.height, 0);
      for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
          if (raster.dynamic_confidence.at(x, y) > 0.0f) {
            coverage.at(x, y) = 1;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
          }
        }
      }
      if (x1 < x0) continue;  // box not visible this frame
      mask::DetectionRecord det;
      det.frame_id = frame.frame_id;
      det.class_id = body_class[b];
      det.class_name = "body";
      det.confidence = 0.9;
      det.bbox = {static_cast<double>(x0), static_cast<double>(y0),
                  static_cast<double>(x1 - x0 + 1), static_cast<double>(y1 - y0 + 1)};
      det.rle = full_frame_rle(coverage);
      frame.detections.push_back(std::move(det));
    }
    for (const auto& blob : chosen_blobs) {
      if (blob.frame != static_cast<int>(f)) continue;
      mask::DetectionRecord det;
      det.frame_id = frame.frame_id;
      det.class_id = config.dynamic_class_ids[static_cast<std::size_t>(blob.cx + blob.cy) % 3];
      det.class_name = "spurious";
      det.confidence = 0.9;
      det.bbox = {static_cast<double>(blob.cx - 2), static_cast<double>(blob.cy - 2), 5.0, 5.0};
      frame.detections.push_back(std::move(det));
    }
    frame.corrupted_mask = mask::combine_masks(frame.detections, mask::ClassPolicy::defaults(),
                                               k.width, k.height);
  }

  const MaskRates rates = measure_mask_rates(scene, true);
  scene.measured_precision = rates.precision;
  scene.measured_recall = rates.recall;
  return scene;
}

bool gt_silhouette_contains(const Scene& scene, const SceneFrame& frame, const Vec2& pixel) {
  const Vec3 dir = pixel_ray_world(scene.config.intrinsics, frame.cam_to_world, pixel);
  for (const auto& box : frame.body_boxes) {
    if (ray_hits_box(frame.cam_to_world.translation, dir, box, 0.2)) return true;
  }
  return false;
}

MaskRates measure_mask_rates(const Scene& scene, bool corrupted) {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& frame : scene.frames) {
    const mask::SegMask& seg = corrupted ? frame.corrupted_mask : frame.gt_mask;
    for (const auto& p : frame.points) {
      const int x = std::clamp(static_cast<int>(std::lround(p.obs.pixel.x())), 0,
                               std::max(0, seg.width - 1));
      const int y = std::clamp(static_cast<int>(std::lround(p.obs.pixel.y())), 0,
                               std::max(0, seg.height - 1));
      const bool pred = seg.width > 0 && seg.dynamic_confidence.at(x, y) >= 0.5f;
      if (pred && p.gt_dynamic) ++tp;
      else if (pred && !p.gt_dynamic) ++fp;
      else if (!pred && p.gt_dynamic) ++fn;
      else ++tn;
    }
  }
  MaskRates r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return r;
}

void export_scene(const Scene& scene, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory / "points", ec);
  fs::create_directories(directory / "masks", ec);
  fs::create_directories(directory / "gt_masks", ec);
  if (ec) throw IoError("cannot create scene directory: " + directory.string());

  char name[64];
  char line[256];
  std::ofstream labels(directory / "labels.txt");
  if (!labels) throw IoError("cannot write labels: " + (directory / "labels.txt").string());

  std::vector<mask::DetectionRecord> all_detections;
  for (const auto& frame : scene.frames) {
    std::snprintf(name, sizeof(name), "%06lld.txt", static_cast<long long>(frame.frame_id));
    std::ofstream points(directory / "points" / name);
    if (!points) throw IoError("cannot write points file in " + directory.string());
    for (const auto& p : frame.points) {
      std::snprintf(line, sizeof(line), "%lld %.9f %.9f %.9f %.9f %.9f\n",
                    static_cast<long long>(p.obs.track_id), p.obs.pixel.x(), p.obs.pixel.y(),
                    p.obs.point3d->x(), p.obs.point3d->y(), p.obs.point3d->z());
      points << line;
      std::snprintf(line, sizeof(line), "%lld %lld %d\n",
                    static_cast<long long>(p.obs.track_id),
                    static_cast<long long>(frame.frame_id), p.gt_dynamic ? 1 : 0);
      labels << line;
    }

    std::snprintf(name, sizeof(name), "%06lld.pgm", static_cast<long long>(frame.frame_id));
    mask::write_pgm(directory / "masks" / name, mask::support_image(frame.corrupted_mask));
    mask::write_pgm(directory / "gt_masks" / name, mask::support_image(frame.gt_mask));
    std::snprintf(name, sizeof(name), "%06lld_conf.pgm", static_cast<long long>(frame.frame_id));
    mask::write_pgm(directory / "masks" / name, mask::confidence_image(frame.corrupted_mask));

    for (const auto& d : frame.detections) all_detections.push_back(d);
  }
  mask::write_detections_jsonl(directory / "detections.jsonl", all_detections);

  if (!scene.frames.empty()) {
    eval::write_trajectory(directory / "gt_traj.txt", scene.gt_trajectory);
  }

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["seed"] = scene.config.seed;
  manifest["frames"] = scene.config.frames;
  manifest["n_static"] = scene.config.n_static;
  manifest["n_dynamic"] = scene.config.n_dynamic;
  manifest["body_count"] = scene.config.body_count;
  manifest["body_speed"] = scene.config.body_speed;
  manifest["camera_path"] = scene.config.path == CameraPathKind::Straight ? "straight" : "arc";
  manifest["camera_speed"] = scene.config.camera_speed;
  manifest["camera_height"] = scene.config.camera_height;
  manifest["frame_period"] = scene.config.frame_period;
  manifest["pixel_noise_sigma"] = scene.config.pixel_noise_sigma;
  manifest["precision_target"] = scene.config.precision_target;
  manifest["recall_target"] = scene.config.recall_target;
  manifest["image_width"] = scene.config.intrinsics.width;
  manifest["image_height"] = scene.config.intrinsics.height;
  manifest["fx"] = scene.config.intrinsics.fx;
  manifest["fy"] = scene.config.intrinsics.fy;
  manifest["cx"] = scene.config.intrinsics.cx;
  manifest["cy"] = scene.config.intrinsics.cy;
  if (scene.measured_precision) manifest["measured_precision"] = *scene.measured_precision;
  if (scene.measured_recall) manifest["measured_recall"] = *scene.measured_recall;

  std::ofstream mf(directory / "manifest.json");
  if (!mf) throw IoError("cannot write manifest: " + (directory / "manifest.json").string());
  mf << manifest.dump(2) << '\n';
}

}  // namespace pcr::synth

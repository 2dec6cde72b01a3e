#include "pcr/filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "pcr/rng.hpp"

namespace pcr::filter {

void FilterWeights::validate() const {
  if (w_seg < 0 || w_motion < 0 || w_ground < 0 || w_edge < 0) {
    throw ParameterError("weights must be non-negative");
  }
  if (std::abs(w_seg + w_motion + w_ground + w_edge - 1.0) > 1e-9) {
    throw ParameterError("weights must sum to 1");
  }
  if (!(theta_threshold > 0.0 && theta_threshold < 1.0)) {
    throw ParameterError("theta_threshold must lie in (0,1)");
  }
  if (!(edge_margin_inner < edge_margin_outer)) {
    throw ParameterError("edge margins must satisfy m0 < m1");
  }
  if (!(vote_quota > 0.0 && vote_quota <= 1.0)) {
    throw ParameterError("vote quota must lie in (0,1]");
  }
  if (vote_window < 1) throw ParameterError("vote window must be >= 1");
  if (!(v_max > 0.0)) throw ParameterError("v_max must be positive");
  if (!(tau_ground > 0.0)) throw ParameterError("tau_ground must be positive");
}

void TrackStore::observe(const PointObservation& p) {
  Track& t = tracks_[p.track_id];
  t.track_id = p.track_id;
  if (!t.observations.empty() && t.observations.back().first >= p.frame_id) return;
  t.observations.emplace_back(p.frame_id, p.pixel);
}

void TrackStore::record_evidence(std::int64_t track_id, bool evidence) {
  tracks_[track_id].evidence.push_back(evidence ? 1 : 0);
}

const Track* TrackStore::find(std::int64_t track_id) const {
  const auto it = tracks_.find(track_id);
  return it == tracks_.end() ? nullptr : &it->second;
}

double bilinear_sample(const Grid<float>& field, double x, double y) {
  if (field.empty()) return 0.0;
  x = std::clamp(x, 0.0, static_cast<double>(field.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(field.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, field.width() - 1);
  const int y1 = std::min(y0 + 1, field.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * field.at(x0, y0) + fx * field.at(x1, y0);
  const double bottom = (1.0 - fx) * field.at(x0, y1) + fx * field.at(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

double edge_score(const Eigen::Vector2d& pixel, int width, int height, double m0, double m1) {
  const double d = std::min(std::min(pixel.x(), (width - 1) - pixel.x()),
                            std::min(pixel.y(), (height - 1) - pixel.y()));
  if (d <= m0) return 1.0;
  if (d >= m1) return 0.0;
  return (m1 - d) / (m1 - m0);
}

double temporal_motion(const Track& track, int window, std::int64_t current_frame) {
  if (track.observations.size() < 2 || window < 1) return 0.0;
  // Displacements ending at frames <= current_frame, newest last.
  std::vector<double> magnitudes;
  for (std::size_t i = 1; i < track.observations.size(); ++i) {
    if (track.observations[i].first > current_frame) break;
    magnitudes.push_back((track.observations[i].second - track.observations[i - 1].second).norm());
  }
  if (magnitudes.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(window, magnitudes.size());
  double sum = 0.0;
  for (std::size_t i = magnitudes.size() - n; i < magnitudes.size(); ++i) sum += magnitudes[i];
  return sum / static_cast<double>(n);
}

bool temporal_vote(std::span<const std::uint8_t> evidence, int window, double quota) {
  if (window < 1) throw ParameterError("vote window must be >= 1");
  if (evidence.empty()) return false;
  const std::size_t n = std::min<std::size_t>(window, evidence.size());
  int votes = 0;
  for (std::size_t i = evidence.size() - n; i < evidence.size(); ++i) votes += evidence[i] ? 1 : 0;
  const int needed = static_cast<int>(std::ceil(quota * static_cast<double>(n)));
  return votes >= needed;
}

double adaptive_ground_threshold(double camera_height, double alpha, double tau_min,
                                 double tau_max) {
  if (camera_height < 0.0) throw ParameterError("camera height must be >= 0");
  return std::clamp(alpha * camera_height, tau_min, tau_max);
}

RansacResult ransac_ground_plane(std::span<const Eigen::Vector3d> points, int n_iter, double tau,
                                 std::uint64_t seed) {
  if (points.size() < 3) throw InsufficientDataError("plane RANSAC needs at least 3 points");

  Rng rng(seed);
  const std::size_t n = points.size();

  int best_inliers = -1;
  std::vector<int> best_set;
  int needed_iters = n_iter;
  int iter = 0;
  for (; iter < n_iter && iter < needed_iters; ++iter) {
    const std::size_t ia = rng.index(n);
    std::size_t ib = ia;
    std::size_t ic = ia;
    for (int tries = 0; tries < 256 && ib == ia; ++tries) ib = rng.index(n);
    for (int tries = 0; tries < 256 && (ic == ia || ic == ib); ++tries) ic = rng.index(n);
    if (ia == ib || ib == ic || ia == ic) continue;

    const Eigen::Vector3d normal =
        (points[ib] - points[ia]).cross(points[ic] - points[ia]);
    if (normal.norm() <= 1e-12) continue;
    Eigen::Vector4d coeffs;
    coeffs.head<3>() = normal.normalized();
    coeffs[3] = -coeffs.head<3>().dot(points[ia]);

    std::vector<int> inliers;
    inliers.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(coeffs.head<3>().dot(points[i]) + coeffs[3]) <= tau) {
        inliers.push_back(static_cast<int>(i));
      }
    }
    if (static_cast<int>(inliers.size()) > best_inliers) {
      best_inliers = static_cast<int>(inliers.size());
      best_set = std::move(inliers);
      // Early exit once (1 - w^3)^k <= 0.01 at the current inlier ratio.
      const double w = static_cast<double>(best_inliers) / static_cast<double>(n);
      const double p_good = w * w * w;
      if (p_good >= 1.0) {
        needed_iters = iter + 1;
      } else if (p_good > 0.0) {
        const double k = std::log(0.01) / std::log(1.0 - p_good);
        needed_iters = static_cast<int>(std::min<double>(n_iter, std::ceil(k)));
      }
    }
  }
  if (best_inliers < 3) throw DegenerateError("no non-degenerate plane hypothesis found");

  std::vector<Eigen::Vector3d> support;
  support.reserve(best_set.size());
  for (const int i : best_set) support.push_back(points[i]);

  RansacResult out{fit_plane_svd(support), {}, iter};
  for (std::size_t i = 0; i < n; ++i) {
    if (point_plane_distance(points[i], out.plane) <= tau) {
      out.inliers.push_back(static_cast<int>(i));
    }
  }
  return out;
}

bool sky_test(const Eigen::Vector2d& pixel, bool has_depth, const mask::SegMask& seg,
              const std::optional<Eigen::Vector3d>& horizon, int image_width, int image_height) {
  const double sx = image_width > 0 ? static_cast<double>(seg.width) / image_width : 1.0;
  const double sy = image_height > 0 ? static_cast<double>(seg.height) / image_height : 1.0;
  const int mx = std::clamp(static_cast<int>(std::lround(pixel.x() * sx)), 0,
                            std::max(0, seg.width - 1));
  const int my = std::clamp(static_cast<int>(std::lround(pixel.y() * sy)), 0,
                            std::max(0, seg.height - 1));
  if (seg.width > 0 && seg.sky.at(mx, my)) return true;
  if (!horizon || has_depth) return false;
  const double side = (*horizon)[0] * pixel.x() + (*horizon)[1] * pixel.y() + (*horizon)[2];
  if (side >= 0.0) return false;
  const double conf =
      seg.width > 0 ? bilinear_sample(seg.dynamic_confidence, pixel.x() * sx, pixel.y() * sy)
                    : 0.0;
  return conf == 0.0;
}

ScoreBreakdown score_point(const PointObservation& p, const mask::SegMask& seg,
                           const Track* track, const Plane* ground_plane,
                           const FilterWeights& w, int image_width, int image_height) {
  ScoreBreakdown out;
  const double sx = image_width > 0 ? static_cast<double>(seg.width) / image_width : 1.0;
  const double sy = image_height > 0 ? static_cast<double>(seg.height) / image_height : 1.0;
  out.s_seg = seg.width > 0
                  ? bilinear_sample(seg.dynamic_confidence, p.pixel.x() * sx, p.pixel.y() * sy)
                  : 0.0;

  if (track != nullptr) {
    const double motion = temporal_motion(*track, w.vote_window, p.frame_id);
    out.s_motion = std::min(motion / w.v_max, 1.0);
  }

  if (ground_plane != nullptr && p.point3d.has_value()) {
    const double d = point_plane_distance(*p.point3d, *ground_plane);
    out.s_ground = std::clamp(1.0 - d / w.tau_ground, 0.0, 1.0);
  }

  out.s_edge = edge_score(p.pixel, image_width, image_height, w.edge_margin_inner,
                          w.edge_margin_outer);

  out.weighted_badness = w.w_seg * out.s_seg + w.w_motion * out.s_motion +
                         w.w_ground * out.s_ground + w.w_edge * out.s_edge;
  out.staticness = std::clamp(1.0 - out.weighted_badness, 0.0, 1.0);
  out.outlier = out.staticness < w.theta_threshold;
  return out;
}

std::vector<std::uint8_t> cluster_expand(std::span<const PointObservation> points,
                                         std::vector<std::uint8_t> outliers,
                                         std::span<const double> staticness, double radius,
                                         int min_k, double theta, double margin) {
  if (!(radius > 0.0)) throw ParameterError("cluster radius must be positive");
  if (min_k < 1) throw ParameterError("cluster min_k must be >= 1");
  if (points.size() != outliers.size() || points.size() != staticness.size()) {
    throw MismatchError("cluster_expand inputs must have equal lengths");
  }

  const std::vector<std::uint8_t> original = outliers;
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (original[i]) continue;
    if (!(staticness[i] < theta + margin)) continue;
    int neighbors = 0;
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (!original[j]) continue;
      if ((points[i].pixel - points[j].pixel).squaredNorm() <= r2) {
        if (++neighbors >= min_k) break;
      }
    }
    if (neighbors >= min_k) outliers[i] = 1;
  }
  return outliers;
}

FrameResult filter_frame(std::span<const PointObservation> points, TrackStore& tracks,
                         const FrameContext& ctx) {
  ctx.weights.validate();
  FrameResult out;
  out.scores.resize(points.size());
  out.outliers.assign(points.size(), 0);
  if (points.empty()) return out;

  static const mask::SegMask kEmptyMask;
  const mask::SegMask& seg = ctx.seg ? *ctx.seg : kEmptyMask;
  static const mask::ClassPolicy kDefaultPolicy = mask::ClassPolicy::defaults();
  const mask::ClassPolicy& policy = ctx.policy ? *ctx.policy : kDefaultPolicy;
  const Plane* plane = ctx.ground_plane ? &*ctx.ground_plane : nullptr;

  // Per-point scoring; embarrassingly parallel, results written by index
  // so the merge is independent of worker count.
  const auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out.scores[i] = score_point(points[i], seg, tracks.find(points[i].track_id), plane,
                                  ctx.weights, ctx.image_width, ctx.image_height);
    }
  };
  const int workers = std::max(1, ctx.n_workers);
  if (workers == 1 || points.size() < 64) {
    score_range(0, points.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (points.size() + workers - 1) / workers;
    for (int t = 0; t < workers; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(points.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(score_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  // Evidence and per-point decisions, sequential and order-independent.
  std::vector<double> staticness(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const ScoreBreakdown& s = out.scores[i];
    staticness[i] = s.staticness;
    tracks.record_evidence(points[i].track_id, s.s_motion > 0.5 || s.s_seg > 0.7);
  }

  for (std::size_t i = 0; i < points.size(); ++i) {
    const ScoreBreakdown& s = out.scores[i];
    bool flagged = s.outlier;

    // Class-tiered aggressiveness: fast movers skip the vote.
    const double sx = ctx.image_width > 0 && seg.width > 0
                          ? static_cast<double>(seg.width) / ctx.image_width
                          : 1.0;
    const double sy = ctx.image_height > 0 && seg.height > 0
                          ? static_cast<double>(seg.height) / ctx.image_height
                          : 1.0;
    if (!flagged && seg.width > 0) {
      const int mx = std::clamp(static_cast<int>(std::lround(points[i].pixel.x() * sx)), 0,
                                seg.width - 1);
      const int my = std::clamp(static_cast<int>(std::lround(points[i].pixel.y() * sy)), 0,
                                seg.height - 1);
      const mask::Category cat = policy.category(seg.class_map.at(mx, my));
      if (cat == mask::Category::FastDynamic && s.s_seg >= 0.5) flagged = true;
    }

    if (!flagged) {
      const Track* track = tracks.find(points[i].track_id);
      if (track != nullptr &&
          temporal_vote(track->evidence, ctx.weights.vote_window, ctx.weights.vote_quota)) {
        flagged = true;
      }
    }

    if (!flagged && sky_test(points[i].pixel, points[i].point3d.has_value(), seg, ctx.horizon,
                             ctx.image_width, ctx.image_height)) {
      flagged = true;
    }

    out.outliers[i] = flagged ? 1 : 0;
  }

  out.outliers = cluster_expand(points, std::move(out.outliers), staticness,
                                ctx.weights.cluster_radius, ctx.weights.cluster_min_k,
                                ctx.weights.theta_threshold, ctx.weights.cluster_margin);

  for (std::size_t i = 0; i < points.size(); ++i) out.scores[i].outlier = out.outliers[i] != 0;
  return out;
}

BlockMatchResult block_match_displacement(const Grid<float>& prev, const Grid<float>& next,
                                          int center_x, int center_y, int patch_radius,
                                          int search_radius) {
  if (patch_radius < 0 || search_radius < 0) throw ParameterError("radii must be >= 0");
  if (prev.empty() || next.empty()) throw ParameterError("images must be non-empty");

  const auto clamp_center = [&](const Grid<float>& img, int cx, int cy, int pad) {
    return std::pair<int, int>{
        std::clamp(cx, patch_radius + pad, img.width() - 1 - patch_radius - pad),
        std::clamp(cy, patch_radius + pad, img.height() - 1 - patch_radius - pad)};
  };
  const auto [px, py] = clamp_center(prev, center_x, center_y, 0);

  // Zero-variance reference patches match everywhere; report that.
  double mean = 0.0;
  const int patch_n = (2 * patch_radius + 1) * (2 * patch_radius + 1);
  for (int dy = -patch_radius; dy <= patch_radius; ++dy) {
    for (int dx = -patch_radius; dx <= patch_radius; ++dx) {
      mean += prev.at(px + dx, py + dy);
    }
  }
  mean /= patch_n;
  double variance = 0.0;
  for (int dy = -patch_radius; dy <= patch_radius; ++dy) {
    for (int dx = -patch_radius; dx <= patch_radius; ++dx) {
      const double d = prev.at(px + dx, py + dy) - mean;
      variance += d * d;
    }
  }
  if (variance <= 1e-12) return {0, 0, false};

  BlockMatchResult best{0, 0, true};
  double best_ssd = std::numeric_limits<double>::infinity();
  long best_norm2 = 0;
  for (int sy = -search_radius; sy <= search_radius; ++sy) {
    for (int sx = -search_radius; sx <= search_radius; ++sx) {
      double ssd = 0.0;
      for (int dy = -patch_radius; dy <= patch_radius; ++dy) {
        for (int dx = -patch_radius; dx <= patch_radius; ++dx) {
          const float a = prev.at(px + dx, py + dy);
          const float b = next.clamped(px + sx + dx, py + sy + dy);
          const double d = static_cast<double>(a) - b;
          ssd += d * d;
        }
      }
      const long norm2 = static_cast<long>(sx) * sx + static_cast<long>(sy) * sy;
      const bool better =
          ssd < best_ssd ||
          (ssd == best_ssd &&
           (norm2 < best_norm2 || (norm2 == best_norm2 &&
                                   (sx < best.dx || (sx == best.dx && sy < best.dy)))));
      if (better) {
        best_ssd = ssd;
        best_norm2 = norm2;
        best.dx = sx;
        best.dy = sy;
      }
    }
  }
  return best;
}

std::vector<PointObservation> read_points_file(const std::filesystem::path& path,
                                               std::int64_t frame_id) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open points file: " + path.string());
  std::vector<PointObservation> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<double> fields;
    double v;
    std::int64_t track = 0;
    if (!(ss >> track)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": missing track id");
    }
    while (ss >> v) fields.push_back(v);
    if (fields.size() != 2 && fields.size() != 5) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected `track u v [X Y Z]`");
    }
    PointObservation p;
    p.track_id = track;
    p.pixel = {fields[0], fields[1]};
    if (fields.size() == 5) p.point3d = Eigen::Vector3d(fields[2], fields[3], fields[4]);
    p.frame_id = frame_id;
    out.push_back(p);
  }
  return out;
}

void write_points_file(const std::filesystem::path& path,
                       std::span<const PointObservation> points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write points file: " + path.string());
  char buf[256];
  for (const auto& p : points) {
    if (p.point3d) {
      std::snprintf(buf, sizeof(buf), "%lld %.9f %.9f %.9f %.9f %.9f\n",
                    static_cast<long long>(p.track_id), p.pixel.x(), p.pixel.y(), p.point3d->x(),
                    p.point3d->y(), p.point3d->z());
    } else {
      std::snprintf(buf, sizeof(buf), "%lld %.9f %.9f\n", static_cast<long long>(p.track_id),
                    p.pixel.x(), p.pixel.y());
    }
    out << buf;
  }
}

}  // namespace pcr::filter

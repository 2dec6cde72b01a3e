#include "pcr/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pcr::mask {

namespace {

struct PixelRect {
  int x0, y0, x1, y1;  // half-open
  bool empty() const { return x0 >= x1 || y0 >= y1; }
};

PixelRect snap(const BBox& b, int width, int height) {
  PixelRect r;
  r.x0 = std::clamp(static_cast<int>(std::floor(b.x)), 0, width);
  r.y0 = std::clamp(static_cast<int>(std::floor(b.y)), 0, height);
  r.x1 = std::clamp(static_cast<int>(std::ceil(b.x + b.w)), 0, width);
  r.y1 = std::clamp(static_cast<int>(std::ceil(b.y + b.h)), 0, height);
  return r;
}

/// Visits every covered pixel of a detection within the image bounds.
template <typename Fn>
void for_each_covered_pixel(const DetectionRecord& det, int width, int height, Fn&& fn) {
  if (!det.rle.empty()) {
    std::int64_t pos = 0;
    bool foreground = false;
    const std::int64_t total = static_cast<std::int64_t>(width) * height;
    for (const int run : det.rle) {
      if (foreground) {
        for (std::int64_t i = pos; i < std::min<std::int64_t>(pos + run, total); ++i) {
          fn(static_cast<int>(i % width), static_cast<int>(i / width));
        }
      }
      pos += run;
      foreground = !foreground;
      if (pos >= total) break;
    }
    return;
  }
  const PixelRect r = snap(det.bbox, width, height);
  if (r.empty()) return;
  if (!det.bitmap.empty()) {
    const int bx = static_cast<int>(std::floor(det.bbox.x));
    const int by = static_cast<int>(std::floor(det.bbox.y));
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        const int ix = x - bx;
        const int iy = y - by;
        if (ix < 0 || iy < 0 || ix >= det.bitmap.width() || iy >= det.bitmap.height()) continue;
        if (det.bitmap.at(ix, iy)) fn(x, y);
      }
    }
    return;
  }
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) fn(x, y);
  }
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double ix0 = std::max(a.x, b.x);
  const double iy0 = std::max(a.y, b.y);
  const double ix1 = std::min(a.x + a.w, b.x + b.w);
  const double iy1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
  const double uni = a.w * a.h + b.w * b.h - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

Category ClassPolicy::category(int class_id) const {
  const auto it = categories.find(class_id);
  return it == categories.end() ? Category::Static : it->second;
}

ClassPolicy ClassPolicy::defaults() {
  ClassPolicy p;
  // COCO ids for the usual street classes; 80 reserved for sky.
  p.categories = {{0, Category::SlowDynamic},  // person
                  {1, Category::FastDynamic},  // bicycle
                  {2, Category::FastDynamic},  // car
                  {3, Category::FastDynamic},  // motorcycle
                  {5, Category::FastDynamic},  // bus
                  {6, Category::FastDynamic},  // train
                  {7, Category::FastDynamic},  // truck
                  {16, Category::SlowDynamic},  // dog
                  {17, Category::SlowDynamic},  // horse
                  {80, Category::Sky}};
  return p;
}

SegMask SegMask::empty(int width, int height) {
  SegMask m;
  m.width = width;
  m.height = height;
  m.dynamic_confidence = Grid<float>(width, height, 0.0f);
  m.class_map = Grid<std::int32_t>(width, height, 0);
  m.sky = Grid<std::uint8_t>(width, height, 0);
  return m;
}

RgbImage normalize_image(const RgbImage& image, const Eigen::Vector3d& mean,
                         const Eigen::Vector3d& std_dev) {
  if (std_dev.minCoeff() <= 0.0) throw ParameterError("std components must be positive");
  RgbImage out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto& px = image.at(x, y);
      auto& o = out.at(x, y);
      for (int c = 0; c < 3; ++c) {
        o[c] = static_cast<float>((px[c] - mean[c]) / std_dev[c]);
      }
    }
  }
  return out;
}

std::vector<DetectionRecord> filter_by_confidence(const std::vector<DetectionRecord>& dets,
                                                  double threshold) {
  std::vector<DetectionRecord> out;
  out.reserve(dets.size());
  for (const auto& d : dets) {
    if (d.confidence >= threshold) out.push_back(d);
  }
  return out;
}

std::vector<DetectionRecord> nms(const std::vector<DetectionRecord>& dets, double threshold,
                                 bool class_aware) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });

  std::vector<std::size_t> kept;
  for (const std::size_t i : order) {
    bool suppressed = false;
    for (const std::size_t k : kept) {
      if (class_aware && dets[k].class_id != dets[i].class_id) continue;
      if (iou(dets[k].bbox, dets[i].bbox) > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }

  std::sort(kept.begin(), kept.end());
  std::vector<DetectionRecord> out;
  out.reserve(kept.size());
  for (const std::size_t i : kept) out.push_back(dets[i]);
  return out;
}

SegMask combine_masks(const std::vector<DetectionRecord>& dets, const ClassPolicy& policy,
                      int width, int height, std::vector<std::string>* warnings) {
  SegMask out = SegMask::empty(width, height);
  // Tie-break fields so the result is independent of detection order.
  Grid<float> raw_conf(width, height, -1.0f);

  std::set<int> unknown;
  for (const auto& det : dets) {
    if (!policy.known(det.class_id)) unknown.insert(det.class_id);
    const Category cat = policy.category(det.class_id);
    if (det.confidence < policy.threshold(cat)) continue;
    const float dyn = policy.dynamic(cat) ? static_cast<float>(det.confidence) : 0.0f;
    const float raw = static_cast<float>(det.confidence);
    for_each_covered_pixel(det, width, height, [&](int x, int y) {
      if (cat == Category::Sky) out.sky.at(x, y) = 1;
      float& best_dyn = out.dynamic_confidence.at(x, y);
      float& best_raw = raw_conf.at(x, y);
      std::int32_t& best_class = out.class_map.at(x, y);
      const bool wins = dyn > best_dyn ||
                        (dyn == best_dyn &&
                         (raw > best_raw || (raw == best_raw && det.class_id < best_class)));
      if (wins) {
        best_dyn = dyn;
        best_raw = raw;
        best_class = det.class_id;
      }
    });
  }
  if (warnings) {
    for (const int id : unknown) {
      warnings->push_back("unknown class id " + std::to_string(id) + " treated as static");
    }
  }
  return out;
}

Grid<std::uint8_t> support(const SegMask& mask) {
  Grid<std::uint8_t> s(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      s.at(x, y) = mask.dynamic_confidence.at(x, y) >= 0.5f ? 1 : 0;
    }
  }
  return s;
}

Grid<std::uint8_t> erode(const Grid<std::uint8_t>& in, int radius) {
  if (radius <= 0) return in;
  Grid<std::uint8_t> out(in.width(), in.height(), 0);
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      bool all = true;
      for (int dy = -radius; dy <= radius && all; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= in.width() || ny >= in.height() || !in.at(nx, ny)) {
            all = false;
            break;
          }
        }
      }
      out.at(x, y) = all ? 1 : 0;
    }
  }
  return out;
}

Grid<std::uint8_t> dilate(const Grid<std::uint8_t>& in, int radius) {
  if (radius <= 0) return in;
  Grid<std::uint8_t> out(in.width(), in.height(), 0);
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      bool any = false;
      for (int dy = -radius; dy <= radius && !any; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < in.width() && ny < in.height() && in.at(nx, ny)) {
            any = true;
            break;
          }
        }
      }
      out.at(x, y) = any ? 1 : 0;
    }
  }
  return out;
}

Grid<std::uint8_t> majority3x3(const Grid<std::uint8_t>& in) {
  Grid<std::uint8_t> out(in.width(), in.height(), 0);
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      int votes = 0;
      int total = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= in.width() || ny >= in.height()) continue;
          // Center counts twice so convex corners survive.
          const int weight = (dx == 0 && dy == 0) ? 2 : 1;
          total += weight;
          if (in.at(nx, ny)) votes += weight;
        }
      }
      out.at(x, y) = 2 * votes >= total ? 1 : 0;
    }
  }
  return out;
}

SegMask refine_mask(const SegMask& mask, int open_radius, int close_radius) {
  if (open_radius < 0 || close_radius < 0) throw ParameterError("morphology radii must be >= 0");

  // Open, close, smooth, repeated until the support is stable. A single
  // pass is not idempotent (closing a concave notch changes what the next
  // closing sees); the fixed point is, and reapplying the refinement then
  // reproduces its input exactly.
  Grid<std::uint8_t> s = support(mask);
  for (int pass = 0; pass < 64; ++pass) {
    Grid<std::uint8_t> next = dilate(erode(s, open_radius), open_radius);
    next = erode(dilate(next, close_radius), close_radius);
    next = majority3x3(next);
    if (next == s) break;
    s = std::move(next);
  }

  SegMask out = SegMask::empty(mask.width, mask.height);
  out.sky = mask.sky;
  Grid<std::uint8_t> restored(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!s.at(x, y)) {
        if (mask.dynamic_confidence.at(x, y) < 0.5f) {
          out.class_map.at(x, y) = mask.class_map.at(x, y);
        }
        continue;
      }
      if (mask.dynamic_confidence.at(x, y) >= 0.5f) {
        out.dynamic_confidence.at(x, y) = mask.dynamic_confidence.at(x, y);
        out.class_map.at(x, y) = mask.class_map.at(x, y);
        restored.at(x, y) = 1;
      }
    }
  }

  // Gained pixels inherit the strongest restored neighbor, 4-neighborhood
  // first, synchronously per round so the result is order-independent.
  // Every support component contains opened original pixels, so the
  // relaxation reaches everything.
  constexpr int kNear[4][2] = {{0, -1}, {-1, 0}, {1, 0}, {0, 1}};
  constexpr int kDiag[4][2] = {{-1, -1}, {1, -1}, {-1, 1}, {1, 1}};
  bool progress = true;
  while (progress) {
    progress = false;
    for (int wave = 0; wave < 2 && !progress; ++wave) {
      std::vector<std::tuple<int, int, float, std::int32_t>> updates;
      for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
          if (!s.at(x, y) || restored.at(x, y)) continue;
          float best = 0.0f;
          std::int32_t best_class = 0;
          const auto consider = [&](int nx, int ny) {
            if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) return;
            if (!restored.at(nx, ny)) return;
            const float c = out.dynamic_confidence.at(nx, ny);
            if (c > best) {
              best = c;
              best_class = out.class_map.at(nx, ny);
            }
          };
          for (const auto& n : kNear) consider(x + n[0], y + n[1]);
          if (wave == 1 && best <= 0.0f) {
            for (const auto& n : kDiag) consider(x + n[0], y + n[1]);
          }
          if (best > 0.0f) updates.emplace_back(x, y, best, best_class);
        }
      }
      for (const auto& [x, y, conf, cls] : updates) {
        out.dynamic_confidence.at(x, y) = conf;
        out.class_map.at(x, y) = cls;
        restored.at(x, y) = 1;
        progress = true;
      }
    }
  }
  // Support pixels no restored value could reach carry no dynamic
  // evidence; drop them.
  return out;
}

std::vector<DetectionRecord> read_detections_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detections file: " + path.string());
  std::vector<DetectionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      DetectionRecord d;
      d.frame_id = j.at("frame").get<std::int64_t>();
      d.class_id = j.at("class_id").get<int>();
      d.class_name = j.value("class_name", std::string{});
      d.confidence = j.at("conf").get<double>();
      const auto& bb = j.at("bbox");
      if (!bb.is_array() || bb.size() != 4) throw ParseError("bbox must be [x,y,w,h]");
      d.bbox = {bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
                bb[3].get<double>()};
      if (j.contains("mask_rle")) d.rle = j["mask_rle"].get<std::vector<int>>();
      if (d.confidence < 0.0 || d.confidence > 1.0) {
        throw ParseError("confidence outside [0,1]");
      }
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_detections_jsonl(const std::filesystem::path& path,
                            const std::vector<DetectionRecord>& dets) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write detections file: " + path.string());
  for (const auto& d : dets) {
    nlohmann::json j;
    j["frame"] = d.frame_id;
    j["class_id"] = d.class_id;
    j["class_name"] = d.class_name;
    j["conf"] = d.confidence;
    j["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
    if (!d.rle.empty()) j["mask_rle"] = d.rle;
    out << j.dump() << '\n';
  }
}

std::unordered_map<std::int64_t, std::vector<DetectionRecord>> group_by_frame(
    std::vector<DetectionRecord> dets) {
  std::unordered_map<std::int64_t, std::vector<DetectionRecord>> out;
  for (auto& d : dets) out[d.frame_id].push_back(std::move(d));
  return out;
}

void write_pgm(const std::filesystem::path& path, const Grid<std::uint8_t>& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PGM: " + path.string());
  out << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data().data()),
            static_cast<std::streamsize>(image.data().size()));
}

Grid<std::uint8_t> read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PGM: " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw ParseError("unsupported PGM header in " + path.string());
  }
  in.get();  // single whitespace after the header
  Grid<std::uint8_t> img(w, h, 0);
  in.read(reinterpret_cast<char*>(img.data().data()),
          static_cast<std::streamsize>(img.data().size()));
  if (!in) throw ParseError("truncated PGM: " + path.string());
  return img;
}

Grid<std::uint8_t> support_image(const SegMask& mask) {
  Grid<std::uint8_t> img(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      img.at(x, y) = mask.dynamic_confidence.at(x, y) >= 0.5f ? 255 : 0;
    }
  }
  return img;
}

Grid<std::uint8_t> confidence_image(const SegMask& mask) {
  Grid<std::uint8_t> img(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      img.at(x, y) = static_cast<std::uint8_t>(
          std::lround(255.0 * std::clamp<double>(mask.dynamic_confidence.at(x, y), 0.0, 1.0)));
    }
  }
  return img;
}

}  // namespace pcr::mask

#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "pcr/error.hpp"
#include "pcr/grid.hpp"

namespace pcr::mask {

/// Axis-aligned box, top-left corner + size, in pixels.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

double iou(const BBox& a, const BBox& b);

/// One detector output. Coverage comes from, in priority order: a bitmap
/// sized to the integer-snapped bbox, a full-frame run-length encoding
/// (row-major, alternating background/foreground, background first), or
/// the filled bbox when neither is present.
struct DetectionRecord {
  std::int64_t frame_id = 0;
  int class_id = 0;
  std::string class_name;
  double confidence = 0.0;
  BBox bbox;
  Grid<std::uint8_t> bitmap;
  std::vector<int> rle;
};

enum class Category { FastDynamic, SlowDynamic, Static, Sky };

/// Maps detector class ids onto filtering categories. Unknown ids resolve
/// to Static; combine_masks reports them through its warning sink.
struct ClassPolicy {
  std::unordered_map<int, Category> categories;
  std::array<double, 4> thresholds{0.0, 0.0, 0.0, 0.0};  // indexed by Category

  Category category(int class_id) const;
  bool known(int class_id) const { return categories.count(class_id) > 0; }
  double threshold(Category c) const { return thresholds[static_cast<int>(c)]; }
  bool dynamic(Category c) const {
    return c == Category::FastDynamic || c == Category::SlowDynamic;
  }

  static ClassPolicy defaults();
};

/// Per-pixel dynamic-class confidence field.
struct SegMask {
  int width = 0;
  int height = 0;
  Grid<float> dynamic_confidence;
  Grid<std::int32_t> class_map;  // 0 = background
  Grid<std::uint8_t> sky;

  static SegMask empty(int width, int height);
};

using RgbImage = Grid<std::array<float, 3>>;

/// Per-channel (value - mean) / std. Throws ParameterError on a
/// non-positive std component.
RgbImage normalize_image(const RgbImage& image, const Eigen::Vector3d& mean,
                         const Eigen::Vector3d& std_dev);

/// Keeps records with confidence >= threshold, order preserved.
std::vector<DetectionRecord> filter_by_confidence(const std::vector<DetectionRecord>& dets,
                                                  double threshold);

/// Greedy non-maximum suppression: confidence descending, ties by input
/// order; a candidate is dropped when its IoU against a kept record
/// exceeds the threshold. Suppression is per class unless class_aware is
/// false. Output keeps the input order.
std::vector<DetectionRecord> nms(const std::vector<DetectionRecord>& dets, double threshold,
                                 bool class_aware = true);

/// Rasterizes detections into a SegMask. Dynamic categories contribute
/// their confidence (max per pixel; ties by raw confidence, then lower
/// class id), other categories contribute class/sky coverage only.
SegMask combine_masks(const std::vector<DetectionRecord>& dets, const ClassPolicy& policy,
                      int width, int height, std::vector<std::string>* warnings = nullptr);

/// Binarizes at 0.5, applies square-element opening then closing and one
/// 3x3 majority smoothing pass (center counted twice), iterating that
/// pipeline until the support is stable, then restores confidences inside
/// the surviving support. Pixels the support gained inherit the strongest
/// restored neighbor's confidence and class. Reapplying the refinement to
/// its own output is the identity.
SegMask refine_mask(const SegMask& mask, int open_radius, int close_radius);

/// Binary support of a mask: dynamic_confidence >= 0.5.
Grid<std::uint8_t> support(const SegMask& mask);

// Morphology on binary grids (square structuring element, radius r;
// outside the image counts as background).
Grid<std::uint8_t> erode(const Grid<std::uint8_t>& in, int radius);
Grid<std::uint8_t> dilate(const Grid<std::uint8_t>& in, int radius);
Grid<std::uint8_t> majority3x3(const Grid<std::uint8_t>& in);

// --- file formats ---

/// JSON Lines, one record per line:
/// {"frame":int,"class_id":int,"class_name":str,"conf":float,
///  "bbox":[x,y,w,h],"mask_rle":[int,...] optional}.
std::vector<DetectionRecord> read_detections_jsonl(const std::filesystem::path& path);
void write_detections_jsonl(const std::filesystem::path& path,
                            const std::vector<DetectionRecord>& dets);

std::unordered_map<std::int64_t, std::vector<DetectionRecord>> group_by_frame(
    std::vector<DetectionRecord> dets);

/// Binary 8-bit PGM (P5).
void write_pgm(const std::filesystem::path& path, const Grid<std::uint8_t>& image);
Grid<std::uint8_t> read_pgm(const std::filesystem::path& path);

/// 255 where the support is dynamic, 0 elsewhere.
Grid<std::uint8_t> support_image(const SegMask& mask);
/// round(255 * confidence).
Grid<std::uint8_t> confidence_image(const SegMask& mask);

}  // namespace pcr::mask

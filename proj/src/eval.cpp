#include "pcr/eval.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pcr::eval {

namespace {

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est,
                                                           const Trajectory& gt) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (est.has_timestamps() && gt.has_timestamps() && est.size() != gt.size()) {
    for (std::size_t i = 0; i < est.size(); ++i) {
      const double t = *est.poses[i].timestamp;
      double best_dt = 0.01;
      std::optional<std::size_t> best;
      for (std::size_t j = 0; j < gt.size(); ++j) {
        const double dt = std::abs(*gt.poses[j].timestamp - t);
        if (dt <= best_dt) {
          best_dt = dt;
          best = j;
        }
      }
      if (best) pairs.emplace_back(i, *best);
    }
  } else {
    if (est.size() != gt.size()) {
      throw MismatchError("trajectories differ in length and carry no timestamps");
    }
    for (std::size_t i = 0; i < est.size(); ++i) pairs.emplace_back(i, i);
  }
  if (pairs.empty()) throw MismatchError("no associated pose pairs");
  return pairs;
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace

bool Trajectory::has_timestamps() const {
  return !poses.empty() && poses.front().timestamp.has_value();
}

ConfusionReport ConfusionReport::from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                             std::int64_t tn) {
  ConfusionReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.tn = tn;
  const std::int64_t total = tp + fp + fn + tn;
  if (total > 0) r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision && r.recall && (*r.precision + *r.recall) > 0.0) {
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  return r;
}

SimilarityTransform umeyama_align(const Trajectory& est, const Trajectory& gt, bool with_scale) {
  const auto pairs = associate(est, gt);
  const std::size_t n = pairs.size();
  if (n < 3) throw DegenerateError("alignment needs at least 3 pose pairs");

  Eigen::Vector3d mean_est = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_gt = Eigen::Vector3d::Zero();
  for (const auto& [i, j] : pairs) {
    mean_est += est.poses[i].translation;
    mean_gt += gt.poses[j].translation;
  }
  mean_est /= static_cast<double>(n);
  mean_gt /= static_cast<double>(n);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double var_est = 0.0;
  for (const auto& [i, j] : pairs) {
    const Eigen::Vector3d de = est.poses[i].translation - mean_est;
    const Eigen::Vector3d dg = gt.poses[j].translation - mean_gt;
    cov += dg * de.transpose();
    var_est += de.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_est /= static_cast<double>(n);

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (sv[0] <= 1e-15 || sv[1] <= 1e-12 * sv[0]) {
    throw DegenerateError("alignment is degenerate (coincident or collinear trajectories)");
  }

  Eigen::Vector3d signs = Eigen::Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) signs[2] = -1.0;

  SimilarityTransform t;
  t.rotation = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
  t.scale = with_scale ? sv.dot(signs) / var_est : 1.0;
  if (!(t.scale > 0.0)) throw DegenerateError("alignment produced a non-positive scale");
  t.translation = mean_gt - t.scale * (t.rotation * mean_est);
  return t;
}

std::vector<double> ape(const Trajectory& est, const Trajectory& gt, bool align,
                        bool with_scale) {
  const auto pairs = associate(est, gt);
  SimilarityTransform t;
  if (align) t = umeyama_align(est, gt, with_scale);

  std::vector<double> errors;
  errors.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    const Eigen::Vector3d mapped = t.apply(est.poses[i].translation);
    errors.push_back((gt.poses[j].translation - mapped).norm());
  }
  return errors;
}

std::vector<double> rpe(const Trajectory& est, const Trajectory& gt, int delta) {
  if (delta < 1) throw ParameterError("rpe delta must be >= 1");
  if (est.size() != gt.size()) throw MismatchError("rpe expects equal-length trajectories");
  if (static_cast<std::size_t>(delta) >= est.size()) {
    throw MismatchError("rpe delta must be smaller than the trajectory length");
  }

  std::vector<double> errors;
  errors.reserve(est.size() - delta);
  for (std::size_t i = 0; i + delta < est.size(); ++i) {
    const Pose q_gt = gt.poses[i].inverse().compose(gt.poses[i + delta]);
    const Pose q_est = est.poses[i].inverse().compose(est.poses[i + delta]);
    const Pose residual = q_gt.inverse().compose(q_est);
    errors.push_back(residual.translation.norm());
  }
  return errors;
}

ErrorStats stats(std::span<const double> errors) {
  if (errors.empty()) throw InsufficientDataError("stats of an empty error list");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());

  ErrorStats s;
  s.min = sorted.front();
  s.max = sorted.back();
  const std::size_t n = sorted.size();
  s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double sq = 0.0;
  for (const double e : sorted) sq += e * e;
  s.rmse = std::sqrt(sq / static_cast<double>(n));
  return s;
}

ConfusionReport confusion(std::span<const std::uint8_t> pred_dynamic,
                          std::span<const std::uint8_t> gt_dynamic) {
  if (pred_dynamic.size() != gt_dynamic.size() || pred_dynamic.empty()) {
    throw MismatchError("confusion inputs must be non-empty and equal length");
  }
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < pred_dynamic.size(); ++i) {
    const bool p = pred_dynamic[i] != 0;
    const bool g = gt_dynamic[i] != 0;
    if (p && g) ++tp;
    else if (p && !g) ++fp;
    else if (!p && g) ++fn;
    else ++tn;
  }
  return ConfusionReport::from_counts(tp, fp, fn, tn);
}

ImprovementReport improvement_report(const ErrorStats& baseline, const ErrorStats& ours) {
  const auto pct = [](double base, double value) -> std::optional<double> {
    if (base == 0.0) return std::nullopt;
    return 100.0 * (base - value) / base;
  };
  ImprovementReport r;
  r.max = pct(baseline.max, ours.max);
  r.median = pct(baseline.median, ours.median);
  r.min = pct(baseline.min, ours.min);
  r.rmse = pct(baseline.rmse, ours.rmse);
  return r;
}

Trajectory parse_trajectory(const std::filesystem::path& path, TrajectoryFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path.string());

  Trajectory out;
  out.format = format;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' ||
        line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::istringstream ss(line);
    std::vector<double> fields;
    double v;
    while (ss >> v) fields.push_back(v);
    if (!ss.eof()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
    }

    Pose pose;
    if (format == TrajectoryFormat::Kitti) {
      if (fields.size() != 12) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected 12 fields, got " + std::to_string(fields.size()));
      }
      Eigen::Matrix3d r;
      r << fields[0], fields[1], fields[2], fields[4], fields[5], fields[6], fields[8], fields[9],
          fields[10];
      pose.rotation = r;
      pose.translation = {fields[3], fields[7], fields[11]};
    } else {
      if (fields.size() != 8) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected 8 fields, got " + std::to_string(fields.size()));
      }
      pose.timestamp = fields[0];
      pose.translation = {fields[1], fields[2], fields[3]};
      Eigen::Quaterniond q(fields[7], fields[4], fields[5], fields[6]);  // w, x, y, z
      const double norm = q.norm();
      if (std::abs(norm - 1.0) > 1e-3) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": quaternion norm " + std::to_string(norm) + " outside tolerance");
      }
      q.normalize();
      pose.rotation = q.toRotationMatrix();
    }

    if (!pose.is_rigid(1e-9)) {
      const Eigen::Matrix3d snapped = nearest_rotation(pose.rotation);
      if ((snapped - pose.rotation).cwiseAbs().maxCoeff() > 1e-3) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": rotation too far from orthonormal");
      }
      pose.rotation = snapped;
    }
    out.poses.push_back(pose);
  }
  if (out.poses.empty()) throw ParseError(path.string() + ": no poses");

  for (std::size_t i = 1; i < out.poses.size(); ++i) {
    if (out.poses[i].timestamp && out.poses[i - 1].timestamp &&
        *out.poses[i].timestamp <= *out.poses[i - 1].timestamp) {
      throw ValidationError(path.string() + ": timestamps must be strictly increasing");
    }
  }
  return out;
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file: " + path.string());
  char buf[512];
  for (const Pose& p : trajectory.poses) {
    if (trajectory.format == TrajectoryFormat::Kitti) {
      const Eigen::Matrix3d& r = p.rotation;
      const Eigen::Vector3d& t = p.translation;
      std::snprintf(buf, sizeof(buf),
                    "%.12g %.12g %.12g %.12g %.12g %.12g %.12g %.12g %.12g %.12g %.12g %.12g\n",
                    r(0, 0), r(0, 1), r(0, 2), t.x(), r(1, 0), r(1, 1), r(1, 2), t.y(), r(2, 0),
                    r(2, 1), r(2, 2), t.z());
    } else {
      const Eigen::Quaterniond q(p.rotation);
      std::snprintf(buf, sizeof(buf), "%.9f %.12g %.12g %.12g %.12g %.12g %.12g %.12g\n",
                    p.timestamp.value_or(0.0), p.translation.x(), p.translation.y(),
                    p.translation.z(), q.x(), q.y(), q.z(), q.w());
    }
    out << buf;
  }
}

void write_stats_csv(const std::filesystem::path& path, const std::string& metric,
                     const ErrorStats& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write stats CSV: " + path.string());
  char buf[256];
  out << "metric,max,median,min,rmse\n";
  std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g\n", metric.c_str(), s.max, s.median,
                s.min, s.rmse);
  out << buf;
}

ErrorStats read_stats_csv(const std::filesystem::path& path, std::string* metric) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stats CSV: " + path.string());
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row)) {
    throw ParseError(path.string() + ": expected a header and one data row");
  }
  std::istringstream ss(row);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() != 5) throw ParseError(path.string() + ": expected 5 columns");
  if (metric) *metric = fields[0];
  ErrorStats s;
  try {
    s.max = std::stod(fields[1]);
    s.median = std::stod(fields[2]);
    s.min = std::stod(fields[3]);
    s.rmse = std::stod(fields[4]);
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": non-numeric stats field");
  }
  return s;
}

void write_plot_csv(const std::filesystem::path& path, std::span<const double> errors) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write plot CSV: " + path.string());
  out << "index,error\n";
  char buf[128];
  for (std::size_t i = 0; i < errors.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, errors[i]);
    out << buf;
  }
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write confusion CSV: " + path.string());
  const auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string{};
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", *v);
    return std::string(buf);
  };
  out << "tp,fp,fn,tn,accuracy,precision,recall,f1\n";
  out << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << ',' << fmt(r.accuracy) << ','
      << fmt(r.precision) << ',' << fmt(r.recall) << ',' << fmt(r.f1) << '\n';
}

void write_improvement_csv(const std::filesystem::path& path, const ErrorStats& baseline,
                           const ErrorStats& ours, const ImprovementReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write improvement CSV: " + path.string());
  out << "field,baseline,ours,improvement_percent\n";
  const auto row = [&](const char* name, double base, double value,
                       const std::optional<double>& pct) {
    char buf[192];
    if (pct) {
      std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.4f\n", name, base, value, *pct);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,\n", name, base, value);
    }
    out << buf;
  };
  row("max", baseline.max, ours.max, report.max);
  row("median", baseline.median, ours.median, report.median);
  row("min", baseline.min, ours.min, report.min);
  row("rmse", baseline.rmse, ours.rmse, report.rmse);
}

std::vector<OutlierRecord> read_outlier_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open outlier file: " + path.string());
  std::vector<OutlierRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    OutlierRecord r;
    int flag = 0;
    if (!(ss >> r.track_id >> flag >> r.staticness >> r.s_seg >> r.s_motion >> r.s_ground >>
          r.s_edge)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed record");
    }
    r.outlier = flag != 0;
    out.push_back(r);
  }
  return out;
}

std::vector<LabelRecord> read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file: " + path.string());
  std::vector<LabelRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    LabelRecord r;
    int flag = 0;
    if (!(ss >> r.track_id >> r.frame_id >> flag)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed record");
    }
    r.gt_dynamic = flag != 0;
    out.push_back(r);
  }
  return out;
}

}  // namespace pcr::eval

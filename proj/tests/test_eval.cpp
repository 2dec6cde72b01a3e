#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>

#include <filesystem>
#include <fstream>

#include "pcr/eval.hpp"
#include "pcr/rng.hpp"

using namespace pcr::eval;
using pcr::Pose;
using pcr::Rng;
using pcr::SimilarityTransform;

namespace {

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

Trajectory random_trajectory(Rng& rng, int n) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    Pose p;
    p.rotation = random_rotation(rng);
    p.translation = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    t.poses.push_back(p);
  }
  return t;
}

Trajectory apply_similarity(const Trajectory& in, const SimilarityTransform& s) {
  Trajectory out = in;
  for (auto& p : out.poses) {
    p.translation = s.apply(p.translation);
    p.rotation = s.rotation * p.rotation;
  }
  return out;
}

}  // namespace

TEST_CASE("error stats") {
  SUBCASE("two samples") {
    const std::vector<double> e = {3.0, 4.0};
    const ErrorStats s = stats(e);
    CHECK(s.max == 4.0);
    CHECK(s.min == 3.0);
    CHECK(s.median == doctest::Approx(3.5));
    CHECK(s.rmse == doctest::Approx(std::sqrt(12.5)));
  }
  SUBCASE("odd-length median") {
    const std::vector<double> e = {3.0, 1.0, 2.0};
    CHECK(stats(e).median == 2.0);
  }
  SUBCASE("all zeros") {
    const std::vector<double> e = {0.0, 0.0, 0.0};
    const ErrorStats s = stats(e);
    CHECK(s.max == 0.0);
    CHECK(s.rmse == 0.0);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(stats(std::vector<double>{}), pcr::InsufficientDataError);
  }
  SUBCASE("scaling by a power of two is exact") {
    Rng rng(3);
    std::vector<double> e;
    for (int i = 0; i < 20; ++i) e.push_back(rng.uniform(0, 5));
    const ErrorStats base = stats(e);
    std::vector<double> doubled;
    for (const double v : e) doubled.push_back(2.0 * v);
    const ErrorStats scaled = stats(doubled);
    CHECK(scaled.max == 2.0 * base.max);
    CHECK(scaled.median == 2.0 * base.median);
    CHECK(scaled.min == 2.0 * base.min);
    CHECK(scaled.rmse == 2.0 * base.rmse);
  }
}

TEST_CASE("confusion report") {
  SUBCASE("small hand-checked counts") {
    const std::vector<std::uint8_t> pred = {1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    const std::vector<std::uint8_t> gt = {1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
    const ConfusionReport r = confusion(pred, gt);
    CHECK(r.tp == 3);
    CHECK(r.fp == 1);
    CHECK(r.fn == 2);
    CHECK(r.tn == 4);
    CHECK(*r.accuracy == doctest::Approx(0.7));
    CHECK(*r.precision == doctest::Approx(0.75));
    CHECK(*r.recall == doctest::Approx(0.6));
    CHECK(*r.f1 == doctest::Approx(2.0 * 0.75 * 0.6 / 1.35));
  }
  SUBCASE("perfect prediction") {
    const std::vector<std::uint8_t> v = {1, 0, 1, 1, 0};
    const ConfusionReport r = confusion(v, v);
    CHECK(*r.accuracy == 1.0);
    CHECK(*r.precision == 1.0);
    CHECK(*r.recall == 1.0);
    CHECK(*r.f1 == 1.0);
  }
  SUBCASE("undefined ratios stay absent") {
    const std::vector<std::uint8_t> none = {0, 0, 0};
    const ConfusionReport r = confusion(none, none);
    CHECK_FALSE(r.precision.has_value());
    CHECK_FALSE(r.recall.has_value());
    CHECK_FALSE(r.f1.has_value());
    CHECK(*r.accuracy == 1.0);
  }
  SUBCASE("exact counts reproduce published operating points") {
    // precision 0.9418 and recall 0.7806 as exact rationals.
    const std::int64_t tp = 4709LL * 3903LL;
    const ConfusionReport a = ConfusionReport::from_counts(tp, 1135773, 5165773, 1000);
    CHECK(*a.precision == doctest::Approx(0.9418).epsilon(1e-12));
    CHECK(*a.recall == doctest::Approx(0.7806).epsilon(1e-12));
    CHECK(std::abs(*a.f1 * 100.0 - 85.37) < 0.01);

    // precision 0.9364 = 2341/2500 and recall 0.7501 = 7501/10000.
    const std::int64_t tp2 = 2341LL * 7501LL;
    const std::int64_t fp2 = 2500LL * 7501LL - tp2;
    const std::int64_t fn2 = 10000LL * 2341LL - tp2;
    const ConfusionReport b = ConfusionReport::from_counts(tp2, fp2, fn2, 0);
    CHECK(*b.precision == doctest::Approx(0.9364).epsilon(1e-12));
    CHECK(*b.recall == doctest::Approx(0.7501).epsilon(1e-12));
    CHECK(std::abs(*b.f1 * 100.0 - 83.30) < 0.01);
  }
  SUBCASE("length mismatch") {
    const std::vector<std::uint8_t> a = {1, 0};
    const std::vector<std::uint8_t> b = {1};
    CHECK_THROWS_AS(confusion(a, b), pcr::MismatchError);
  }
}

TEST_CASE("improvement report") {
  SUBCASE("published percentages") {
    ErrorStats baseline{0.4681, 0.2773, 0.0781, 0.2814};
    ErrorStats ours{0.3613, 0.1929, 0.0340, 0.2084};
    const auto r = improvement_report(baseline, ours);
    CHECK(std::abs(*r.rmse - 25.9) < 0.05);
    CHECK(std::abs(*r.median - 30.4) < 0.05);
  }
  SUBCASE("degradation is negative") {
    ErrorStats baseline{1.5967, 0.7134, 0.0967, 0.9207};
    ErrorStats ours{1.7917, 0.8197, 0.1434, 1.0061};
    const auto r = improvement_report(baseline, ours);
    CHECK(std::abs(*r.rmse + 9.3) < 0.05);
    CHECK(std::abs(*r.median + 14.9) < 0.05);
  }
  SUBCASE("identical stats give zero") {
    ErrorStats same{1.0, 2.0, 3.0, 4.0};
    const auto r = improvement_report(same, same);
    CHECK(*r.max == 0.0);
    CHECK(*r.rmse == 0.0);
  }
  SUBCASE("zero baseline is undefined") {
    ErrorStats baseline{0.0, 1.0, 1.0, 1.0};
    ErrorStats ours{0.5, 1.0, 1.0, 1.0};
    CHECK_FALSE(improvement_report(baseline, ours).max.has_value());
  }
}

TEST_CASE("umeyama alignment") {
  Rng rng(19);
  SUBCASE("identity for equal trajectories") {
    const Trajectory t = random_trajectory(rng, 20);
    const auto s = umeyama_align(t, t, true);
    CHECK(s.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((s.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.translation.norm() < 1e-12);
  }
  SUBCASE("recovers a known similarity") {
    const Trajectory gt = random_trajectory(rng, 25);
    SimilarityTransform fwd;
    fwd.scale = 2.0;
    fwd.rotation = Eigen::AngleAxisd(M_PI / 6.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    fwd.translation = {1.0, -2.0, 3.0};
    const Trajectory est = apply_similarity(gt, fwd);
    const auto back = umeyama_align(est, gt, true);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      CHECK((back.apply(est.poses[i].translation) - gt.poses[i].translation).norm() < 1e-9);
    }
    CHECK(back.scale == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("rigid mode fixes scale at one") {
    const Trajectory gt = random_trajectory(rng, 15);
    SimilarityTransform fwd;
    fwd.rotation = random_rotation(rng);
    fwd.translation = {0.5, 0.25, -1.0};
    const Trajectory est = apply_similarity(gt, fwd);
    const auto back = umeyama_align(est, gt, false);
    CHECK(back.scale == 1.0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      CHECK((back.apply(est.poses[i].translation) - gt.poses[i].translation).norm() < 1e-9);
    }
  }
  SUBCASE("degenerate inputs") {
    Trajectory constant;
    for (int i = 0; i < 5; ++i) constant.poses.push_back(Pose{});
    CHECK_THROWS_AS(umeyama_align(constant, constant, true), pcr::DegenerateError);

    Trajectory line_a, line_b;
    for (int i = 0; i < 5; ++i) {
      Pose p;
      p.translation = {double(i), 0, 0};
      line_a.poses.push_back(p);
      p.translation = {double(i), 1, 1};
      line_b.poses.push_back(p);
    }
    CHECK_THROWS_AS(umeyama_align(line_a, line_b, true), pcr::DegenerateError);
  }
  SUBCASE("length mismatch without timestamps") {
    const Trajectory a = random_trajectory(rng, 5);
    const Trajectory b = random_trajectory(rng, 6);
    CHECK_THROWS_AS(umeyama_align(a, b, true), pcr::MismatchError);
  }
}

TEST_CASE("absolute pose error") {
  Rng rng(29);
  const Trajectory gt = random_trajectory(rng, 20);
  SUBCASE("identical trajectories") {
    for (const double e : ape(gt, gt, false, false)) CHECK(e == 0.0);
  }
  SUBCASE("alignment absorbs a global offset") {
    Trajectory est = gt;
    for (auto& p : est.poses) p.translation += Eigen::Vector3d(1, 0, 0);
    for (const double e : ape(est, gt, true, false)) CHECK(e < 1e-9);
    for (const double e : ape(est, gt, false, false)) CHECK(e == doctest::Approx(1.0));
  }
  SUBCASE("alignment absorbs any similarity") {
    SimilarityTransform s;
    s.scale = 1.7;
    s.rotation = random_rotation(rng);
    s.translation = {4, -1, 2};
    const Trajectory est = apply_similarity(gt, s);
    for (const double e : ape(est, gt, true, true)) CHECK(e < 1e-9);
  }
}

TEST_CASE("relative pose error") {
  SUBCASE("straight lines with different step sizes") {
    Trajectory gt, est;
    for (int i = 0; i < 10; ++i) {
      Pose p;
      p.translation = {double(i), 0, 0};
      gt.poses.push_back(p);
      p.translation = {1.1 * i, 0, 0};
      est.poses.push_back(p);
    }
    for (const double e : rpe(est, gt, 1)) CHECK(e == doctest::Approx(0.1));
    CHECK(rpe(est, gt, 1).size() == 9);
  }
  SUBCASE("invariant to a global rigid transform") {
    Rng rng(31);
    const Trajectory gt = random_trajectory(rng, 15);
    Trajectory est = gt;
    for (auto& p : est.poses) p.translation += Eigen::Vector3d(0.01, 0, 0);

    Pose g;
    g.rotation = random_rotation(rng);
    g.translation = {5, 6, 7};
    Trajectory est_moved = est;
    for (auto& p : est_moved.poses) {
      p.rotation = g.rotation * p.rotation;
      p.translation = g.rotation * p.translation + g.translation;
    }
    const auto base = rpe(est, gt, 2);
    const auto moved = rpe(est_moved, gt, 2);
    REQUIRE(base.size() == moved.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(moved[i] == doctest::Approx(base[i]).epsilon(1e-9));
    }
  }
  SUBCASE("delta bounds") {
    Rng rng(33);
    const Trajectory t = random_trajectory(rng, 5);
    CHECK_THROWS_AS(rpe(t, t, 0), pcr::ParameterError);
    CHECK_THROWS_AS(rpe(t, t, 5), pcr::MismatchError);
    CHECK(rpe(t, t, 4).size() == 1);
  }
}

TEST_CASE("trajectory parsing") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pcr_eval_test";
  fs::create_directories(dir);

  SUBCASE("kitti identity line") {
    const fs::path p = dir / "k.txt";
    std::ofstream(p) << "1 0 0 0 0 1 0 0 0 0 1 0\n";
    const Trajectory t = parse_trajectory(p, TrajectoryFormat::Kitti);
    REQUIRE(t.size() == 1);
    CHECK((t.poses[0].rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(t.poses[0].translation.norm() == 0.0);
    CHECK_FALSE(t.has_timestamps());
  }
  SUBCASE("tum line") {
    const fs::path p = dir / "t.txt";
    std::ofstream(p) << "0.0 1 2 3 0 0 0 1\n0.5 1 2 4 0 0 0 1\n";
    const Trajectory t = parse_trajectory(p, TrajectoryFormat::Tum);
    REQUIRE(t.size() == 2);
    CHECK(t.poses[0].translation == Eigen::Vector3d(1, 2, 3));
    CHECK((t.poses[0].rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.has_timestamps());
  }
  SUBCASE("wrong field count names the line") {
    const fs::path p = dir / "bad.txt";
    std::ofstream(p) << "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n";
    try {
      parse_trajectory(p, TrajectoryFormat::Kitti);
      FAIL("expected a parse error");
    } catch (const pcr::ParseError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SUBCASE("bad quaternion norm is rejected") {
    const fs::path p = dir / "q.txt";
    std::ofstream(p) << "0.0 0 0 0 0 0 0 2\n";
    CHECK_THROWS_AS(parse_trajectory(p, TrajectoryFormat::Tum), pcr::ValidationError);
  }
  SUBCASE("slightly off-orthonormal rotations are snapped") {
    const fs::path p = dir / "snap.txt";
    std::ofstream(p) << "1.0001 0 0 0 0 1 0 0 0 0 1 0\n";
    const Trajectory t = parse_trajectory(p, TrajectoryFormat::Kitti);
    CHECK(t.poses[0].is_rigid(1e-9));
  }
  SUBCASE("badly non-orthonormal rotations are errors") {
    const fs::path p = dir / "nonrot.txt";
    std::ofstream(p) << "2 0 0 0 0 2 0 0 0 0 2 0\n";
    CHECK_THROWS_AS(parse_trajectory(p, TrajectoryFormat::Kitti), pcr::ValidationError);
  }
  SUBCASE("non-increasing timestamps are errors") {
    const fs::path p = dir / "ts.txt";
    std::ofstream(p) << "1.0 0 0 0 0 0 0 1\n0.5 1 0 0 0 0 0 1\n";
    CHECK_THROWS_AS(parse_trajectory(p, TrajectoryFormat::Tum), pcr::ValidationError);
  }
  SUBCASE("round trip within 1e-9") {
    Rng rng(37);
    for (const auto format : {TrajectoryFormat::Kitti, TrajectoryFormat::Tum}) {
      Trajectory t = random_trajectory(rng, 12);
      t.format = format;
      if (format == TrajectoryFormat::Tum) {
        for (std::size_t i = 0; i < t.poses.size(); ++i) {
          t.poses[i].timestamp = 0.1 * static_cast<double>(i);
        }
      }
      const fs::path p = dir / "rt.txt";
      write_trajectory(p, t);
      const Trajectory back = parse_trajectory(p, format);
      REQUIRE(back.size() == t.size());
      for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK((back.poses[i].rotation - t.poses[i].rotation).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((back.poses[i].translation - t.poses[i].translation).norm() < 1e-9);
      }
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("timestamp association") {
  Trajectory est, gt;
  est.format = gt.format = TrajectoryFormat::Tum;
  for (int i = 0; i < 4; ++i) {
    Pose p;
    p.timestamp = 0.1 * i;
    p.translation = {double(i), 0, 0};
    est.poses.push_back(p);
  }
  for (int i = 0; i < 6; ++i) {
    Pose p;
    p.timestamp = 0.1 * i + 0.003;  // within the 0.01 s gate
    p.translation = {double(i), 0, 0};
    gt.poses.push_back(p);
  }
  const auto errors = ape(est, gt, false, false);
  REQUIRE(errors.size() == 4);
  for (const double e : errors) CHECK(e == 0.0);
}

TEST_CASE("outlier and label files") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pcr_eval_files";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "out.txt");
    out << "4 1 0.300000000 1.000000000 0.000000000 0.000000000 0.000000000\n";
    out << "9 0 0.900000000 0.100000000 0.000000000 0.000000000 0.000000000\n";
  }
  const auto outliers = read_outlier_file(dir / "out.txt");
  REQUIRE(outliers.size() == 2);
  CHECK(outliers[0].track_id == 4);
  CHECK(outliers[0].outlier);
  CHECK(outliers[1].staticness == doctest::Approx(0.9));

  {
    std::ofstream out(dir / "labels.txt");
    out << "4 0 1\n9 0 0\n";
  }
  const auto labels = read_label_file(dir / "labels.txt");
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].gt_dynamic);
  CHECK_FALSE(labels[1].gt_dynamic);
  fs::remove_all(dir);
}

TEST_CASE("stats csv round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pcr_stats_csv";
  fs::create_directories(dir);
  const ErrorStats s{4.0, 3.5, 3.0, 3.5355339};
  write_stats_csv(dir / "s.csv", "ape", s);
  std::string metric;
  const ErrorStats back = read_stats_csv(dir / "s.csv", &metric);
  CHECK(metric == "ape");
  CHECK(back.max == doctest::Approx(s.max));
  CHECK(back.rmse == doctest::Approx(s.rmse));
  fs::remove_all(dir);
}

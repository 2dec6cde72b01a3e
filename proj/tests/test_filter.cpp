#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "pcr/filter.hpp"
#include "pcr/rng.hpp"

using namespace pcr::filter;
using pcr::Grid;
using pcr::Plane;
using pcr::Rng;

namespace {

pcr::mask::ClassPolicy test_policy() {
  pcr::mask::ClassPolicy p;
  p.categories = {{1, pcr::mask::Category::FastDynamic},
                  {2, pcr::mask::Category::SlowDynamic},
                  {3, pcr::mask::Category::Static},
                  {4, pcr::mask::Category::Sky}};
  return p;
}

pcr::mask::SegMask uniform_mask(int w, int h, float conf, int class_id) {
  pcr::mask::SegMask seg = pcr::mask::SegMask::empty(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      seg.dynamic_confidence.at(x, y) = conf;
      seg.class_map.at(x, y) = class_id;
    }
  }
  return seg;
}

PointObservation obs(std::int64_t track, double u, double v, std::int64_t frame = 0) {
  PointObservation p;
  p.track_id = track;
  p.pixel = {u, v};
  p.frame_id = frame;
  return p;
}

}  // namespace

TEST_CASE("bilinear sampling") {
  Grid<float> field(4, 4, 0.0f);
  field.at(0, 0) = 0.0f;
  field.at(1, 0) = 1.0f;
  field.at(0, 1) = 1.0f;
  field.at(1, 1) = 0.0f;
  CHECK(bilinear_sample(field, 1.0, 0.0) == doctest::Approx(1.0));
  CHECK(bilinear_sample(field, 0.5, 0.5) == doctest::Approx(0.5));
  field.at(0, 0) = 0.25f;
  CHECK(bilinear_sample(field, -5.0, 0.0) == doctest::Approx(0.25));
  CHECK(bilinear_sample(field, 0.0, 99.0) == doctest::Approx(bilinear_sample(field, 0.0, 3.0)));
}

TEST_CASE("edge score ramp") {
  CHECK(edge_score({320, 240}, 640, 480, 10, 40) == 0.0);
  CHECK(edge_score({0, 100}, 640, 480, 10, 40) == 1.0);
  CHECK(edge_score({25, 240}, 640, 480, 10, 40) == doctest::Approx(0.5));
  CHECK(edge_score({639, 240}, 640, 480, 10, 40) == 1.0);
}

TEST_CASE("temporal motion") {
  Track track;
  track.track_id = 1;
  SUBCASE("static track is exactly zero") {
    for (int f = 0; f < 10; ++f) track.observations.emplace_back(f, Eigen::Vector2d(7, 9));
    CHECK(temporal_motion(track, 5, 9) == 0.0);
  }
  SUBCASE("constant velocity") {
    for (int f = 0; f < 10; ++f) track.observations.emplace_back(f, Eigen::Vector2d(2.0 * f, 0));
    CHECK(temporal_motion(track, 5, 9) == doctest::Approx(2.0));
  }
  SUBCASE("partial window uses what exists") {
    track.observations.emplace_back(0, Eigen::Vector2d(0, 0));
    track.observations.emplace_back(1, Eigen::Vector2d(3, 4));
    track.observations.emplace_back(2, Eigen::Vector2d(3, 4));
    CHECK(temporal_motion(track, 5, 2) == doctest::Approx(2.5));
  }
  SUBCASE("future observations are ignored") {
    track.observations.emplace_back(0, Eigen::Vector2d(0, 0));
    track.observations.emplace_back(1, Eigen::Vector2d(1, 0));
    track.observations.emplace_back(2, Eigen::Vector2d(9, 0));
    CHECK(temporal_motion(track, 5, 1) == doctest::Approx(1.0));
  }
}

TEST_CASE("temporal vote") {
  const auto vote = [](std::vector<std::uint8_t> h, int w, double q) {
    return temporal_vote(h, w, q);
  };
  CHECK_FALSE(vote({0, 0, 0, 0, 0}, 5, 0.6));
  CHECK(vote({1, 1, 1, 1, 1}, 5, 1.0));
  CHECK(vote({1, 0, 1, 0, 1}, 5, 0.6));        // 3 of 5 >= ceil(3)
  CHECK_FALSE(vote({1, 0, 0, 0, 1}, 5, 0.6));  // 2 of 5
  CHECK_FALSE(vote({}, 5, 0.6));
  CHECK(vote({1}, 5, 0.6));        // ceil(0.6 * 1) = 1
  CHECK(vote({0, 0, 1, 1}, 2, 1.0));  // window only sees the last two
}

TEST_CASE("adaptive ground threshold") {
  CHECK(adaptive_ground_threshold(1.65, 0.03, 0.02, 0.15) == doctest::Approx(0.0495));
  CHECK(adaptive_ground_threshold(0.0, 0.03, 0.02, 0.15) == 0.02);
  CHECK(adaptive_ground_threshold(100.0, 0.03, 0.02, 0.15) == 0.15);
  CHECK_THROWS_AS(adaptive_ground_threshold(-1.0, 0.03, 0.02, 0.15), pcr::ParameterError);
}

TEST_CASE("point scoring") {
  FilterWeights w;
  SUBCASE("all components zero") {
    const pcr::mask::SegMask seg = pcr::mask::SegMask::empty(640, 480);
    const auto s = score_point(obs(1, 320, 240), seg, nullptr, nullptr, w, 640, 480);
    CHECK(s.staticness == 1.0);
    CHECK_FALSE(s.outlier);
  }
  SUBCASE("all components one") {
    const auto seg = uniform_mask(640, 480, 1.0f, 1);
    Track track;
    for (int f = 0; f < 6; ++f) track.observations.emplace_back(f, Eigen::Vector2d(10.0 * f, 0));
    const Plane plane = Plane::from_coeffs({0, 1, 0, 0});
    PointObservation p = obs(1, 1.0, 1.0, 5);
    p.point3d = Eigen::Vector3d(0, 0, 5);  // on the plane y = 0
    const auto s = score_point(p, seg, &track, &plane, w, 640, 480);
    CHECK(s.s_seg == doctest::Approx(1.0));
    CHECK(s.s_motion == doctest::Approx(1.0));
    CHECK(s.s_ground == doctest::Approx(1.0));
    CHECK(s.s_edge == doctest::Approx(1.0));
    CHECK(s.staticness == doctest::Approx(0.0));
    CHECK(s.outlier);
  }
  SUBCASE("threshold comparison is strict") {
    const auto seg = uniform_mask(640, 480, 1.0f, 1);
    const auto s = score_point(obs(1, 320, 240), seg, nullptr, nullptr, w, 640, 480);
    CHECK(s.staticness == doctest::Approx(0.5));
    CHECK_FALSE(s.outlier);  // 0.5 < 0.5 is false
  }
  SUBCASE("badness is monotone") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      const float lo = static_cast<float>(rng.uniform());
      const float hi = lo + static_cast<float>(rng.uniform() * (1.0 - lo));
      const auto seg_lo = uniform_mask(8, 8, lo, 1);
      const auto seg_hi = uniform_mask(8, 8, hi, 1);
      const auto a = score_point(obs(1, 4, 4), seg_lo, nullptr, nullptr, w, 640, 480);
      const auto b = score_point(obs(1, 4, 4), seg_hi, nullptr, nullptr, w, 640, 480);
      CHECK(b.staticness <= a.staticness);
      if (a.outlier) CHECK(b.outlier);
    }
  }
}

TEST_CASE("weights validation") {
  FilterWeights w;
  CHECK_NOTHROW(w.validate());
  w.w_seg = 0.6;
  CHECK_THROWS_AS(w.validate(), pcr::ParameterError);
  w = {};
  w.edge_margin_inner = 50.0;
  CHECK_THROWS_AS(w.validate(), pcr::ParameterError);
  w = {};
  w.vote_quota = 0.0;
  CHECK_THROWS_AS(w.validate(), pcr::ParameterError);
}

TEST_CASE("plane ransac") {
  SUBCASE("recovers a plane under outliers") {
    Rng rng(11);
    std::vector<Eigen::Vector3d> pts;
    std::vector<bool> truth;
    for (int i = 0; i < 200; ++i) {
      pts.emplace_back(rng.uniform(-10, 10), rng.uniform(-10, 10), 0.0);
      truth.push_back(true);
    }
    for (int i = 0; i < 20; ++i) {
      pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 1.3));
      truth.push_back(false);
    }
    const auto result = ransac_ground_plane(pts, 300, 0.05, 99);
    const double angle = std::acos(
        std::clamp(std::abs(result.plane.normal().dot(Eigen::Vector3d(0, 0, 1))), 0.0, 1.0));
    CHECK(angle < M_PI / 180.0);
    CHECK(result.inliers.size() >= 200);
    std::size_t covered = 0;
    for (const int idx : result.inliers) {
      if (truth[idx]) ++covered;
    }
    CHECK(covered >= 198);  // >= 99% of the 200 true inliers
  }
  SUBCASE("coplanar input keeps everything") {
    Rng rng(5);
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 50; ++i) pts.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5), 2.0);
    const auto result = ransac_ground_plane(pts, 100, 0.01, 7);
    CHECK(result.inliers.size() == pts.size());
    const Plane direct = pcr::fit_plane_svd(pts);
    CHECK((result.plane.coeffs() - direct.coeffs()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(result.iterations < 100);  // early exit at full consensus
  }
  SUBCASE("too few points") {
    std::vector<Eigen::Vector3d> two = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(ransac_ground_plane(two, 10, 0.05, 1), pcr::InsufficientDataError);
  }
  SUBCASE("all-collinear points have no plane") {
    std::vector<Eigen::Vector3d> line;
    for (int i = 0; i < 10; ++i) line.emplace_back(i, 2.0 * i, -i);
    CHECK_THROWS_AS(ransac_ground_plane(line, 50, 0.05, 1), pcr::DegenerateError);
  }
  SUBCASE("fixed seed is bit-reproducible") {
    Rng rng(21);
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 120; ++i) {
      pts.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform() < 0.7
                                                                   ? 0.0
                                                                   : rng.uniform(0.2, 2.0));
    }
    const auto a = ransac_ground_plane(pts, 200, 0.05, 1234);
    const auto b = ransac_ground_plane(pts, 200, 0.05, 1234);
    CHECK(a.plane.coeffs() == b.plane.coeffs());
    CHECK(a.inliers == b.inliers);
    CHECK(a.iterations == b.iterations);
  }
}

TEST_CASE("sky test") {
  auto seg = pcr::mask::SegMask::empty(64, 64);
  const Eigen::Vector3d horizon(0.0, 1.0, -32.0);  // sky side above v = 32
  SUBCASE("mask sky wins outright") {
    seg.sky.at(10, 40) = 1;
    CHECK(sky_test({10, 40}, true, seg, horizon, 64, 64));
  }
  SUBCASE("below the horizon is never sky") {
    CHECK_FALSE(sky_test({10, 50}, false, seg, horizon, 64, 64));
  }
  SUBCASE("above the horizon without depth is sky") {
    CHECK(sky_test({10, 10}, false, seg, horizon, 64, 64));
  }
  SUBCASE("valid depth exempts a point above the horizon") {
    CHECK_FALSE(sky_test({10, 10}, true, seg, horizon, 64, 64));
  }
  SUBCASE("dynamic confidence above the horizon blocks the sky call") {
    seg.dynamic_confidence.at(10, 10) = 0.4f;
    seg.class_map.at(10, 10) = 1;
    CHECK_FALSE(sky_test({10, 10}, false, seg, horizon, 64, 64));
  }
  SUBCASE("no horizon, no mask sky") {
    CHECK_FALSE(sky_test({10, 10}, false, seg, std::nullopt, 64, 64));
  }
}

TEST_CASE("cluster expansion") {
  const double theta = 0.5;
  const double margin = 0.15;
  SUBCASE("a lone outlier changes nothing") {
    std::vector<PointObservation> pts = {obs(0, 10, 10), obs(1, 200, 200), obs(2, 400, 400)};
    std::vector<std::uint8_t> outliers = {1, 0, 0};
    std::vector<double> staticness = {0.2, 0.9, 0.55};
    const auto out = cluster_expand(pts, outliers, staticness, 15.0, 3, theta, margin);
    CHECK(out == outliers);
  }
  SUBCASE("borderline point surrounded by outliers joins") {
    std::vector<PointObservation> pts;
    std::vector<std::uint8_t> outliers;
    std::vector<double> staticness;
    pts.push_back(obs(0, 100, 100));
    outliers.push_back(0);
    staticness.push_back(theta + margin / 2.0);
    for (int i = 0; i < 3; ++i) {
      pts.push_back(obs(1 + i, 100 + 3.0 * i, 102));
      outliers.push_back(1);
      staticness.push_back(0.1);
    }
    const auto out = cluster_expand(pts, outliers, staticness, 15.0, 3, theta, margin);
    CHECK(out[0] == 1);
  }
  SUBCASE("high staticness resists expansion") {
    std::vector<PointObservation> pts;
    std::vector<std::uint8_t> outliers;
    std::vector<double> staticness;
    pts.push_back(obs(0, 100, 100));
    outliers.push_back(0);
    staticness.push_back(1.0);
    for (int i = 0; i < 4; ++i) {
      pts.push_back(obs(1 + i, 101 + i, 101));
      outliers.push_back(1);
      staticness.push_back(0.1);
    }
    const auto out = cluster_expand(pts, outliers, staticness, 15.0, 3, theta, margin);
    CHECK(out[0] == 0);
  }
  SUBCASE("matches a brute-force oracle on a random instance") {
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<PointObservation> pts;
      std::vector<std::uint8_t> outliers;
      std::vector<double> staticness;
      for (int i = 0; i < 20; ++i) {
        pts.push_back(obs(i, rng.uniform(0, 60), rng.uniform(0, 60)));
        outliers.push_back(rng.uniform() < 0.4 ? 1 : 0);
        staticness.push_back(rng.uniform());
      }
      const double radius = rng.uniform(5, 25);
      const int min_k = 1 + static_cast<int>(rng.index(4));
      const auto got = cluster_expand(pts, outliers, staticness, radius, min_k, theta, margin);

      // Independent re-statement of the rule.
      std::vector<std::uint8_t> expected = outliers;
      for (int i = 0; i < 20; ++i) {
        if (outliers[i] || staticness[i] >= theta + margin) continue;
        int close = 0;
        for (int j = 0; j < 20; ++j) {
          if (i != j && outliers[j] &&
              (pts[i].pixel - pts[j].pixel).norm() <= radius) {
            ++close;
          }
        }
        if (close >= min_k) expected[i] = 1;
      }
      CHECK(got == expected);
      for (int i = 0; i < 20; ++i) {
        if (outliers[i]) CHECK(got[i] == 1);  // never un-flags
      }
    }
  }
}

TEST_CASE("frame filtering") {
  const auto policy = test_policy();
  FilterWeights weights;

  SUBCASE("empty frame") {
    TrackStore tracks;
    FrameContext ctx;
    const auto seg = pcr::mask::SegMask::empty(64, 64);
    ctx.seg = &seg;
    ctx.policy = &policy;
    ctx.weights = weights;
    ctx.image_width = 64;
    ctx.image_height = 64;
    const auto result = filter_frame({}, tracks, ctx);
    CHECK(result.scores.empty());
    CHECK(result.outliers.empty());
  }

  SUBCASE("full-confidence fast-dynamic mask flags everything") {
    const auto seg = uniform_mask(64, 64, 1.0f, 1);
    TrackStore tracks;
    FrameContext ctx;
    ctx.seg = &seg;
    ctx.policy = &policy;
    ctx.weights = weights;
    ctx.image_width = 64;
    ctx.image_height = 64;
    std::vector<PointObservation> pts;
    for (int i = 0; i < 20; ++i) pts.push_back(obs(i, 20.0 + i, 32.0));
    for (const auto& p : pts) tracks.observe(p);
    const auto result = filter_frame(pts, tracks, ctx);
    for (const auto flag : result.outliers) CHECK(flag == 1);
  }

  SUBCASE("slow-dynamic class flags through the vote") {
    const auto seg = uniform_mask(64, 64, 1.0f, 2);
    TrackStore tracks;
    FrameContext ctx;
    ctx.seg = &seg;
    ctx.policy = &policy;
    ctx.weights = weights;
    ctx.image_width = 64;
    ctx.image_height = 64;
    std::vector<PointObservation> pts = {obs(7, 30, 30)};
    tracks.observe(pts[0]);
    const auto result = filter_frame(pts, tracks, ctx);
    CHECK(result.outliers[0] == 1);  // s_seg > 0.7 evidence meets the 1-frame quota
  }

  SUBCASE("outliers are invariant to point order and worker count") {
    Rng rng(41);
    auto seg = pcr::mask::SegMask::empty(128, 128);
    for (int y = 40; y < 80; ++y) {
      for (int x = 40; x < 80; ++x) {
        seg.dynamic_confidence.at(x, y) = 0.9f;
        seg.class_map.at(x, y) = 1;
      }
    }
    std::vector<PointObservation> pts;
    for (int i = 0; i < 200; ++i) pts.push_back(obs(i, rng.uniform(0, 127), rng.uniform(0, 127)));

    const auto run = [&](const std::vector<PointObservation>& order, int workers) {
      TrackStore tracks;
      for (const auto& p : order) tracks.observe(p);
      FrameContext ctx;
      ctx.seg = &seg;
      ctx.policy = &policy;
      ctx.weights = weights;
      ctx.image_width = 128;
      ctx.image_height = 128;
      ctx.n_workers = workers;
      return filter_frame(order, tracks, ctx);
    };
    const auto reference = run(pts, 1);
    const auto threaded = run(pts, 4);
    REQUIRE(reference.outliers == threaded.outliers);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(reference.scores[i].staticness == threaded.scores[i].staticness);
      CHECK(reference.scores[i].s_seg == threaded.scores[i].s_seg);
    }

    std::vector<PointObservation> shuffled = pts;
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
    }
    const auto permuted = run(shuffled, 1);
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
      const auto track = shuffled[i].track_id;
      CHECK(permuted.outliers[i] == reference.outliers[track]);
    }
  }
}

TEST_CASE("block matching") {
  SUBCASE("recovers a known shift") {
    Rng rng(13);
    Grid<float> prev(64, 64, 0.0f);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) prev.at(x, y) = static_cast<float>(rng.uniform());
    }
    Grid<float> next(64, 64, 0.0f);
    const int dx = 3, dy = -2;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const int sx = std::clamp(x - dx, 0, 63);
        const int sy = std::clamp(y - dy, 0, 63);
        next.at(x, y) = prev.at(sx, sy);
      }
    }
    const auto match = block_match_displacement(prev, next, 32, 32, 5, 6);
    CHECK(match.confident);
    CHECK(match.dx == dx);
    CHECK(match.dy == dy);
  }
  SUBCASE("identical images yield zero displacement") {
    Rng rng(14);
    Grid<float> img(32, 32, 0.0f);
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
    const auto match = block_match_displacement(img, img, 16, 16, 4, 5);
    CHECK(match.confident);
    CHECK(match.dx == 0);
    CHECK(match.dy == 0);
  }
  SUBCASE("flat patches are flagged") {
    Grid<float> gray(32, 32, 0.5f);
    const auto match = block_match_displacement(gray, gray, 16, 16, 4, 5);
    CHECK_FALSE(match.confident);
    CHECK(match.dx == 0);
    CHECK(match.dy == 0);
  }
}

TEST_CASE("points file round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pcr_points_test";
  fs::create_directories(dir);
  const fs::path path = dir / "000004.txt";

  std::vector<PointObservation> pts;
  PointObservation a = obs(12, 100.25, 200.5, 4);
  a.point3d = Eigen::Vector3d(1.5, -2.25, 8.0);
  pts.push_back(a);
  pts.push_back(obs(13, 5.0, 6.0, 4));
  write_points_file(path, pts);

  const auto read = read_points_file(path, 4);
  REQUIRE(read.size() == 2);
  CHECK(read[0].track_id == 12);
  CHECK(read[0].pixel.x() == doctest::Approx(100.25));
  REQUIRE(read[0].point3d.has_value());
  CHECK(read[0].point3d->z() == doctest::Approx(8.0));
  CHECK_FALSE(read[1].point3d.has_value());
  CHECK(read[1].frame_id == 4);

  std::ofstream bad(path, std::ios::app);
  bad << "7 1.0\n";
  bad.close();
  try {
    read_points_file(path, 4);
    FAIL("expected a parse error");
  } catch (const pcr::ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  fs::remove_all(dir);
}

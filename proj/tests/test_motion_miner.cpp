#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "egoeq/motion.hpp"

using namespace egoeq;

namespace {

EgoPoseRecord rec(std::int64_t id, double t, std::vector<double> pose) {
  return {id, t, std::move(pose)};
}

std::vector<PoseDelta> deltas_1d(const std::vector<double>& values) {
  std::vector<PoseDelta> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.push_back({static_cast<std::int64_t>(i), static_cast<std::int64_t>(i) + 1,
                   {values[i]}, 0.1});
  }
  return out;
}

// --- independent oracle: exhaustive enumeration over all K^n assignments ---

struct Standardized {
  std::vector<std::vector<double>> pts;
};

Standardized standardize(const std::vector<PoseDelta>& deltas) {
  const std::size_t d = deltas.front().delta.size();
  const std::size_t n = deltas.size();
  std::vector<double> mean(d, 0.0), scale(d, 1.0);
  for (const auto& x : deltas) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += x.delta[k];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t k = 0; k < d; ++k) {
    double var = 0.0;
    for (const auto& x : deltas) var += (x.delta[k] - mean[k]) * (x.delta[k] - mean[k]);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  Standardized s;
  for (const auto& x : deltas) {
    std::vector<double> z(d);
    for (std::size_t k = 0; k < d; ++k) z[k] = (x.delta[k] - mean[k]) / scale[k];
    s.pts.push_back(std::move(z));
  }
  return s;
}

double brute_force_optimal_distortion(const std::vector<PoseDelta>& deltas,
                                      std::size_t k) {
  const Standardized st = standardize(deltas);
  const std::size_t n = st.pts.size();
  const std::size_t d = st.pts.front().size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> assign(n, 0);
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= k;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = c % k;
      c /= k;
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t t = 0; t < d; ++t) sums[assign[i]][t] += st.pts[i][t];
    }
    double dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < d; ++t) {
        const double c0 = sums[assign[i]][t] / static_cast<double>(counts[assign[i]]);
        dist += (st.pts[i][t] - c0) * (st.pts[i][t] - c0);
      }
    }
    best = std::min(best, dist);
  }
  return best;
}

}  // namespace

TEST_CASE("build_pairs: three frames, one pair inside the gap") {
  std::vector<EgoPoseRecord> stream{rec(0, 0.0, {0.0}), rec(1, 0.5, {1.0}),
                                    rec(2, 2.0, {2.0})};
  auto pairs = build_pairs(stream, 1.0);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].i == 0);
  CHECK(pairs[0].j == 1);
  CHECK(pairs[0].delta[0] == doctest::Approx(1.0));
  CHECK(pairs[0].gap_s == doctest::Approx(0.5));
}

TEST_CASE("build_pairs: gap smaller than the minimum spacing yields nothing") {
  std::vector<EgoPoseRecord> stream{rec(0, 0.0, {0.0}), rec(1, 0.5, {1.0})};
  CHECK(build_pairs(stream, 0.25).empty());
}

TEST_CASE("build_pairs: 11 uniform frames at 0.1s, gap 1.0 -> all 55 pairs") {
  std::vector<EgoPoseRecord> stream;
  for (int i = 0; i < 11; ++i) {
    stream.push_back(rec(i, 0.1 * i, {static_cast<double>(i)}));
  }
  CHECK(build_pairs(stream, 1.0).size() == 55);
}

TEST_CASE("build_pairs rejects unsorted streams") {
  std::vector<EgoPoseRecord> stream{rec(0, 1.0, {0.0}), rec(1, 0.5, {1.0})};
  CHECK_THROWS_AS(build_pairs(stream, 1.0), InputError);
}

TEST_CASE("kmeans: two well-separated 1-D groups recover their means") {
  auto deltas = deltas_1d({0.0, 0.1, 10.0, 10.1});
  MotionPatternModel m = kmeans(deltas, 2, 7);
  REQUIRE(m.cluster_count() == 2);
  std::vector<double> cs{m.centroids[0][0], m.centroids[1][0]};
  std::sort(cs.begin(), cs.end());
  CHECK(cs[0] == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(cs[1] == doctest::Approx(10.05).epsilon(1e-9));
}

TEST_CASE("kmeans: K equal to the distinct point count gives zero distortion") {
  auto deltas = deltas_1d({1.0, 2.0, 5.0, 9.0});
  MotionPatternModel m = kmeans(deltas, 4, 3);
  CHECK(kmeans_distortion(m, deltas) == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("kmeans: all-identical deltas with K=1 sit on the point") {
  auto deltas = deltas_1d({3.5, 3.5, 3.5});
  MotionPatternModel m = kmeans(deltas, 1, 5);
  CHECK(m.centroids[0][0] == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("kmeans rejects K above the distinct point count") {
  auto deltas = deltas_1d({1.0, 1.0, 2.0});
  CHECK_THROWS_AS(kmeans(deltas, 3, 1), InputError);
}

TEST_CASE("kmeans distortion equals the exhaustive optimum on small instances") {
  // the acceptance suite runs 100 trials; keep a quick spot check here
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + rng.below(5);   // 4..8 points
    const std::size_t k = 2 + rng.below(2);   // K in {2,3}
    const std::size_t dim = 1 + rng.below(2); // 1-D or 2-D
    std::vector<PoseDelta> deltas;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> v(dim);
      for (double& x : v) x = rng.uniform(-5.0, 5.0);
      deltas.push_back({static_cast<std::int64_t>(i),
                        static_cast<std::int64_t>(i) + 1, v, 0.1});
    }
    MotionPatternModel m = kmeans(deltas, k, derive_seed(1234, trial));
    const double got = kmeans_distortion(m, deltas);
    const double want = brute_force_optimal_distortion(deltas, k);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("retain_largest keeps the largest standardized centroids, ranked") {
  MotionPatternModel m;
  m.centroids = {{5.0}, {1.0}, {3.0}};
  m.retained = {0, 1, 2};
  m.standardization.mean = {0.0};
  m.standardization.scale = {1.0};
  MotionPatternModel r = retain_largest(m, 2);
  REQUIRE(r.pattern_count() == 2);
  CHECK(r.retained[0] == 0);  // norm 5
  CHECK(r.retained[1] == 2);  // norm 3
  // G = K keeps everything
  MotionPatternModel all = retain_largest(m, 3);
  CHECK(all.pattern_count() == 3);
}

TEST_CASE("assign_pattern: centroid hits, retention misses and hand distances") {
  MotionPatternModel m;
  m.centroids = {{0.05}, {10.05}};
  m.retained = {0, 1};
  m.standardization.mean = {0.0};
  m.standardization.scale = {1.0};

  PoseDelta at_centroid{0, 1, {10.05}, 0.1};
  CHECK(assign_pattern(m, at_centroid) == 2);

  PoseDelta near_zero{0, 1, {4.0}, 0.1};  // closer to 0.05 than 10.05
  CHECK(assign_pattern(m, near_zero) == 1);

  MotionPatternModel only_big = m;
  only_big.retained = {1};
  CHECK(!assign_pattern(only_big, near_zero).has_value());
  CHECK(assign_pattern(only_big, at_centroid) == 1);

  PoseDelta wrong_dim{0, 1, {1.0, 2.0}, 0.1};
  CHECK_THROWS_AS(assign_pattern(m, wrong_dim), InputError);
}

TEST_CASE("assignment idempotence: a centroid assigns to its own pattern") {
  auto deltas = deltas_1d({0.0, 0.2, 7.0, 7.3, -6.0, -6.1});
  MotionPatternModel m = retain_largest(kmeans(deltas, 3, 21), 3);
  for (std::size_t g = 1; g <= m.pattern_count(); ++g) {
    PoseDelta d{0, 1, m.pattern_centroid(static_cast<int>(g)), 0.1};
    CHECK(assign_pattern(m, d) == static_cast<int>(g));
  }
}

TEST_CASE("standardization invariance: uniform pose scaling keeps assignments") {
  Rng rng(4);
  std::vector<PoseDelta> deltas;
  for (int i = 0; i < 30; ++i) {
    deltas.push_back({i, i + 1, {rng.uniform(-2.0, 2.0), rng.uniform(-40.0, 40.0)}, 0.1});
  }
  MotionPatternModel m = retain_largest(kmeans(deltas, 3, 8), 2);
  std::vector<PoseDelta> scaled = deltas;
  for (auto& d : scaled) {
    for (double& v : d.delta) v *= 100.0;
  }
  MotionPatternModel ms = retain_largest(kmeans(scaled, 3, 8), 2);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    CHECK(assign_pattern(m, deltas[i]) == assign_pattern(ms, scaled[i]));
  }
}

TEST_CASE("declare_patterns bypasses clustering with declared ids") {
  MotionPatternModel m = declare_patterns({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(m.pattern_count() == 2);
  PoseDelta d{0, 1, {0.9, 0.1}, 0.1};
  CHECK(assign_pattern(m, d) == 1);
}

TEST_CASE("pose CSV round trip and error reporting") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "egoeq_pose_csv_test";
  fs::create_directories(dir);
  std::vector<EgoPoseRecord> stream{rec(0, 0.0, {0.25, -1.5}), rec(1, 0.1, {0.5, 2.0})};
  const std::string path = (dir / "poses.csv").string();
  write_pose_csv(path, stream);
  auto loaded = read_pose_csv(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].pose[1] == 2.0);  // %.17g round trip is exact
  CHECK(loaded[0].pose[0] == 0.25);

  const std::string bad = (dir / "bad.csv").string();
  {
    std::ofstream out(bad);
    out << "frame_id,time_s,y1\n0,0.0,1.0\n1,oops,2.0\n";
  }
  CHECK_THROWS_WITH_AS(read_pose_csv(bad), doctest::Contains(":3"), InputError);
  fs::remove_all(dir);
}

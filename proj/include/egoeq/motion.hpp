#ifndef EGOEQ_MOTION_HPP
#define EGOEQ_MOTION_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egoeq/common.hpp"

namespace egoeq {

// Per-frame motor signal attached to a video frame.
struct EgoPoseRecord {
  std::int64_t frame_id = 0;
  double time_s = 0.0;
  std::vector<double> pose;
};

// Pairwise pose difference pose_j - pose_i for a temporally close pair.
struct PoseDelta {
  std::int64_t i = 0, j = 0;
  std::vector<double> delta;
  double gap_s = 0.0;
};

struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;  // per-dim stddev, 1 where degenerate

  std::vector<double> apply(std::span<const double> x) const;
};

// K-means centroids over pose deltas. Centroids are stored in original delta
// units; distances and the "largest motion" ranking use standardized space.
// Pattern id g in {1..G} indexes `retained` (descending standardized norm).
struct MotionPatternModel {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> retained;
  Standardization standardization;

  std::size_t cluster_count() const { return centroids.size(); }
  std::size_t pattern_count() const { return retained.size(); }
  std::size_t pose_dim() const { return centroids.empty() ? 0 : centroids.front().size(); }
  const std::vector<double>& pattern_centroid(int pattern) const;
};

// All ordered pairs (i before j) with time gap in (0, max_gap_s]. The stream
// must be sorted by time.
std::vector<PoseDelta> build_pairs(std::span<const EgoPoseRecord> stream,
                                   double max_gap_s);

struct KmeansOptions {
  std::size_t max_iterations = 500;
  std::size_t restarts = 10;  // best-of-n k-means++ seedings
};

// Lloyd's algorithm on per-dimension standardized deltas, k-means++ seeding
// driven by the seed. Deterministic; empty clusters are re-seeded at the
// farthest point. Initially every centroid is retained.
MotionPatternModel kmeans(const std::vector<PoseDelta>& deltas, std::size_t k,
                          std::uint64_t seed, const KmeansOptions& opts = {});

// Keep the G centroids with the largest standardized norm, ranked descending;
// pattern ids 1..G follow that ranking.
MotionPatternModel retain_largest(MotionPatternModel model, std::size_t g);

// Patterns declared directly from known discrete steps (turntable-style
// datasets); bypasses clustering. Pattern ids follow declaration order.
MotionPatternModel declare_patterns(std::vector<std::vector<double>> deltas);

// Nearest centroid among all clusters (standardized distance); returns the
// pattern id if that centroid is retained, otherwise nullopt. Exact distance
// ties prefer the lowest pattern id.
std::optional<int> assign_pattern(const MotionPatternModel& model,
                                  const PoseDelta& delta);

// Sum of squared standardized distances to the nearest centroid.
double kmeans_distortion(const MotionPatternModel& model,
                         const std::vector<PoseDelta>& deltas);

// Pose stream CSV: header `frame_id,time_s,y1,...,yd`, one row per frame.
std::vector<EgoPoseRecord> read_pose_csv(const std::string& path);
void write_pose_csv(const std::string& path, std::span<const EgoPoseRecord> stream);

}  // namespace egoeq

#endif

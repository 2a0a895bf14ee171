#include "egoeq/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace egoeq {

std::vector<double> Standardization::apply(std::span<const double> x) const {
  require(x.size() == mean.size(), "standardization dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / scale[i];
  return out;
}

const std::vector<double>& MotionPatternModel::pattern_centroid(int pattern) const {
  require(pattern >= 1 && static_cast<std::size_t>(pattern) <= retained.size(),
          "pattern id out of range");
  return centroids[retained[static_cast<std::size_t>(pattern) - 1]];
}

std::vector<PoseDelta> build_pairs(std::span<const EgoPoseRecord> stream,
                                   double max_gap_s) {
  require(max_gap_s > 0.0, "build_pairs: max_gap_s must be positive");
  std::vector<PoseDelta> pairs;
  for (std::size_t i = 0; i + 1 < stream.size(); ++i) {
    require(stream[i + 1].time_s > stream[i].time_s,
            "build_pairs: stream must be sorted by strictly increasing time (frames " +
                std::to_string(stream[i].frame_id) + "," +
                std::to_string(stream[i + 1].frame_id) + ")");
    require(stream[i].pose.size() == stream[i + 1].pose.size(),
            "build_pairs: pose dimension must be constant");
  }
  for (std::size_t i = 0; i < stream.size(); ++i) {
    for (std::size_t j = i + 1; j < stream.size(); ++j) {
      const double gap = stream[j].time_s - stream[i].time_s;
      if (gap > max_gap_s) break;
      PoseDelta d;
      d.i = stream[i].frame_id;
      d.j = stream[j].frame_id;
      d.gap_s = gap;
      d.delta.resize(stream[i].pose.size());
      for (std::size_t k = 0; k < d.delta.size(); ++k) {
        d.delta[k] = stream[j].pose[k] - stream[i].pose[k];
      }
      pairs.push_back(std::move(d));
    }
  }
  return pairs;
}

namespace {

Standardization fit_standardization(const std::vector<std::vector<double>>& rows) {
  const std::size_t d = rows.front().size();
  Standardization s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += r[k];
  }
  for (double& m : s.mean) m /= static_cast<double>(rows.size());
  for (std::size_t k = 0; k < d; ++k) {
    double var = 0.0;
    for (const auto& r : rows) {
      const double c = r[k] - s.mean[k];
      var += c * c;
    }
    var /= static_cast<double>(rows.size());
    const double sd = std::sqrt(var);
    s.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct LloydResult {
  std::vector<std::vector<double>> centroids;  // standardized space
  double distortion = std::numeric_limits<double>::infinity();
};

LloydResult lloyd_once(const std::vector<std::vector<double>>& pts, std::size_t k,
                       Rng& rng, std::size_t max_iterations) {
  const std::size_t n = pts.size();
  // k-means++ seeding
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  centers.push_back(pts[rng.below(n)]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(pts[i], c));
      d2[i] = best;
      total += best;
    }
    require(total > 0.0, "kmeans: fewer distinct points than clusters");
    double u = rng.uniform01() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(pts[pick]);
  }

  std::vector<std::size_t> assign(n, 0);
  std::vector<std::size_t> prev(n, SIZE_MAX);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    // assignment step; ties to the lowest centroid index
    for (std::size_t i = 0; i < n; ++i) {
      double best = sq_dist(pts[i], centers[0]);
      std::size_t arg = 0;
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(pts[i], centers[c]);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      assign[i] = arg;
    }
    if (assign == prev) break;
    prev = assign;
    // update step
    const std::size_t dim = pts.front().size();
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t dd = 0; dd < dim; ++dd) sums[assign[i]][dd] += pts[i][dd];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // re-seed the empty cluster at the farthest point
        double far_d = -1.0;
        std::size_t far_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(pts[i], centers[assign[i]]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        centers[c] = pts[far_i];
        prev.assign(n, SIZE_MAX);  // force another assignment round
      } else {
        for (std::size_t dd = 0; dd < dim; ++dd) {
          centers[c][dd] = sums[c][dd] / static_cast<double>(counts[c]);
        }
      }
    }
  }

  LloydResult res;
  res.centroids = std::move(centers);
  res.distortion = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : res.centroids) best = std::min(best, sq_dist(pts[i], c));
    res.distortion += best;
  }
  return res;
}

double standardized_norm(const MotionPatternModel& m, std::size_t centroid_idx) {
  const auto z = m.standardization.apply(m.centroids[centroid_idx]);
  double s = 0.0;
  for (double v : z) s += v * v;
  return std::sqrt(s);
}

}  // namespace

MotionPatternModel kmeans(const std::vector<PoseDelta>& deltas, std::size_t k,
                          std::uint64_t seed, const KmeansOptions& opts) {
  require(k >= 1, "kmeans: k must be >= 1");
  require(!deltas.empty(), "kmeans: no deltas");
  std::vector<std::vector<double>> raw;
  raw.reserve(deltas.size());
  for (const auto& d : deltas) raw.push_back(d.delta);
  const std::set<std::vector<double>> distinct(raw.begin(), raw.end());
  require(distinct.size() >= k,
          "kmeans: k=" + std::to_string(k) + " exceeds distinct deltas (" +
              std::to_string(distinct.size()) + ")");

  Standardization st = fit_standardization(raw);
  std::vector<std::vector<double>> pts;
  pts.reserve(raw.size());
  for (const auto& r : raw) pts.push_back(st.apply(r));

  LloydResult best;
  const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, r));
    LloydResult res = lloyd_once(pts, k, rng, opts.max_iterations);
    if (res.distortion < best.distortion) best = std::move(res);
  }

  MotionPatternModel model;
  model.standardization = st;
  model.centroids.reserve(k);
  for (const auto& c : best.centroids) {
    std::vector<double> orig(c.size());
    for (std::size_t dd = 0; dd < c.size(); ++dd) {
      orig[dd] = c[dd] * st.scale[dd] + st.mean[dd];
    }
    model.centroids.push_back(std::move(orig));
  }
  model.retained.resize(k);
  std::iota(model.retained.begin(), model.retained.end(), 0);
  return model;
}

MotionPatternModel retain_largest(MotionPatternModel model, std::size_t g) {
  require(g >= 1 && g <= model.cluster_count(),
          "retain_largest: G must be in [1, K]");
  std::vector<std::size_t> order(model.cluster_count());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> norms(model.cluster_count());
  for (std::size_t i = 0; i < norms.size(); ++i) norms[i] = standardized_norm(model, i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return norms[a] > norms[b];
  });
  model.retained.assign(order.begin(), order.begin() + g);
  return model;
}

MotionPatternModel declare_patterns(std::vector<std::vector<double>> deltas) {
  require(!deltas.empty(), "declare_patterns: at least one pattern required");
  const std::size_t d = deltas.front().size();
  for (const auto& c : deltas) {
    require(c.size() == d, "declare_patterns: inconsistent pattern dimensions");
  }
  MotionPatternModel model;
  model.centroids = std::move(deltas);
  model.retained.resize(model.centroids.size());
  std::iota(model.retained.begin(), model.retained.end(), 0);
  model.standardization.mean.assign(d, 0.0);
  model.standardization.scale.assign(d, 1.0);
  return model;
}

std::optional<int> assign_pattern(const MotionPatternModel& model,
                                  const PoseDelta& delta) {
  require(!model.centroids.empty(), "assign_pattern: model not fitted");
  require(delta.delta.size() == model.pose_dim(),
          "assign_pattern: delta dimension mismatch");
  const auto z = model.standardization.apply(delta.delta);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    best = std::min(best, sq_dist(z, model.standardization.apply(model.centroids[c])));
  }
  // exact ties prefer the lowest pattern id, then non-retained centroids
  for (std::size_t p = 0; p < model.retained.size(); ++p) {
    const auto zc = model.standardization.apply(model.centroids[model.retained[p]]);
    if (sq_dist(z, zc) == best) return static_cast<int>(p) + 1;
  }
  return std::nullopt;
}

double kmeans_distortion(const MotionPatternModel& model,
                         const std::vector<PoseDelta>& deltas) {
  double total = 0.0;
  std::vector<std::vector<double>> zc;
  zc.reserve(model.centroids.size());
  for (const auto& c : model.centroids) zc.push_back(model.standardization.apply(c));
  for (const auto& d : deltas) {
    const auto z = model.standardization.apply(d.delta);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : zc) best = std::min(best, sq_dist(z, c));
    total += best;
  }
  return total;
}

std::vector<EgoPoseRecord> read_pose_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open pose CSV: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "pose CSV is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line.rfind("frame_id,time_s,y1", 0) == 0,
          "pose CSV header must start with 'frame_id,time_s,y1': " + path);
  const std::size_t dims = static_cast<std::size_t>(
      std::count(line.begin(), line.end(), ',') - 1);
  std::vector<EgoPoseRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    EgoPoseRecord rec;
    try {
      require(static_cast<bool>(std::getline(ss, cell, ',')), "missing frame_id");
      rec.frame_id = std::stoll(cell);
      require(static_cast<bool>(std::getline(ss, cell, ',')), "missing time_s");
      rec.time_s = std::stod(cell);
      while (std::getline(ss, cell, ',')) rec.pose.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw InputError("pose CSV parse error at " + path + ":" +
                       std::to_string(line_no));
    }
    require(rec.pose.size() == dims, "pose CSV row has wrong arity at " + path + ":" +
                                         std::to_string(line_no));
    out.push_back(std::move(rec));
  }
  return out;
}

void write_pose_csv(const std::string& path, std::span<const EgoPoseRecord> stream) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write pose CSV: " + path);
  const std::size_t d = stream.empty() ? 1 : stream.front().pose.size();
  out << "frame_id,time_s";
  for (std::size_t k = 1; k <= d; ++k) out << ",y" << k;
  out << "\n";
  char buf[64];
  for (const auto& rec : stream) {
    out << rec.frame_id;
    std::snprintf(buf, sizeof buf, ",%.17g", rec.time_s);
    out << buf;
    for (double v : rec.pose) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << "\n";
  }
  require(out.good(), "failed writing pose CSV: " + path);
}

}  // namespace egoeq

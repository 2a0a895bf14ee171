#ifndef EGOEQ_EVALUATOR_HPP
#define EGOEQ_EVALUATOR_HPP

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egoeq/losses.hpp"
#include "egoeq/network.hpp"

namespace egoeq {

// --- equivariance maps and the normalized error -----------------------------

struct AffineFit {
  AffineMap map;
  bool ridge_flagged = false;  // Gram matrix was singular, 1e-8 ridge applied
  double residual = 0.0;       // sum of squared residuals at the solution
  std::size_t n_pairs = 0;
};

// Least-squares affine map minimizing sum_r ||features_i[r] - M features_j[r]
// - b||^2 via the normal equations (no ridge unless singular). Needs at least
// D+1 pairs. Callers choose the direction by argument order: (before, after)
// fits the map used by the rho measurement; (after, before) fits the
// prediction map used for next-view features.
AffineFit fit_equiv_map(const Tensor& features_i, const Tensor& features_j);

struct RhoResult {
  std::optional<double> value;  // empty when every pair was skipped
  std::size_t used = 0;
  std::size_t skipped = 0;  // near-zero denominators
};

// Mean over pairs of ||f_i - M f_j - b|| / ||f_i - f_j||; denominators below
// 1e-12 are skipped and counted.
RhoResult rho(const Tensor& features_i, const Tensor& features_j, const AffineMap& map);

// Affine composition in application order: the rightmost map applies first,
// compose([A, B]) x = A(B(x)).
AffineMap compose_maps(std::span<const AffineMap> maps);

struct MotionRho {
  std::string motion;
  bool composite = false;
  RhoResult learned;   // rho under the trained map, when one exists
  RhoResult fitted;    // rho under the least-squares recovered map
  std::size_t n_fit = 0, n_measure = 0;
  bool ridge_flagged = false;
};

// --- recognition -------------------------------------------------------------

// Top-k accuracy in percent; logit ties broken toward the lowest class index.
double topk_accuracy(const Network& net, const ClassifierHead& head,
                     const std::vector<Tensor>& frames,
                     std::span<const std::size_t> indices, std::span<const int> labels,
                     std::size_t top_k);

// Chance-level row: 100 * k / C (the analytic random baseline).
double chance_accuracy(std::size_t classes, std::size_t top_k);

struct AccuracySummary {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample stddev / sqrt(R)
  std::vector<double> runs;
};

AccuracySummary summarize_runs(std::span<const double> accuracies);

// --- slowness AUROC -----------------------------------------------------------

struct RocReport {
  std::vector<double> thresholds;
  std::vector<double> tpr, fpr;
  std::optional<double> auroc;  // empty when labels are one-class
  std::size_t positives = 0, negatives = 0;
};

// ROC of score (higher = predicted positive) against binary labels,
// trapezoidal AUROC with tied scores grouped.
RocReport roc_from_scores(std::span<const double> scores, std::span<const char> labels);

// Scores are -distance between paired features; labels are 1(gap <= T).
RocReport slowness_auroc(const Tensor& zi, const Tensor& zj,
                         std::span<const double> gaps, double T, PairDistance dist);

// --- analogy retrieval ---------------------------------------------------------

struct AnalogyNeighbor {
  std::size_t pair_index = 0;
  double distance = 0.0;
};

struct AnalogyResult {
  std::vector<AnalogyNeighbor> feature_neighbors;  // by ||d_kl - d_ij|| in z-space
  std::vector<AnalogyNeighbor> pixel_neighbors;    // same metric in pixel space
  bool truncated = false;  // K exceeded the candidate count
};

// Nearest candidate pairs to the query pair in pairwise-difference space.
// Candidates matching the query exactly (same index pair) are excluded.
AnalogyResult analogy_nn(const Tensor& features, const std::vector<Tensor>& frames,
                         std::span<const std::pair<std::size_t, std::size_t>> candidates,
                         std::pair<std::size_t, std::size_t> query, std::size_t k);

}  // namespace egoeq

#endif

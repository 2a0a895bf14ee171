#ifndef EGOEQ_NBV_HPP
#define EGOEQ_NBV_HPP

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "egoeq/evaluator.hpp"
#include "egoeq/losses.hpp"

namespace egoeq {

// k-NN classifier over a fixed bank of vectors; probabilities are the
// normalized class-vote histogram of the k nearest neighbors, distance ties
// broken by lowest bank index.
struct KnnClassifier {
  std::size_t k = 25;
  std::size_t classes = 0;
  Tensor bank;              // (n, dim)
  std::vector<int> labels;  // one per bank row
  bool k_downgraded = false;

  std::size_t dim() const { return bank.empty() ? 0 : bank.dim(1); }
};

// Default k is 25; banks with fewer than 25 examples in some class fall back
// to k=5 (flagged in the report) unless the caller pins k explicitly.
std::size_t resolve_knn_k(std::optional<std::size_t> requested,
                          std::size_t min_class_bank, bool* downgraded);

// Pair classifier for motion g: bank rows are concatenations [z(x), z(gx)]
// of length 2D.
struct PairClassifier {
  int motion = 0;
  KnnClassifier knn;
};

KnnClassifier build_knn_classifier(const Tensor& bank, std::span<const int> labels,
                                   std::size_t classes,
                                   std::optional<std::size_t> k);

PairClassifier build_pair_classifier(const Tensor& feats_x, const Tensor& feats_gx,
                                     std::span<const int> labels, std::size_t classes,
                                     std::optional<std::size_t> k, int motion);

std::vector<double> predict_class_probs(const KnnClassifier& clf,
                                        std::span<const double> query);

// Natural-log Shannon entropy with 0*log(0) = 0.
double entropy(std::span<const double> probs);

// One candidate next view: its id, the forward prediction map (z(x0) ->
// predicted z(g x0)) and the pair classifier for that motion.
struct NbvCandidate {
  int view = 0;
  AffineMap predict_map;
  PairClassifier classifier;
};

struct ViewSelection {
  int view = 0;
  std::vector<double> entropies;  // aligned with the candidate list
};

// argmin over candidates of the entropy of C_g([z(x0), M'_g z(x0)]);
// ties go to the lowest view id.
ViewSelection select_view(std::span<const double> z0,
                          std::span<const NbvCandidate> candidates);

struct NbvSampleOutcome {
  int selected_view = 0;
  std::vector<double> entropies;
  bool correct_1view = false;
  bool correct_2view = false;
  bool skipped = false;  // selected view unavailable for this sample
};

struct NbvOutcome {
  double acc_1view = 0.0;  // percent
  double acc_2view = 0.0;  // percent
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::vector<NbvSampleOutcome> samples;
};

// Per test sample: feats0 row = z(x0); label; actual_view(sample, view)
// returns the feature of the frame observed after taking `view`, or nullopt
// when the dataset cannot supply it (sample is then skipped and counted).
// acc_1view scores single_view_knn on z(x0); acc_2view scores the selected
// view's pair classifier on [z(x0), z(g* x0)].
NbvOutcome evaluate_nbv(
    const Tensor& feats0, std::span<const int> labels,
    const KnnClassifier& single_view_knn, std::span<const NbvCandidate> candidates,
    const std::function<std::optional<std::vector<double>>(std::size_t, int)>&
        actual_view);

}  // namespace egoeq

#endif

#ifndef EGOEQ_TRAINER_HPP
#define EGOEQ_TRAINER_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egoeq/dataset.hpp"
#include "egoeq/losses.hpp"
#include "egoeq/motion.hpp"
#include "egoeq/optimizer.hpp"

namespace egoeq {

enum class TrainMethod { Clsnet, Temporal, Drlim, Equiv, EquivDrlim };

TrainMethod parse_method(const std::string& name);
std::string method_name(TrainMethod m);

struct TrainConfig {
  double lambda_equiv = 1.0;
  double lambda_slow = 0.0;
  double margin_equiv = 1.0;       // delta in the per-motion contrastive loss
  double margin_slow = 1.0;
  double temporal_window_s = 0.2;  // T
  double learning_rate = 0.01;
  std::size_t batch_size_cls = 16;
  std::size_t batch_size_pairs = 16;
  std::size_t epochs = 10;
  double neg_ratio = 3.0;          // negatives per positive; 0 = naive objective
  std::uint64_t seed = 0;
  double momentum = 0.9;

  void validate() const;
};

// Training tuple <(x_i, x_j), p_ij>; indices into a frame bank.
struct EquivSample {
  std::size_t xi = 0, xj = 0;
  int pattern = 0;
};

struct LabeledSample {
  std::size_t x = 0;
  int label = 0;
};

// Frame pair with its time gap; neighbor flags are derived against T.
struct TimedPair {
  std::size_t i = 0, j = 0;
  double gap_s = 0.0;
};

// Pose-mined positives: all build_pairs pairs whose pattern is retained.
std::vector<EquivSample> mine_equiv_samples(const Dataset& ds,
                                            const MotionPatternModel& model,
                                            double max_gap_s);

// Temporal pairs for the slowness baselines: every pair with gap <= T plus
// neg_per_pos random pairs with gap > T per positive.
std::vector<TimedPair> build_timed_pairs(const Dataset& ds, double T,
                                         double neg_per_pos, std::uint64_t seed);

std::vector<LabeledSample> pick_labeled_subset(const Dataset& ds,
                                               std::size_t per_class,
                                               std::uint64_t seed);

// --- materialized batches -------------------------------------------------

struct EquivBatch {
  Tensor xi, xj;
  std::vector<int> map_id;
  std::vector<char> positive;
  std::size_t rows() const { return map_id.size(); }
};

struct SlownessBatch {
  Tensor xi, xj;
  std::vector<char> neighbor;
};

struct EquivRow {
  std::size_t xi, xj;
  int map_id;
  char positive;
};

EquivBatch make_equiv_batch(const std::vector<Tensor>& frames,
                            std::span<const EquivRow> rows,
                            const std::vector<std::size_t>& input_shape);
SlownessBatch make_slowness_batch(const std::vector<Tensor>& frames,
                                  std::span<const TimedPair> pairs, double T,
                                  const std::vector<std::size_t>& input_shape);

// --- loss surface ----------------------------------------------------------

// Scalar L_e = sum over rows of d_g(M_g z(x_i), z(x_j), p_ij) (Siamese
// forward of the one shared network on both stacks).
double equiv_loss(const Network& net, const EquivMapSet& maps, const EquivBatch& batch,
                  double delta);

double slowness_loss(const Network& net, const SlownessBatch& batch, PairDistance dist,
                     double margin);

struct JointLossParts {
  double total = 0.0, cls = 0.0, equiv = 0.0, slow = 0.0;
};

struct ModelGrads {
  Gradients net;
  std::vector<AffineMap> maps;
  Tensor head_weight, head_bias;
};

// Full objective L_c + lambda_e*L_e + lambda_s*L_slow over optional parts;
// pass grads to collect exact gradients w.r.t. theta, every M_g and W.
// normalize_pairs divides each pair head by its row count (the mini-batch
// mean estimator used by the training loops); the default keeps the plain
// sum of the per-pair contrastive terms.
JointLossParts joint_loss_parts(const Network& net, const EquivMapSet* maps,
                                const ClassifierHead* head,
                                const Tensor* labeled_images,
                                std::span<const int> labels, const EquivBatch* pairs,
                                const SlownessBatch* slow_pairs, double lambda_equiv,
                                double lambda_slow, double delta_equiv,
                                double margin_slow, PairDistance slow_dist,
                                ModelGrads* grads, bool normalize_pairs = false);

// Convenience scalar form of the joint objective (classifier + equiv parts).
double joint_loss(const Network& net, const EquivMapSet& maps,
                  const ClassifierHead& head, const Tensor& labeled_images,
                  std::span<const int> labels, const EquivBatch& pairs, double lambda,
                  double delta);

// --- training loops ---------------------------------------------------------

struct TraceRow {
  std::uint64_t iteration = 0;
  double total = 0.0, cls = 0.0, equiv = 0.0;
};

struct TrainResult {
  std::vector<TraceRow> trace;        // one row per iteration
  std::vector<double> epoch_mean_loss;
  std::uint64_t iterations = 0;
};

// Mini-batch Nesterov SGD on L_e alone; negatives resampled each epoch at
// neg_ratio per positive. Both Siamese stacks read the same Network value.
TrainResult train_unsupervised(Network& net, EquivMapSet& maps,
                               const std::vector<Tensor>& frames,
                               const std::vector<EquivSample>& positives,
                               const TrainConfig& cfg);

// Unsupervised slowness training (temporal / drlim baselines without labels).
TrainResult train_slowness(Network& net, const std::vector<Tensor>& frames,
                           const std::vector<TimedPair>& pairs, PairDistance dist,
                           const TrainConfig& cfg);

// Joint objective of the selected method. The classification stack shares the
// identical Network value with the Siamese stacks. Pair streams are only
// consumed by methods that use them, so a clsnet run and a lambda=0 run are
// bitwise identical under one seed.
TrainResult train_joint(Network& net, EquivMapSet* maps, ClassifierHead& head,
                        const std::vector<Tensor>& frames,
                        const std::vector<LabeledSample>& labeled,
                        const std::vector<EquivSample>& equiv_positives,
                        const std::vector<TimedPair>& timed_pairs, TrainMethod method,
                        const TrainConfig& cfg);

// --- probes ------------------------------------------------------------------

// Features for the given frames, batched forward, no tape.
Tensor compute_features(const Network& net, const std::vector<Tensor>& frames,
                        std::span<const std::size_t> indices);
Tensor compute_features_all(const Network& net, const std::vector<Tensor>& frames);

double mean_feature_norm(const Network& net, const std::vector<Tensor>& frames,
                         std::span<const std::size_t> indices);

void write_trace_csv(const std::string& path, std::span<const TraceRow> trace);

}  // namespace egoeq

#endif

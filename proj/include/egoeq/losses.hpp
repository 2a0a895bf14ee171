#ifndef EGOEQ_LOSSES_HPP
#define EGOEQ_LOSSES_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "egoeq/network.hpp"

namespace egoeq {

// Affine map on feature space: y = W x + b, W is (D,D), b is (D).
struct AffineMap {
  Tensor weight;
  Tensor bias;

  static AffineMap identity(std::size_t dim);
  std::size_t dim() const { return bias.size(); }
  std::vector<double> apply(std::span<const double> x) const;
};

// One learnable equivariance map per motion pattern g in {1..G}.
struct EquivMapSet {
  std::vector<AffineMap> maps;  // maps[g-1]

  std::size_t count() const { return maps.size(); }
  std::size_t dim() const { return maps.empty() ? 0 : maps.front().dim(); }
  const AffineMap& map(int pattern) const;
  AffineMap& map(int pattern);
};

// Identity plus Xavier-scaled uniform noise; deterministic under seed.
EquivMapSet init_equiv_maps(std::size_t patterns, std::size_t dim, std::uint64_t seed);

// Softmax classifier: logits_c = sum_d z_d W(d,c) + b_c. W is (D,C).
struct ClassifierHead {
  Tensor weight;
  Tensor bias;

  std::size_t feature_dim() const { return weight.empty() ? 0 : weight.dim(0); }
  std::size_t classes() const { return bias.size(); }
  std::vector<double> logits(std::span<const double> z) const;
};

ClassifierHead init_classifier(std::size_t feature_dim, std::size_t classes,
                               std::uint64_t seed);

enum class PairDistance { L1, L2 };

// Margin contrastive loss: positive pairs pay d(a,b), negative pairs pay
// max(delta - d(a,b), 0).
double contrastive_loss(std::span<const double> a, std::span<const double> b,
                        bool is_positive, double delta,
                        PairDistance dist = PairDistance::L2);

// Same, accumulating d(loss)/da and d(loss)/db into ga/gb (may be empty spans
// to skip). Subgradient 0 is used at d(a,b)=0 and at the hinge corner.
double contrastive_loss_backward(std::span<const double> a, std::span<const double> b,
                                 bool is_positive, double delta, PairDistance dist,
                                 std::span<double> ga, std::span<double> gb);

// Stabilized softmax cross-entropy, mean over the batch.
double softmax_loss(const ClassifierHead& head, const Tensor& features,
                    std::span<const int> labels);

// Adds gradients w.r.t. features, W and bias (buffers must be pre-sized).
double softmax_loss_backward(const ClassifierHead& head, const Tensor& features,
                             std::span<const int> labels, Tensor& dfeatures,
                             Tensor& dweight, Tensor& dbias);

// Equivariance head over paired features. Row r exercises map map_id[r] with
// pair (zi.row(r), zj.row(r)); positive[r] says whether the pair's own pattern
// equals that map. Loss is the sum over rows of
//   contrastive(M_g zi + b_g, zj, positive, delta).
// Gradient buffers may be null to skip.
double equiv_head_loss(const EquivMapSet& maps, const Tensor& zi, const Tensor& zj,
                       std::span<const int> map_id, std::span<const char> positive,
                       double delta, Tensor* dzi, Tensor* dzj,
                       std::vector<AffineMap>* dmaps);

// Slowness head: sum over rows of contrastive(zi, zj, neighbor, margin) with
// the configured distance (L1 for the temporal variant, L2 for drlim).
double slowness_head_loss(const Tensor& zi, const Tensor& zj,
                          std::span<const char> neighbor, double margin,
                          PairDistance dist, Tensor* dzi, Tensor* dzj);

std::vector<AffineMap> zero_map_grads(const EquivMapSet& maps);

}  // namespace egoeq

#endif

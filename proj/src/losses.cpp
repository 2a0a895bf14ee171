#include "egoeq/losses.hpp"

#include <cmath>

namespace egoeq {

AffineMap AffineMap::identity(std::size_t dim) {
  AffineMap m;
  m.weight = Tensor({dim, dim});
  m.bias = Tensor({dim});
  for (std::size_t i = 0; i < dim; ++i) m.weight.at2(i, i) = 1.0;
  return m;
}

std::vector<double> AffineMap::apply(std::span<const double> x) const {
  const std::size_t d = dim();
  require(x.size() == d, "affine map applied to vector of wrong length");
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double* wrow = weight.data() + i * d;
    double acc = bias[i];
    for (std::size_t j = 0; j < d; ++j) acc += wrow[j] * x[j];
    y[i] = acc;
  }
  return y;
}

const AffineMap& EquivMapSet::map(int pattern) const {
  require(pattern >= 1 && static_cast<std::size_t>(pattern) <= maps.size(),
          "pattern id out of range: " + std::to_string(pattern));
  return maps[static_cast<std::size_t>(pattern) - 1];
}

AffineMap& EquivMapSet::map(int pattern) {
  require(pattern >= 1 && static_cast<std::size_t>(pattern) <= maps.size(),
          "pattern id out of range: " + std::to_string(pattern));
  return maps[static_cast<std::size_t>(pattern) - 1];
}

EquivMapSet init_equiv_maps(std::size_t patterns, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  // identity prior with a tenth of the Xavier bound as symmetry-breaking noise;
  // full-strength noise buries the prior and invites per-motion collapse
  const double b = 0.1 * xavier_bound(dim, dim);
  EquivMapSet set;
  set.maps.reserve(patterns);
  for (std::size_t g = 0; g < patterns; ++g) {
    AffineMap m = AffineMap::identity(dim);
    for (std::size_t j = 0; j < m.weight.size(); ++j) m.weight[j] += rng.uniform(-b, b);
    set.maps.push_back(std::move(m));
  }
  return set;
}

std::vector<double> ClassifierHead::logits(std::span<const double> z) const {
  const std::size_t d = feature_dim(), c = classes();
  require(z.size() == d, "classifier input length mismatch");
  std::vector<double> out(bias.data(), bias.data() + c);
  for (std::size_t i = 0; i < d; ++i) {
    const double zi = z[i];
    const double* wrow = weight.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) out[j] += zi * wrow[j];
  }
  return out;
}

ClassifierHead init_classifier(std::size_t feature_dim, std::size_t classes,
                               std::uint64_t seed) {
  Rng rng(seed);
  ClassifierHead head;
  head.weight = Tensor({feature_dim, classes});
  head.bias = Tensor({classes});
  const double b = xavier_bound(feature_dim, classes);
  for (std::size_t j = 0; j < head.weight.size(); ++j) head.weight[j] = rng.uniform(-b, b);
  return head;
}

namespace {

double pair_distance(std::span<const double> a, std::span<const double> b,
                     PairDistance dist) {
  return dist == PairDistance::L2 ? l2_distance(a, b) : l1_distance(a, b);
}

// Accumulates d(d(a,b))/da scaled by `scale` into ga, and -that into gb.
void add_distance_grad(std::span<const double> a, std::span<const double> b,
                       PairDistance dist, double d, double scale,
                       std::span<double> ga, std::span<double> gb) {
  if (dist == PairDistance::L2) {
    if (d <= 0.0) return;  // subgradient 0 at coincident points
    const double s = scale / d;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = (a[i] - b[i]) * s;
      if (!ga.empty()) ga[i] += diff;
      if (!gb.empty()) gb[i] -= diff;
    }
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[i];
      const double sg = diff > 0.0 ? scale : (diff < 0.0 ? -scale : 0.0);
      if (!ga.empty()) ga[i] += sg;
      if (!gb.empty()) gb[i] -= sg;
    }
  }
}

}  // namespace

double contrastive_loss(std::span<const double> a, std::span<const double> b,
                        bool is_positive, double delta, PairDistance dist) {
  require(a.size() == b.size(), "contrastive_loss: vector length mismatch");
  require(delta > 0.0, "contrastive_loss: margin must be positive");
  const double d = pair_distance(a, b, dist);
  return is_positive ? d : std::max(delta - d, 0.0);
}

double contrastive_loss_backward(std::span<const double> a, std::span<const double> b,
                                 bool is_positive, double delta, PairDistance dist,
                                 std::span<double> ga, std::span<double> gb) {
  require(a.size() == b.size(), "contrastive_loss: vector length mismatch");
  require(delta > 0.0, "contrastive_loss: margin must be positive");
  const double d = pair_distance(a, b, dist);
  if (is_positive) {
    add_distance_grad(a, b, dist, d, 1.0, ga, gb);
    return d;
  }
  if (d < delta) {
    add_distance_grad(a, b, dist, d, -1.0, ga, gb);
    return delta - d;
  }
  return 0.0;
}

double softmax_loss(const ClassifierHead& head, const Tensor& features,
                    std::span<const int> labels) {
  Tensor df, dw, db;
  return softmax_loss_backward(head, features, labels, df, dw, db);
}

double softmax_loss_backward(const ClassifierHead& head, const Tensor& features,
                             std::span<const int> labels, Tensor& dfeatures,
                             Tensor& dweight, Tensor& dbias) {
  const std::size_t n = features.dim(0);
  const std::size_t d = head.feature_dim();
  const std::size_t c = head.classes();
  require(features.rank() == 2 && features.dim(1) == d,
          "softmax_loss: features must be (batch, D)");
  require(labels.size() == n, "softmax_loss: one label per row required");
  const bool want_grads = !dfeatures.empty();
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  std::vector<double> probs(c);
  for (std::size_t r = 0; r < n; ++r) {
    const int label = labels[r];
    require(label >= 0 && static_cast<std::size_t>(label) < c,
            "softmax_loss: label out of range: " + std::to_string(label));
    auto z = features.row(r);
    std::vector<double> lg = head.logits(z);
    double mx = lg[0];
    for (double v : lg) mx = std::max(mx, v);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[j] = std::exp(lg[j] - mx);
      denom += probs[j];
    }
    loss -= (lg[static_cast<std::size_t>(label)] - mx - std::log(denom)) ;
    if (!want_grads) continue;
    auto gz = dfeatures.row(r);
    for (std::size_t j = 0; j < c; ++j) {
      double g = probs[j] / denom;
      if (j == static_cast<std::size_t>(label)) g -= 1.0;
      g *= inv_n;
      dbias[j] += g;
      for (std::size_t i = 0; i < d; ++i) {
        dweight[i * c + j] += g * z[i];
        gz[i] += g * head.weight[i * c + j];
      }
    }
  }
  return loss * inv_n;
}

double equiv_head_loss(const EquivMapSet& maps, const Tensor& zi, const Tensor& zj,
                       std::span<const int> map_id, std::span<const char> positive,
                       double delta, Tensor* dzi, Tensor* dzj,
                       std::vector<AffineMap>* dmaps) {
  require(zi.rank() == 2 && zj.rank() == 2 && zi.same_shape(zj),
          "equiv_head_loss: paired features must both be (batch, D)");
  const std::size_t n = zi.dim(0);
  const std::size_t d = zi.dim(1);
  require(map_id.size() == n && positive.size() == n,
          "equiv_head_loss: per-row metadata must match the batch");
  require(maps.dim() == d, "equiv_head_loss: map dimension does not match features");
  require(n > 0, "equiv_head_loss: empty batch");
  require(dzi == nullptr || (dzj != nullptr && dmaps != nullptr),
          "equiv_head_loss: gradient buffers must be passed together");

  double loss = 0.0;
  std::vector<double> ga(d), a(d);
  for (std::size_t r = 0; r < n; ++r) {
    const AffineMap& m = maps.map(map_id[r]);
    auto x = zi.row(r);
    auto y = zj.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double* wrow = m.weight.data() + i * d;
      double acc = m.bias[i];
      for (std::size_t j = 0; j < d; ++j) acc += wrow[j] * x[j];
      a[i] = acc;
    }
    if (dzi == nullptr) {
      loss += contrastive_loss(a, y, positive[r] != 0, delta);
      continue;
    }
    std::fill(ga.begin(), ga.end(), 0.0);
    loss += contrastive_loss_backward(a, y, positive[r] != 0, delta, PairDistance::L2,
                                      ga, dzj->row(r));
    // a = M x + b: route ga into map grads and zi grads
    AffineMap& gm = (*dmaps)[static_cast<std::size_t>(map_id[r]) - 1];
    auto gx = dzi->row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double gi = ga[i];
      if (gi == 0.0) continue;
      gm.bias[i] += gi;
      double* gwrow = gm.weight.data() + i * d;
      const double* wrow = m.weight.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) {
        gwrow[j] += gi * x[j];
        gx[j] += gi * wrow[j];
      }
    }
  }
  return loss;
}

double slowness_head_loss(const Tensor& zi, const Tensor& zj,
                          std::span<const char> neighbor, double margin,
                          PairDistance dist, Tensor* dzi, Tensor* dzj) {
  require(zi.rank() == 2 && zj.rank() == 2 && zi.same_shape(zj),
          "slowness_head_loss: paired features must both be (batch, D)");
  const std::size_t n = zi.dim(0);
  require(neighbor.size() == n, "slowness_head_loss: one flag per row required");
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (dzi == nullptr) {
      loss += contrastive_loss(zi.row(r), zj.row(r), neighbor[r] != 0, margin, dist);
    } else {
      loss += contrastive_loss_backward(zi.row(r), zj.row(r), neighbor[r] != 0, margin,
                                        dist, dzi->row(r), dzj->row(r));
    }
  }
  return loss;
}

std::vector<AffineMap> zero_map_grads(const EquivMapSet& maps) {
  std::vector<AffineMap> g;
  g.reserve(maps.count());
  for (const auto& m : maps.maps) {
    AffineMap z;
    z.weight = Tensor(m.weight.shape());
    z.bias = Tensor(m.bias.shape());
    g.push_back(std::move(z));
  }
  return g;
}

}  // namespace egoeq

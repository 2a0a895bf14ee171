#include "egoeq/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "egoeq/linalg.hpp"
#include "egoeq/trainer.hpp"

namespace egoeq {

AffineFit fit_equiv_map(const Tensor& features_i, const Tensor& features_j) {
  require(features_i.rank() == 2 && features_j.rank() == 2 &&
              features_i.same_shape(features_j),
          "fit_equiv_map: paired feature sets must both be (n, D)");
  const std::size_t n = features_i.dim(0);
  const std::size_t d = features_i.dim(1);
  require(n >= d + 1, "fit_equiv_map: need at least D+1 pairs, got " +
                          std::to_string(n) + " for D=" + std::to_string(d));

  // design matrix [f_j | 1], targets f_i; solve for the (D+1) x D coefficients
  Tensor x({n, d + 1});
  for (std::size_t r = 0; r < n; ++r) {
    auto src = features_j.row(r);
    double* dst = x.data() + r * (d + 1);
    std::copy(src.begin(), src.end(), dst);
    dst[d] = 1.0;
  }
  AffineFit fit;
  fit.n_pairs = n;
  Tensor coef;
  try {
    coef = normal_equations_solve(x, features_i);
  } catch (const NumericError&) {
    coef = normal_equations_solve(x, features_i, 1e-8);
    fit.ridge_flagged = true;
  }
  fit.map.weight = Tensor({d, d});
  fit.map.bias = Tensor({d});
  for (std::size_t out = 0; out < d; ++out) {
    for (std::size_t in = 0; in < d; ++in) {
      fit.map.weight.at2(out, in) = coef.at2(in, out);
    }
    fit.map.bias[out] = coef.at2(d, out);
  }
  for (std::size_t r = 0; r < n; ++r) {
    const auto pred = fit.map.apply(features_j.row(r));
    auto tgt = features_i.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double e = tgt[c] - pred[c];
      fit.residual += e * e;
    }
  }
  return fit;
}

RhoResult rho(const Tensor& features_i, const Tensor& features_j, const AffineMap& map) {
  require(features_i.rank() == 2 && features_i.same_shape(features_j),
          "rho: paired feature sets must both be (n, D)");
  require(map.dim() == features_i.dim(1), "rho: map dimension mismatch");
  RhoResult res;
  double acc = 0.0;
  for (std::size_t r = 0; r < features_i.dim(0); ++r) {
    auto fi = features_i.row(r);
    auto fj = features_j.row(r);
    const double denom = l2_distance(fi, fj);
    if (denom < 1e-12) {
      ++res.skipped;
      continue;
    }
    const auto mapped = map.apply(fj);
    acc += l2_distance(fi, mapped) / denom;
    ++res.used;
  }
  if (res.used > 0) res.value = acc / static_cast<double>(res.used);
  return res;
}

AffineMap compose_maps(std::span<const AffineMap> maps) {
  require(!maps.empty(), "compose_maps: empty map list");
  AffineMap acc = maps.back();
  for (std::size_t i = maps.size() - 1; i-- > 0;) {
    const AffineMap& m = maps[i];
    require(m.dim() == acc.dim(), "compose_maps: dimension mismatch");
    AffineMap next;
    next.weight = matmul(m.weight, acc.weight);
    const auto shifted =
        m.apply(std::span<const double>(acc.bias.data(), acc.bias.size()));
    next.bias = Tensor({m.dim()}, std::vector<double>(shifted.begin(), shifted.end()));
    acc = std::move(next);
  }
  return acc;
}

double topk_accuracy(const Network& net, const ClassifierHead& head,
                     const std::vector<Tensor>& frames,
                     std::span<const std::size_t> indices, std::span<const int> labels,
                     std::size_t top_k) {
  require(!indices.empty(), "topk_accuracy: empty test set");
  require(indices.size() == labels.size(), "topk_accuracy: one label per index");
  require(top_k >= 1, "topk_accuracy: top_k must be >= 1");
  const std::size_t c = head.classes();
  Tensor feats = compute_features(net, frames, indices);
  std::size_t hits = 0;
  std::vector<std::size_t> order(c);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto logits = head.logits(feats.row(r));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return logits[a] > logits[b];  // stable keeps lowest class index on ties
    });
    const std::size_t k = std::min(top_k, c);
    for (std::size_t t = 0; t < k; ++t) {
      if (static_cast<int>(order[t]) == labels[r]) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(indices.size());
}

double chance_accuracy(std::size_t classes, std::size_t top_k) {
  require(classes >= 1 && top_k >= 1, "chance_accuracy: bad arguments");
  return 100.0 * static_cast<double>(std::min(top_k, classes)) /
         static_cast<double>(classes);
}

AccuracySummary summarize_runs(std::span<const double> accuracies) {
  require(!accuracies.empty(), "summarize_runs: no runs");
  AccuracySummary s;
  s.runs.assign(accuracies.begin(), accuracies.end());
  for (double a : accuracies) s.mean += a;
  s.mean /= static_cast<double>(accuracies.size());
  if (accuracies.size() > 1) {
    double var = 0.0;
    for (double a : accuracies) var += (a - s.mean) * (a - s.mean);
    var /= static_cast<double>(accuracies.size() - 1);  // sample variance
    s.stderr_ = std::sqrt(var) / std::sqrt(static_cast<double>(accuracies.size()));
  }
  return s;
}

RocReport roc_from_scores(std::span<const double> scores, std::span<const char> labels) {
  require(scores.size() == labels.size() && !scores.empty(),
          "roc_from_scores: scores and labels must align");
  RocReport rep;
  for (char l : labels) {
    if (l != 0) {
      ++rep.positives;
    } else {
      ++rep.negatives;
    }
  }
  if (rep.positives == 0 || rep.negatives == 0) return rep;  // AUROC undefined

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  const double np = static_cast<double>(rep.positives);
  const double nn = static_cast<double>(rep.negatives);
  double tp = 0.0, fp = 0.0, auc = 0.0;
  double prev_tpr = 0.0, prev_fpr = 0.0;
  rep.thresholds.push_back(std::numeric_limits<double>::infinity());
  rep.tpr.push_back(0.0);
  rep.fpr.push_back(0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    // advance over the tie group as one threshold step
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]] != 0) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++i;
    }
    const double tpr = tp / np, fpr = fp / nn;
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    rep.thresholds.push_back(threshold);
    rep.tpr.push_back(tpr);
    rep.fpr.push_back(fpr);
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  rep.auroc = auc;
  return rep;
}

RocReport slowness_auroc(const Tensor& zi, const Tensor& zj,
                         std::span<const double> gaps, double T, PairDistance dist) {
  require(zi.rank() == 2 && zi.same_shape(zj), "slowness_auroc: feature shape mismatch");
  require(gaps.size() == zi.dim(0), "slowness_auroc: one gap per pair required");
  require(T > 0.0, "slowness_auroc: T must be positive");
  std::vector<double> scores(gaps.size());
  std::vector<char> labels(gaps.size());
  for (std::size_t r = 0; r < gaps.size(); ++r) {
    const double delta = dist == PairDistance::L2 ? l2_distance(zi.row(r), zj.row(r))
                                                  : l1_distance(zi.row(r), zj.row(r));
    scores[r] = -delta;  // small distance should predict "neighbor"
    labels[r] = gaps[r] <= T ? 1 : 0;
  }
  return roc_from_scores(scores, labels);
}

AnalogyResult analogy_nn(const Tensor& features, const std::vector<Tensor>& frames,
                         std::span<const std::pair<std::size_t, std::size_t>> candidates,
                         std::pair<std::size_t, std::size_t> query, std::size_t k) {
  require(features.rank() == 2, "analogy_nn: features must be (frames, D)");
  require(k >= 1, "analogy_nn: k must be >= 1");
  const std::size_t d = features.dim(1);

  auto diff_of = [&](const Tensor& bank, std::size_t width,
                     std::pair<std::size_t, std::size_t> p) {
    std::vector<double> v(width);
    auto a = bank.row(p.first);
    auto b = bank.row(p.second);
    for (std::size_t i = 0; i < width; ++i) v[i] = a[i] - b[i];
    return v;
  };

  AnalogyResult res;
  const auto rank_by = [&](const Tensor& bank, std::size_t width,
                           std::vector<AnalogyNeighbor>& out) {
    const auto dq = diff_of(bank, width, query);
    std::vector<AnalogyNeighbor> all;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (candidates[c] == query) continue;
      const auto dc = diff_of(bank, width, candidates[c]);
      all.push_back({c, l2_distance(dq, dc)});
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const AnalogyNeighbor& a, const AnalogyNeighbor& b) {
                       return a.distance < b.distance;
                     });
    if (all.size() > k) {
      all.resize(k);
    } else if (all.size() < k) {
      res.truncated = true;
    }
    out = std::move(all);
  };

  rank_by(features, d, res.feature_neighbors);
  if (!frames.empty()) {
    // flatten frames into a pixel bank once
    const std::size_t px = frames.front().size();
    Tensor bank({frames.size(), px});
    for (std::size_t i = 0; i < frames.size(); ++i) {
      std::copy(frames[i].data(), frames[i].data() + px, bank.data() + i * px);
    }
    rank_by(bank, px, res.pixel_neighbors);
  }
  return res;
}

}  // namespace egoeq

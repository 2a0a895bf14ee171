#include "egoeq/nbv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace egoeq {

std::size_t resolve_knn_k(std::optional<std::size_t> requested,
                          std::size_t min_class_bank, bool* downgraded) {
  if (downgraded != nullptr) *downgraded = false;
  if (requested.has_value()) {
    require(*requested >= 1, "knn k must be >= 1");
    return *requested;
  }
  if (min_class_bank < 25) {
    if (downgraded != nullptr) *downgraded = true;
    return 5;
  }
  return 25;
}

KnnClassifier build_knn_classifier(const Tensor& bank, std::span<const int> labels,
                                   std::size_t classes,
                                   std::optional<std::size_t> k) {
  require(bank.rank() == 2 && bank.dim(0) >= 1, "knn bank must be non-empty (n, dim)");
  require(labels.size() == bank.dim(0), "knn: one label per bank row");
  require(classes >= 1, "knn: class count required");
  std::vector<std::size_t> per_class(classes, 0);
  for (int l : labels) {
    require(l >= 0 && static_cast<std::size_t>(l) < classes,
            "knn: label out of range: " + std::to_string(l));
    ++per_class[static_cast<std::size_t>(l)];
  }
  std::size_t min_bank = bank.dim(0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class[c] > 0) min_bank = std::min(min_bank, per_class[c]);
  }
  KnnClassifier clf;
  clf.k = resolve_knn_k(k, min_bank, &clf.k_downgraded);
  clf.classes = classes;
  clf.bank = bank;
  clf.labels.assign(labels.begin(), labels.end());
  return clf;
}

PairClassifier build_pair_classifier(const Tensor& feats_x, const Tensor& feats_gx,
                                     std::span<const int> labels, std::size_t classes,
                                     std::optional<std::size_t> k, int motion) {
  require(feats_x.rank() == 2 && feats_x.same_shape(feats_gx),
          "pair classifier: paired feature sets must both be (n, D)");
  require(feats_x.dim(0) >= 1, "pair classifier: empty training pairs");
  const std::size_t n = feats_x.dim(0), d = feats_x.dim(1);
  Tensor bank({n, 2 * d});
  for (std::size_t r = 0; r < n; ++r) {
    auto a = feats_x.row(r);
    auto b = feats_gx.row(r);
    double* dst = bank.data() + r * 2 * d;
    std::copy(a.begin(), a.end(), dst);
    std::copy(b.begin(), b.end(), dst + d);
  }
  PairClassifier pc;
  pc.motion = motion;
  pc.knn = build_knn_classifier(bank, labels, classes, k);
  return pc;
}

std::vector<double> predict_class_probs(const KnnClassifier& clf,
                                        std::span<const double> query) {
  require(query.size() == clf.dim(), "knn query dimension mismatch");
  const std::size_t n = clf.bank.dim(0);
  const std::size_t k = std::min(clf.k, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(n);
  for (std::size_t r = 0; r < n; ++r) dist[r] = l2_distance(clf.bank.row(r), query);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return a < b;  // distance ties break to the lowest bank index
  });
  std::vector<double> probs(clf.classes, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    probs[static_cast<std::size_t>(clf.labels[order[t]])] += 1.0;
  }
  for (double& p : probs) p /= static_cast<double>(k);
  return probs;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

ViewSelection select_view(std::span<const double> z0,
                          std::span<const NbvCandidate> candidates) {
  require(!candidates.empty(), "select_view: no candidate views");
  ViewSelection sel;
  double best = std::numeric_limits<double>::infinity();
  int best_view = 0;
  for (const auto& cand : candidates) {
    const auto predicted = cand.predict_map.apply(z0);
    std::vector<double> q(z0.begin(), z0.end());
    q.insert(q.end(), predicted.begin(), predicted.end());
    const double h = entropy(predict_class_probs(cand.classifier.knn, q));
    sel.entropies.push_back(h);
    if (h < best || (h == best && cand.view < best_view)) {
      best = h;
      best_view = cand.view;
    }
  }
  sel.view = best_view;
  return sel;
}

namespace {

int argmax_prob(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[best]) best = c;  // ties to the lowest class index
  }
  return static_cast<int>(best);
}

}  // namespace

NbvOutcome evaluate_nbv(
    const Tensor& feats0, std::span<const int> labels,
    const KnnClassifier& single_view_knn, std::span<const NbvCandidate> candidates,
    const std::function<std::optional<std::vector<double>>(std::size_t, int)>&
        actual_view) {
  require(feats0.rank() == 2 && feats0.dim(0) >= 1, "evaluate_nbv: empty test set");
  require(labels.size() == feats0.dim(0), "evaluate_nbv: one label per sample");
  NbvOutcome out;
  std::size_t hits1 = 0, hits2 = 0;
  for (std::size_t r = 0; r < feats0.dim(0); ++r) {
    NbvSampleOutcome sample;
    auto z0 = feats0.row(r);
    ViewSelection sel = select_view(z0, candidates);
    sample.selected_view = sel.view;
    sample.entropies = std::move(sel.entropies);

    const auto z1 = actual_view(r, sel.view);
    if (!z1.has_value()) {
      sample.skipped = true;
      ++out.skipped;
      out.samples.push_back(std::move(sample));
      continue;
    }
    const int pred1 = argmax_prob(predict_class_probs(single_view_knn, z0));
    sample.correct_1view = pred1 == labels[r];

    const NbvCandidate* chosen = nullptr;
    for (const auto& c : candidates) {
      if (c.view == sel.view) {
        chosen = &c;
        break;
      }
    }
    require(chosen != nullptr, "evaluate_nbv: missing classifier for selected view");
    std::vector<double> q(z0.begin(), z0.end());
    q.insert(q.end(), z1->begin(), z1->end());
    const int pred2 = argmax_prob(predict_class_probs(chosen->classifier.knn, q));
    sample.correct_2view = pred2 == labels[r];

    hits1 += sample.correct_1view ? 1 : 0;
    hits2 += sample.correct_2view ? 1 : 0;
    ++out.evaluated;
    out.samples.push_back(std::move(sample));
  }
  require(out.evaluated > 0, "evaluate_nbv: every sample was skipped");
  out.acc_1view = 100.0 * static_cast<double>(hits1) / static_cast<double>(out.evaluated);
  out.acc_2view = 100.0 * static_cast<double>(hits2) / static_cast<double>(out.evaluated);
  return out;
}

}  // namespace egoeq

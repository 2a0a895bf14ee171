#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "egoeq/evaluator.hpp"
#include "egoeq/linalg.hpp"
#include "egoeq/trainer.hpp"

using namespace egoeq;

namespace {

Tensor random_rows(std::size_t n, std::size_t d, std::uint64_t seed, double lo = -1.0,
                   double hi = 1.0) {
  Rng rng(seed);
  Tensor t({n, d});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// independent rank-based AUROC oracle (Mann-Whitney with tie correction)
double mann_whitney_auroc(std::span<const double> scores, std::span<const char> labels) {
  double wins = 0.0;
  std::size_t np = 0, nn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    ++np;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  for (char l : labels) {
    if (l == 0) ++nn;
  }
  return wins / (static_cast<double>(np) * static_cast<double>(nn));
}

}  // namespace

TEST_CASE("fit_equiv_map: identical feature sets recover the identity") {
  Tensor z = random_rows(12, 3, 5);
  AffineFit fit = fit_equiv_map(z, z);
  CHECK(fit.residual < 1e-18);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(fit.map.weight.at2(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    }
    CHECK(fit.map.bias[i] == doctest::Approx(0.0).epsilon(1e-9));
  }
  CHECK(!fit.ridge_flagged);
}

TEST_CASE("fit_equiv_map: plant-and-recover a random full-rank affine map") {
  const std::size_t d = 5;
  Rng rng(9);
  AffineMap planted;
  planted.weight = Tensor({d, d});
  planted.bias = Tensor({d});
  for (std::size_t i = 0; i < planted.weight.size(); ++i) {
    planted.weight[i] = rng.uniform(-1.0, 1.0);
  }
  for (std::size_t i = 0; i < d; ++i) {
    planted.weight.at2(i, i) += 2.0;  // keep it comfortably full rank
    planted.bias[i] = rng.uniform(-0.5, 0.5);
  }
  Tensor zj = random_rows(2 * d, d, 11);
  Tensor zi({2 * d, d});
  for (std::size_t r = 0; r < zj.dim(0); ++r) {
    const auto y = planted.apply(zj.row(r));
    std::copy(y.begin(), y.end(), zi.row(r).begin());
  }
  AffineFit fit = fit_equiv_map(zi, zj);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < planted.weight.size(); ++i) {
    num += (fit.map.weight[i] - planted.weight[i]) * (fit.map.weight[i] - planted.weight[i]);
    den += planted.weight[i] * planted.weight[i];
  }
  CHECK(std::sqrt(num / den) < 1e-6);  // relative Frobenius error
}

TEST_CASE("fit_equiv_map rejects underdetermined inputs") {
  Tensor z = random_rows(3, 3, 5);
  CHECK_THROWS_AS(fit_equiv_map(z, z), InputError);
}

TEST_CASE("rho: identity map scores exactly 1, perfect map scores 0") {
  Tensor zi = random_rows(20, 4, 3);
  Tensor zj = random_rows(20, 4, 4);
  AffineMap identity = AffineMap::identity(4);
  RhoResult one = rho(zi, zj, identity);
  REQUIRE(one.value.has_value());
  CHECK(*one.value == doctest::Approx(1.0).epsilon(1e-12));

  // distinct pairs related by an exact affine map -> rho 0
  AffineMap planted;
  planted.weight = Tensor({4, 4});
  for (std::size_t i = 0; i < 4; ++i) planted.weight.at2(i, i) = 2.0;
  planted.weight.at2(0, 1) = 0.5;
  planted.bias = Tensor({4}, {0.1, -0.2, 0.3, 0.0});
  Tensor exact_i({20, 4});
  for (std::size_t r = 0; r < 20; ++r) {
    const auto y = planted.apply(zj.row(r));
    std::copy(y.begin(), y.end(), exact_i.row(r).begin());
  }
  RhoResult zero = rho(exact_i, zj, planted);
  REQUIRE(zero.value.has_value());
  CHECK(*zero.value < 1e-12);
}

TEST_CASE("rho: hand ratio and degenerate-denominator bookkeeping") {
  // one pair, numerator 0.3, denominator 0.6
  Tensor zi({1, 1}, {1.0});
  Tensor zj({1, 1}, {0.4});  // denominator |1.0 - 0.4| = 0.6
  AffineMap m;
  m.weight = Tensor({1, 1}, {0.0});
  m.bias = Tensor({1}, {0.7});  // numerator |1.0 - 0.7| = 0.3
  RhoResult r = rho(zi, zj, m);
  REQUIRE(r.value.has_value());
  CHECK(*r.value == doctest::Approx(0.5).epsilon(1e-12));

  // identical pairs are skipped and counted; all skipped -> undefined
  Tensor same = random_rows(3, 2, 6);
  RhoResult skipped = rho(same, same, AffineMap::identity(2));
  CHECK(!skipped.value.has_value());
  CHECK(skipped.skipped == 3);
}

TEST_CASE("rho scale invariance: scaling features and refitting leaves rho alone") {
  Tensor zi = random_rows(30, 4, 7);
  Tensor zj = random_rows(30, 4, 8);
  auto run = [&](double c) {
    Tensor a = zi, b = zj;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] *= c;
      b[i] *= c;
    }
    Tensor a_fit({15, 4}), b_fit({15, 4}), a_meas({15, 4}), b_meas({15, 4});
    for (std::size_t r = 0; r < 15; ++r) {
      std::copy(a.row(r).begin(), a.row(r).end(), a_fit.row(r).begin());
      std::copy(b.row(r).begin(), b.row(r).end(), b_fit.row(r).begin());
      std::copy(a.row(r + 15).begin(), a.row(r + 15).end(), a_meas.row(r).begin());
      std::copy(b.row(r + 15).begin(), b.row(r + 15).end(), b_meas.row(r).begin());
    }
    AffineFit fit = fit_equiv_map(a_fit, b_fit);
    return *rho(a_meas, b_meas, fit.map).value;
  };
  const double base = run(1.0);
  CHECK(std::abs(run(0.1) - base) < 1e-10);
  CHECK(std::abs(run(10.0) - base) < 1e-10);
}

TEST_CASE("compose_maps: identity composition and hand product") {
  AffineMap id = AffineMap::identity(2);
  AffineMap m;
  m.weight = Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0});
  m.bias = Tensor({2}, {0.5, -0.5});
  std::vector<AffineMap> chain{id, m};
  AffineMap composed = compose_maps(chain);
  for (std::size_t i = 0; i < 4; ++i) CHECK(composed.weight[i] == m.weight[i]);
  CHECK(composed.bias[0] == m.bias[0]);

  // hand product: A = [[0,1],[1,0]], B = [[1,2],[3,4]] -> AB = [[3,4],[1,2]]
  AffineMap a;
  a.weight = Tensor({2, 2}, {0.0, 1.0, 1.0, 0.0});
  a.bias = Tensor({2}, {1.0, 0.0});
  std::vector<AffineMap> chain2{a, m};
  AffineMap ab = compose_maps(chain2);
  CHECK(ab.weight[0] == doctest::Approx(3.0));
  CHECK(ab.weight[1] == doctest::Approx(4.0));
  CHECK(ab.weight[2] == doctest::Approx(1.0));
  CHECK(ab.weight[3] == doctest::Approx(2.0));
  // bias: A b_m + b_a = [b_m[1], b_m[0]] + [1, 0] = [0.5, 0.5]
  CHECK(ab.bias[0] == doctest::Approx(0.5));
  CHECK(ab.bias[1] == doctest::Approx(0.5));
  // rightmost applies first
  std::vector<double> x{1.0, 1.0};
  const auto direct = a.apply(m.apply(x));
  const auto via = ab.apply(x);
  CHECK(via[0] == doctest::Approx(direct[0]));
  CHECK(via[1] == doctest::Approx(direct[1]));
}

TEST_CASE("topk accuracy: exhaustive top_k and hand-counted logits") {
  Network net({2}, {LayerSpec::fully_connected(2, 2)});
  auto& p = net.mutable_params()[0];
  p.weight = Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0});
  ClassifierHead head;
  head.weight = Tensor({2, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
  head.bias = Tensor({3});

  std::vector<Tensor> frames;
  frames.push_back(Tensor({2}, {1.0, 0.0}));   // logits (1,0,0) -> class 0
  frames.push_back(Tensor({2}, {0.0, 1.0}));   // logits (0,1,0) -> class 1
  frames.push_back(Tensor({2}, {0.0, 0.0}));   // all ties -> class 0 by tie rule
  std::vector<std::size_t> idx{0, 1, 2};
  std::vector<int> labels{0, 1, 1};
  CHECK(topk_accuracy(net, head, frames, idx, labels, 1) ==
        doctest::Approx(100.0 * 2.0 / 3.0));
  CHECK(topk_accuracy(net, head, frames, idx, labels, 3) == doctest::Approx(100.0));
  CHECK(chance_accuracy(25, 1) == doctest::Approx(4.0));
  CHECK(chance_accuracy(397, 10) == doctest::Approx(1000.0 / 397.0));
}

TEST_CASE("summarize_runs: mean and standard error") {
  std::vector<double> runs{10.0, 12.0, 14.0};
  AccuracySummary s = summarize_runs(runs);
  CHECK(s.mean == doctest::Approx(12.0));
  // sample stddev 2.0 -> stderr 2/sqrt(3)
  CHECK(s.stderr_ == doctest::Approx(2.0 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("roc: perfectly separated scores give AUROC 1") {
  std::vector<double> scores{0.9, 0.8, 0.2, 0.1};
  std::vector<char> labels{1, 1, 0, 0};
  RocReport rep = roc_from_scores(scores, labels);
  REQUIRE(rep.auroc.has_value());
  CHECK(*rep.auroc == doctest::Approx(1.0));
}

TEST_CASE("roc: all-equal scores give AUROC  0.5") {
  std::vector<double> scores{0.5, 0.5, 0.5, 0.5};
  std::vector<char> labels{1, 0, 1, 0};
  RocReport rep = roc_from_scores(scores, labels);
  REQUIRE(rep.auroc.has_value());
  CHECK(*rep.auroc == doctest::Approx(0.5));
}

TEST_CASE("roc: alternating distance ranks match the rank-based oracle") {
  // distances {0.1+, 0.2-, 0.3+, 0.4-} scored as -distance
  std::vector<double> scores{-0.1, -0.2, -0.3, -0.4};
  std::vector<char> labels{1, 0, 1, 0};
  RocReport rep = roc_from_scores(scores, labels);
  REQUIRE(rep.auroc.has_value());
  const double oracle = mann_whitney_auroc(scores, labels);
  CHECK(*rep.auroc == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle == doctest::Approx(0.75));  // hand ROC: (0,0)->(0,.5)->(.5,.5)->(.5,1)->(1,1)
}

TEST_CASE("roc: one-class labels are reported undefined") {
  std::vector<double> scores{0.1, 0.2};
  std::vector<char> labels{1, 1};
  CHECK(!roc_from_scores(scores, labels).auroc.has_value());
}

TEST_CASE("roc antisymmetry: negating scores maps AUROC to 1 - AUROC") {
  Rng rng(15);
  std::vector<double> scores;
  std::vector<char> labels;
  for (int i = 0; i < 40; ++i) {
    scores.push_back(rng.uniform(-1.0, 1.0));
    labels.push_back(rng.below(2) == 0 ? 0 : 1);
  }
  labels[0] = 1;
  labels[1] = 0;  // both classes present
  RocReport fwd = roc_from_scores(scores, labels);
  std::vector<double> neg = scores;
  for (double& s : neg) s = -s;
  RocReport rev = roc_from_scores(neg, labels);
  REQUIRE(fwd.auroc.has_value());
  REQUIRE(rev.auroc.has_value());
  CHECK(*fwd.auroc + *rev.auroc == doctest::Approx(1.0).epsilon(1e-12));
  // and both agree with the independent rank-based oracle
  CHECK(*fwd.auroc == doctest::Approx(mann_whitney_auroc(scores, labels)).epsilon(1e-12));
}

TEST_CASE("slowness_auroc wires distances and labels as specified") {
  Tensor zi = random_rows(10, 3, 21);
  Tensor zj = random_rows(10, 3, 22);
  std::vector<double> gaps;
  for (int i = 0; i < 10; ++i) gaps.push_back(i < 5 ? 0.1 : 2.0);
  RocReport rep = slowness_auroc(zi, zj, gaps, 0.5, PairDistance::L2);
  CHECK(rep.positives == 5);
  CHECK(rep.negatives == 5);
  REQUIRE(rep.auroc.has_value());
  std::vector<double> scores;
  std::vector<char> labels;
  for (std::size_t r = 0; r < 10; ++r) {
    scores.push_back(-l2_distance(zi.row(r), zj.row(r)));
    labels.push_back(gaps[r] <= 0.5 ? 1 : 0);
  }
  CHECK(*rep.auroc == doctest::Approx(mann_whitney_auroc(scores, labels)).epsilon(1e-12));
}

TEST_CASE("analogy_nn: exact duplicate ranks first, hand distances ordered") {
  // frame features chosen so pair differences are easy to read
  Tensor feats({6, 2}, {0.0, 0.0,    // 0
                        1.0, 0.0,    // 1
                        0.0, 1.0,    // 2
                        1.0, 1.0,    // 3
                        2.0, 0.1,    // 4
                        3.0, 0.1});  // 5
  std::vector<std::pair<std::size_t, std::size_t>> candidates{
      {1, 0},  // diff (1, 0)
      {3, 2},  // diff (1, 0)  -- duplicate of the query's motion
      {5, 4},  // diff (1, 0)
      {2, 0},  // diff (0, 1)
  };
  const std::pair<std::size_t, std::size_t> query{1, 0};
  AnalogyResult res = analogy_nn(feats, {}, candidates, query, 2);
  REQUIRE(res.feature_neighbors.size() == 2);
  CHECK(res.feature_neighbors[0].pair_index == 1);
  CHECK(res.feature_neighbors[0].distance == doctest::Approx(0.0));
  CHECK(res.feature_neighbors[1].pair_index == 2);

  // K larger than the candidate pool returns everything, flagged
  AnalogyResult full = analogy_nn(feats, {}, candidates, query, 10);
  CHECK(full.truncated);
  CHECK(full.feature_neighbors.size() == 3);  // query itself excluded
}

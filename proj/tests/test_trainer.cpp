#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "egoeq/gradcheck.hpp"
#include "egoeq/trainer.hpp"
#include "egoeq/worlds.hpp"

using namespace egoeq;

namespace {

std::vector<double> vec(std::initializer_list<double> v) { return v; }

Tensor feature_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> flat;
  std::size_t d = 0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    d = r.size();
    ++n;
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({n, d}, std::move(flat));
}

}  // namespace

TEST_CASE("contrastive loss: trivial and hand cases") {
  const auto a = vec({1.0, 2.0});
  CHECK(contrastive_loss(a, a, true, 1.0) == 0.0);

  // negative with distance >= margin saturates to zero
  const auto far = vec({9.0, 2.0});
  CHECK(contrastive_loss(a, far, false, 1.0) == 0.0);

  // negative, d=0.4, delta=1.0 -> 0.6
  const auto near = vec({1.4, 2.0});
  CHECK(contrastive_loss(a, near, false, 1.0) == doctest::Approx(0.6).epsilon(1e-12));

  CHECK_THROWS_AS(contrastive_loss(a, vec({1.0}), true, 1.0), InputError);
  CHECK_THROWS_AS(contrastive_loss(a, a, true, 0.0), InputError);
}

TEST_CASE("softmax loss: uniform, saturated and hand-evaluated logits") {
  // C=4, uniform logits -> ln 4
  ClassifierHead head;
  head.weight = Tensor({1, 4});
  head.bias = Tensor({4});
  Tensor f({1, 1}, {0.0});
  std::vector<int> labels{2};
  CHECK(softmax_loss(head, f, labels) ==
        doctest::Approx(1.3862943611198906).epsilon(1e-12));

  // 2-class hand logits [2, 0], true class 0 -> ln(1 + e^-2)
  ClassifierHead head2;
  head2.weight = Tensor({1, 2}, {2.0, 0.0});
  head2.bias = Tensor({2});
  Tensor f2({1, 1}, {1.0});
  std::vector<int> labels2{0};
  CHECK(softmax_loss(head2, f2, labels2) ==
        doctest::Approx(0.12692801104297263).epsilon(1e-12));

  // saturation: huge correct-class logit drives the loss to ~0
  ClassifierHead head3;
  head3.weight = Tensor({1, 2}, {50.0, 0.0});
  head3.bias = Tensor({2});
  CHECK(softmax_loss(head3, f2, labels2) < 1e-18);

  std::vector<int> bad{7};
  CHECK_THROWS_AS(softmax_loss(head2, f2, bad), InputError);
}

TEST_CASE("equiv head: degenerate all-zero solution is penalized by negatives") {
  EquivMapSet maps;
  maps.maps.push_back({Tensor({2, 2}), Tensor({2})});  // all-zero map
  maps.maps.push_back({Tensor({2, 2}), Tensor({2})});
  Tensor zi({2, 2});  // z == 0 everywhere
  Tensor zj({2, 2});
  std::vector<int> map_id{1, 1};
  std::vector<char> positive{1, 0};
  const double delta = 1.0;
  const double loss =
      equiv_head_loss(maps, zi, zj, map_id, positive, delta, nullptr, nullptr, nullptr);
  // positive term 0, negative term = delta
  CHECK(loss == doctest::Approx(delta).epsilon(1e-15));
  CHECK(loss > 0.0);
}

TEST_CASE("equiv head: perfectly equivariant world with true maps gives zero") {
  // z(x_j) = R z(x_i) for a planted rotation R
  const double c = std::cos(0.3), s = std::sin(0.3);
  EquivMapSet maps;
  maps.maps.push_back({Tensor({2, 2}, {c, -s, s, c}), Tensor({2})});
  Tensor zi = feature_rows({{1.0, 0.0}, {0.3, -0.7}});
  Tensor zj({2, 2});
  for (std::size_t r = 0; r < 2; ++r) {
    const auto m = maps.map(1).apply(zi.row(r));
    std::copy(m.begin(), m.end(), zj.row(r).begin());
  }
  std::vector<int> map_id{1, 1};
  std::vector<char> positive{1, 1};
  CHECK(equiv_head_loss(maps, zi, zj, map_id, positive, 1.0, nullptr, nullptr,
                        nullptr) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("equiv head: single positive pair matches the hand-computed distance") {
  EquivMapSet maps;
  maps.maps.push_back({Tensor({2, 2}, {2.0, 0.0, 0.0, 1.0}), Tensor({2}, {0.5, 0.0})});
  Tensor zi = feature_rows({{1.0, 1.0}});
  Tensor zj = feature_rows({{1.0, 2.0}});
  // M zi + b = (2.5, 1.0); d to (1, 2) = sqrt(1.5^2 + 1) = sqrt(3.25)
  std::vector<int> map_id{1};
  std::vector<char> positive{1};
  CHECK(equiv_head_loss(maps, zi, zj, map_id, positive, 1.0, nullptr, nullptr,
                        nullptr) == doctest::Approx(std::sqrt(3.25)).epsilon(1e-12));
}

TEST_CASE("slowness head: trivial and hand-summed cases") {
  Tensor zi = feature_rows({{1.0, 1.0}, {0.0, 0.0}});
  Tensor zj = feature_rows({{1.0, 1.0}, {0.0, 0.0}});
  std::vector<char> nb{1, 0};
  // neighbor identical -> 0; non-neighbor at distance 0 -> margin
  const double margin = 0.8;
  CHECK(slowness_head_loss(zi, zj, nb, margin, PairDistance::L2, nullptr, nullptr) ==
        doctest::Approx(margin).epsilon(1e-15));

  // mixed hand case, l1 distance: neighbor |1-0.5|+|1-0.5| = 1; non-neighbor
  // d=0.2 -> margin-0.2
  Tensor ai = feature_rows({{1.0, 1.0}, {0.1, 0.0}});
  Tensor aj = feature_rows({{0.5, 0.5}, {0.3, 0.0}});
  std::vector<char> nb2{1, 0};
  CHECK(slowness_head_loss(ai, aj, nb2, 0.8, PairDistance::L1, nullptr, nullptr) ==
        doctest::Approx(1.0 + 0.6).epsilon(1e-12));
}

TEST_CASE("joint loss parts: lambda 0 equals the softmax loss alone") {
  Network net({2}, {LayerSpec::fully_connected(2, 2)});
  init_xavier(net, 3);
  ClassifierHead head = init_classifier(2, 3, 4);
  EquivMapSet maps = init_equiv_maps(2, 2, 5);
  Tensor images({2, 2}, {0.1, 0.9, -0.4, 0.2});
  std::vector<int> labels{0, 2};

  EquivBatch pairs;
  pairs.xi = Tensor({1, 2}, {0.5, 0.5});
  pairs.xj = Tensor({1, 2}, {0.1, 0.2});
  pairs.map_id = {1};
  pairs.positive = {1};

  JointLossParts with = joint_loss_parts(net, &maps, &head, &images, labels, &pairs,
                                         nullptr, 0.0, 0.0, 1.0, 1.0,
                                         PairDistance::L2, nullptr);
  Tensor feats = forward(net, images);
  CHECK(with.total == doctest::Approx(softmax_loss(head, feats, labels)).epsilon(1e-15));

  // empty labeled batch with lambda=1 equals the equiv loss alone
  JointLossParts equiv_only = joint_loss_parts(net, &maps, nullptr, nullptr, {},
                                               &pairs, nullptr, 1.0, 0.0, 1.0, 1.0,
                                               PairDistance::L2, nullptr);
  CHECK(equiv_only.total ==
        doctest::Approx(equiv_loss(net, maps, pairs, 1.0)).epsilon(1e-15));

  // hand-composed sum of both parts
  JointLossParts both = joint_loss_parts(net, &maps, &head, &images, labels, &pairs,
                                         nullptr, 0.7, 0.0, 1.0, 1.0,
                                         PairDistance::L2, nullptr);
  CHECK(both.total ==
        doctest::Approx(with.total + 0.7 * equiv_only.total).epsilon(1e-12));
}

TEST_CASE("joint gradients pass the finite-difference check for theta, M and W") {
  Network net({3}, {LayerSpec::fully_connected(3, 3), LayerSpec::relu(),
                    LayerSpec::fully_connected(3, 2)});
  init_xavier(net, 11);
  EquivMapSet maps = init_equiv_maps(2, 2, 12);
  ClassifierHead head = init_classifier(2, 3, 13);

  Rng rng(14);
  auto rand_tensor = [&](std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
  };
  Tensor images = rand_tensor({4, 3}, 0.2, 1.0);
  std::vector<int> labels{0, 1, 2, 1};
  EquivBatch pairs;
  pairs.xi = rand_tensor({4, 3}, 0.2, 1.0);
  pairs.xj = rand_tensor({4, 3}, 0.2, 1.0);
  pairs.map_id = {1, 2, 1, 2};
  pairs.positive = {1, 0, 0, 1};
  SlownessBatch slow;
  slow.xi = rand_tensor({3, 3}, 0.2, 1.0);
  slow.xj = rand_tensor({3, 3}, 0.2, 1.0);
  slow.neighbor = {1, 0, 1};

  const double le = 0.7, ls = 0.4;
  ModelGrads mg;
  joint_loss_parts(net, &maps, &head, &images, labels, &pairs, &slow, le, ls, 1.0,
                   1.0, PairDistance::L2, &mg);

  ParamRefs refs = network_params(net);
  for (auto& m : maps.maps) {
    refs.add(m.weight);
    refs.add(m.bias);
  }
  refs.add(head.weight);
  refs.add(head.bias);

  std::vector<Tensor> analytic;
  for (const auto& lp : mg.net.layers) {
    if (lp.weight.empty()) continue;
    analytic.push_back(lp.weight);
    analytic.push_back(lp.bias);
  }
  for (const auto& m : mg.maps) {
    analytic.push_back(m.weight);
    analytic.push_back(m.bias);
  }
  analytic.push_back(mg.head_weight);
  analytic.push_back(mg.head_bias);

  auto value = [&]() {
    return joint_loss_parts(net, &maps, &head, &images, labels, &pairs, &slow, le,
                            ls, 1.0, 1.0, PairDistance::L2, nullptr)
        .total;
  };
  FdReport rep = finite_diff_check_params(refs, value, analytic, 1e-5);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("train_unsupervised: zero epochs leave the model untouched") {
  LatentLinearConfig wc;
  wc.noise_sigma = 0.0;
  wc.seed = 3;
  LatentLinearWorld world(wc);
  Dataset ds = gen_latent_dataset(world, {4, 5, 0.1, 30.0, 0.0}, 5);
  MotionPatternModel model = declare_patterns({{1.0, 0.0}, {0.0, 1.0}});
  auto samples = mine_equiv_samples(ds, model, 0.11);
  REQUIRE(!samples.empty());

  Network net({64}, {LayerSpec::fully_connected(64, 4)});
  init_xavier(net, 4);
  const Tensor before = net.params()[0].weight;
  EquivMapSet maps = init_equiv_maps(2, 4, 6);
  TrainConfig cfg;
  cfg.epochs = 0;
  TrainResult res = train_unsupervised(net, maps, ds.frames, samples, cfg);
  CHECK(res.iterations == 0);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(net.params()[0].weight[i] == before[i]);
  }
}

TEST_CASE("train_unsupervised: loss trend is non-increasing on the linear world") {
  LatentLinearConfig wc;
  wc.noise_sigma = 0.0;
  wc.seed = 8;
  LatentLinearWorld world(wc);
  Dataset ds = gen_latent_dataset(world, {12, 7, 0.1, 30.0, 0.0}, 9);
  MotionPatternModel model = declare_patterns({{1.0, 0.0}, {0.0, 1.0}});
  auto samples = mine_equiv_samples(ds, model, 0.11);

  Network net({64}, {LayerSpec::fully_connected(64, 16), LayerSpec::relu(),
                     LayerSpec::fully_connected(16, 4)});
  init_xavier(net, 10);
  EquivMapSet maps = init_equiv_maps(2, 4, 11);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.02;
  cfg.batch_size_pairs = 16;
  cfg.seed = 12;
  TrainResult res = train_unsupervised(net, maps, ds.frames, samples, cfg);
  REQUIRE(res.epoch_mean_loss.size() == 30);
  // 10-epoch moving average must not increase start-to-end
  auto avg = [&](std::size_t lo) {
    double s = 0.0;
    for (std::size_t i = lo; i < lo + 10; ++i) s += res.epoch_mean_loss[i];
    return s / 10.0;
  };
  CHECK(avg(20) <= avg(0));
  for (const auto& row : res.trace) CHECK(std::isfinite(row.total));
}

TEST_CASE("train_joint: fixed seed reproduces bitwise-identical parameters") {
  LatentLinearConfig wc;
  wc.seed = 21;
  LatentLinearWorld world(wc);
  Dataset ds = gen_latent_dataset(world, {10, 6, 0.1, 30.0, 0.0}, 22);
  MotionPatternModel model = declare_patterns({{1.0, 0.0}, {0.0, 1.0}});
  auto samples = mine_equiv_samples(ds, model, 0.11);
  auto labeled = pick_labeled_subset(ds, 3, 23);

  auto run = [&]() {
    Network net({64}, {LayerSpec::fully_connected(64, 8), LayerSpec::relu(),
                       LayerSpec::fully_connected(8, 4)});
    init_xavier(net, 24);
    EquivMapSet maps = init_equiv_maps(2, 4, 25);
    ClassifierHead head = init_classifier(4, ds.classes, 26);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 27;
    train_joint(net, &maps, head, ds.frames, labeled, samples, {},
                TrainMethod::Equiv, cfg);
    return net.params()[0].weight;
  };
  const Tensor a = run();
  const Tensor b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("train_joint: lambda=0 equiv run is bitwise-equal to a clsnet run") {
  LatentLinearConfig wc;
  wc.seed = 31;
  LatentLinearWorld world(wc);
  Dataset ds = gen_latent_dataset(world, {10, 6, 0.1, 30.0, 0.0}, 32);
  MotionPatternModel model = declare_patterns({{1.0, 0.0}, {0.0, 1.0}});
  auto samples = mine_equiv_samples(ds, model, 0.11);
  auto labeled = pick_labeled_subset(ds, 3, 33);

  auto run = [&](TrainMethod method, double lambda) {
    Network net({64}, {LayerSpec::fully_connected(64, 8), LayerSpec::relu(),
                       LayerSpec::fully_connected(8, 4)});
    init_xavier(net, 34);
    EquivMapSet maps = init_equiv_maps(2, 4, 35);
    ClassifierHead head = init_classifier(4, ds.classes, 36);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 37;
    cfg.lambda_equiv = lambda;
    train_joint(net, &maps, head, ds.frames, labeled, samples, {}, method, cfg);
    return std::make_pair(net.params()[0].weight, head.weight);
  };
  const auto equiv0 = run(TrainMethod::Equiv, 0.0);
  const auto clsnet = run(TrainMethod::Clsnet, 1.0);
  for (std::size_t i = 0; i < equiv0.first.size(); ++i) {
    CHECK(equiv0.first[i] == clsnet.first[i]);
  }
  for (std::size_t i = 0; i < equiv0.second.size(); ++i) {
    CHECK(equiv0.second[i] == clsnet.second[i]);
  }
}

TEST_CASE("build_timed_pairs mixes neighbors and distant pairs") {
  LatentLinearConfig wc;
  wc.seed = 41;
  LatentLinearWorld world(wc);
  Dataset ds = gen_latent_dataset(world, {6, 8, 0.1, 30.0, 0.0}, 42);
  auto pairs = build_timed_pairs(ds, 0.15, 3.0, 43);
  std::size_t pos = 0, neg = 0;
  for (const auto& p : pairs) {
    if (p.gap_s <= 0.15) {
      ++pos;
    } else {
      ++neg;
    }
  }
  CHECK(pos > 0);
  CHECK(neg == 3 * pos);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "egoeq/gradcheck.hpp"
#include "egoeq/network.hpp"
#include "egoeq/optimizer.hpp"

using namespace egoeq;

namespace {

Tensor random_batch(std::vector<std::size_t> shape, std::uint64_t seed,
                    double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// quadratic probe loss: L = 0.5 * sum(f^2)
FeatureLoss quadratic_loss() {
  return [](const Tensor& f, Tensor* df) {
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      acc += 0.5 * f[i] * f[i];
      if (df != nullptr) (*df)[i] = f[i];
    }
    return acc;
  };
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.row(1).size() == 3);
  t.at2(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK_THROWS_AS(Tensor({2, 0}), InputError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), InputError);
}

TEST_CASE("xavier bound matches the hand-evaluated Glorot value") {
  // FullyConnected(4, 6): sqrt(6 / 10)
  CHECK(xavier_bound(4, 6) == doctest::Approx(0.7745966692414834).epsilon(1e-15));
}

TEST_CASE("init_xavier draws inside the bound, zero biases, deterministic") {
  Network net({4}, {LayerSpec::fully_connected(4, 6)});
  init_xavier(net, 42);
  const double b = xavier_bound(4, 6);
  for (std::size_t i = 0; i < net.params()[0].weight.size(); ++i) {
    CHECK(std::abs(net.params()[0].weight[i]) <= b);
  }
  for (std::size_t i = 0; i < net.params()[0].bias.size(); ++i) {
    CHECK(net.params()[0].bias[i] == 0.0);
  }
  Network net2({4}, {LayerSpec::fully_connected(4, 6)});
  init_xavier(net2, 42);
  for (std::size_t i = 0; i < net.params()[0].weight.size(); ++i) {
    CHECK(net.params()[0].weight[i] == net2.params()[0].weight[i]);  // bitwise
  }
  Network net3({4}, {LayerSpec::fully_connected(4, 6)});
  init_xavier(net3, 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < net.params()[0].weight.size(); ++i) {
    any_diff = any_diff || net.params()[0].weight[i] != net3.params()[0].weight[i];
  }
  CHECK(any_diff);
}

TEST_CASE("relu forward matches the definition") {
  Network net({3}, {LayerSpec::relu()});
  Tensor x({1, 3}, {-1.0, 0.0, 2.0});
  Tensor f = forward(net, x);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);
  CHECK(f[2] == 2.0);
}

TEST_CASE("fully connected forward: hand matrix multiply") {
  Network net({2}, {LayerSpec::fully_connected(2, 2)});
  auto& p = net.mutable_params()[0];
  p.weight = Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0});
  p.bias = Tensor({2}, {0.0, 0.0});
  Tensor f = forward(net, Tensor({1, 2}, {1.0, 1.0}));
  CHECK(f[0] == doctest::Approx(3.0));
  CHECK(f[1] == doctest::Approx(7.0));
}

TEST_CASE("conv with a one-hot center kernel reproduces the interior") {
  Network net({1, 5, 5}, {LayerSpec::conv(1, 1, 3, 1)});
  auto& p = net.mutable_params()[0];
  p.weight.fill(0.0);
  p.weight[4] = 1.0;  // center of the 3x3 kernel
  Tensor x = random_batch({1, 1, 5, 5}, 7);
  Tensor f = forward(net, x);
  REQUIRE(f.dim(1) == 9);
  for (std::size_t y = 0; y < 3; ++y) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(f[y * 3 + c] == x[(y + 1) * 5 + (c + 1)]);
    }
  }
}

TEST_CASE("forward rejects shape mismatches naming the layer") {
  Network net({1, 5, 5}, {LayerSpec::conv(1, 2, 3, 1)});
  CHECK_THROWS_AS(forward(net, Tensor({2, 7})), InputError);
  CHECK_THROWS_WITH_AS(Network({1, 2, 2}, {LayerSpec::conv(1, 1, 3, 1)}),
                       doctest::Contains("layer 0"), InputError);
  CHECK_THROWS_AS(Network({6}, {LayerSpec::fully_connected(5, 2)}), InputError);
}

TEST_CASE("backward with zero upstream gradient yields zero gradients") {
  Network net({4}, {LayerSpec::fully_connected(4, 3), LayerSpec::relu(),
                    LayerSpec::fully_connected(3, 2)});
  init_xavier(net, 3);
  ForwardTape tape;
  Tensor x = random_batch({2, 4}, 5);
  Tensor f = forward(net, x, &tape);
  Gradients g = zero_gradients(net);
  Tensor gin = backward(net, tape, Tensor({2, 2}), g);
  for (const auto& lp : g.layers) {
    for (std::size_t i = 0; i < lp.weight.size(); ++i) CHECK(lp.weight[i] == 0.0);
  }
  for (std::size_t i = 0; i < gin.size(); ++i) CHECK(gin[i] == 0.0);
}

TEST_CASE("fully connected backward: dW = g x^T on the hand 2x2 case") {
  Network net({2}, {LayerSpec::fully_connected(2, 2)});
  auto& p = net.mutable_params()[0];
  p.weight = Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0});
  ForwardTape tape;
  Tensor x({1, 2}, {1.0, 2.0});
  forward(net, x, &tape);
  Gradients g = zero_gradients(net);
  Tensor grad_out({1, 2}, {0.5, -1.0});
  Tensor gin = backward(net, tape, grad_out, g);
  // dW = g x^T
  CHECK(g.layers[0].weight[0] == doctest::Approx(0.5));
  CHECK(g.layers[0].weight[1] == doctest::Approx(1.0));
  CHECK(g.layers[0].weight[2] == doctest::Approx(-1.0));
  CHECK(g.layers[0].weight[3] == doctest::Approx(-2.0));
  CHECK(g.layers[0].bias[0] == doctest::Approx(0.5));
  CHECK(g.layers[0].bias[1] == doctest::Approx(-1.0));
  // dx = W^T g
  CHECK(gin[0] == doctest::Approx(-2.5));
  CHECK(gin[1] == doctest::Approx(-3.0));
}

TEST_CASE("backward detects a stale tape") {
  Network net({3}, {LayerSpec::fully_connected(3, 2)});
  init_xavier(net, 1);
  ForwardTape tape;
  forward(net, random_batch({1, 3}, 2), &tape);
  init_xavier(net, 9);  // parameters changed after the forward pass
  Gradients g = zero_gradients(net);
  CHECK_THROWS_WITH_AS(backward(net, tape, Tensor({1, 2}), g),
                       doctest::Contains("stale"), InputError);
}

TEST_CASE("max pool ties route gradient to the lowest linear index") {
  Network net({1, 2, 2}, {LayerSpec::max_pool(2, 2)});
  ForwardTape tape;
  Tensor x({1, 1, 2, 2}, {1.0, 1.0, 1.0, 1.0});
  Tensor f = forward(net, x, &tape);
  CHECK(f[0] == 1.0);
  Gradients g = zero_gradients(net);
  Tensor gin = backward(net, tape, Tensor({1, 1}, {2.0}), g);
  CHECK(gin[0] == 2.0);
  CHECK(gin[1] == 0.0);
  CHECK(gin[2] == 0.0);
  CHECK(gin[3] == 0.0);
}

TEST_CASE("avg pool backward distributes the gradient uniformly") {
  Network net({1, 2, 2}, {LayerSpec::avg_pool(2, 2)});
  ForwardTape tape;
  forward(net, random_batch({1, 1, 2, 2}, 11), &tape);
  Gradients g = zero_gradients(net);
  Tensor gin = backward(net, tape, Tensor({1, 1}, {2.0}), g);
  for (std::size_t i = 0; i < 4; ++i) CHECK(gin[i] == doctest::Approx(0.5));
}

TEST_CASE("backward matches central finite differences on a random small net") {
  Network net({1, 6, 6},
              {LayerSpec::conv(1, 2, 3, 1), LayerSpec::max_pool(2, 2),
               LayerSpec::relu(), LayerSpec::fully_connected(8, 4)});
  init_xavier(net, 17);
  Tensor batch = random_batch({3, 1, 6, 6}, 23, 0.05, 1.0);  // away from kinks
  FdReport rep = finite_diff_check(net, quadratic_loss(), batch, 1e-5);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("finite_diff_check: linear net with quadratic loss is exact") {
  Network net({4}, {LayerSpec::fully_connected(4, 3)});
  init_xavier(net, 5);
  FdReport rep = finite_diff_check(net, quadratic_loss(), random_batch({2, 4}, 6), 1e-5);
  CHECK(rep.max_rel_error < 1e-8);
}

TEST_CASE("finite_diff_check: zero net with constant loss reports zero error") {
  Network net({4}, {LayerSpec::fully_connected(4, 3)});
  FeatureLoss constant = [](const Tensor&, Tensor* df) {
    if (df != nullptr) df->fill(0.0);
    return 42.0;
  };
  FdReport rep = finite_diff_check(net, constant, random_batch({2, 4}, 6), 1e-5);
  CHECK(rep.max_rel_error == 0.0);
}

TEST_CASE("finite_diff_check: relu net with nudged inputs stays under 1e-4") {
  Network net({4}, {LayerSpec::fully_connected(4, 4), LayerSpec::relu(),
                    LayerSpec::fully_connected(4, 2)});
  init_xavier(net, 31);
  // inputs nudged away from 0 by >= 10h
  Tensor batch = random_batch({3, 4}, 37, 0.2, 1.0);
  FdReport rep = finite_diff_check(net, quadratic_loss(), batch, 1e-5);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("nesterov: lr=0 leaves parameters unchanged") {
  Network net({3}, {LayerSpec::fully_connected(3, 2)});
  init_xavier(net, 2);
  const Tensor saved = net.params()[0].weight;
  ParamRefs refs = network_params(net);
  OptimizerState st(0.0, 0.9, refs);
  Gradients g = zero_gradients(net);
  g.layers[0].weight.fill(5.0);
  g.layers[0].bias.fill(-1.0);
  nesterov_step(net, g, st);
  for (std::size_t i = 0; i < saved.size(); ++i) {
    CHECK(net.params()[0].weight[i] == saved[i]);
  }
  CHECK(st.iteration == 1);
}

TEST_CASE("nesterov: mu=0 reduces to plain SGD") {
  Network net({2}, {LayerSpec::fully_connected(2, 1)});
  auto& p = net.mutable_params()[0];
  p.weight = Tensor({1, 2}, {1.0, 2.0});
  ParamRefs refs = network_params(net);
  OptimizerState st(0.5, 0.0, refs);
  Gradients g = zero_gradients(net);
  g.layers[0].weight = Tensor({1, 2}, {2.0, -2.0});
  nesterov_step(net, g, st);
  CHECK(net.params()[0].weight[0] == doctest::Approx(0.0));
  CHECK(net.params()[0].weight[1] == doctest::Approx(3.0));
}

TEST_CASE("nesterov: quadratic bowl matches the hand-iterated sequence") {
  // scalar theta = 1, grad(theta) = theta, lr = 0.1, mu = 0.9
  Tensor theta({1}, {1.0});
  ParamRefs refs;
  refs.add(theta);
  OptimizerState st(0.1, 0.9, refs);
  for (int step = 0; step < 2; ++step) {
    nesterov_cycle(refs, st, [&](std::vector<Tensor>& grads) {
      grads[0][0] = theta[0];  // gradient evaluated at the lookahead point
      return 0.5 * theta[0] * theta[0];
    });
  }
  // step 1: lookahead 1.0, v=-0.1, theta=0.9
  // step 2: lookahead 0.81, v=-0.171, theta=0.729
  CHECK(theta[0] == doctest::Approx(0.729).epsilon(1e-12));
  CHECK(st.iteration == 2);
}

TEST_CASE("nesterov aborts on non-finite gradients") {
  Network net({2}, {LayerSpec::fully_connected(2, 1)});
  init_xavier(net, 4);
  ParamRefs refs = network_params(net);
  OptimizerState st(0.1, 0.9, refs);
  Gradients g = zero_gradients(net);
  g.layers[0].weight[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nesterov_step(net, g, st), NumericError);
}

TEST_CASE("forward output stays finite on finite inputs") {
  Network net({1, 8, 8},
              {LayerSpec::conv(1, 4, 3, 1), LayerSpec::relu(),
               LayerSpec::avg_pool(2, 2), LayerSpec::fully_connected(4 * 3 * 3, 5)});
  init_xavier(net, 12);
  Tensor f = forward(net, random_batch({4, 1, 8, 8}, 13));
  CHECK(f.all_finite());
  CHECK(f.dim(0) == 4);
  CHECK(f.dim(1) == 5);
}

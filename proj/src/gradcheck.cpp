#include "egoeq/gradcheck.hpp"

#include <cmath>

namespace egoeq {

namespace {

double rel_error(double analytic, double central) {
  const double denom = std::max({std::abs(analytic), std::abs(central), 1e-12});
  return std::abs(analytic - central) / denom;
}

}  // namespace

FdReport finite_diff_check_params(const ParamRefs& params,
                                  const std::function<double()>& value_fn,
                                  const std::vector<Tensor>& analytic, double h) {
  require(h > 0.0, "finite_diff_check: h must be positive");
  require(analytic.size() == params.tensors.size(),
          "finite_diff_check: analytic gradient list does not match parameters");
  FdReport report;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    Tensor& theta = *params.tensors[t];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double orig = theta[j];
      theta[j] = orig + h;
      const double up = value_fn();
      theta[j] = orig - h;
      const double down = value_fn();
      theta[j] = orig;
      const double central = (up - down) / (2.0 * h);
      const double err = rel_error(analytic[t][j], central);
      ++report.params_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = "tensor " + std::to_string(t) + " entry " + std::to_string(j) +
                       " analytic=" + std::to_string(analytic[t][j]) +
                       " central=" + std::to_string(central);
      }
    }
  }
  return report;
}

FdReport finite_diff_check(Network& net, const FeatureLoss& loss_fn,
                           const Tensor& batch, double h) {
  // Analytic pass.
  ForwardTape tape;
  Tensor feats = forward(net, batch, &tape);
  Tensor dfeats(feats.shape());
  loss_fn(feats, &dfeats);
  Gradients grads = zero_gradients(net);
  backward(net, tape, dfeats, grads);

  std::vector<Tensor> analytic;
  for (const auto& g : grads.layers) {
    if (!g.weight.empty()) {
      analytic.push_back(g.weight);
      analytic.push_back(g.bias);
    }
  }
  ParamRefs refs = network_params(net);
  auto value = [&]() {
    Tensor f = forward(net, batch);
    return loss_fn(f, nullptr);
  };
  return finite_diff_check_params(refs, value, analytic, h);
}

}  // namespace egoeq

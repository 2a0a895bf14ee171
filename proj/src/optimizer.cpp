#include "egoeq/optimizer.hpp"

#include <cmath>

namespace egoeq {

std::size_t ParamRefs::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors) n += t->size();
  return n;
}

ParamRefs network_params(Network& net) {
  ParamRefs refs;
  for (auto& p : net.mutable_params()) {
    refs.add(p.weight);
    refs.add(p.bias);
  }
  return refs;
}

OptimizerState::OptimizerState(double lr, double mu, const ParamRefs& params)
    : learning_rate(lr), momentum_coeff(mu) {
  require(lr >= 0.0, "learning rate must be non-negative");
  require(mu >= 0.0 && mu < 1.0, "momentum coefficient must be in [0,1)");
  velocity.reserve(params.tensors.size());
  for (const Tensor* t : params.tensors) velocity.emplace_back(t->shape());
}

void nesterov_step(const ParamRefs& params, const std::vector<Tensor>& grads,
                   OptimizerState& state) {
  require(grads.size() == params.tensors.size() &&
              state.velocity.size() == params.tensors.size(),
          "nesterov_step: gradient/velocity lists do not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require(grads[i].same_shape(*params.tensors[i]),
            "nesterov_step: gradient shape mismatch at tensor " + std::to_string(i));
    if (!grads[i].all_finite()) {
      throw NumericError("nesterov_step: non-finite gradient in tensor " +
                         std::to_string(i) + " at iteration " +
                         std::to_string(state.iteration));
    }
  }
  const double mu = state.momentum_coeff;
  const double lr = state.learning_rate;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& v = state.velocity[i];
    Tensor& theta = *params.tensors[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = mu * v[j] - lr * grads[i][j];
      theta[j] += v[j];
    }
  }
  ++state.iteration;
}

void nesterov_step(Network& net, const Gradients& grads, OptimizerState& state) {
  ParamRefs refs = network_params(net);
  std::vector<Tensor> flat;
  for (const auto& g : grads.layers) {
    if (!g.weight.empty()) {
      flat.push_back(g.weight);
      flat.push_back(g.bias);
    }
  }
  nesterov_step(refs, flat, state);
}

double nesterov_cycle(const ParamRefs& params, OptimizerState& state,
                      const std::function<double(std::vector<Tensor>&)>& grad_fn) {
  require(state.velocity.size() == params.tensors.size(),
          "nesterov_cycle: state does not match parameters");
  // Save theta, evaluate the gradient at theta + mu*v, restore, then step.
  std::vector<Tensor> saved;
  saved.reserve(params.tensors.size());
  for (const Tensor* t : params.tensors) saved.push_back(*t);
  const double mu = state.momentum_coeff;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    Tensor& theta = *params.tensors[i];
    const Tensor& v = state.velocity[i];
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] += mu * v[j];
  }
  std::vector<Tensor> grads;
  grads.reserve(params.tensors.size());
  for (const Tensor* t : params.tensors) grads.emplace_back(t->shape());
  double loss = 0.0;
  try {
    loss = grad_fn(grads);
  } catch (...) {
    for (std::size_t i = 0; i < params.tensors.size(); ++i) *params.tensors[i] = saved[i];
    throw;
  }
  for (std::size_t i = 0; i < params.tensors.size(); ++i) *params.tensors[i] = saved[i];
  if (!std::isfinite(loss)) {
    throw NumericError("nesterov_cycle: non-finite loss at iteration " +
                       std::to_string(state.iteration));
  }
  nesterov_step(params, grads, state);
  return loss;
}

}  // namespace egoeq

#ifndef EGOEQ_OPTIMIZER_HPP
#define EGOEQ_OPTIMIZER_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "egoeq/network.hpp"

namespace egoeq {

// Flat view over every trainable tensor of a model (net layers, equivariance
// maps, classifier head, ...). Order is fixed by the caller and must be stable
// across steps.
struct ParamRefs {
  std::vector<Tensor*> tensors;

  void add(Tensor& t) {
    if (!t.empty()) tensors.push_back(&t);
  }
  std::size_t scalar_count() const;
};

ParamRefs network_params(Network& net);

// Nesterov-momentum state. Velocities mirror the referenced tensors.
struct OptimizerState {
  double learning_rate = 0.01;
  double momentum_coeff = 0.9;  // mu in [0,1)
  std::vector<Tensor> velocity;
  std::uint64_t iteration = 0;

  OptimizerState() = default;
  OptimizerState(double lr, double mu, const ParamRefs& params);
};

// Raw update: v <- mu*v - lr*grad, theta <- theta + v. grads must be the
// gradient at the lookahead point theta + mu*v (see nesterov_cycle).
// Non-finite gradients abort the step.
void nesterov_step(const ParamRefs& params, const std::vector<Tensor>& grads,
                   OptimizerState& state);

// Convenience overload over a bare network.
void nesterov_step(Network& net, const Gradients& grads, OptimizerState& state);

// Full lookahead cycle: moves params to theta + mu*v, calls grad_fn to obtain
// (loss, grads) there, restores theta, applies the step. Returns the loss.
double nesterov_cycle(const ParamRefs& params, OptimizerState& state,
                      const std::function<double(std::vector<Tensor>&)>& grad_fn);

}  // namespace egoeq

#endif

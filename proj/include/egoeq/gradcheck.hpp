#ifndef EGOEQ_GRADCHECK_HPP
#define EGOEQ_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "egoeq/network.hpp"
#include "egoeq/optimizer.hpp"

namespace egoeq {

// Scalar loss over network features. `dfeats`, when non-null, receives the
// gradient of the loss w.r.t. the features (same shape).
using FeatureLoss = std::function<double(const Tensor& features, Tensor* dfeats)>;

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t params_checked = 0;
  std::string worst;  // human-readable location of the worst entry
};

// Central-difference check of backward() against the analytic gradient for
// every network parameter. Relative error per entry:
//   |analytic - central| / max(|analytic|, |central|, 1e-12)
FdReport finite_diff_check(Network& net, const FeatureLoss& loss_fn,
                           const Tensor& batch, double h);

// Same check for an arbitrary parameter set: value_fn() re-evaluates the
// scalar objective at the current parameter values; `analytic` holds the
// claimed gradients, aligned with params.
FdReport finite_diff_check_params(const ParamRefs& params,
                                  const std::function<double()>& value_fn,
                                  const std::vector<Tensor>& analytic, double h);

}  // namespace egoeq

#endif

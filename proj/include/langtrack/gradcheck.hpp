#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "langtrack/net.hpp"

namespace langtrack {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
};

/// Compare tape gradients with central finite differences.
/// `loss_fn` must rebuild the tape from the current parameter values and
/// return a scalar; it has to be deterministic (no live dropout). For large
/// tensors `entries_per_param` bounds the number of probed entries (0 probes
/// all), selected from a fixed stream so reruns check identical entries.
GradCheckReport grad_check(const std::function<Value()>& loss_fn,
                           const std::vector<std::pair<std::string, Value>>& params,
                           double eps = 1e-5, int entries_per_param = 0,
                           std::uint64_t select_seed = 1234);

/// Spec surface: checks d(sum of final activation)/d(params) of a stack.
double grad_check(Network& net, const Tensor& input, double eps = 1e-5);

}  // namespace langtrack

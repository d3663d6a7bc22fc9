#include "langtrack/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "langtrack/rng.hpp"

namespace langtrack {

GradCheckReport grad_check(const std::function<Value()>& loss_fn,
                           const std::vector<std::pair<std::string, Value>>& params,
                           double eps, int entries_per_param,
                           std::uint64_t select_seed) {
  for (const auto& [name, p] : params)
    if (!p->grad.empty()) p->grad.fill(0.0);

  Value loss = loss_fn();
  if (loss->val.size() != 1 || !std::isfinite(loss->val[0]))
    throw std::runtime_error("grad_check: loss must be a finite scalar");
  backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params)
    analytic.push_back(p->grad.empty() ? Tensor(p->val.shape()) : p->grad);

  GradCheckReport report;
  Rng pick(select_seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& theta = params[pi].second->val;
    const std::int64_t n = theta.size();
    std::vector<std::int64_t> probes;
    if (entries_per_param <= 0 || n <= entries_per_param) {
      probes.resize(static_cast<size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) probes[static_cast<size_t>(i)] = i;
    } else {
      for (int i = 0; i < entries_per_param; ++i)
        probes.push_back(pick.uniform_int(0, static_cast<int>(n - 1)));
    }
    for (std::int64_t idx : probes) {
      const double saved = theta[idx];
      theta[idx] = saved + eps;
      const double lp = loss_fn()->val[0];
      theta[idx] = saved - eps;
      const double lm = loss_fn()->val[0];
      theta[idx] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw std::runtime_error("grad_check: non-finite perturbed loss");
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[pi][idx];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[pi].first;
      }
    }
  }
  return report;
}

double grad_check(Network& net, const Tensor& input, double eps) {
  std::vector<std::pair<std::string, Value>> params;
  for (size_t i = 0; i < net.params().size(); ++i)
    params.emplace_back(net.param_names()[i], net.params()[i]);
  auto loss_fn = [&]() {
    return sum(net.apply(constant(input), false, nullptr));
  };
  return grad_check(loss_fn, params, eps).max_rel_err;
}

}  // namespace langtrack

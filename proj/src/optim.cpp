#include "langtrack/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace langtrack {

OptKind opt_kind_from_name(const std::string& name) {
  if (name == "sgd") return OptKind::Sgd;
  if (name == "adam") return OptKind::Adam;
  if (name == "adagrad") return OptKind::Adagrad;
  throw std::invalid_argument("unknown optimizer: " + name);
}

void optimizer_step(const std::vector<Tensor*>& params,
                    const std::vector<const Tensor*>& grads,
                    OptimizerState& state) {
  if (params.size() != grads.size())
    throw std::invalid_argument("optimizer_step: param/grad count mismatch");
  if (state.lr <= 0.0) throw std::invalid_argument("optimizer_step: lr must be > 0");

  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]))
      throw std::invalid_argument("optimizer_step: shape mismatch at param " +
                                  std::to_string(i));
    if (!grads[i]->all_finite())
      throw std::runtime_error("optimizer_step: non-finite gradient, step refused");
  }

  auto ensure = [&](std::vector<Tensor>& acc) {
    if (acc.empty())
      for (const Tensor* p : params) acc.emplace_back(p->shape());
    if (acc.size() != params.size())
      throw std::invalid_argument("optimizer_step: accumulator count mismatch");
    for (size_t i = 0; i < acc.size(); ++i)
      if (!acc[i].same_shape(*params[i]))
        throw std::invalid_argument("optimizer_step: accumulator shape mismatch");
  };

  state.step_count += 1;
  switch (state.kind) {
    case OptKind::Sgd: {
      if (state.momentum != 0.0) ensure(state.accum1);
      for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (state.momentum != 0.0) {
          Tensor& vel = state.accum1[i];
          for (std::int64_t j = 0; j < p.size(); ++j) {
            vel[j] = state.momentum * vel[j] + g[j];
            p[j] -= state.lr * vel[j];
          }
        } else {
          for (std::int64_t j = 0; j < p.size(); ++j) p[j] -= state.lr * g[j];
        }
      }
      break;
    }
    case OptKind::Adam: {
      ensure(state.accum1);
      ensure(state.accum2);
      const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
      const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
      for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& m = state.accum1[i];
        Tensor& v = state.accum2[i];
        for (std::int64_t j = 0; j < p.size(); ++j) {
          m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
          v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
          const double mhat = m[j] / bc1;
          const double vhat = v[j] / bc2;
          p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
      }
      break;
    }
    case OptKind::Adagrad: {
      ensure(state.accum1);
      for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& h = state.accum1[i];
        for (std::int64_t j = 0; j < p.size(); ++j) {
          h[j] += g[j] * g[j];
          p[j] -= state.lr * g[j] / (std::sqrt(h[j]) + state.eps);
        }
      }
      break;
    }
  }
}

void Optimizer::add_group(const std::vector<Value>& params, double lr) {
  Group g;
  g.params = params;
  g.state.kind = kind_;
  g.state.lr = lr;
  groups_.push_back(std::move(g));
}

void Optimizer::step() {
  for (Group& g : groups_) {
    std::vector<Tensor*> ps;
    std::vector<const Tensor*> gs;
    std::vector<Tensor> zero_holders;
    ps.reserve(g.params.size());
    zero_holders.reserve(g.params.size());
    for (Value& v : g.params) {
      ps.push_back(&v->val);
      if (v->grad.empty()) zero_holders.emplace_back(v->val.shape());
    }
    size_t zi = 0;
    for (Value& v : g.params)
      gs.push_back(v->grad.empty() ? &zero_holders[zi++] : &v->grad);
    optimizer_step(ps, gs, g.state);
  }
}

void Optimizer::zero_grad() {
  for (Group& g : groups_)
    for (Value& v : g.params)
      if (!v->grad.empty()) v->grad.fill(0.0);
}

std::int64_t Optimizer::step_count() const {
  return groups_.empty() ? 0 : groups_.front().state.step_count;
}

}  // namespace langtrack

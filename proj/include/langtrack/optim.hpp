#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langtrack/autodiff.hpp"

namespace langtrack {

enum class OptKind { Sgd, Adam, Adagrad };

OptKind opt_kind_from_name(const std::string& name);

struct OptimizerState {
  OptKind kind = OptKind::Sgd;
  double lr = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double momentum = 0.0;  // sgd
  std::int64_t step_count = 0;
  std::vector<Tensor> accum1;  // adam m / adagrad sum-sq / sgd velocity
  std::vector<Tensor> accum2;  // adam v
};

/// One update over a parameter list. Accumulators are allocated on first use
/// and must keep matching shapes afterwards. A non-finite gradient refuses
/// the whole step.
void optimizer_step(const std::vector<Tensor*>& params,
                    const std::vector<const Tensor*>& grads,
                    OptimizerState& state);

/// Groups of tape parameters updated from their accumulated node gradients,
/// each group with its own learning rate.
class Optimizer {
 public:
  Optimizer(OptKind kind, double lr) : kind_(kind), default_lr_(lr) {}

  void add_params(const std::vector<Value>& params) {
    add_group(params, default_lr_);
  }
  void add_group(const std::vector<Value>& params, double lr);

  void step();
  void zero_grad();
  std::int64_t step_count() const;

 private:
  struct Group {
    std::vector<Value> params;
    OptimizerState state;
  };
  OptKind kind_;
  double default_lr_;
  std::vector<Group> groups_;
};

}  // namespace langtrack

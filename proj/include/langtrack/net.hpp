#pragma once

#include <map>
#include <string>
#include <vector>

#include "langtrack/autodiff.hpp"

namespace langtrack {

enum class LayerKind {
  Conv2d,
  Conv1d,
  FullyConnected,
  Relu,
  Sigmoid,
  SoftmaxRows,
  Dropout,
  Concat,
  UpsampleConv2d,
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
  LayerKind kind;
  std::string name;
  int in_ch = 0, out_ch = 0;  // conv2d / upsample-conv2d / conv1d channels
  int kernel = 0, stride = 1, pad = 0;
  int in_dim = 0, out_dim = 0;  // fully-connected
  double rate = 0.5;            // dropout

  std::string describe() const;
  static LayerSpec parse(const std::string& line);
};

/// Sequential stack over the fixed layer vocabulary. Parameters live as
/// autodiff leaves so a forward pass through `apply` lands on the shared tape
/// of whatever model composition is being trained.
class Network {
 public:
  Network() = default;

  void add(LayerSpec spec, Rng& rng);

  /// Chain the stack onto an existing tape value.
  Value apply(const Value& input, bool train = false, Rng* dropout_rng = nullptr) const;

  /// Spec surface: run the stack on a raw input, returning every layer's
  /// activation. Retains the tape for `backward`.
  std::vector<Tensor> forward(const Tensor& input, bool train = false,
                              Rng* dropout_rng = nullptr);
  /// Spec surface: seed the last activation's gradient and return gradients
  /// keyed by parameter name. Rejected if `forward` has not been run.
  std::map<std::string, Tensor> backward(const Tensor& output_grad);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::vector<Value>& params() { return params_; }
  const std::vector<Value>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return param_names_; }

  /// Plain-text manifest, one layer per line.
  std::string manifest() const;

  void set_trainable(bool trainable);
  /// Parameters of the fully-connected sublayers only (online fine-tuning).
  std::vector<Value> fc_params() const;

  std::vector<std::pair<std::string, const Tensor*>> named_tensors(
      const std::string& prefix) const;
  void load_tensors(const std::string& prefix,
                    const std::map<std::string, const Tensor*>& by_name);

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Value> params_;
  std::vector<std::string> param_names_;
  // layer index -> index of its first param in params_ (-1 if none)
  std::vector<int> layer_param_;
  std::vector<Value> last_activations_;
};

/// Kaiming-uniform fan-in initialization; biases zero.
Tensor kaiming_uniform(const std::vector<int>& shape, int fan_in, Rng& rng);

}  // namespace langtrack

#include "langtrack/net.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace langtrack {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::FullyConnected: return "fully-connected";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::SoftmaxRows: return "softmax-rows";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Concat: return "concat";
    case LayerKind::UpsampleConv2d: return "upsample-conv2d";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  for (LayerKind k :
       {LayerKind::Conv2d, LayerKind::Conv1d, LayerKind::FullyConnected,
        LayerKind::Relu, LayerKind::Sigmoid, LayerKind::SoftmaxRows,
        LayerKind::Dropout, LayerKind::Concat, LayerKind::UpsampleConv2d})
    if (name == layer_kind_name(k)) return k;
  throw std::invalid_argument("unknown layer kind: " + name);
}

std::string LayerSpec::describe() const {
  std::ostringstream os;
  os << name << " " << layer_kind_name(kind);
  switch (kind) {
    case LayerKind::Conv2d:
    case LayerKind::UpsampleConv2d:
    case LayerKind::Conv1d:
      os << " in=" << in_ch << " out=" << out_ch << " k=" << kernel
         << " s=" << stride << " p=" << pad;
      break;
    case LayerKind::FullyConnected:
      os << " in=" << in_dim << " out=" << out_dim;
      break;
    case LayerKind::Dropout:
      os << " rate=" << rate;
      break;
    default:
      break;
  }
  return os.str();
}

LayerSpec LayerSpec::parse(const std::string& line) {
  std::istringstream is(line);
  LayerSpec s;
  std::string kind;
  is >> s.name >> kind;
  if (!is) throw std::invalid_argument("bad layer line: " + line);
  s.kind = layer_kind_from_name(kind);
  std::string kv;
  while (is >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = kv.substr(0, eq);
    const double v = std::stod(kv.substr(eq + 1));
    if (key == "in") s.in_ch = s.in_dim = static_cast<int>(v);
    else if (key == "out") s.out_ch = s.out_dim = static_cast<int>(v);
    else if (key == "k") s.kernel = static_cast<int>(v);
    else if (key == "s") s.stride = static_cast<int>(v);
    else if (key == "p") s.pad = static_cast<int>(v);
    else if (key == "rate") s.rate = v;
  }
  return s;
}

Tensor kaiming_uniform(const std::vector<int>& shape, int fan_in, Rng& rng) {
  Tensor t(shape);
  const double bound = std::sqrt(6.0 / std::max(1, fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

void Network::add(LayerSpec spec, Rng& rng) {
  if (spec.name.empty()) {
    std::ostringstream os;
    os << "layer" << layers_.size();
    spec.name = os.str();
  }
  layer_param_.push_back(-1);
  switch (spec.kind) {
    case LayerKind::Conv2d:
    case LayerKind::UpsampleConv2d: {
      layer_param_.back() = static_cast<int>(params_.size());
      const int fan_in = spec.in_ch * spec.kernel * spec.kernel;
      params_.push_back(parameter(kaiming_uniform(
          {spec.out_ch, spec.in_ch, spec.kernel, spec.kernel}, fan_in, rng)));
      param_names_.push_back(spec.name + ".weight");
      params_.push_back(parameter(Tensor({spec.out_ch})));
      param_names_.push_back(spec.name + ".bias");
      break;
    }
    case LayerKind::Conv1d: {
      layer_param_.back() = static_cast<int>(params_.size());
      const int fan_in = spec.in_ch * spec.kernel;
      params_.push_back(parameter(
          kaiming_uniform({spec.kernel, spec.in_ch, spec.out_ch}, fan_in, rng)));
      param_names_.push_back(spec.name + ".weight");
      params_.push_back(parameter(Tensor({spec.out_ch})));
      param_names_.push_back(spec.name + ".bias");
      break;
    }
    case LayerKind::FullyConnected: {
      layer_param_.back() = static_cast<int>(params_.size());
      params_.push_back(parameter(
          kaiming_uniform({spec.in_dim, spec.out_dim}, spec.in_dim, rng)));
      param_names_.push_back(spec.name + ".weight");
      params_.push_back(parameter(Tensor({spec.out_dim})));
      param_names_.push_back(spec.name + ".bias");
      break;
    }
    case LayerKind::Concat:
      throw std::invalid_argument(
          "concat takes two inputs and cannot appear in a sequential stack");
    default:
      break;
  }
  layers_.push_back(std::move(spec));
}

Value Network::apply(const Value& input, bool train, Rng* dropout_rng) const {
  Value x = input;
  for (size_t li = 0; li < layers_.size(); ++li) {
    const LayerSpec& spec = layers_[li];
    const int pi = layer_param_[li];
    switch (spec.kind) {
      case LayerKind::Conv2d:
        if (x->val.ndim() != 4)
          throw std::invalid_argument("layer " + spec.name +
                                      ": conv2d expects NCHW input, got " +
                                      x->val.shape_str());
        if (x->val.dim(1) != spec.in_ch)
          throw std::invalid_argument("layer " + spec.name +
                                      ": channel mismatch, got " +
                                      x->val.shape_str());
        x = conv2d(x, params_[pi], params_[pi + 1], spec.stride, spec.pad);
        break;
      case LayerKind::UpsampleConv2d:
        x = upsample2x(x);
        x = conv2d(x, params_[pi], params_[pi + 1], spec.stride, spec.pad);
        break;
      case LayerKind::Conv1d:
        x = conv1d_tokens(x, params_[pi], params_[pi + 1], spec.pad);
        break;
      case LayerKind::FullyConnected:
        if (x->val.ndim() == 4) x = flatten_images(x);
        if (x->val.ndim() != 2 || x->val.dim(1) != spec.in_dim)
          throw std::invalid_argument("layer " + spec.name +
                                      ": expects width " +
                                      std::to_string(spec.in_dim) + ", got " +
                                      x->val.shape_str());
        x = linear(x, params_[pi], params_[pi + 1]);
        break;
      case LayerKind::Relu:
        x = relu(x);
        break;
      case LayerKind::Sigmoid:
        x = sigmoid(x);
        break;
      case LayerKind::SoftmaxRows:
        x = softmax_rows(x);
        break;
      case LayerKind::Dropout:
        if (train && dropout_rng == nullptr)
          throw std::invalid_argument("dropout in train mode needs an rng");
        x = train ? dropout(x, spec.rate, *dropout_rng, true) : x;
        break;
      case LayerKind::Concat:
        throw std::invalid_argument("concat in sequential stack");
    }
  }
  return x;
}

std::vector<Tensor> Network::forward(const Tensor& input, bool train,
                                     Rng* dropout_rng) {
  last_activations_.clear();
  Value x = constant(input);
  for (size_t li = 0; li < layers_.size(); ++li) {
    Value next = x;
    const LayerSpec& spec = layers_[li];
    const int pi = layer_param_[li];
    switch (spec.kind) {
      case LayerKind::Conv2d:
        if (next->val.ndim() != 4 || next->val.dim(1) != spec.in_ch)
          throw std::invalid_argument("layer " + spec.name +
                                      ": shape mismatch, got " +
                                      next->val.shape_str());
        next = conv2d(next, params_[pi], params_[pi + 1], spec.stride, spec.pad);
        break;
      case LayerKind::UpsampleConv2d:
        next = conv2d(upsample2x(next), params_[pi], params_[pi + 1],
                      spec.stride, spec.pad);
        break;
      case LayerKind::Conv1d:
        next = conv1d_tokens(next, params_[pi], params_[pi + 1], spec.pad);
        break;
      case LayerKind::FullyConnected:
        if (next->val.ndim() == 4) next = flatten_images(next);
        if (next->val.ndim() != 2 || next->val.dim(1) != spec.in_dim)
          throw std::invalid_argument("layer " + spec.name +
                                      ": shape mismatch, got " +
                                      next->val.shape_str());
        next = linear(next, params_[pi], params_[pi + 1]);
        break;
      case LayerKind::Relu:
        next = relu(next);
        break;
      case LayerKind::Sigmoid:
        next = sigmoid(next);
        break;
      case LayerKind::SoftmaxRows:
        next = softmax_rows(next);
        break;
      case LayerKind::Dropout:
        if (train && dropout_rng == nullptr)
          throw std::invalid_argument("dropout in train mode needs an rng");
        next = train ? dropout(next, spec.rate, *dropout_rng, true) : next;
        break;
      case LayerKind::Concat:
        throw std::invalid_argument("concat in sequential stack");
    }
    x = next;
    last_activations_.push_back(x);
  }
  if (!last_activations_.empty() && !last_activations_.back()->val.all_finite())
    throw std::runtime_error("forward produced non-finite values");
  std::vector<Tensor> acts;
  acts.reserve(last_activations_.size());
  for (const auto& v : last_activations_) acts.push_back(v->val);
  return acts;
}

std::map<std::string, Tensor> Network::backward(const Tensor& output_grad) {
  if (last_activations_.empty())
    throw std::runtime_error("backward called before forward");
  for (auto& p : params_)
    if (!p->grad.empty()) p->grad.fill(0.0);
  langtrack::backward(last_activations_.back(), output_grad);
  std::map<std::string, Tensor> grads;
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor g = params_[i]->grad.empty() ? Tensor(params_[i]->val.shape())
                                        : params_[i]->grad;
    grads.emplace(param_names_[i], std::move(g));
  }
  return grads;
}

std::string Network::manifest() const {
  std::ostringstream os;
  for (const auto& l : layers_) os << l.describe() << "\n";
  return os.str();
}

void Network::set_trainable(bool trainable) {
  for (auto& p : params_) p->requires_grad = trainable;
}

std::vector<Value> Network::fc_params() const {
  std::vector<Value> out;
  for (size_t li = 0; li < layers_.size(); ++li)
    if (layers_[li].kind == LayerKind::FullyConnected) {
      out.push_back(params_[layer_param_[li]]);
      out.push_back(params_[layer_param_[li] + 1]);
    }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Network::named_tensors(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (size_t i = 0; i < params_.size(); ++i)
    out.emplace_back(prefix + param_names_[i], &params_[i]->val);
  return out;
}

void Network::load_tensors(const std::string& prefix,
                           const std::map<std::string, const Tensor*>& by_name) {
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto it = by_name.find(prefix + param_names_[i]);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint missing tensor " + prefix +
                               param_names_[i]);
    if (!it->second->same_shape(params_[i]->val))
      throw std::runtime_error("checkpoint shape mismatch for " + prefix +
                               param_names_[i]);
    params_[i]->val = *it->second;
  }
}

}  // namespace langtrack

#include "langtrack/relgraph.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "langtrack/net.hpp"

namespace langtrack {

namespace {

Value make_node_(Tensor val, std::vector<Value> parents, const char* op) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  n->op = op;
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

}  // namespace

GcnStack GcnStack::create(int input_width, int depth, Rng& rng) {
  if (depth < 1) throw std::invalid_argument("GcnStack: depth must be >= 1");
  GcnStack s;
  // hidden widths equal the input width
  for (int l = 0; l < depth; ++l)
    s.weights.push_back(parameter(
        kaiming_uniform({input_width, input_width}, input_width, rng)));
  return s;
}

int GcnStack::output_width() const {
  if (weights.empty()) throw std::runtime_error("GcnStack: empty stack");
  return weights.back()->val.dim(1);
}

Value pairwise_similarity(const Value& features) {
  const Tensor& x = features->val;
  if (x.ndim() != 2) throw std::invalid_argument("pairwise_similarity: matrix input");
  const int n = x.dim(0), k = x.dim(1);
  if (n < 2)
    throw std::invalid_argument("pairwise_similarity: needs at least 2 nodes");
  if (!x.all_finite())
    throw std::invalid_argument("pairwise_similarity: non-finite features");

  Tensor s({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < k; ++c) {
        const double d = x.at(i, c) - x.at(j, c);
        d2 += d * d;
      }
      const double v = -std::sqrt(d2);
      s.at(i, j) = v;
      s.at(j, i) = v;
    }

  Value node = make_node_(std::move(s), {features}, "pairwise_similarity");
  node->backprop = [n, k](Node& self) {
    const Tensor& x = self.parents[0]->val;
    const Tensor& g = self.grad;
    Tensor dx({n, k});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dist = -self.val.at(i, j);
        if (dist <= 0.0) continue;  // coincident nodes: subgradient 0
        const double w = (g.at(i, j) + g.at(j, i)) / dist;
        if (j < i) continue;  // each unordered pair handled once below
        for (int c = 0; c < k; ++c) {
          const double diff = x.at(i, c) - x.at(j, c);
          dx.at(i, c) -= w * diff;
          dx.at(j, c) += w * diff;
        }
      }
    self.parents[0]->add_grad(dx);
  };
  return node;
}

Value affinity_matrix(const Value& similarity) {
  const Tensor& s = similarity->val;
  if (s.ndim() != 2 || s.dim(0) != s.dim(1))
    throw std::invalid_argument("affinity_matrix: square input required");
  if (!s.all_finite())
    throw std::invalid_argument("affinity_matrix: non-finite input");
  const int n = s.dim(0);
  if (n < 2) throw std::invalid_argument("affinity_matrix: needs n >= 2");

  Tensor w({n, n});
  for (int i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) m = std::max(m, s.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) denom += std::exp(s.at(i, j) - m);
    for (int j = 0; j < n; ++j)
      w.at(i, j) = j == i ? 0.0 : std::exp(s.at(i, j) - m) / denom;
  }

  Value node = make_node_(std::move(w), {similarity}, "affinity_matrix");
  node->backprop = [n](Node& self) {
    const Tensor& y = self.val;
    const Tensor& g = self.grad;
    Tensor ds({n, n});
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) dot += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < n; ++j)
        if (j != i) ds.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
    }
    self.parents[0]->add_grad(ds);
  };
  return node;
}

Value normalize_graph(const Value& affinity) {
  const Tensor& w = affinity->val;
  if (w.ndim() != 2 || w.dim(0) != w.dim(1))
    throw std::invalid_argument("normalize_graph: square input required");
  if (!w.all_finite())
    throw std::invalid_argument("normalize_graph: non-finite input");
  return softmax_rows(affinity);
}

Value gcn_layer(const Value& graph, const Value& node_features,
                const Value& weight, bool last) {
  const Tensor& g = graph->val;
  const Tensor& x = node_features->val;
  const Tensor& w = weight->val;
  if (g.ndim() != 2 || g.dim(0) != g.dim(1))
    throw std::invalid_argument("gcn_layer: graph must be square");
  if (x.ndim() != 2 || x.dim(0) != g.dim(0))
    throw std::invalid_argument("gcn_layer: node count mismatch");
  if (w.ndim() != 2 || w.dim(0) != x.dim(1))
    throw std::invalid_argument("gcn_layer: weight width mismatch");
  Value z = matmul(matmul(graph, node_features), weight);
  return last ? z : relu(z);
}

Value enhance_features(const Value& features, const GcnStack& stack,
                       const RelGraphConfig& cfg) {
  if (stack.weights.empty())
    throw std::invalid_argument("enhance_features: empty stack");
  Value s = pairwise_similarity(features);
  Value w = affinity_matrix(s);
  Value g = cfg.single_normalization ? w : normalize_graph(w);
  Value z = features;
  for (int l = 0; l < stack.depth(); ++l)
    z = gcn_layer(g, z, stack.weights[static_cast<size_t>(l)],
                  l + 1 == stack.depth());
  return concat_cols(features, z);
}

}  // namespace langtrack

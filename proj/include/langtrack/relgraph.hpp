#pragma once

#include <vector>

#include "langtrack/autodiff.hpp"

namespace langtrack {

/// Stacked graph-convolution weights; layer l maps width k_l to k_{l+1}.
/// ReLU after every layer except the last.
struct GcnStack {
  std::vector<Value> weights;

  static GcnStack create(int input_width, int depth, Rng& rng);
  int depth() const { return static_cast<int>(weights.size()); }
  int output_width() const;
  std::vector<Value> params() const { return weights; }
};

struct RelGraphConfig {
  bool single_normalization = false;  // ablation: skip the second softmax
};

/// Negative pairwise Euclidean distance; symmetric with zero diagonal.
Value pairwise_similarity(const Value& features);

/// Row normalization over the off-diagonal entries: each row of the result
/// sums to 1 excluding the zeroed diagonal. Stable via row-max subtraction.
Value affinity_matrix(const Value& similarity);

/// Row-wise softmax over the full affinity matrix (diagonal included).
Value normalize_graph(const Value& affinity);

/// One graph convolution: relu(G @ X @ W), linear when `last`.
Value gcn_layer(const Value& graph, const Value& node_features,
                const Value& weight, bool last);

/// Build the relation graph from node features, run the stack, and return
/// the column-concatenation of original and propagated features.
Value enhance_features(const Value& features, const GcnStack& stack,
                       const RelGraphConfig& cfg = {});

}  // namespace langtrack

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "langtrack/rng.hpp"
#include "langtrack/tensor.hpp"

namespace langtrack {

struct Node;
using Value = std::shared_ptr<Node>;

/// One entry of the backward tape. `backprop` pushes this node's gradient
/// into its parents; parents are held alive by the child, so a tape is freed
/// by dropping the root.
struct Node {
  Tensor val;
  Tensor grad;  // lazily allocated, same shape as val
  bool requires_grad = false;
  std::vector<Value> parents;
  std::function<void(Node&)> backprop;
  const char* op = "leaf";

  Tensor& ensure_grad();
  void add_grad(const Tensor& g);
};

Value constant(Tensor t);
Value parameter(Tensor t);
Value leaf(Tensor t, bool requires_grad);

/// Reverse pass from a scalar root (seed gradient 1).
void backward(const Value& root);
/// Reverse pass with an explicit output gradient.
void backward(const Value& root, const Tensor& seed);

// ---- elementwise / shape ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value scale(const Value& x, double s);
Value relu(const Value& x);
Value sigmoid(const Value& x);
Value softmax_rows(const Value& x);
Value dropout(const Value& x, double rate, Rng& rng, bool train);
Value concat_cols(const Value& a, const Value& b);
Value concat_channels(const Value& a, const Value& b);
Value flatten_images(const Value& x);  // NCHW -> N x (C*H*W)
Value gather_rows(const Value& x, std::vector<int> rows);
Value stack_rows(const std::vector<Value>& rows);  // m vectors {D} -> m x D
Value max_rows(const Value& x);                    // L x D -> {D} column max
Value select_col(const Value& x, int col);         // n x k -> {n}
Value sum(const Value& x);
Value mean(const Value& x);
Value tile_rows_to_maps(const Value& m, int h, int w);  // N x C -> N x C x h x w

// ---- linear algebra ----
Value matmul(const Value& a, const Value& b);
Value linear(const Value& x, const Value& w, const Value& b);  // x@w + b

// ---- convolution ----
// x: N x C x H x W, w: O x C x kh x kw, b: {O}
Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad);
Value upsample2x(const Value& x);
// token-axis convolution: x: L x Din, w: {k, Din, Dout}, b: {Dout}
Value conv1d_tokens(const Value& x, const Value& w, const Value& b, int pad);

// ---- losses ----
// p: probabilities in (0,1), y: same-shape 0/1 labels; entries clamped to
// [1e-12, 1-1e-12] before the log. Sum over entries.
Value bce_loss(const Value& p, const Tensor& y);
// Per-entry BCE averaged over all entries (per-pixel loss for maps).
Value bce_mean(const Value& p, const Tensor& y);
// anchor {D}, pos m x D, neg m x D paired row-wise; hinge at `margin`.
Value triplet_loss(const Value& anchor, const Value& pos, const Value& neg,
                   double margin);

}  // namespace langtrack

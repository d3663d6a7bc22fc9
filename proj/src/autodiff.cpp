#include "langtrack/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace langtrack {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

MapC map2d(const Tensor& t, int rows, int cols) {
  return MapC(t.data(), rows, cols);
}
MapM map2d(Tensor& t, int rows, int cols) {
  return MapM(t.data(), rows, cols);
}

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Value make_node(Tensor val, std::vector<Value> parents, const char* op) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  n->op = op;
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.empty() && val.size() > 0) grad = Tensor(val.shape());
  return grad;
}

void Node::add_grad(const Tensor& g) {
  Tensor& dst = ensure_grad();
  if (!dst.same_shape(g)) throw std::runtime_error("gradient shape mismatch");
  const double* src = g.data();
  double* d = dst.data();
  for (std::int64_t i = 0; i < g.size(); ++i) d[i] += src[i];
}

Value leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = requires_grad;
  return n;
}

Value constant(Tensor t) { return leaf(std::move(t), false); }
Value parameter(Tensor t) { return leaf(std::move(t), true); }

void backward(const Value& root, const Tensor& seed) {
  require(root != nullptr, "backward: null root");
  if (!root->val.same_shape(seed))
    throw std::invalid_argument("backward: seed shape mismatch");

  // iterative post-order over parents
  std::vector<Node*> order;
  std::unordered_set<Node*> done;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  std::unordered_set<Node*> onpath{root.get()};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !done.count(p) && !onpath.count(p)) {
        onpath.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      done.insert(node);
      order.push_back(node);
      onpath.erase(node);
      stack.pop_back();
    }
  }

  root->add_grad(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop(*n);
  }
}

void backward(const Value& root) {
  require(root->val.size() == 1, "backward: root must be scalar");
  backward(root, Tensor::scalar(1.0));
}

// ---------------------------------------------------------------------------
// elementwise / shape
// ---------------------------------------------------------------------------

Value add(const Value& a, const Value& b) {
  require(a->val.same_shape(b->val), "add: shape mismatch");
  Tensor out = a->val;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += b->val[i];
  Value n = make_node(std::move(out), {a, b}, "add");
  n->backprop = [](Node& self) {
    self.parents[0]->add_grad(self.grad);
    self.parents[1]->add_grad(self.grad);
  };
  return n;
}

Value sub(const Value& a, const Value& b) {
  require(a->val.same_shape(b->val), "sub: shape mismatch");
  Tensor out = a->val;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= b->val[i];
  Value n = make_node(std::move(out), {a, b}, "sub");
  n->backprop = [](Node& self) {
    self.parents[0]->add_grad(self.grad);
    Tensor neg = self.grad;
    for (std::int64_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
    self.parents[1]->add_grad(neg);
  };
  return n;
}

Value scale(const Value& x, double s) {
  Tensor out = x->val;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= s;
  Value n = make_node(std::move(out), {x}, "scale");
  n->backprop = [s](Node& self) {
    Tensor g = self.grad;
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= s;
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value relu(const Value& x) {
  Tensor out = x->val;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  Value n = make_node(std::move(out), {x}, "relu");
  n->backprop = [](Node& self) {
    Tensor g = self.grad;
    const Tensor& v = self.parents[0]->val;
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (v[i] <= 0.0) g[i] = 0.0;
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value sigmoid(const Value& x) {
  Tensor out = x->val;
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Value n = make_node(std::move(out), {x}, "sigmoid");
  n->backprop = [](Node& self) {
    Tensor g = self.grad;
    const Tensor& y = self.val;
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value softmax_rows(const Value& x) {
  require(x->val.ndim() == 2, "softmax_rows: expects a matrix");
  const int rows = x->val.dim(0), cols = x->val.dim(1);
  Tensor out = x->val;
  for (int i = 0; i < rows; ++i) {
    double m = out.at(i, 0);
    for (int j = 1; j < cols; ++j) m = std::max(m, out.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - m);
      denom += out.at(i, j);
    }
    for (int j = 0; j < cols; ++j) out.at(i, j) /= denom;
  }
  Value n = make_node(std::move(out), {x}, "softmax_rows");
  n->backprop = [rows, cols](Node& self) {
    Tensor dx(self.val.shape());
    const Tensor& y = self.val;
    const Tensor& g = self.grad;
    for (int i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < cols; ++j)
        dx.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
    }
    self.parents[0]->add_grad(dx);
  };
  return n;
}

Value dropout(const Value& x, double rate, Rng& rng, bool train) {
  if (!train || rate <= 0.0) return x;
  require(rate < 1.0, "dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x->val.size());
  Tensor out = x->val;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    (*mask)[static_cast<size_t>(i)] = m;
    out[i] *= m;
  }
  Value n = make_node(std::move(out), {x}, "dropout");
  n->backprop = [mask](Node& self) {
    Tensor g = self.grad;
    for (std::int64_t i = 0; i < g.size(); ++i)
      g[i] *= (*mask)[static_cast<size_t>(i)];
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value concat_cols(const Value& a, const Value& b) {
  require(a->val.ndim() == 2 && b->val.ndim() == 2, "concat_cols: matrices");
  require(a->val.dim(0) == b->val.dim(0), "concat_cols: row mismatch");
  const int rows = a->val.dim(0), ka = a->val.dim(1), kb = b->val.dim(1);
  Tensor out({rows, ka + kb});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < ka; ++j) out.at(i, j) = a->val.at(i, j);
    for (int j = 0; j < kb; ++j) out.at(i, ka + j) = b->val.at(i, j);
  }
  Value n = make_node(std::move(out), {a, b}, "concat_cols");
  n->backprop = [rows, ka, kb](Node& self) {
    Tensor ga({rows, ka}), gb({rows, kb});
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < ka; ++j) ga.at(i, j) = self.grad.at(i, j);
      for (int j = 0; j < kb; ++j) gb.at(i, j) = self.grad.at(i, ka + j);
    }
    self.parents[0]->add_grad(ga);
    self.parents[1]->add_grad(gb);
  };
  return n;
}

Value concat_channels(const Value& a, const Value& b) {
  require(a->val.ndim() == 4 && b->val.ndim() == 4, "concat_channels: NCHW");
  require(a->val.dim(0) == b->val.dim(0) && a->val.dim(2) == b->val.dim(2) &&
              a->val.dim(3) == b->val.dim(3),
          "concat_channels: shape mismatch");
  const int nN = a->val.dim(0), ca = a->val.dim(1), cb = b->val.dim(1);
  const int h = a->val.dim(2), w = a->val.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  Tensor out({nN, ca + cb, h, w});
  for (int s = 0; s < nN; ++s) {
    std::copy_n(a->val.data() + s * ca * plane, ca * plane,
                out.data() + s * (ca + cb) * plane);
    std::copy_n(b->val.data() + s * cb * plane, cb * plane,
                out.data() + (s * (ca + cb) + ca) * plane);
  }
  Value n = make_node(std::move(out), {a, b}, "concat_channels");
  n->backprop = [nN, ca, cb, plane](Node& self) {
    Tensor ga(self.parents[0]->val.shape()), gb(self.parents[1]->val.shape());
    for (int s = 0; s < nN; ++s) {
      std::copy_n(self.grad.data() + s * (ca + cb) * plane, ca * plane,
                  ga.data() + s * ca * plane);
      std::copy_n(self.grad.data() + (s * (ca + cb) + ca) * plane, cb * plane,
                  gb.data() + s * cb * plane);
    }
    self.parents[0]->add_grad(ga);
    self.parents[1]->add_grad(gb);
  };
  return n;
}

Value flatten_images(const Value& x) {
  require(x->val.ndim() == 4, "flatten_images: NCHW input");
  const int nN = x->val.dim(0);
  const int feat = x->val.dim(1) * x->val.dim(2) * x->val.dim(3);
  Tensor out = Tensor::from_data({nN, feat}, x->val.buffer());
  Value n = make_node(std::move(out), {x}, "flatten");
  n->backprop = [](Node& self) {
    Tensor g = Tensor::from_data(self.parents[0]->val.shape(),
                                 self.grad.buffer());
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value gather_rows(const Value& x, std::vector<int> rows) {
  require(x->val.ndim() == 2, "gather_rows: matrix input");
  const int k = x->val.dim(1), nr = x->val.dim(0);
  const int m = static_cast<int>(rows.size());
  Tensor out({m, k});
  for (int i = 0; i < m; ++i) {
    require(rows[static_cast<size_t>(i)] >= 0 && rows[static_cast<size_t>(i)] < nr,
            "gather_rows: index out of range");
    std::copy_n(x->val.data() + static_cast<std::int64_t>(rows[static_cast<size_t>(i)]) * k,
                k, out.data() + static_cast<std::int64_t>(i) * k);
  }
  auto idx = std::make_shared<std::vector<int>>(std::move(rows));
  Value n = make_node(std::move(out), {x}, "gather_rows");
  n->backprop = [idx, k](Node& self) {
    Tensor g(self.parents[0]->val.shape());
    for (size_t i = 0; i < idx->size(); ++i) {
      const double* src = self.grad.data() + static_cast<std::int64_t>(i) * k;
      double* dst = g.data() + static_cast<std::int64_t>((*idx)[i]) * k;
      for (int j = 0; j < k; ++j) dst[j] += src[j];
    }
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value stack_rows(const std::vector<Value>& rows) {
  require(!rows.empty(), "stack_rows: empty input");
  const int d = static_cast<int>(rows[0]->val.size());
  const int m = static_cast<int>(rows.size());
  Tensor out({m, d});
  std::vector<Value> parents;
  parents.reserve(rows.size());
  for (int i = 0; i < m; ++i) {
    require(rows[static_cast<size_t>(i)]->val.size() == d, "stack_rows: width mismatch");
    std::copy_n(rows[static_cast<size_t>(i)]->val.data(), d,
                out.data() + static_cast<std::int64_t>(i) * d);
    parents.push_back(rows[static_cast<size_t>(i)]);
  }
  Value n = make_node(std::move(out), std::move(parents), "stack_rows");
  n->backprop = [d](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      Tensor g(self.parents[i]->val.shape());
      std::copy_n(self.grad.data() + static_cast<std::int64_t>(i) * d, d, g.data());
      self.parents[i]->add_grad(g);
    }
  };
  return n;
}

Value max_rows(const Value& x) {
  require(x->val.ndim() == 2, "max_rows: matrix input");
  const int rows = x->val.dim(0), cols = x->val.dim(1);
  Tensor out({cols});
  auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(cols), 0);
  for (int j = 0; j < cols; ++j) {
    double best = x->val.at(0, j);
    int bi = 0;
    for (int i = 1; i < rows; ++i) {
      if (x->val.at(i, j) > best) {
        best = x->val.at(i, j);
        bi = i;
      }
    }
    out[j] = best;
    (*arg)[static_cast<size_t>(j)] = bi;
  }
  Value n = make_node(std::move(out), {x}, "max_rows");
  n->backprop = [arg, cols](Node& self) {
    Tensor g(self.parents[0]->val.shape());
    for (int j = 0; j < cols; ++j)
      g.at((*arg)[static_cast<size_t>(j)], j) = self.grad[j];
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value select_col(const Value& x, int col) {
  require(x->val.ndim() == 2, "select_col: matrix input");
  require(col >= 0 && col < x->val.dim(1), "select_col: column out of range");
  const int rows = x->val.dim(0);
  Tensor out({rows});
  for (int i = 0; i < rows; ++i) out[i] = x->val.at(i, col);
  Value n = make_node(std::move(out), {x}, "select_col");
  n->backprop = [col, rows](Node& self) {
    Tensor g(self.parents[0]->val.shape());
    for (int i = 0; i < rows; ++i) g.at(i, col) = self.grad[i];
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value sum(const Value& x) {
  double s = 0.0;
  for (std::int64_t i = 0; i < x->val.size(); ++i) s += x->val[i];
  Value n = make_node(Tensor::scalar(s), {x}, "sum");
  n->backprop = [](Node& self) {
    Tensor g(self.parents[0]->val.shape(), self.grad[0]);
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value mean(const Value& x) {
  require(x->val.size() > 0, "mean: empty input");
  double s = 0.0;
  for (std::int64_t i = 0; i < x->val.size(); ++i) s += x->val[i];
  const double inv = 1.0 / static_cast<double>(x->val.size());
  Value n = make_node(Tensor::scalar(s * inv), {x}, "mean");
  n->backprop = [inv](Node& self) {
    Tensor g(self.parents[0]->val.shape(), self.grad[0] * inv);
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value tile_rows_to_maps(const Value& m, int h, int w) {
  require(m->val.ndim() == 2, "tile_rows_to_maps: matrix input");
  const int nN = m->val.dim(0), c = m->val.dim(1);
  Tensor out({nN, c, h, w});
  for (int s = 0; s < nN; ++s)
    for (int ch = 0; ch < c; ++ch) {
      const double v = m->val.at(s, ch);
      double* dst = &out.at(s, ch, 0, 0);
      std::fill_n(dst, static_cast<std::int64_t>(h) * w, v);
    }
  Value n = make_node(std::move(out), {m}, "tile_rows_to_maps");
  n->backprop = [nN, c, h, w](Node& self) {
    Tensor g({nN, c});
    for (int s = 0; s < nN; ++s)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const double* src = &self.grad.at(s, ch, 0, 0);
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i)
          acc += src[i];
        g.at(s, ch) = acc;
      }
    self.parents[0]->add_grad(g);
  };
  return n;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
  require(a->val.ndim() == 2 && b->val.ndim() == 2, "matmul: matrices");
  require(a->val.dim(1) == b->val.dim(0), "matmul: inner dim mismatch");
  const int m = a->val.dim(0), k = a->val.dim(1), p = b->val.dim(1);
  Tensor out({m, p});
  map2d(out, m, p).noalias() = map2d(a->val, m, k) * map2d(b->val, k, p);
  Value n = make_node(std::move(out), {a, b}, "matmul");
  n->backprop = [m, k, p](Node& self) {
    const Tensor& av = self.parents[0]->val;
    const Tensor& bv = self.parents[1]->val;
    if (self.parents[0]->requires_grad) {
      Tensor da({m, k});
      map2d(da, m, k).noalias() =
          map2d(self.grad, m, p) * map2d(bv, k, p).transpose();
      self.parents[0]->add_grad(da);
    }
    if (self.parents[1]->requires_grad) {
      Tensor db({k, p});
      map2d(db, k, p).noalias() =
          map2d(av, m, k).transpose() * map2d(self.grad, m, p);
      self.parents[1]->add_grad(db);
    }
  };
  return n;
}

Value linear(const Value& x, const Value& w, const Value& b) {
  require(x->val.ndim() == 2 && w->val.ndim() == 2, "linear: matrices");
  require(x->val.dim(1) == w->val.dim(0), "linear: inner dim mismatch");
  require(b->val.size() == w->val.dim(1), "linear: bias width mismatch");
  const int m = x->val.dim(0), k = x->val.dim(1), p = w->val.dim(1);
  Tensor out({m, p});
  map2d(out, m, p).noalias() = map2d(x->val, m, k) * map2d(w->val, k, p);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < p; ++j) out.at(i, j) += b->val[j];
  Value n = make_node(std::move(out), {x, w, b}, "linear");
  n->backprop = [m, k, p](Node& self) {
    const Tensor& xv = self.parents[0]->val;
    const Tensor& wv = self.parents[1]->val;
    if (self.parents[0]->requires_grad) {
      Tensor dx({m, k});
      map2d(dx, m, k).noalias() =
          map2d(self.grad, m, p) * map2d(wv, k, p).transpose();
      self.parents[0]->add_grad(dx);
    }
    if (self.parents[1]->requires_grad) {
      Tensor dw({k, p});
      map2d(dw, k, p).noalias() =
          map2d(xv, m, k).transpose() * map2d(self.grad, m, p);
      self.parents[1]->add_grad(dw);
    }
    if (self.parents[2]->requires_grad) {
      Tensor db({p});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) db[j] += self.grad.at(i, j);
      self.parents[2]->add_grad(db);
    }
  };
  return n;
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  int n, c, h, w, o, kh, kw, stride, pad, ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& wt, int stride, int pad) {
  ConvDims d;
  d.n = x.dim(0), d.c = x.dim(1), d.h = x.dim(2), d.w = x.dim(3);
  d.o = wt.dim(0), d.kh = wt.dim(2), d.kw = wt.dim(3);
  d.stride = stride, d.pad = pad;
  require(wt.dim(1) == d.c, "conv2d: channel mismatch between input and kernel");
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  require(d.ho > 0 && d.wo > 0, "conv2d: kernel larger than padded input");
  return d;
}

// rows: n*ho*wo, cols: c*kh*kw
Tensor im2col(const Tensor& x, const ConvDims& d) {
  const int cols = d.c * d.kh * d.kw;
  Tensor out({d.n * d.ho * d.wo, cols});
  std::int64_t r = 0;
  for (int s = 0; s < d.n; ++s)
    for (int oy = 0; oy < d.ho; ++oy)
      for (int ox = 0; ox < d.wo; ++ox, ++r) {
        double* dst = out.data() + r * cols;
        for (int ch = 0; ch < d.c; ++ch)
          for (int ky = 0; ky < d.kh; ++ky) {
            const int y = oy * d.stride + ky - d.pad;
            for (int kx = 0; kx < d.kw; ++kx, ++dst) {
              const int xx = ox * d.stride + kx - d.pad;
              *dst = (y >= 0 && y < d.h && xx >= 0 && xx < d.w)
                         ? x.at(s, ch, y, xx)
                         : 0.0;
            }
          }
      }
  return out;
}

void col2im_accum(const Tensor& cols, const ConvDims& d, Tensor& dx) {
  const int ncols = d.c * d.kh * d.kw;
  std::int64_t r = 0;
  for (int s = 0; s < d.n; ++s)
    for (int oy = 0; oy < d.ho; ++oy)
      for (int ox = 0; ox < d.wo; ++ox, ++r) {
        const double* src = cols.data() + r * ncols;
        for (int ch = 0; ch < d.c; ++ch)
          for (int ky = 0; ky < d.kh; ++ky) {
            const int y = oy * d.stride + ky - d.pad;
            for (int kx = 0; kx < d.kw; ++kx, ++src) {
              const int xx = ox * d.stride + kx - d.pad;
              if (y >= 0 && y < d.h && xx >= 0 && xx < d.w)
                dx.at(s, ch, y, xx) += *src;
            }
          }
      }
}

// (n*ho*wo) x o row block layout -> NCHW
Tensor rows_to_nchw(const Tensor& rows, const ConvDims& d) {
  Tensor out({d.n, d.o, d.ho, d.wo});
  for (int s = 0; s < d.n; ++s)
    for (int oy = 0; oy < d.ho; ++oy)
      for (int ox = 0; ox < d.wo; ++ox) {
        const std::int64_t r =
            (static_cast<std::int64_t>(s) * d.ho + oy) * d.wo + ox;
        for (int ch = 0; ch < d.o; ++ch)
          out.at(s, ch, oy, ox) = rows[r * d.o + ch];
      }
  return out;
}

Tensor nchw_to_rows(const Tensor& g, const ConvDims& d) {
  Tensor rows({d.n * d.ho * d.wo, d.o});
  for (int s = 0; s < d.n; ++s)
    for (int oy = 0; oy < d.ho; ++oy)
      for (int ox = 0; ox < d.wo; ++ox) {
        const std::int64_t r =
            (static_cast<std::int64_t>(s) * d.ho + oy) * d.wo + ox;
        for (int ch = 0; ch < d.o; ++ch)
          rows[r * d.o + ch] = g.at(s, ch, oy, ox);
      }
  return rows;
}

}  // namespace

Value conv2d(const Value& x, const Value& w, const Value& b, int stride,
             int pad) {
  require(x->val.ndim() == 4, "conv2d: input must be NCHW");
  require(w->val.ndim() == 4, "conv2d: kernel must be OCKhKw");
  require(b->val.size() == w->val.dim(0), "conv2d: bias width mismatch");
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const ConvDims d = conv_dims(x->val, w->val, stride, pad);
  auto cols = std::make_shared<Tensor>(im2col(x->val, d));
  const int kcols = d.c * d.kh * d.kw;
  const std::int64_t rows = cols->dim(0);

  Tensor out_rows({static_cast<int>(rows), d.o});
  map2d(out_rows, static_cast<int>(rows), d.o).noalias() =
      map2d(*cols, static_cast<int>(rows), kcols) *
      map2d(w->val, d.o, kcols).transpose();
  for (std::int64_t r = 0; r < rows; ++r)
    for (int ch = 0; ch < d.o; ++ch) out_rows[r * d.o + ch] += b->val[ch];

  Value n = make_node(rows_to_nchw(out_rows, d), {x, w, b}, "conv2d");
  n->backprop = [d, cols, kcols, rows](Node& self) {
    const Tensor grows = nchw_to_rows(self.grad, d);
    if (self.parents[1]->requires_grad) {
      Tensor dw(self.parents[1]->val.shape());
      map2d(dw, d.o, kcols).noalias() =
          map2d(grows, static_cast<int>(rows), d.o).transpose() *
          map2d(*cols, static_cast<int>(rows), kcols);
      self.parents[1]->add_grad(dw);
    }
    if (self.parents[2]->requires_grad) {
      Tensor db({d.o});
      for (std::int64_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < d.o; ++ch) db[ch] += grows[r * d.o + ch];
      self.parents[2]->add_grad(db);
    }
    if (self.parents[0]->requires_grad) {
      Tensor dcols({static_cast<int>(rows), kcols});
      map2d(dcols, static_cast<int>(rows), kcols).noalias() =
          map2d(grows, static_cast<int>(rows), d.o) *
          map2d(self.parents[1]->val, d.o, kcols);
      Tensor dx(self.parents[0]->val.shape());
      col2im_accum(dcols, d, dx);
      self.parents[0]->add_grad(dx);
    }
  };
  return n;
}

Value upsample2x(const Value& x) {
  require(x->val.ndim() == 4, "upsample2x: NCHW input");
  const int nN = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2),
            w = x->val.dim(3);
  Tensor out({nN, c, 2 * h, 2 * w});
  for (int s = 0; s < nN; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const double v = x->val.at(s, ch, y, xx);
          out.at(s, ch, 2 * y, 2 * xx) = v;
          out.at(s, ch, 2 * y, 2 * xx + 1) = v;
          out.at(s, ch, 2 * y + 1, 2 * xx) = v;
          out.at(s, ch, 2 * y + 1, 2 * xx + 1) = v;
        }
  Value n = make_node(std::move(out), {x}, "upsample2x");
  n->backprop = [nN, c, h, w](Node& self) {
    Tensor g({nN, c, h, w});
    for (int s = 0; s < nN; ++s)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            g.at(s, ch, y, xx) = self.grad.at(s, ch, 2 * y, 2 * xx) +
                                 self.grad.at(s, ch, 2 * y, 2 * xx + 1) +
                                 self.grad.at(s, ch, 2 * y + 1, 2 * xx) +
                                 self.grad.at(s, ch, 2 * y + 1, 2 * xx + 1);
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value conv1d_tokens(const Value& x, const Value& w, const Value& b, int pad) {
  require(x->val.ndim() == 2, "conv1d: input must be L x Din");
  require(w->val.ndim() == 3, "conv1d: kernel must be {k, Din, Dout}");
  const int L = x->val.dim(0), din = x->val.dim(1);
  const int k = w->val.dim(0), dout = w->val.dim(2);
  require(w->val.dim(1) == din, "conv1d: channel mismatch");
  require(b->val.size() == dout, "conv1d: bias width mismatch");
  const int lo = L + 2 * pad - k + 1;
  require(lo == L, "conv1d: expects same-length output (pad = k/2)");

  // cols: L x (k*din)
  Tensor cols({L, k * din});
  for (int t = 0; t < L; ++t)
    for (int tap = 0; tap < k; ++tap) {
      const int src = t + tap - pad;
      double* dst = cols.data() + (static_cast<std::int64_t>(t) * k + tap) * din;
      if (src >= 0 && src < L)
        std::copy_n(x->val.data() + static_cast<std::int64_t>(src) * din, din, dst);
      else
        std::fill_n(dst, din, 0.0);
    }
  auto saved = std::make_shared<Tensor>(cols);
  Tensor out({L, dout});
  map2d(out, L, dout).noalias() =
      map2d(cols, L, k * din) * map2d(w->val, k * din, dout);
  for (int t = 0; t < L; ++t)
    for (int j = 0; j < dout; ++j) out.at(t, j) += b->val[j];

  Value n = make_node(std::move(out), {x, w, b}, "conv1d");
  n->backprop = [saved, L, din, k, dout, pad](Node& self) {
    if (self.parents[1]->requires_grad) {
      Tensor dw(self.parents[1]->val.shape());
      map2d(dw, k * din, dout).noalias() =
          map2d(*saved, L, k * din).transpose() * map2d(self.grad, L, dout);
      self.parents[1]->add_grad(dw);
    }
    if (self.parents[2]->requires_grad) {
      Tensor db({dout});
      for (int t = 0; t < L; ++t)
        for (int j = 0; j < dout; ++j) db[j] += self.grad.at(t, j);
      self.parents[2]->add_grad(db);
    }
    if (self.parents[0]->requires_grad) {
      Tensor dcols({L, k * din});
      map2d(dcols, L, k * din).noalias() =
          map2d(self.grad, L, dout) *
          map2d(self.parents[1]->val, k * din, dout).transpose();
      Tensor dx(self.parents[0]->val.shape());
      for (int t = 0; t < L; ++t)
        for (int tap = 0; tap < k; ++tap) {
          const int src = t + tap - pad;
          if (src < 0 || src >= L) continue;
          const double* s =
              dcols.data() + (static_cast<std::int64_t>(t) * k + tap) * din;
          double* d = dx.data() + static_cast<std::int64_t>(src) * din;
          for (int j = 0; j < din; ++j) d[j] += s[j];
        }
      self.parents[0]->add_grad(dx);
    }
  };
  return n;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {
constexpr double kProbEps = 1e-12;
}

Value bce_loss(const Value& p, const Tensor& y) {
  require(p->val.same_shape(y), "bce_loss: label shape mismatch");
  double loss = 0.0;
  for (std::int64_t i = 0; i < p->val.size(); ++i) {
    const double pi = std::clamp(p->val[i], kProbEps, 1.0 - kProbEps);
    loss -= y[i] * std::log(pi) + (1.0 - y[i]) * std::log(1.0 - pi);
  }
  auto labels = std::make_shared<Tensor>(y);
  Value n = make_node(Tensor::scalar(loss), {p}, "bce_loss");
  n->backprop = [labels](Node& self) {
    const Tensor& pv = self.parents[0]->val;
    Tensor g(pv.shape());
    const double seed = self.grad[0];
    for (std::int64_t i = 0; i < pv.size(); ++i) {
      if (pv[i] <= kProbEps || pv[i] >= 1.0 - kProbEps) continue;  // clamped
      g[i] = seed * (pv[i] - (*labels)[i]) / (pv[i] * (1.0 - pv[i]));
    }
    self.parents[0]->add_grad(g);
  };
  return n;
}

Value bce_mean(const Value& p, const Tensor& y) {
  Value total = bce_loss(p, y);
  return scale(total, 1.0 / static_cast<double>(y.size()));
}

Value triplet_loss(const Value& anchor, const Value& pos, const Value& neg,
                   double margin) {
  require(anchor->val.ndim() == 1, "triplet_loss: anchor must be a vector");
  require(pos->val.ndim() == 2 && neg->val.ndim() == 2,
          "triplet_loss: pos/neg must be matrices");
  require(pos->val.same_shape(neg->val), "triplet_loss: pos/neg shape mismatch");
  const int m = pos->val.dim(0), d = pos->val.dim(1);
  require(anchor->val.size() == d, "triplet_loss: feature width mismatch");

  auto active = std::make_shared<std::vector<char>>(static_cast<size_t>(m), 0);
  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    double dp = 0.0, dn = 0.0;
    for (int j = 0; j < d; ++j) {
      const double ep = anchor->val[j] - pos->val.at(i, j);
      const double en = anchor->val[j] - neg->val.at(i, j);
      dp += ep * ep;
      dn += en * en;
    }
    const double term = dp - dn + margin;
    if (term > 0.0) {
      loss += term;
      (*active)[static_cast<size_t>(i)] = 1;
    }
  }
  Value n = make_node(Tensor::scalar(loss), {anchor, pos, neg}, "triplet_loss");
  n->backprop = [active, m, d](Node& self) {
    const Tensor& av = self.parents[0]->val;
    const Tensor& pv = self.parents[1]->val;
    const Tensor& nv = self.parents[2]->val;
    const double seed = self.grad[0];
    Tensor da(av.shape()), dp(pv.shape()), dn(nv.shape());
    for (int i = 0; i < m; ++i) {
      if (!(*active)[static_cast<size_t>(i)]) continue;
      for (int j = 0; j < d; ++j) {
        const double ep = av[j] - pv.at(i, j);
        const double en = av[j] - nv.at(i, j);
        da[j] += seed * 2.0 * (ep - en);
        dp.at(i, j) = seed * (-2.0 * ep);
        dn.at(i, j) = seed * (2.0 * en);
      }
    }
    self.parents[0]->add_grad(da);
    self.parents[1]->add_grad(dp);
    self.parents[2]->add_grad(dn);
  };
  return n;
}

}  // namespace langtrack

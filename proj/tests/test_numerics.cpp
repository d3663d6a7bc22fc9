#include "doctest.h"

#include <cmath>

#include "langtrack/autodiff.hpp"
#include "langtrack/checkpoint.hpp"
#include "langtrack/gradcheck.hpp"
#include "langtrack/net.hpp"
#include "langtrack/optim.hpp"
#include "langtrack/rng.hpp"

using namespace langtrack;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = rng.uniform(-scale, scale);
  return t;
}

}  // namespace

TEST_CASE("conv2d with identity 1x1 kernel reproduces the input") {
  Rng rng(1);
  Tensor x = random_tensor({2, 1, 4, 5}, rng);
  Tensor w({1, 1, 1, 1});
  w[0] = 1.0;
  Value out = conv2d(constant(x), constant(w), constant(Tensor({1})), 1, 0);
  REQUIRE(out->val.same_shape(x));
  for (std::int64_t i = 0; i < x.size(); ++i)
    CHECK(out->val[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("relu clamps negatives") {
  Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0});
  Value y = relu(constant(x));
  CHECK(y->val[0] == 0.0);
  CHECK(y->val[1] == 0.0);
  CHECK(y->val[2] == 2.0);
}

TEST_CASE("softmax rows of equal entries are uniform") {
  Tensor x({2, 2}, 3.7);
  Value y = softmax_rows(constant(x));
  for (std::int64_t i = 0; i < 4; ++i) CHECK(y->val[i] == doctest::Approx(0.5));
}

TEST_CASE("softmax rows sum to one with entries in (0,1)") {
  Rng rng(7);
  Tensor x = random_tensor({6, 9}, rng, 4.0);
  Value y = softmax_rows(constant(x));
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int j = 0; j < 9; ++j) {
      const double v = y->val.at(i, j);
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("linear layer gradient: loss = sum(x@W) makes every dW column x") {
  Tensor x = Tensor::from_data({1, 3}, {0.5, -1.5, 2.0});
  Value w = parameter(Tensor({3, 4}));
  Value b = parameter(Tensor({4}));
  Value y = linear(constant(x), w, b);
  backward(sum(y));
  for (int k = 0; k < 3; ++k)
    for (int m = 0; m < 4; ++m)
      CHECK(w->grad.at(k, m) == doctest::Approx(x[k]));
  for (int m = 0; m < 4; ++m) CHECK(b->grad[m] == doctest::Approx(1.0));
}

TEST_CASE("relu blocks gradient at strictly negative pre-activations") {
  Value x = parameter(Tensor::from_data({3}, {-2.0, 1.0, -0.1}));
  backward(sum(relu(x)));
  CHECK(x->grad[0] == 0.0);
  CHECK(x->grad[1] == 1.0);
  CHECK(x->grad[2] == 0.0);
}

TEST_CASE("random two-layer net matches finite differences") {
  Rng rng(11);
  Network net;
  net.add({.kind = LayerKind::FullyConnected, .name = "fc1", .in_dim = 6, .out_dim = 5}, rng);
  net.add({.kind = LayerKind::Relu, .name = "relu1"}, rng);
  net.add({.kind = LayerKind::FullyConnected, .name = "fc2", .in_dim = 5, .out_dim = 3}, rng);
  Tensor input = random_tensor({4, 6}, rng);
  CHECK(grad_check(net, input) <= 1e-5);
}

TEST_CASE("grad_check: linear regression net in closed form") {
  Rng rng(3);
  Network net;
  net.add({.kind = LayerKind::FullyConnected, .name = "fc", .in_dim = 4, .out_dim = 1}, rng);
  Tensor input = random_tensor({8, 4}, rng);
  CHECK(grad_check(net, input) <= 1e-7);
}

TEST_CASE("grad_check: conv + fc stack") {
  Rng rng(5);
  Network net;
  net.add({.kind = LayerKind::Conv2d, .name = "conv", .in_ch = 2, .out_ch = 3,
           .kernel = 3, .stride = 1, .pad = 1}, rng);
  net.add({.kind = LayerKind::Relu, .name = "relu"}, rng);
  net.add({.kind = LayerKind::FullyConnected, .name = "fc",
           .in_dim = 3 * 4 * 4, .out_dim = 2}, rng);
  Tensor input = random_tensor({2, 2, 4, 4}, rng);
  CHECK(grad_check(net, input) <= 1e-5);
}

TEST_CASE("grad_check: softmax + bce composite") {
  Rng rng(9);
  Value w = parameter(random_tensor({5, 2}, rng));
  Value b = parameter(random_tensor({2}, rng, 0.1));
  Tensor x = random_tensor({6, 5}, rng);
  Tensor labels({6});
  for (int i = 0; i < 6; ++i) labels[i] = i % 2;
  auto loss_fn = [&]() {
    Value p = select_col(softmax_rows(linear(constant(x), w, b)), 0);
    return bce_loss(p, labels);
  };
  auto report = grad_check(loss_fn, {{"w", w}, {"b", b}});
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("every layer kind passes grad_check over 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    // conv2d
    {
      Value w = parameter(random_tensor({2, 2, 3, 3}, rng, 0.5));
      Value b = parameter(random_tensor({2}, rng, 0.1));
      Tensor x = random_tensor({1, 2, 5, 5}, rng);
      auto fn = [&]() { return sum(conv2d(constant(x), w, b, 2, 1)); };
      CHECK(grad_check(fn, {{"w", w}, {"b", b}}).max_rel_err <= 1e-5);
    }
    // conv1d
    {
      Value w = parameter(random_tensor({3, 4, 4}, rng, 0.5));
      Value b = parameter(random_tensor({4}, rng, 0.1));
      Value x = parameter(random_tensor({6, 4}, rng));
      auto fn = [&]() { return sum(relu(conv1d_tokens(x, w, b, 1))); };
      CHECK(grad_check(fn, {{"w", w}, {"b", b}, {"x", x}}).max_rel_err <= 1e-5);
    }
    // fully-connected + relu + sigmoid + softmax-rows
    {
      Value w = parameter(random_tensor({4, 3}, rng, 0.7));
      Value b = parameter(random_tensor({3}, rng, 0.1));
      Value x = parameter(random_tensor({5, 4}, rng));
      auto fn = [&]() {
        return sum(select_col(softmax_rows(sigmoid(relu(linear(x, w, b)))), 0));
      };
      CHECK(grad_check(fn, {{"w", w}, {"b", b}, {"x", x}}).max_rel_err <= 1e-5);
    }
    // concat + upsample-conv2d
    {
      Value a = parameter(random_tensor({3, 2}, rng));
      Value c = parameter(random_tensor({3, 4}, rng));
      Value w = parameter(random_tensor({1, 1, 3, 3}, rng, 0.5));
      Value bb = parameter(random_tensor({1}, rng, 0.1));
      Tensor img = random_tensor({1, 1, 3, 3}, rng);
      auto fn = [&]() {
        Value up = conv2d(upsample2x(constant(img)), w, bb, 1, 1);
        return add(sum(concat_cols(a, c)), sum(up));
      };
      CHECK(grad_check(fn, {{"a", a}, {"c", c}, {"w", w}, {"b", bb}}).max_rel_err <= 1e-5);
    }
    // dropout: mask fixed by seed, gradient checked against the same mask
    // via a frozen forward (dropout itself is linear given its mask)
    {
      Value x = parameter(random_tensor({8}, rng));
      Rng d1(seed * 77);
      Value y = dropout(x, 0.5, d1, true);
      backward(sum(y));
      Rng d2(seed * 77);
      Value y2 = dropout(constant(x->val), 0.5, d2, true);
      for (int i = 0; i < 8; ++i) {
        const double m = x->val[i] == 0.0 ? 0.0 : y2->val[i] / x->val[i];
        CHECK(x->grad[i] == doctest::Approx(m).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("forward is deterministic given weights, inputs and seed") {
  Rng rng(21);
  Network net;
  net.add({.kind = LayerKind::FullyConnected, .name = "fc", .in_dim = 4, .out_dim = 4}, rng);
  net.add({.kind = LayerKind::Dropout, .name = "drop", .rate = 0.5}, rng);
  Tensor x = random_tensor({3, 4}, rng);
  Rng d1(99), d2(99);
  auto a1 = net.forward(x, true, &d1);
  auto a2 = net.forward(x, true, &d2);
  for (std::int64_t i = 0; i < a1.back().size(); ++i)
    CHECK(a1.back()[i] == a2.back()[i]);
}

TEST_CASE("conv2d stride 1 same padding preserves spatial dims") {
  Rng rng(31);
  for (int k : {1, 3, 5}) {
    Value w = parameter(random_tensor({2, 3, k, k}, rng));
    Value b = parameter(Tensor({2}));
    Tensor x = random_tensor({1, 3, 7, 9}, rng);
    Value y = conv2d(constant(x), w, b, 1, k / 2);
    CHECK(y->val.dim(2) == 7);
    CHECK(y->val.dim(3) == 9);
  }
}

TEST_CASE("network rejects shape mismatches naming the layer") {
  Rng rng(41);
  Network net;
  net.add({.kind = LayerKind::FullyConnected, .name = "proj", .in_dim = 4, .out_dim = 2}, rng);
  Tensor bad({3, 5});
  CHECK_THROWS_WITH_AS(net.forward(bad), doctest::Contains("proj"),
                       std::invalid_argument);
}

TEST_CASE("backward before forward is rejected") {
  Rng rng(43);
  Network net;
  net.add({.kind = LayerKind::FullyConnected, .name = "fc", .in_dim = 2, .out_dim = 2}, rng);
  CHECK_THROWS_AS(net.backward(Tensor({1, 2})), std::runtime_error);
}

TEST_CASE("optimizer: zero gradient leaves parameters unchanged") {
  for (OptKind kind : {OptKind::Sgd, OptKind::Adam, OptKind::Adagrad}) {
    Tensor p = Tensor::from_data({2}, {1.0, -2.0});
    Tensor g({2});
    OptimizerState st;
    st.kind = kind;
    st.lr = 0.1;
    optimizer_step({&p}, {&g}, st);
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] == doctest::Approx(-2.0));
  }
}

TEST_CASE("sgd single step arithmetic") {
  Tensor p({1});
  Tensor g = Tensor::from_data({1}, {1.0});
  OptimizerState st;
  st.kind = OptKind::Sgd;
  st.lr = 0.1;
  optimizer_step({&p}, {&g}, st);
  CHECK(p[0] == doctest::Approx(-0.1));
  CHECK(st.step_count == 1);
}

TEST_CASE("adam first step moves by about lr against the gradient sign") {
  for (double gval : {3.0, -0.25}) {
    Tensor p({1});
    Tensor g = Tensor::from_data({1}, {gval});
    OptimizerState st;
    st.kind = OptKind::Adam;
    st.lr = 0.01;
    optimizer_step({&p}, {&g}, st);
    // bias-corrected first step: lr * g / (|g| + eps)
    CHECK(p[0] == doctest::Approx(-0.01 * (gval > 0 ? 1.0 : -1.0)).epsilon(1e-6));
  }
}

TEST_CASE("nan gradient refuses the step") {
  Tensor p({1});
  Tensor g = Tensor::from_data({1}, {std::nan("")});
  OptimizerState st;
  st.kind = OptKind::Adam;
  st.lr = 0.01;
  CHECK_THROWS_AS(optimizer_step({&p}, {&g}, st), std::runtime_error);
  CHECK(st.step_count == 0);
  CHECK(p[0] == 0.0);
}

TEST_CASE("checkpoint round trip preserves manifest and tensors") {
  Rng rng(55);
  Network net;
  net.add({.kind = LayerKind::Conv2d, .name = "c1", .in_ch = 1, .out_ch = 2,
           .kernel = 3, .stride = 1, .pad = 1}, rng);
  net.add({.kind = LayerKind::FullyConnected, .name = "f1", .in_dim = 8, .out_dim = 2}, rng);
  const std::string path = "ckpt_roundtrip.bin";
  save_checkpoint(path, net.manifest(), net.named_tensors("net/"));
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.manifest == net.manifest());
  const Tensor* w = ck.find("net/c1.weight");
  REQUIRE(w != nullptr);
  CHECK(w->same_shape(net.params()[0]->val));
  for (std::int64_t i = 0; i < w->size(); ++i)
    CHECK((*w)[i] == net.params()[0]->val[i]);
  // manifest text parses back to the same layer kinds
  LayerSpec parsed = LayerSpec::parse("c1 conv2d in=1 out=2 k=3 s=1 p=1");
  CHECK(parsed.kind == LayerKind::Conv2d);
  CHECK(parsed.out_ch == 2);
}

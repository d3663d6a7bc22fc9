#include "doctest.h"

#include <cmath>
#include <vector>

#include "langtrack/gradcheck.hpp"
#include "langtrack/relgraph.hpp"
#include "langtrack/rng.hpp"

using namespace langtrack;

namespace {

Tensor random_matrix(int n, int k, Rng& rng, double scale = 1.0) {
  Tensor t({n, k});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

// brute-force references evaluated straight from the definitions
Tensor similarity_oracle(const Tensor& x) {
  const int n = x.dim(0), k = x.dim(1);
  Tensor s({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < k; ++c)
        d2 += (x.at(i, c) - x.at(j, c)) * (x.at(i, c) - x.at(j, c));
      s.at(i, j) = -std::sqrt(d2);
    }
  return s;
}

Tensor affinity_oracle(const Tensor& s) {
  const int n = s.dim(0);
  Tensor w({n, n});
  for (int i = 0; i < n; ++i) {
    double denom = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) denom += std::exp(s.at(i, j));
    for (int j = 0; j < n; ++j)
      if (j != i) w.at(i, j) = std::exp(s.at(i, j)) / denom;
  }
  return w;
}

Tensor softmax_oracle(const Tensor& w) {
  const int n = w.dim(0);
  Tensor g({n, n});
  for (int i = 0; i < n; ++i) {
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(w.at(i, j));
    for (int j = 0; j < n; ++j) g.at(i, j) = std::exp(w.at(i, j)) / denom;
  }
  return g;
}

Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const int m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor out({m, p});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < p; ++j)
      for (int c = 0; c < k; ++c) out.at(i, j) += a.at(i, c) * b.at(c, j);
  return out;
}

}  // namespace

TEST_CASE("pairwise similarity of identical rows is zero") {
  Tensor x({4, 3}, 1.25);
  Value s = pairwise_similarity(constant(x));
  for (std::int64_t i = 0; i < s->val.size(); ++i) CHECK(s->val[i] == 0.0);
}

TEST_CASE("pairwise similarity 3-4-5 triangle") {
  Tensor x = Tensor::from_data({2, 2}, {0.0, 0.0, 3.0, 4.0});
  Value s = pairwise_similarity(constant(x));
  CHECK(s->val.at(0, 1) == doctest::Approx(-5.0));
  CHECK(s->val.at(1, 0) == doctest::Approx(-5.0));
  CHECK(s->val.at(0, 0) == 0.0);
}

TEST_CASE("pairwise similarity matches the double-loop oracle") {
  Rng rng(17);
  Tensor x = random_matrix(5, 8, rng);
  Value s = pairwise_similarity(constant(x));
  Tensor ref = similarity_oracle(x);
  for (std::int64_t i = 0; i < ref.size(); ++i)
    CHECK(s->val[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("pairwise similarity rejects fewer than two nodes") {
  Tensor x({1, 4}, 0.0);
  CHECK_THROWS_AS(pairwise_similarity(constant(x)), std::invalid_argument);
}

TEST_CASE("affinity with equal off-diagonal similarities is uniform") {
  Tensor s({3, 3}, -2.0);
  for (int i = 0; i < 3; ++i) s.at(i, i) = 0.0;
  Value w = affinity_matrix(constant(s));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(w->val.at(i, j) == doctest::Approx(i == j ? 0.0 : 0.5));
}

TEST_CASE("affinity with two nodes puts full weight on the single neighbor") {
  Tensor s({2, 2});
  s.at(0, 1) = -7.3;
  s.at(1, 0) = -7.3;
  Value w = affinity_matrix(constant(s));
  CHECK(w->val.at(0, 1) == doctest::Approx(1.0));
  CHECK(w->val.at(1, 0) == doctest::Approx(1.0));
  CHECK(w->val.at(0, 0) == 0.0);
}

TEST_CASE("affinity matches the direct formula and is row-stochastic off-diagonal") {
  Rng rng(23);
  Tensor s = random_matrix(6, 6, rng, 3.0);
  for (int i = 0; i < 6; ++i) s.at(i, i) = 0.0;
  Value w = affinity_matrix(constant(s));
  Tensor ref = affinity_oracle(s);
  for (std::int64_t i = 0; i < ref.size(); ++i)
    CHECK(w->val[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  for (int i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 6; ++j) sum += w->val.at(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(w->val.at(i, i) == 0.0);
  }
}

TEST_CASE("graph normalization of a zero matrix is uniform") {
  Tensor w({4, 4});
  Value g = normalize_graph(constant(w));
  for (std::int64_t i = 0; i < g->val.size(); ++i)
    CHECK(g->val[i] == doctest::Approx(0.25));
}

TEST_CASE("graph normalization matches softmax oracle, rows sum to one") {
  Rng rng(29);
  Tensor w = random_matrix(6, 6, rng, 2.0);
  Value g = normalize_graph(constant(w));
  Tensor ref = softmax_oracle(w);
  for (std::int64_t i = 0; i < ref.size(); ++i)
    CHECK(g->val[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  for (int n : {2, 5, 32, 50}) {
    Tensor wn = random_matrix(n, n, rng, 2.0);
    Value gn = normalize_graph(constant(wn));
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) sum += gn->val.at(i, j);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("gcn layer with identity graph and weights passes features through") {
  Tensor g({3, 3});
  for (int i = 0; i < 3; ++i) g.at(i, i) = 1.0;
  Tensor wt({2, 2});
  wt.at(0, 0) = wt.at(1, 1) = 1.0;
  Tensor x = Tensor::from_data({3, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  Value z = gcn_layer(constant(g), constant(x), constant(wt), false);
  for (std::int64_t i = 0; i < x.size(); ++i)
    CHECK(z->val[i] == doctest::Approx(x[i]));
}

TEST_CASE("gcn layer hand-computed averaging case") {
  Tensor g = Tensor::from_data({2, 2}, {0.5, 0.5, 0.5, 0.5});
  Tensor x = Tensor::from_data({2, 1}, {2.0, 4.0});
  Tensor wt = Tensor::from_data({1, 1}, {1.0});
  Value z = gcn_layer(constant(g), constant(x), constant(wt), true);
  CHECK(z->val[0] == doctest::Approx(3.0));
  CHECK(z->val[1] == doctest::Approx(3.0));
}

TEST_CASE("gcn layer matches the triple-loop product oracle") {
  Rng rng(31);
  Tensor g = random_matrix(5, 5, rng);
  Tensor x = random_matrix(5, 7, rng);
  Tensor wt = random_matrix(7, 4, rng);
  Value z = gcn_layer(constant(g), constant(x), constant(wt), true);
  Tensor ref = matmul_oracle(matmul_oracle(g, x), wt);
  for (std::int64_t i = 0; i < ref.size(); ++i)
    CHECK(z->val[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("enhance_features with zero weights appends zero columns") {
  Rng rng(37);
  GcnStack stack = GcnStack::create(4, 1, rng);
  stack.weights[0]->val.fill(0.0);
  Tensor x = random_matrix(5, 4, rng);
  Value e = enhance_features(constant(x), stack);
  REQUIRE(e->val.dim(1) == 8);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(e->val.at(i, j) == x.at(i, j));
      CHECK(e->val.at(i, 4 + j) == 0.0);
    }
}

TEST_CASE("enhance_features output width is input plus stack output") {
  Rng rng(41);
  GcnStack stack = GcnStack::create(8, 3, rng);
  Tensor x = random_matrix(6, 8, rng);
  Value e = enhance_features(constant(x), stack);
  CHECK(e->val.dim(0) == 6);
  CHECK(e->val.dim(1) == 16);
}

TEST_CASE("enhance_features passes grad_check end to end") {
  Rng rng(43);
  GcnStack stack = GcnStack::create(4, 3, rng);
  Value x = parameter(random_matrix(5, 4, rng));
  std::vector<std::pair<std::string, Value>> params{{"x", x}};
  for (size_t i = 0; i < stack.weights.size(); ++i)
    params.emplace_back("w" + std::to_string(i), stack.weights[i]);
  auto fn = [&]() { return sum(enhance_features(x, stack)); };
  CHECK(grad_check(fn, params).max_rel_err <= 1e-5);
}

TEST_CASE("permuting nodes permutes enhanced features identically") {
  Rng rng(47);
  GcnStack stack = GcnStack::create(3, 2, rng);
  Tensor x = random_matrix(5, 3, rng);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  Tensor px({5, 3});
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) px.at(i, j) = x.at(perm[i], j);
  Value e = enhance_features(constant(x), stack);
  Value pe = enhance_features(constant(px), stack);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < e->val.dim(1); ++j)
      CHECK(pe->val.at(i, j) == doctest::Approx(e->val.at(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("adding a duplicate node keeps original pairwise similarities") {
  Rng rng(53);
  Tensor x = random_matrix(4, 3, rng);
  Tensor xd({5, 3});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) xd.at(i, j) = x.at(i, j);
  for (int j = 0; j < 3; ++j) xd.at(4, j) = x.at(0, j);
  Value s = pairwise_similarity(constant(x));
  Value sd = pairwise_similarity(constant(xd));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(sd->val.at(i, j) == doctest::Approx(s->val.at(i, j)).epsilon(1e-12));
}

TEST_CASE("single_normalization switch skips the second softmax") {
  Rng rng(59);
  GcnStack stack = GcnStack::create(3, 1, rng);
  Tensor x = random_matrix(4, 3, rng);
  RelGraphConfig cfg;
  cfg.single_normalization = true;
  Value e1 = enhance_features(constant(x), stack, cfg);
  Value e2 = enhance_features(constant(x), stack);
  bool differs = false;
  for (std::int64_t i = 0; i < e1->val.size(); ++i)
    if (std::abs(e1->val[i] - e2->val[i]) > 1e-12) differs = true;
  CHECK(differs);
}

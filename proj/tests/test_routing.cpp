#include <doctest.h>

#include <random>

#include "sovnet/routing.hpp"

using namespace sovnet;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>::from_data(std::move(shape), std::move(v), false);
}

}  // namespace

TEST_CASE("squash: output norm is |v|^2 / (1 + |v|^2)") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> mag(0.0, 1000.0);
  for (int t = 0; t < 200; ++t) {
    Tensor<double> v = random_tensor({4}, rng);
    double n = 0;
    for (double x : v.values()) n += x * x;
    n = std::sqrt(n);
    double target = mag(rng);
    if (n > 0) {
      // rescale to a norm drawn from [0, 1000]
      std::vector<double> sv(4);
      for (int i = 0; i < 4; ++i) sv[i] = v.values()[i] / n * target;
      v = Tensor<double>::from_data({4}, std::move(sv), false);
      n = target;
    }
    Tensor<double> s = squash(v, 0, 0.0);
    double sn = 0;
    for (double x : s.values()) sn += x * x;
    sn = std::sqrt(sn);
    CHECK(std::abs(sn - n * n / (1 + n * n)) <= 1e-12);
  }
  // zero vector maps to zero with the default eps, no NaN
  Tensor<double> z = squash(Tensor<double>::zeros({4}));
  for (double x : z.values()) CHECK(x == 0.0);
}

TEST_CASE("degree weights: frozen three-prediction oracle") {
  // p1 = p2 = e1, p3 = e2: degrees (2, 2, 1) -> softmax
  std::vector<Tensor<double>> preds{
      Tensor<double>::from_data({2}, {1, 0}), Tensor<double>::from_data({2}, {1, 0}),
      Tensor<double>::from_data({2}, {0, 1})};
  Tensor<double> w = degree_weights(preds);
  REQUIRE(w.shape() == Shape{3});
  CHECK(w.values()[0] == doctest::Approx(0.4223187982515182).epsilon(1e-12));
  CHECK(w.values()[1] == doctest::Approx(0.4223187982515182).epsilon(1e-12));
  CHECK(w.values()[2] == doctest::Approx(0.15536240349696362).epsilon(1e-12));
}

TEST_CASE("degree weights: simplex, permutation equivariance, scale invariance") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int t = 0; t < 500; ++t) {
    std::size_t n = 2 + t % 5;
    std::vector<Tensor<double>> preds;
    for (std::size_t i = 0; i < n; ++i) preds.push_back(random_tensor({4, 2}, rng));
    Tensor<double> w = degree_weights(preds);

    // simplex along axis 0
    check_simplex(w, 1e-12);

    // reversing the predictions reverses the weights exactly
    std::vector<Tensor<double>> rev(preds.rbegin(), preds.rend());
    Tensor<double> wr = degree_weights(rev);
    double pdiff = 0;
    std::size_t block = w.size() / n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < block; ++j)
        pdiff = std::max(pdiff, std::abs(w.values()[i * block + j] -
                                         wr.values()[(n - 1 - i) * block + j]));
    CHECK(pdiff <= 1e-12);

    // positive rescaling of any single prediction leaves the weights fixed
    std::vector<Tensor<double>> scaled = preds;
    std::size_t which = t % n;
    double c = scale(rng);
    std::vector<double> sv = preds[which].values();
    for (auto& x : sv) x *= c;
    scaled[which] = Tensor<double>::from_data({4, 2}, std::move(sv), false);
    CHECK(max_abs_diff(degree_weights(scaled), w) <= 1e-12);
  }
}

TEST_CASE("aggregate is the weighted sum of predictions") {
  std::vector<Tensor<double>> preds{Tensor<double>::from_data({2}, {1, 2}),
                                    Tensor<double>::from_data({2}, {3, 4})};
  Tensor<double> w = Tensor<double>::from_data({2}, {0.25, 0.75});
  Tensor<double> f = aggregate(preds, w);
  CHECK(f.values()[0] == doctest::Approx(0.25 * 1 + 0.75 * 3));
  CHECK(f.values()[1] == doctest::Approx(0.25 * 2 + 0.75 * 4));
  CHECK_THROWS_AS(aggregate(preds, Tensor<double>::from_data({3}, {1, 0, 0})), ShapeMismatch);
}

TEST_CASE("check_simplex rejects bad weights") {
  CHECK_THROWS_AS(check_simplex(Tensor<double>::from_data({2}, {-0.1, 1.1}), 1e-6),
                  RuleContractViolation);
  CHECK_THROWS_AS(check_simplex(Tensor<double>::from_data({2}, {0.3, 0.3}), 1e-6),
                  RuleContractViolation);
  check_simplex(Tensor<double>::from_data({2}, {0.3, 0.7}), 1e-6);  // no throw
}

TEST_CASE("route_degree is route_general with degree/norm rules") {
  std::mt19937_64 rng(11);
  GroupGrid grid{GroupKind::p4, 5, 5};
  RoutingLayer<double> layer;
  for (int j = 0; j < 2; ++j) {
    ResidualBlock<double> b;
    b.stride = 1;
    b.w1 = random_tensor({3, 3, 4, 3, 3}, rng);
    b.b1 = random_tensor({3}, rng);
    b.w2 = random_tensor({3, 3, 4, 3, 3}, rng);
    b.b2 = random_tensor({3}, rng);
    layer.blocks.push_back(std::move(b));
  }
  std::vector<Tensor<double>> inputs{random_tensor({3, 4, 5, 5}, rng),
                                     random_tensor({3, 4, 5, 5}, rng)};
  RoutingResult<double> a = route_degree(inputs, layer, grid);
  DegreeWeightRule<double> wr;
  NormAgreement<double> ar;
  RoutingResult<double> b = route_general(inputs, layer, grid, wr, ar);
  REQUIRE(a.fields.size() == 2);
  for (int j = 0; j < 2; ++j) {
    CHECK(max_abs_diff(a.fields[j], b.fields[j]) == 0.0);
    CHECK(max_abs_diff(a.weights[j], b.weights[j]) == 0.0);
    CHECK(max_abs_diff(a.activations[j], b.activations[j]) == 0.0);
    CHECK(a.fields[j].shape() == Shape{3, 4, 5, 5});
    CHECK(a.weights[j].shape() == Shape{2, 4, 5, 5});
    CHECK(a.activations[j].shape() == Shape{4, 5, 5});
  }
  // activations are capsule pose norms, bounded below 1 by squash
  for (const auto& act : a.activations)
    for (double x : act.values()) {
      CHECK(x >= 0.0);
      CHECK(x < 1.0);
    }
}

TEST_CASE("routing layer is exactly equivariant to stabilizer elements") {
  std::mt19937_64 rng(13);
  GroupGrid grid{GroupKind::p4m, 7, 7};
  RoutingLayer<double> layer;
  for (int j = 0; j < 2; ++j) {
    ResidualBlock<double> b;
    b.stride = 2;
    b.w1 = random_tensor({2, 2, 8, 3, 3}, rng);
    b.b1 = random_tensor({2}, rng);
    b.w2 = random_tensor({2, 2, 8, 3, 3}, rng);
    b.b2 = random_tensor({2}, rng);
    b.wp = random_tensor({2, 2, 8, 1, 1}, rng);
    b.bp = random_tensor({2}, rng);
    layer.blocks.push_back(std::move(b));
  }
  std::vector<Tensor<double>> inputs{random_tensor({2, 8, 7, 7}, rng),
                                     random_tensor({2, 8, 7, 7}, rng)};
  RoutingResult<double> base = route_degree(inputs, layer, grid);
  GroupGrid out_grid{GroupKind::p4m, 3, 3};
  for (int s = 0; s < 8; ++s) {
    GroupElement g = stabilizer_element(GroupKind::p4m, s);
    std::vector<Tensor<double>> moved;
    for (const auto& f : inputs) moved.push_back(left_translate(f, g, grid));
    RoutingResult<double> r = route_degree(moved, layer, grid);
    for (std::size_t j = 0; j < r.fields.size(); ++j) {
      CHECK(max_abs_diff(r.fields[j], left_translate(base.fields[j], g, out_grid)) < 1e-12);
      CHECK(max_abs_diff(r.weights[j], left_translate(base.weights[j], g, out_grid)) < 1e-12);
    }
  }
}

TEST_CASE("gradients flow through routing") {
  std::mt19937_64 rng(17);
  GroupGrid grid{GroupKind::p4, 5, 5};
  RoutingLayer<double> layer;
  ResidualBlock<double> b;
  b.stride = 1;
  b.w1 = random_tensor({2, 2, 4, 3, 3}, rng).set_requires_grad(true);
  b.b1 = random_tensor({2}, rng).set_requires_grad(true);
  b.w2 = random_tensor({2, 2, 4, 3, 3}, rng).set_requires_grad(true);
  b.b2 = random_tensor({2}, rng).set_requires_grad(true);
  layer.blocks.push_back(b);
  std::vector<Tensor<double>> inputs{random_tensor({2, 4, 5, 5}, rng),
                                     random_tensor({2, 4, 5, 5}, rng)};

  auto build = [&] {
    RoutingResult<double> r = route_degree(inputs, layer, grid);
    return reduce_sum_all(square(r.fields[0]));
  };
  Tensor<double> root = build();
  root.backward();
  std::vector<std::vector<double>> analytic{b.w1.grad(), b.b1.grad()};
  NoGradGuard ng;
  std::vector<Tensor<double>*> leaves{&layer.blocks[0].w1, &layer.blocks[0].b1};
  double h = 1e-6;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& v = leaves[li]->raw_values();
    // spot-check a spread of elements to keep runtime modest
    for (std::size_t j = 0; j < v.size(); j += 7) {
      double saved = v[j];
      v[j] = saved + h;
      double up = build().item();
      v[j] = saved - h;
      double down = build().item();
      v[j] = saved;
      double numeric = (up - down) / (2 * h);
      CHECK(std::abs(analytic[li][j] - numeric) <=
            1e-5 * std::max(1.0, std::abs(analytic[li][j]) + std::abs(numeric)));
    }
  }
}

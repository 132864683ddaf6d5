#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mstgcn/ops.hpp"
#include "mstgcn/rng.hpp"
#include "mstgcn/tensor.hpp"

using namespace mstgcn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  return t;
}

// Weighted sum against fixed coefficients turns any op into a scalar
// function with a dense, non-trivial gradient.
Tensor weighted_sum(const Tensor& t, const Tensor& coeffs) {
  return reduce_sum(mul(t, coeffs));
}

}  // namespace

TEST_CASE("matmul forward examples") {
  Tensor I = Tensor::identity(2);
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(I, a);
  CHECK(r.at(0, 0) == 1.0);
  CHECK(r.at(0, 1) == 2.0);
  CHECK(r.at(1, 0) == 3.0);
  CHECK(r.at(1, 1) == 4.0);

  Tensor proj = Tensor::from({2, 2}, {1, 0, 0, 0});
  Tensor v = Tensor::from({2, 1}, {5, 7});
  Tensor p = matmul(proj, v);
  CHECK(p.at(0, 0) == 5.0);
  CHECK(p.at(1, 0) == 0.0);
}

TEST_CASE("matmul shape error names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(42);
  Tensor b = random_tensor({3, 3}, rng);
  Tensor x0 = random_tensor({3, 3}, rng);
  double err = grad_check(
      [&](const Tensor& a) { return reduce_sum(matmul(a, b)); }, x0, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("conv1d_valid output lengths from the feature net") {
  Tensor sig = Tensor::zeros({3000});
  Tensor k50 = Tensor::full({50}, 0.1);
  CHECK(conv1d_valid(sig, k50, 6).dim(0) == 492);
  Tensor k400 = Tensor::full({400}, 0.1);
  CHECK(conv1d_valid(sig, k400, 50).dim(0) == 53);

  // zero signal -> zero output
  Tensor out = conv1d_valid(sig, k50, 6);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("conv1d_valid rejects kernels longer than the signal") {
  Tensor sig = Tensor::zeros({5});
  Tensor k = Tensor::zeros({6});
  CHECK_THROWS_AS(conv1d_valid(sig, k, 1), DimensionError);
}

TEST_CASE("conv1d_valid length formula holds for all k and s") {
  const std::size_t L = 23;
  Rng rng(7);
  Tensor sig = random_tensor({L}, rng);
  for (std::size_t k = 1; k <= L; ++k) {
    Tensor kernel = random_tensor({k}, rng);
    for (std::size_t s = 1; s <= L; ++s) {
      CHECK(conv1d_valid(sig, kernel, s).dim(0) == (L - k) / s + 1);
    }
  }
}

TEST_CASE("maxpool1d lengths and constant input") {
  Tensor a = Tensor::zeros({492});
  CHECK(maxpool1d(a, 16, 16).dim(0) == 30);
  Tensor b = Tensor::zeros({53});
  CHECK(maxpool1d(b, 8, 8).dim(0) == 6);

  Tensor c = Tensor::full({12}, 3.5);
  Tensor out = maxpool1d(c, 4, 4);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 3.5);

  CHECK_THROWS_AS(maxpool1d(Tensor::zeros({3}), 4, 1), DimensionError);
}

TEST_CASE("maxpool1d routes gradient to the first argmax on ties") {
  Tensor x = Tensor::from({4}, {1.0, 2.0, 2.0, 0.0}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor y = maxpool1d(x, 4, 4);
    tape.backward(reduce_sum(y));
  }
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
  CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("activation values") {
  Tensor x = Tensor::from({2}, {-2.0, 3.0});
  Tensor y = relu(x);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 3.0);

  Tensor s = sigmoid(Tensor::scalar(0.0));
  CHECK(s.value() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax_rows uniform and hand case") {
  Tensor eq = Tensor::full({1, 4}, 2.5);
  Tensor r = softmax_rows(eq);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(r.at(0, j) == doctest::Approx(0.25).epsilon(1e-12));

  Tensor x = Tensor::from({1, 2}, {0.0, std::log(3.0)});
  Tensor y = softmax_rows(x);
  CHECK(y.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax_rows is row-stochastic for arbitrary finite input") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({4, 6}, rng);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] *= 1e4;
    Tensor y = softmax_rows(x);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(y.at(i, j) >= 0.0);
        s += y.at(i, j);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("cross_entropy values") {
  // perfect prediction
  Tensor p = Tensor::from({1, 3}, {1.0, 0.0, 0.0});
  Tensor y = Tensor::from({1, 3}, {1.0, 0.0, 0.0});
  CHECK(cross_entropy(p, y).value() == doctest::Approx(0.0).epsilon(1e-12));

  // uniform over 5 classes
  Tensor u = Tensor::full({2, 5}, 0.2);
  Tensor y5 = Tensor::zeros({2, 5});
  y5.ref(0, 1) = 1.0;
  y5.ref(1, 4) = 1.0;
  CHECK(cross_entropy(u, y5).value() ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));

  Tensor p3 = Tensor::from({1, 3}, {0.7, 0.2, 0.1});
  Tensor y3 = Tensor::from({1, 3}, {1.0, 0.0, 0.0});
  CHECK(cross_entropy(p3, y3).value() ==
        doctest::Approx(-std::log(0.7)).epsilon(1e-12));
}

TEST_CASE("cross_entropy validates rows") {
  Tensor bad = Tensor::from({1, 2}, {0.9, 0.3});
  Tensor y = Tensor::from({1, 2}, {1.0, 0.0});
  CHECK_THROWS_AS(cross_entropy(bad, y), NormalizationError);

  Tensor p = Tensor::from({1, 2}, {0.5, 0.5});
  Tensor bady = Tensor::from({1, 2}, {1.0, 1.0});
  CHECK_THROWS_AS(cross_entropy(p, bady), LabelError);
}

TEST_CASE("concat shapes and gradient split") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 5});
  CHECK(concat({a, b}, 1).shape() == Shape{2, 8});

  Tensor x = Tensor::from({1, 2}, {1.0, 2.0}, true);
  Tensor z = Tensor::from({1, 2}, {3.0, 4.0}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(reduce_sum(concat({x, z}, 0)));
  }
  CHECK(x.grad() == std::vector<double>{1.0, 1.0});
  CHECK(z.grad() == std::vector<double>{1.0, 1.0});
}

TEST_CASE("dropout eval is the identity, train is inverted") {
  Rng rng(5);
  Tensor x = random_tensor({100}, rng);
  Tensor e = dropout(x, 0.5, Mode::Eval, nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(e.at(i) == x.at(i));

  Rng drng(9);
  Tensor t = dropout(x, 0.5, Mode::Train, &drng);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool kept = t.at(i) != 0.0 || x.at(i) == 0.0;
    if (kept) CHECK(t.at(i) == doctest::Approx(2.0 * x.at(i)));
  }
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::Train, &drng), ParameterError);
}

TEST_CASE("dropout is deterministic given the seed") {
  Rng rng(5);
  Tensor x = random_tensor({64}, rng);
  Rng d1(123), d2(123);
  Tensor a = dropout(x, 0.3, Mode::Train, &d1);
  Tensor b = dropout(x, 0.3, Mode::Train, &d2);
  CHECK(a.values() == b.values());
}

TEST_CASE("batch_norm zero-variance batch returns the shift") {
  BatchNorm1d bn(2);
  bn.beta.ref(0) = 0.7;
  bn.beta.ref(1) = -0.2;
  Tensor x = Tensor::full({3, 2, 4}, 5.0);
  Tensor y = batch_norm(x, bn, Mode::Train);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(y.at(b, 0, t) == doctest::Approx(0.7).epsilon(1e-9));
      CHECK(y.at(b, 1, t) == doctest::Approx(-0.2).epsilon(1e-9));
    }
  }
}

TEST_CASE("batch_norm keeps running statistics") {
  BatchNorm1d bn(1);
  Tensor x = Tensor::from({2, 1, 2}, {1.0, 2.0, 3.0, 4.0});
  batch_norm(x, bn, Mode::Train);
  // batch mean 2.5, biased var 1.25; momentum 0.9
  CHECK(bn.running_mean[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 + 0.125).epsilon(1e-12));
  // eval uses running stats and is deterministic
  Tensor y1 = batch_norm(x, bn, Mode::Eval);
  Tensor y2 = batch_norm(x, bn, Mode::Eval);
  CHECK(y1.values() == y2.values());
}

TEST_CASE("grad_check on known functions") {
  Tensor x = Tensor::scalar(3.0);
  double err = grad_check(
      [](const Tensor& t) { return reduce_sum(square(t)); }, x, 1e-5);
  CHECK(err < 1e-8);

  Rng rng(21);
  Tensor v = random_tensor({4}, rng);
  err = grad_check(
      [](const Tensor& t) { return reduce_sum(sigmoid(t)); }, v, 1e-5);
  CHECK(err < 1e-6);

  Tensor logits = random_tensor({3, 4}, rng);
  Tensor onehot = Tensor::zeros({3, 4});
  onehot.ref(0, 1) = 1.0;
  onehot.ref(1, 3) = 1.0;
  onehot.ref(2, 0) = 1.0;
  err = grad_check(
      [&](const Tensor& t) {
        return cross_entropy(softmax_rows(reshape(t, {3, 4})), onehot);
      },
      logits, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("every differentiable op passes grad_check at random points") {
  Rng rng(1234);
  auto check_op = [&](auto&& fn, Shape shape, double tol = 1e-5) {
    for (int rep = 0; rep < 10; ++rep) {
      Tensor x = random_tensor(shape, rng);
      double err = grad_check(
          [&](const Tensor& t) { return fn(t); }, x, 1e-5);
      CHECK(err < tol);
    }
  };

  Rng crng(99);
  Tensor c23 = random_tensor({2, 3}, crng);
  Tensor c32 = random_tensor({3, 2}, crng);
  Tensor c22 = random_tensor({2, 2}, crng);
  Tensor c8 = random_tensor({8}, crng);
  Tensor c5 = random_tensor({5}, crng);
  Tensor k3 = random_tensor({3}, crng);

  check_op([&](const Tensor& t) {
    return weighted_sum(matmul(t, c32), c22);
  }, {2, 3});
  check_op([&](const Tensor& t) { return weighted_sum(relu(t), c23); },
           {2, 3});
  check_op([&](const Tensor& t) { return weighted_sum(sigmoid(t), c23); },
           {2, 3});
  check_op([&](const Tensor& t) { return weighted_sum(abs_op(t), c23); },
           {2, 3});
  check_op([&](const Tensor& t) { return weighted_sum(square(t), c23); },
           {2, 3});
  check_op([&](const Tensor& t) {
    return weighted_sum(softmax_rows(t), c23);
  }, {2, 3});
  check_op([&](const Tensor& t) {
    return weighted_sum(transpose(t), c32);
  }, {2, 3});
  check_op([&](const Tensor& t) {
    return weighted_sum(reshape(permute(t, {2, 0, 1}), {8}), c8);
  }, {2, 2, 2});
  check_op([&](const Tensor& t) {
    return weighted_sum(conv1d_valid(t, k3, 2), c5);
  }, {11});
  check_op([&](const Tensor& t) {
    return weighted_sum(maxpool1d(t, 3, 2), c5);
  }, {11});
  check_op([&](const Tensor& t) { return reduce_mean(square(t)); }, {2, 3});
}

TEST_CASE("tape clear zeroes gradients") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(reduce_sum(square(x)));
  }
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  tape.clear();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(tape.op_count() == 0);
}

TEST_CASE("reused input accumulates gradient once per use") {
  Tensor x = Tensor::from({2}, {1.0, 3.0}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(reduce_sum(add(x, x)));
  }
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("forward pass is deterministic") {
  Rng rng(3);
  Tensor x = random_tensor({4, 4}, rng);
  Tensor w = random_tensor({4, 4}, rng);
  Tensor y1 = matmul(sigmoid(x), w);
  Tensor y2 = matmul(sigmoid(x), w);
  CHECK(y1.values() == y2.values());
}

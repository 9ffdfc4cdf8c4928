#include <doctest.h>

#include <cmath>
#include <random>

#include "dgpo/numerics/ops.hpp"
#include "dgpo/numerics/optimizer.hpp"
#include "support/gradcheck.hpp"
#include "support/op_catalog.hpp"

namespace nx = dgpo::numerics;
using dgpo::testing::gradcheck;

TEST_CASE("softmax of equal logits is uniform") {
  auto y = nx::softmax(nx::DiffArray::constant({2}, {0.0, 0.0}));
  CHECK(y.at(0) == doctest::Approx(0.5));
  CHECK(y.at(1) == doctest::Approx(0.5));
}

TEST_CASE("cross entropy vanishes for a dominant matching logit") {
  auto logits = nx::DiffArray::constant({1, 3}, {200.0, 0.0, 0.0});
  std::vector<int> target{0};
  CHECK(nx::cross_entropy(logits, target).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("identity matmul returns its operand") {
  auto eye = nx::DiffArray::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto x = nx::DiffArray::constant({3, 2}, {1, 2, 3, 4, 5, 6});
  auto y = nx::matmul(eye, x);
  for (std::size_t i = 0; i < 6; ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("shape mismatch names the op and the shapes") {
  auto a = nx::DiffArray::constant({2, 3});
  auto b = nx::DiffArray::constant({2, 3});
  try {
    nx::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const nx::ShapeError& e) {
    CHECK(e.op() == "matmul");
    CHECK(std::string(e.what()).find("[2, 3] [2, 3]") != std::string::npos);
  }
  CHECK_THROWS_AS(nx::add(a, nx::DiffArray::constant({3, 2})), nx::ShapeError);
}

TEST_CASE("d/dx of x*x at 3 is 6") {
  auto x = nx::DiffArray::parameter({1}, {3.0});
  x.zero_grad();
  nx::backward(nx::sum(nx::mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("softmax cross entropy gradient is probs minus one-hot") {
  auto logits = nx::DiffArray::parameter({1, 4}, {0.3, -1.2, 2.0, 0.5});
  std::vector<int> target{2};
  logits.zero_grad();
  nx::backward(nx::sum(nx::cross_entropy(logits, target)));
  auto p = nx::softmax(logits.detach());
  for (std::size_t j = 0; j < 4; ++j) {
    const double expected = p.at(j) - (j == 2 ? 1.0 : 0.0);
    CHECK(logits.grad()[j] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("random 20-parameter graph matches central differences") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> init(20);
  for (auto& v : init) v = nd(rng);
  auto a = nx::DiffArray::parameter({4, 5}, init);
  std::vector<double> bvals(15), cvals(12);
  for (auto& v : bvals) v = nd(rng);
  for (auto& v : cvals) v = nd(rng);
  auto b = nx::DiffArray::constant({5, 3}, bvals);
  auto c = nx::DiffArray::constant({4, 3}, cvals);
  auto loss = [&] {
    auto h = nx::tanh(nx::matmul(a, b));
    auto s = nx::log_softmax(nx::add(h, c));
    return nx::add(nx::sum(nx::mul(s, c)), nx::mean(nx::square(a)));
  };
  auto r = gradcheck({a}, loss);
  CHECK(r.checked == 20);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("every op passes randomized finite-difference checks") {
  const auto results = dgpo::testing::run_op_catalog(2024, 4);
  CHECK(results.size() >= 100);
  for (const auto& r : results) {
    INFO(r.op);
    CHECK(r.check.max_rel_error < 1e-4);
  }
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(6 * 9);
    for (auto& x : v) x = nd(rng);
    auto y = nx::softmax(nx::DiffArray::constant({6, 9}, v));
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 9; ++j) {
        CHECK(y.at(i * 9 + j) >= 0.0);
        s += y.at(i * 9 + j);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("backward is deterministic and accumulates until zeroed") {
  auto run = [] {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> v(12);
    for (auto& x : v) x = nd(rng);
    auto a = nx::DiffArray::parameter({3, 4}, v);
    a.zero_grad();
    nx::backward(nx::sum(nx::softmax(nx::square(a))));
    nx::backward(nx::sum(nx::gelu(a)));
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  CHECK(run() == run());

  auto x = nx::DiffArray::parameter({1}, {2.0});
  x.zero_grad();
  nx::backward(nx::sum(nx::square(x)));
  nx::backward(nx::sum(nx::square(x)));
  CHECK(x.grad()[0] == doctest::Approx(8.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  auto a = nx::DiffArray::parameter({2}, {1.0, 2.0});
  CHECK_THROWS_AS(nx::backward(nx::square(a)), nx::GradientError);
}

TEST_CASE("Adam leaves parameters unchanged under zero gradient") {
  std::vector<nx::NamedParameter> params{{"w", "actor", nx::DiffArray::parameter({3}, {1.0, -2.0, 0.5})}};
  nx::Adam opt({.group_rates = {{"actor", 0.1}}});
  nx::zero_grad(params);
  opt.step(params);
  CHECK(params[0].value.at(0) == 1.0);
  CHECK(params[0].value.at(1) == -2.0);
  CHECK(params[0].value.at(2) == 0.5);
  CHECK(opt.steps() == 1);
}

TEST_CASE("Adam descends on x squared") {
  std::vector<nx::NamedParameter> params{{"x", "actor", nx::DiffArray::parameter({1}, {1.0})}};
  nx::Adam opt({.group_rates = {{"actor", 0.1}}});
  nx::zero_grad(params);
  nx::backward(nx::sum(nx::square(params[0].value)));
  opt.step(params);
  CHECK(std::abs(params[0].value.at(0)) < 1.0);
}

TEST_CASE("Adam group rates scale a single step") {
  // First Adam step: m_hat = g, v_hat = g^2, so the update is
  // lr * g / (|g| + eps).
  std::vector<nx::NamedParameter> params{
      {"actor_w", "actor", nx::DiffArray::parameter({1}, {0.0})},
      {"critic_w", "critic", nx::DiffArray::parameter({1}, {0.0})}};
  nx::Adam opt({.group_rates = {{"actor", 1e-6}, {"critic", 1e-5}}});
  nx::zero_grad(params);
  params[0].value.mutable_grad()[0] = 0.5;
  params[1].value.mutable_grad()[0] = 0.5;
  opt.step(params);
  const double step = 0.5 / (0.5 + 1e-8);
  CHECK(params[0].value.at(0) == doctest::Approx(-1e-6 * step).epsilon(1e-12));
  CHECK(params[1].value.at(0) == doctest::Approx(-1e-5 * step).epsilon(1e-12));
  CHECK(params[1].value.at(0) / params[0].value.at(0) == doctest::Approx(10.0));
}

TEST_CASE("Adam rejects a parameter without gradient") {
  std::vector<nx::NamedParameter> params{{"w", "actor", nx::DiffArray::parameter({1}, {1.0})}};
  nx::Adam opt({.group_rates = {{"actor", 0.1}}});
  CHECK_THROWS_AS(opt.step(params), nx::GradientError);
}

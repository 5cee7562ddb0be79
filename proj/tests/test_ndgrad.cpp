#include "support.hpp"

#include "jvae/ndgrad.hpp"
#include "jvae/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

using namespace jvae;
using jvae::testing::gradient_check;

namespace {

constexpr double kTol = 1e-4;

/// sum(out * R) for a fixed random R, so every output entry carries a
/// distinct weight into the loss.
nd::Var project(nd::Graph& g, nd::Var out) {
  RngStream rng(99, "projection");
  return nd::sum(out * g.constant(rng.normal_matrix(out.rows(), out.cols())));
}

Matrix uniform(Index r, Index c, double lo, double hi, std::uint64_t seed) {
  RngStream rng(seed, "init");
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

/// Values in [0.2, 1.5] with a random sign: away from the kinks of relu/abs.
Matrix signed_away_from_zero(Index r, Index c, std::uint64_t seed) {
  RngStream rng(seed, "signed");
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) {
    const double mag = 0.2 + 1.3 * rng.uniform();
    m.data()[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return m;
}

using Unary = std::function<nd::Var(nd::Var)>;
using Binary = std::function<nd::Var(nd::Var, nd::Var)>;

double check_unary(const Matrix& init, const Unary& op) {
  nd::Parameter a("a", init);
  return gradient_check({&a}, [&](nd::Graph& g, std::vector<nd::Var>& v) { return project(g, op(v[0])); });
}

double check_binary(const Matrix& ia, const Matrix& ib, const Binary& op) {
  nd::Parameter a("a", ia), b("b", ib);
  return gradient_check({&a, &b},
                        [&](nd::Graph& g, std::vector<nd::Var>& v) { return project(g, op(v[0], v[1])); });
}

}  // namespace

TEST_SUITE("ndgrad") {
  TEST_CASE("every op passes a central-difference gradient check") {
    const Matrix a34 = uniform(3, 4, -1.0, 1.0, 1);
    const Matrix b34 = uniform(3, 4, -1.0, 1.0, 2);
    const Matrix row = uniform(1, 4, -1.0, 1.0, 3);
    const Matrix one = uniform(1, 1, 0.5, 1.5, 4);

    CHECK(check_binary(a34, uniform(4, 2, -1, 1, 5), [](nd::Var x, nd::Var y) { return nd::matmul(x, y); }) < kTol);
    CHECK(check_binary(a34, b34, [](nd::Var x, nd::Var y) { return x + y; }) < kTol);
    CHECK(check_binary(a34, row, [](nd::Var x, nd::Var y) { return x + y; }) < kTol);
    CHECK(check_binary(a34, one, [](nd::Var x, nd::Var y) { return x + y; }) < kTol);
    CHECK(check_binary(a34, b34, [](nd::Var x, nd::Var y) { return x - y; }) < kTol);
    CHECK(check_binary(a34, row, [](nd::Var x, nd::Var y) { return x - y; }) < kTol);
    CHECK(check_binary(a34, b34, [](nd::Var x, nd::Var y) { return x * y; }) < kTol);
    CHECK(check_binary(a34, row, [](nd::Var x, nd::Var y) { return x * y; }) < kTol);
    CHECK(check_binary(a34, one, [](nd::Var x, nd::Var y) { return x * y; }) < kTol);
    CHECK(check_binary(a34, uniform(3, 2, -1, 1, 6), [](nd::Var x, nd::Var y) { return nd::concat_cols(x, y); }) <
          kTol);

    CHECK(check_unary(a34, [](nd::Var x) { return nd::scale(x, -2.5); }) < kTol);
    CHECK(check_unary(a34, [](nd::Var x) { return 3.0 * x; }) < kTol);
    CHECK(check_unary(a34, [](nd::Var x) { return x + 0.7; }) < kTol);
    CHECK(check_unary(a34, [](nd::Var x) { return x - 0.7; }) < kTol);
    CHECK(check_unary(a34, [](nd::Var x) { return -x; }) < kTol);
    CHECK(check_unary(a34, [](nd::Var x) { return nd::exp(x); }) < kTol);
    CHECK(check_unary(uniform(3, 4, 0.3, 2.0, 7), [](nd::Var x) { return nd::log(x); }) < kTol);
    CHECK(check_unary(signed_away_from_zero(3, 4, 8), [](nd::Var x) { return nd::relu(x); }) < kTol);
    CHECK(check_unary(a34, [](nd::Var x) { return nd::sigmoid(x); }) < kTol);
    CHECK(check_unary(a34, [](nd::Var x) { return nd::square(x); }) < kTol);
    CHECK(check_unary(signed_away_from_zero(3, 4, 9), [](nd::Var x) { return nd::abs(x); }) < kTol);
    CHECK(check_unary(a34 * 3.0, [](nd::Var x) { return nd::softmax_rows(x); }) < kTol);
    CHECK(check_unary(a34 * 3.0, [](nd::Var x) { return nd::log_softmax_rows(x); }) < kTol);

    nd::Parameter p("p", a34);
    const auto sum_loss = [](nd::Graph&, std::vector<nd::Var>& v) { return nd::sum(nd::square(v[0])); };
    CHECK(gradient_check({&p}, sum_loss) < kTol);
    const auto mean_loss = [](nd::Graph&, std::vector<nd::Var>& v) { return nd::batch_mean(nd::exp(v[0])); };
    CHECK(gradient_check({&p}, mean_loss) < kTol);
  }

  TEST_CASE("4-layer MLP gradients match finite differences") {
    RngStream rng(7, "mlp");
    const Index widths[] = {6, 8, 8, 8, 3};
    std::vector<nd::Parameter> layers;
    layers.reserve(8);
    for (int l = 0; l < 4; ++l) {
      layers.emplace_back("w" + std::to_string(l), rng.normal_matrix(widths[l], widths[l + 1]) * 0.5);
      layers.emplace_back("b" + std::to_string(l), rng.normal_matrix(1, widths[l + 1]) * 0.1);
    }
    const Matrix x = rng.normal_matrix(5, 6);
    const Matrix target = uniform(5, 3, 0.1, 0.9, 11);
    std::vector<nd::Parameter*> params;
    for (auto& p : layers) params.push_back(&p);

    const double err = gradient_check(params, [&](nd::Graph& g, std::vector<nd::Var>& v) {
      nd::Var h = g.constant(x);
      for (int l = 0; l < 4; ++l) {
        h = nd::matmul(h, v[2 * l]) + v[2 * l + 1];
        h = l < 3 ? nd::relu(h) : nd::sigmoid(h);
      }
      return 0.5 * nd::batch_mean(nd::square(h - g.constant(target)));
    });
    CHECK(err < kTol);
  }

  TEST_CASE("softmax rows are stable for huge logits") {
    Matrix logits(2, 3);
    logits << 1000.0, 0.0, -1000.0, 5.0, 5.0, 5.0;
    const Matrix p = nd::softmax_rows(logits);
    const Matrix lp = nd::log_softmax_rows(logits);
    CHECK(p.allFinite());
    CHECK(lp.allFinite());
    CHECK(p(0, 0) == doctest::Approx(1.0));
    CHECK(p(1, 2) == doctest::Approx(1.0 / 3.0));
    CHECK(lp(0, 2) == doctest::Approx(-2000.0));
  }

  TEST_CASE("parameter gradients accumulate until zero_grad") {
    nd::Parameter p("p", Matrix::Constant(2, 2, 1.5));
    for (int i = 0; i < 2; ++i) {
      nd::Graph g;
      nd::Var v = g.param(p);
      g.backward(nd::sum(v * v));  // reuses v: two paths into the same leaf
    }
    CHECK(p.grad.isApprox(Matrix::Constant(2, 2, 2 * 2 * 1.5)));
    p.zero_grad();
    CHECK(p.grad.isZero());
  }

  TEST_CASE("graphs are recorded in evaluation order") {
    nd::Graph g;
    nd::Var a = g.constant(Matrix::Ones(2, 2));
    nd::Var b = nd::exp(a);
    nd::Var c = nd::sum(b);
    CHECK(g.size() == 3);
    CHECK(a.id() < b.id());
    CHECK(b.id() < c.id());
    CHECK(c.item() == doctest::Approx(4.0 * std::exp(1.0)));
    CHECK(std::string(nd::op_name(nd::Op::LogSoftmaxRows)).size() > 0);
  }

  TEST_CASE("errors") {
    nd::Graph g;
    nd::Var a = g.constant(Matrix::Ones(2, 3));
    nd::Var b = g.constant(Matrix::Ones(2, 3));
    CHECK_THROWS_AS(nd::matmul(a, b), DimensionError);
    CHECK_THROWS_AS(a + g.constant(Matrix::Ones(3, 3)), DimensionError);
    CHECK_THROWS_AS(nd::concat_cols(a, g.constant(Matrix::Ones(3, 1))), DimensionError);
    CHECK_THROWS_AS(nd::log(g.constant(Matrix::Zero(1, 2))), DomainError);
    CHECK_THROWS_AS(nd::log(g.constant(Matrix::Constant(1, 1, -1.0))), DomainError);
    CHECK_THROWS_AS(g.backward(a), ContractError);
    CHECK_THROWS_AS(a.item(), ContractError);
  }
}

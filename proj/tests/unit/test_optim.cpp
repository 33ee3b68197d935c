#include <doctest.h>

#include <cmath>

#include "basis/errors.hpp"
#include "basis/optim.hpp"

using namespace basis;

TEST_SUITE("optim") {

TEST_CASE("beta 0, lr 1 is plain gradient descent") {
  Matrix p = Matrix::from_rows({{1, 2}}), g = Matrix::from_rows({{0.5, -1}});
  std::vector<ParamRef> params{{"p", &p, &g}};
  MomentumState s;
  s.beta = 0;
  s.learning_rate = 1;
  sgd_momentum_step(params, s);
  CHECK(p == Matrix::from_rows({{0.5, 3}}));
}

TEST_CASE("velocity decays geometrically without gradient") {
  Matrix p(1, 1), g(1, 1, 1);
  std::vector<ParamRef> params{{"p", &p, &g}};
  MomentumState s;
  sgd_momentum_step(params, s);
  CHECK(s.velocity[0](0, 0) == 1);
  g.fill(0);
  for (int k = 1; k <= 5; ++k) {
    sgd_momentum_step(params, s);
    CHECK(s.velocity[0](0, 0) == doctest::Approx(std::pow(0.9, k)).epsilon(1e-14));
  }
}

TEST_CASE("two-step hand recursion") {
  Matrix p(1, 1, 1), g(1, 1, 1);
  std::vector<ParamRef> params{{"p", &p, &g}};
  MomentumState s;
  sgd_momentum_step(params, s);
  sgd_momentum_step(params, s);
  CHECK(p(0, 0) == doctest::Approx(0.971).epsilon(1e-14));
}

TEST_CASE("first step is linear in the gradient") {
  Matrix p1(1, 3), p2(1, 3);
  Matrix g1 = Matrix::from_rows({{0.3, -1.2, 2}}), g2 = scale(g1, 2);
  std::vector<ParamRef> a{{"a", &p1, &g1}}, b{{"b", &p2, &g2}};
  MomentumState s1, s2;
  sgd_momentum_step(a, s1);
  sgd_momentum_step(b, s2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p2(0, i) == doctest::Approx(2 * p1(0, i)).epsilon(1e-15));
}

TEST_CASE("non-finite gradients abort without modifying anything") {
  Matrix p(1, 2, 1), q(1, 1, 1), gp(1, 2, 1), gq(1, 1, NAN);
  std::vector<ParamRef> params{{"ok", &p, &gp}, {"blocks.0.mlp.fc1.weight", &q, &gq}};
  MomentumState s;
  try {
    sgd_momentum_step(params, s);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("blocks.0.mlp.fc1.weight") != std::string::npos);
  }
  CHECK(p == Matrix(1, 2, 1));
  Matrix wrong(2, 2);
  std::vector<ParamRef> bad{{"w", &p, &wrong}};
  CHECK_THROWS_AS(sgd_momentum_step(bad, s), ContractError);
}

}

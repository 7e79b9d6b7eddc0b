#include <random>

#include "doctest.h"
#include "gmlsnet/basis.hpp"
#include "gmlsnet/error.hpp"

using namespace gmls;

TEST_CASE("term count and dictionary order") {
  CHECK(basis_size(1, 2) == 3);
  CHECK(basis_size(2, 2) == 6);
  CHECK(basis_size(2, 4) == 15);
  const MonomialBasis b(2, 2);
  const std::vector<MultiIndex> expected{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  CHECK(b.terms() == expected);
  CHECK(b.index_of({1, 1}) == 4);
}

TEST_CASE("centered evaluation") {
  const MonomialBasis b(1, 2);
  const double c[] = {0.3};
  const double x[] = {0.8};
  const Eigen::VectorXd at_center = b.eval(c, c);
  CHECK(at_center[0] == 1.0);
  CHECK(at_center[1] == 0.0);
  CHECK(at_center[2] == 0.0);
  const Eigen::VectorXd v = b.eval(x, c);
  CHECK(v[1] == doctest::Approx(0.5));
  CHECK(v[2] == doctest::Approx(0.25));
  const double bad[] = {0.1, 0.2};
  CHECK_THROWS_AS(b.eval(bad, c), Error);
}

TEST_CASE("center gradient") {
  const MonomialBasis b(1, 2);
  const double c[] = {0.0};
  const double x[] = {0.5};
  const Eigen::MatrixXd g = b.eval_gradient(x, c);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 0) == doctest::Approx(-1.0));
  CHECK(g(2, 0) == doctest::Approx(-1.0));
}

TEST_CASE("center gradient against finite differences") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int dim : {1, 2}) {
    const MonomialBasis b(dim, 4, 0.7);
    for (int trial = 0; trial < 20; ++trial) {
      double x[2] = {u(rng), u(rng)};
      double c[2] = {u(rng), u(rng)};
      const Eigen::MatrixXd g = b.eval_gradient({x, std::size_t(dim)}, {c, std::size_t(dim)});
      for (int k = 0; k < dim; ++k) {
        const double h = 1e-6;
        double cp[2] = {c[0], c[1]}, cm[2] = {c[0], c[1]};
        cp[k] += h;
        cm[k] -= h;
        const Eigen::VectorXd fd = (b.eval({x, std::size_t(dim)}, {cp, std::size_t(dim)}) -
                                    b.eval({x, std::size_t(dim)}, {cm, std::size_t(dim)})) / (2 * h);
        for (Eigen::Index q = 0; q < fd.size(); ++q)
          CHECK(std::abs(g(q, k) - fd[q]) <= 1e-8 * std::max(1.0, std::abs(fd[q])));
      }
    }
  }
}

TEST_CASE("operator images") {
  const MonomialBasis b1(1, 2, 0.1);
  const Eigen::VectorXd id = apply_operator_to_basis(b1, TargetOperator::identity());
  CHECK(id == Eigen::Vector3d(1, 0, 0));
  const Eigen::VectorXd d2 = apply_operator_to_basis(b1, TargetOperator::d2_dx2());
  CHECK(d2[0] == 0.0);
  CHECK(d2[1] == 0.0);
  CHECK(d2[2] == doctest::Approx(2.0 / 0.01));
  const MonomialBasis b2(2, 2, 0.5);
  const Eigen::VectorXd lap = apply_operator_to_basis(b2, TargetOperator::laplacian());
  Eigen::VectorXd expect(6);
  expect << 0, 0, 0, 8, 0, 8;
  CHECK((lap - expect).norm() < 1e-14);
  const Eigen::VectorXd flux = apply_operator_to_basis(b1, TargetOperator::flux(2.0, 0.3));
  CHECK(flux[0] == doctest::Approx(2.0));
  CHECK(flux[1] == doctest::Approx(3.0));
  CHECK(flux[2] == 0.0);
  CHECK_THROWS_AS(apply_operator_to_basis(b1, TargetOperator::laplacian()), Error);
}

TEST_CASE("diff op names round trip") {
  for (DiffOp op : {DiffOp::identity, DiffOp::d_dx, DiffOp::d2_dx2, DiffOp::laplacian_2d, DiffOp::flux_advdiff})
    CHECK(diff_op_from_string(to_string(op)) == op);
  CHECK_THROWS_AS(diff_op_from_string("curl"), Error);
}

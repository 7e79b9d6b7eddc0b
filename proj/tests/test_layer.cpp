#include <numeric>
#include <random>

#include "doctest.h"
#include "gmlsnet/error.hpp"
#include "gmlsnet/network.hpp"
#include "support.hpp"

using namespace gmls;
using namespace gmls::test;

TEST_CASE("linear laplacian layer is exact on quadratics") {
  auto c = share(random_cloud(2, 300, 1.0, 2, false));
  auto t = share(random_cloud(2, 25, 1.0, 3, false));
  auto enc = make_encoder(c, t, 0.3, 2);
  const Eigen::VectorXd tau = apply_operator_to_basis(enc->basis(), TargetOperator::laplacian());
  GMLSLayer layer(enc, 1, FunctionalMap::linear(Eigen::MatrixXd(tau.transpose())));
  Field u(300, 1);
  for (int i = 0; i < 300; ++i) u(i, 0) = std::pow(c->coord(i, 0), 2) - 4 * c->coord(i, 0) * c->coord(i, 1);
  const Field out = layer.forward(u);
  for (int i = 0; i < 25; ++i) CHECK(out(i, 0) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("mlp without hidden layers equals the linear map") {
  auto c = share(random_cloud(1, 60, 1.0, 4, true));
  auto enc = make_encoder(c, c, 0.15, 3);
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd xi = random_matrix(2, 8, rng);
  FunctionalMap mlp = FunctionalMap::mlp(8, {}, 2, Activation::identity);
  mlp.parameters()[0].value = xi;
  mlp.parameters()[1].value.setZero();
  GMLSLayer a(enc, 2, FunctionalMap::linear(xi));
  GMLSLayer b(enc, 2, mlp);
  const Field u = random_matrix(60, 2, rng);
  CHECK((a.forward(u) - b.forward(u)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("exported stencil reproduces the layer") {
  std::mt19937_64 rng(6);
  for (int dim : {1, 2}) {
    auto c = share(random_cloud(dim, dim == 1 ? 80 : 200, 1.0, 40 + dim, true));
    auto t = share(c->subsample(30, 7));
    auto enc = make_encoder(c, t, dim == 1 ? 0.15 : 0.3, 2);
    const std::size_t q = enc->q();
    GMLSLayer layer(enc, 1, FunctionalMap::linear(random_matrix(1, q, rng)));
    const StencilMatrix s = export_stencil(layer);
    for (int trial = 0; trial < 10; ++trial) {
      const Field u = random_matrix(c->size(), 1, rng);
      CHECK((layer.forward(u).col(0) - s.apply(u.col(0))).cwiseAbs().maxCoeff() <=
            1e-12 * std::max(1.0, u.cwiseAbs().maxCoeff()) * 10);
    }
    for (std::size_t i = 0; i < s.rows; ++i) {
      std::vector<std::uint32_t> cols(s.col_idx.begin() + s.row_ptr[i], s.col_idx.begin() + s.row_ptr[i + 1]);
      CHECK(cols == enc->neighbor_indices(i));
    }
  }
  auto c = share(uniform_grid(1, 20, 1.0, true));
  GMLSLayer nonlinear(make_encoder(c, c, 0.2, 2), 1, FunctionalMap::mlp(3, {4}, 1));
  CHECK_THROWS_AS(export_stencil(nonlinear), Error);
}

TEST_CASE("layer outputs are invariant to source permutation") {
  auto c = share(random_cloud(2, 150, 1.0, 12, true));
  auto t = share(random_cloud(2, 20, 1.0, 13, true));
  std::vector<std::size_t> perm(150);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto cp = share(c->permuted(perm));
  FunctionalMap map = FunctionalMap::mlp(12, {8}, 3);
  map.initialize(5);
  GMLSLayer a(make_encoder(c, t, 0.25, 2), 2, map);
  GMLSLayer b(make_encoder(cp, t, 0.25, 2), 2, map);
  const Field u = random_matrix(150, 2, rng);
  Field up(150, 2);
  for (std::size_t i = 0; i < 150; ++i) up.row(i) = u.row(perm[i]);
  CHECK((a.forward(u) - b.forward(up)).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("layer outputs are invariant to rigid translation") {
  auto c = share(random_cloud(2, 150, 1.0, 22, false));
  auto t = share(random_cloud(2, 10, 1.0, 23, false));
  FunctionalMap map = FunctionalMap::mlp(6, {5}, 1);
  map.initialize(9);
  GMLSLayer a(make_encoder(c, t, 0.3, 2), 1, map);
  GMLSLayer b(make_encoder(share(c->translated({1.5, 2.5})), share(t->translated({1.5, 2.5})), 0.3, 2), 1, map);
  std::mt19937_64 rng(8);
  const Field u = random_matrix(150, 1, rng);
  CHECK((a.forward(u) - b.forward(u)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("linear layer is linear in the field") {
  auto c = share(random_cloud(1, 70, 1.0, 3, true));
  std::mt19937_64 rng(3);
  GMLSLayer layer(make_encoder(c, c, 0.12, 3), 1, FunctionalMap::linear(random_matrix(2, 4, rng)));
  const Field u = random_matrix(70, 1, rng), v = random_matrix(70, 1, rng);
  const Field lhs = layer.forward(0.7 * u - 1.9 * v);
  const Field rhs = 0.7 * layer.forward(u) - 1.9 * layer.forward(v);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("per-channel sampling sites") {
  auto c1 = share(random_cloud(1, 60, 1.0, 1, false));
  auto c2 = share(random_cloud(1, 80, 1.0, 2, false));
  auto t = share(uniform_grid(1, 20, 1.0, false));
  std::vector<std::shared_ptr<const CoefficientEncoder>> encs{make_encoder(c1, t, 0.15, 2), make_encoder(c2, t, 0.15, 2)};
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd xi = random_matrix(1, 6, rng);
  GMLSLayer layer(encs, {0, 1}, FunctionalMap::linear(xi));
  RandomPolynomial p(1, 2, rng);
  std::vector<Eigen::VectorXd> ch{p.sample(*c1), p.sample(*c2)};
  // both channels sample the same quadratic, so the result is (xi_0 + xi_1) . a(p)
  const Field out = layer.forward(ch);
  GMLSLayer single(encs[0], 1, FunctionalMap::linear(Eigen::MatrixXd(xi.leftCols(3) + xi.rightCols(3))));
  CHECK((out - single.forward(Field(ch[0]))).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK_THROWS_AS(GMLSLayer(encs, {0, 2}, FunctionalMap::linear(xi)), Error);
}

TEST_CASE("pooling") {
  PointCloud src(1, {0.0, 0.1, 0.2, 0.9});
  auto s = share(src);
  auto t = share(PointCloud(1, {0.1, 0.9}));
  PoolingLayer mean(Reducer::mean, s, t, 0.15);
  Field u(4, 1);
  u << 1, 2, 3, 7;
  CHECK(mean.forward(u)(0, 0) == doctest::Approx(2.0));
  PoolingLayer max(Reducer::max, s, t, 0.15);
  PoolTape tape;
  const Field m = max.forward(u, &tape);
  CHECK(m(0, 0) == 3.0);
  CHECK(tape.argmax[0] == 2);
  Field ties(4, 1);
  ties << 5, 5, 5, 1;
  max.forward(ties, &tape);
  CHECK(tape.argmax[0] == 0);
  CHECK(mean.forward(Field::Constant(4, 1, 4.0)).isApprox(Field::Constant(2, 1, 4.0)));
  CHECK(max.forward(Field::Constant(4, 1, 4.0)).isApprox(Field::Constant(2, 1, 4.0)));
  auto g = share(random_cloud(2, 50, 1.0, 3, false));
  PoolingLayer ident(Reducer::max, g, g, 1e-6);
  std::mt19937_64 rng(1);
  const Field r = random_matrix(50, 2, rng);
  CHECK(ident.forward(r) == r);
  auto far = share(PointCloud(1, {0.5}));
  CHECK_THROWS_AS(PoolingLayer(Reducer::max, s, far, 0.1), EmptyNeighborhoodError);
}

TEST_CASE("network composition") {
  auto c = share(uniform_grid(1, 40, 1.0, true));
  auto enc = make_encoder(c, c, 0.1, 2);
  std::mt19937_64 rng(2);
  GMLSLayer layer(enc, 1, FunctionalMap::linear(random_matrix(1, 3, rng)));
  Network single;
  single.add(layer);
  const Field u = random_matrix(40, 1, rng);
  CHECK(network_forward(single, u) == layer.forward(u));

  GMLSLayer identity(enc, 1, FunctionalMap::linear(Eigen::MatrixXd(apply_operator_to_basis(enc->basis(), TargetOperator::identity()).transpose())));
  Network net;
  net.add(identity);
  net.add_activation(Activation::relu);
  net.add_mean_readout();
  Eigen::MatrixXd w(1, 1);
  w << 2.0;
  net.add_affine_head(w, Eigen::VectorXd::Constant(1, 0.5));
  const Field y = network_forward(net, Field::Constant(40, 1, 3.0));
  CHECK(y.rows() == 1);
  CHECK(y(0, 0) == doctest::Approx(6.5).epsilon(1e-12));

  Network bad;
  bad.add(layer);
  auto other = share(uniform_grid(1, 30, 1.0, true));
  CHECK_THROWS_AS(bad.add(GMLSLayer(make_encoder(other, other, 0.1, 2), 1, FunctionalMap::linear(1, 3))), Error);
  CHECK_THROWS_AS(bad.add(GMLSLayer(enc, 2, FunctionalMap::linear(1, 6))), Error);
  Network empty;
  CHECK_THROWS_AS(empty.add_mean_readout(), Error);
  CHECK_THROWS_AS(network_forward(empty, u), Error);

  const auto ids = net.parameters();
  CHECK(ids[0].id == "stage0.xi");
  CHECK(ids[1].id == "stage3.W");
  CHECK(ids[2].id == "stage3.b");
}

TEST_CASE("parameter initialization statistics") {
  FunctionalMap lin = FunctionalMap::linear(50, 200);
  lin.initialize(3);
  const Eigen::MatrixXd& w = lin.weight(0);
  const double var = w.squaredNorm() / double(w.size());
  CHECK(var == doctest::Approx(1.0 / 200).epsilon(0.05));
  FunctionalMap mlp = FunctionalMap::mlp(100, {80}, 2);
  mlp.initialize(3);
  const double v0 = mlp.weight(0).squaredNorm() / double(mlp.weight(0).size());
  CHECK(v0 == doctest::Approx(2.0 / 100).epsilon(0.05));
  CHECK(mlp.bias(0)->isZero());
  FunctionalMap again = FunctionalMap::mlp(100, {80}, 2);
  again.initialize(3);
  CHECK(again.weight(1) == mlp.weight(1));
}

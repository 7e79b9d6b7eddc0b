#include <random>

#include "doctest.h"
#include "gmlsnet/error.hpp"
#include "gmlsnet/gradients.hpp"
#include "support.hpp"

using namespace gmls;
using namespace gmls::test;

namespace {

constexpr double kStep = 1e-5;

double max_rel(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
  const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-300);
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

double pairing(const Field& y, const Field& g) { return (y.array() * g.array()).sum(); }

struct Config {
  std::shared_ptr<const PointCloud> src, tgt;
  std::shared_ptr<const CoefficientEncoder> enc;
  GMLSLayer layer;
  Field u, g;
};

Config make_config(int seed, bool mlp) {
  std::mt19937_64 rng(seed);
  const int dim = 1 + seed % 2;
  const std::size_t order = 1 + seed % 3;
  auto src = share(random_cloud(dim, dim == 1 ? 40 : 120, 1.0, 1000 + seed, false));
  auto tgt = share(random_cloud(dim, 6, 0.6, 2000 + seed, false).translated({0.2, dim == 2 ? 0.2 : 0.0}));
  const double eps = dim == 1 ? 0.3 : 0.4;
  auto enc = make_encoder(src, tgt, eps, static_cast<int>(order));
  const std::size_t channels = 1 + seed % 2;
  const std::size_t width = channels * enc->q();
  FunctionalMap map = mlp ? FunctionalMap::mlp(width, {6}, 2) : FunctionalMap::linear(2, width);
  map.initialize(seed);
  if (mlp) {
    // nonzero biases so ReLU kinks do not sit at the origin
    for (std::size_t l = 1; l < map.parameters().size(); l += 2)
      map.parameters()[l].value = random_matrix(map.parameters()[l].value.rows(), 1, rng, 0.5);
  }
  GMLSLayer layer(enc, channels, map);
  return {src, tgt, enc, layer, random_matrix(src->size(), channels, rng), random_matrix(tgt->size(), 2, rng)};
}

}  // namespace

TEST_CASE("linear q gradient is the coefficient vector") {
  auto src = share(random_cloud(1, 30, 1.0, 3, true));
  auto tgt = share(PointCloud(1, {0.4}, Coord{1.0, 0.0}));
  auto enc = make_encoder(src, tgt, 0.3, 2);
  GMLSLayer layer(enc, 1, FunctionalMap::linear(1, 3));
  std::mt19937_64 rng(1);
  const Field u = random_matrix(30, 1, rng);
  LayerTape tape;
  layer.forward(u, &tape);
  const auto grads = grad_wrt_q(layer, tape, Field::Ones(1, 1));
  const CoefficientField a = enc->encode(u);
  for (int k = 0; k < 3; ++k) CHECK(grads[0](0, k) == doctest::Approx(a.at(0, 0, k)).epsilon(1e-14));
  const auto zero = grad_wrt_q(layer, tape, Field::Zero(1, 1));
  CHECK(zero[0].isZero());
  CHECK_THROWS_AS(grad_wrt_q(layer, LayerTape{}, Field::Ones(1, 1)), Error);
}

TEST_CASE("q gradients match finite differences") {
  for (int seed = 0; seed < 20; ++seed) {
    Config cfg = make_config(seed, seed % 3 != 0);
    LayerTape tape;
    cfg.layer.forward(cfg.u, &tape);
    const auto grads = grad_wrt_q(cfg.layer, tape, cfg.g);
    auto& params = cfg.layer.map().parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      Eigen::MatrixXd fd(params[p].value.rows(), params[p].value.cols());
      for (Eigen::Index k = 0; k < fd.size(); ++k) {
        double& v = params[p].value.data()[k];
        const double keep = v;
        v = keep + kStep;
        const double lp = pairing(cfg.layer.forward(cfg.u), cfg.g);
        v = keep - kStep;
        const double lm = pairing(cfg.layer.forward(cfg.u), cfg.g);
        v = keep;
        fd.data()[k] = (lp - lm) / (2 * kStep);
      }
      CHECK(max_rel(grads[p], fd) <= 1e-5);
    }
  }
}

TEST_CASE("field gradients match finite differences") {
  for (int seed = 0; seed < 20; ++seed) {
    Config cfg = make_config(seed, seed % 2 == 0);
    LayerTape tape;
    cfg.layer.forward(cfg.u, &tape);
    const Field du = grad_wrt_field(cfg.layer, tape, cfg.g);
    Field fd(cfg.u.rows(), cfg.u.cols());
    for (Eigen::Index k = 0; k < cfg.u.size(); ++k) {
      Field up = cfg.u, um = cfg.u;
      up.data()[k] += kStep;
      um.data()[k] -= kStep;
      fd.data()[k] = (pairing(cfg.layer.forward(up), cfg.g) - pairing(cfg.layer.forward(um), cfg.g)) / (2 * kStep);
    }
    CHECK(max_rel(du, fd) <= 1e-5);
  }
}

TEST_CASE("linear field gradient is the stencil transpose and field independent") {
  auto c = share(random_cloud(1, 50, 1.0, 2, true));
  auto enc = make_encoder(c, c, 0.15, 2);
  std::mt19937_64 rng(2);
  GMLSLayer layer(enc, 1, FunctionalMap::linear(random_matrix(1, 3, rng)));
  const Field g = random_matrix(50, 1, rng);
  LayerTape t1, t2;
  layer.forward(random_matrix(50, 1, rng), &t1);
  layer.forward(random_matrix(50, 1, rng), &t2);
  const Field d1 = grad_wrt_field(layer, t1, g), d2 = grad_wrt_field(layer, t2, g);
  CHECK((d1 - d2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((d1.col(0) - export_stencil(layer).apply_transpose(g.col(0))).cwiseAbs().maxCoeff() <= 1e-12);
  // identity functional: column sums of the stencil reproduce the partition property
  GMLSLayer id(enc, 1, FunctionalMap::linear(Eigen::MatrixXd(apply_operator_to_basis(enc->basis(), TargetOperator::identity()).transpose())));
  LayerTape t3;
  id.forward(Field::Zero(50, 1), &t3);
  CHECK(grad_wrt_field(id, t3, Field::Ones(50, 1)).sum() == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("position gradients match finite differences with frozen topology") {
  for (int seed = 0; seed < 20; ++seed) {
    Config cfg = make_config(seed, seed % 2 == 1);
    const PositionGradient pg = grad_wrt_positions(cfg.layer, cfg.u, cfg.g);
    const auto& topo = cfg.enc->neighbors();
    const int dim = cfg.src->dim();
    auto eval = [&](std::shared_ptr<const PointCloud> s, std::shared_ptr<const PointCloud> t) {
      auto e = std::make_shared<const CoefficientEncoder>(s, t, cfg.enc->kernel(), cfg.enc->basis(), topo);
      GMLSLayer l(e, cfg.layer.in_channels(), cfg.layer.map());
      return pairing(l.forward(cfg.u), cfg.g);
    };
    Eigen::MatrixXd fd_t(cfg.tgt->size(), dim);
    for (std::size_t i = 0; i < cfg.tgt->size(); ++i)
      for (int k = 0; k < dim; ++k) {
        double xp[2] = {cfg.tgt->coord(i, 0), dim == 2 ? cfg.tgt->coord(i, 1) : 0.0};
        double xm[2] = {xp[0], xp[1]};
        xp[k] += kStep;
        xm[k] -= kStep;
        fd_t(i, k) = (eval(cfg.src, share(cfg.tgt->with_point(i, {xp, std::size_t(dim)}))) -
                      eval(cfg.src, share(cfg.tgt->with_point(i, {xm, std::size_t(dim)})))) / (2 * kStep);
      }
    CHECK(max_rel(pg.target, fd_t) <= 1e-5);
    Eigen::MatrixXd fd_s(cfg.src->size(), dim);
    for (std::size_t j = 0; j < cfg.src->size(); ++j)
      for (int k = 0; k < dim; ++k) {
        double xp[2] = {cfg.src->coord(j, 0), dim == 2 ? cfg.src->coord(j, 1) : 0.0};
        double xm[2] = {xp[0], xp[1]};
        xp[k] += kStep;
        xm[k] -= kStep;
        fd_s(j, k) = (eval(share(cfg.src->with_point(j, {xp, std::size_t(dim)})), cfg.tgt) -
                      eval(share(cfg.src->with_point(j, {xm, std::size_t(dim)})), cfg.tgt)) / (2 * kStep);
      }
    CHECK(max_rel(pg.source, fd_s) <= 1e-5);
    // rigid translation leaves the output unchanged
    for (int k = 0; k < dim; ++k) CHECK(std::abs(pg.target.col(k).sum() + pg.source.col(k).sum()) <=
                                        1e-9 * (pg.target.cwiseAbs().sum() + pg.source.cwiseAbs().sum()));
  }
}

TEST_CASE("constant field on a symmetric stencil has zero position gradient") {
  auto src = share(PointCloud(1, {-0.1, 0.0, 0.1}));
  auto tgt = share(PointCloud(1, {0.0}));
  auto enc = make_encoder(src, tgt, 0.3, 1);
  GMLSLayer id(enc, 1, FunctionalMap::linear(Eigen::MatrixXd(apply_operator_to_basis(enc->basis(), TargetOperator::identity()).transpose())));
  const PositionGradient pg = grad_wrt_positions(id, Field::Constant(3, 1, 2.0), Field::Ones(1, 1));
  CHECK(std::abs(pg.target(0, 0)) < 1e-12);
}

TEST_CASE("position gradient preconditions") {
  auto src = share(PointCloud(1, {0.0, 0.1, 0.2, 0.3}));
  auto tgt = share(PointCloud(1, {0.15}));
  GMLSLayer p1(make_encoder(src, tgt, 0.3, 1, 1), 1, FunctionalMap::linear(1, 2));
  CHECK_THROWS_AS(grad_wrt_positions(p1, Field::Ones(4, 1), Field::Ones(1, 1)), Error);
  // neighbor at distance eps (1 - 1e-14) sits on the kink
  const double eps = 0.15 / (1.0 - 1e-14);
  GMLSLayer edge(make_encoder(src, tgt, eps, 1), 1, FunctionalMap::linear(1, 2));
  CHECK_THROWS_AS(grad_wrt_positions(edge, Field::Ones(4, 1), Field::Ones(1, 1)), Error);
  // geometry is untouched by the computation
  const auto before = edge.encoder().neighbors();
  CHECK(before == edge.encoder().neighbors());
}

TEST_CASE("network backward") {
  auto c = share(random_cloud(1, 60, 1.0, 8, true));
  auto t = share(c->subsample(20, 3));
  std::mt19937_64 rng(6);
  GMLSLayer l1(make_encoder(c, c, 0.15, 2), 1, FunctionalMap::linear(random_matrix(2, 3, rng)));
  GMLSLayer l2(make_encoder(c, t, 0.2, 2), 2, FunctionalMap::linear(random_matrix(1, 6, rng)));
  Network net;
  net.add(l1);
  net.add(l2);
  const Field u = random_matrix(60, 1, rng);
  const Field g = random_matrix(20, 1, rng);
  Tape tape;
  network_forward(net, u, &tape);
  const NetworkGradients grads = network_backward(net, tape, g);
  CHECK(grads.ids == std::vector<std::string>{"stage0.xi", "stage1.xi"});
  // finite differences on the first layer
  Eigen::MatrixXd fd(2, 3);
  for (Eigen::Index k = 0; k < 6; ++k) {
    auto params = net.parameters();
    double& v = params[0].value->data()[k];
    const double keep = v;
    v = keep + kStep;
    const double lp = pairing(network_forward(net, u), g);
    v = keep - kStep;
    const double lm = pairing(network_forward(net, u), g);
    v = keep;
    fd.data()[k] = (lp - lm) / (2 * kStep);
  }
  CHECK(max_rel(grads["stage0.xi"], fd) <= 1e-6);
  // the tape is stale after mutable parameter access
  CHECK_THROWS_AS(network_backward(net, tape, g), Error);

  Network one;
  one.add(l1);
  Tape t1;
  network_forward(one, u, &t1);
  const Field g1 = random_matrix(60, 2, rng);
  LayerTape lt;
  l1.forward(u, &lt);
  CHECK((network_backward(one, t1, g1).values[0] - grad_wrt_q(l1, lt, g1)[0]).norm() == 0.0);
}

TEST_CASE("max pooling routes gradients to argmax sources") {
  auto c = share(uniform_grid(1, 40, 1.0, true));
  auto t = share(c->subsample(8, 2));
  std::mt19937_64 rng(9);
  GMLSLayer l1(make_encoder(c, c, 0.1, 2), 1, FunctionalMap::linear(random_matrix(1, 3, rng)));
  Network net;
  net.add(l1);
  net.add(PoolingLayer(Reducer::max, c, t, 0.06));
  net.add_mean_readout();
  net.add_affine_head(1, 4);
  const Field u = random_matrix(40, 1, rng);
  Tape tape;
  network_forward(net, u, &tape);
  const auto& pt = std::get<PoolTape>(tape.stages[1]);
  const auto& pool = std::get<PoolingLayer>(net.stages()[1]);
  const Field dy = pool.backward(pt, Field::Ones(8, 1));
  for (Eigen::Index j = 0; j < 40; ++j) {
    const bool is_arg = std::find(pt.argmax.begin(), pt.argmax.end(), static_cast<std::uint32_t>(j)) != pt.argmax.end();
    if (!is_arg) CHECK(dy(j, 0) == 0.0);
    else CHECK(dy(j, 0) > 0.0);
  }
  const NetworkGradients grads = network_backward(net, tape, Field::Ones(1, 1));
  CHECK(grads.values.size() == 3);
  Eigen::MatrixXd fd(1, 3);
  for (Eigen::Index k = 0; k < 3; ++k) {
    auto params = net.parameters();
    double& v = params[0].value->data()[k];
    const double keep = v;
    v = keep + kStep;
    const double lp = network_forward(net, u)(0, 0);
    v = keep - kStep;
    const double lm = network_forward(net, u)(0, 0);
    v = keep;
    fd(0, k) = (lp - lm) / (2 * kStep);
  }
  CHECK(max_rel(grads.values[0], fd) <= 1e-6);
}

TEST_CASE("mean pooling spreads gradients uniformly") {
  auto s = share(PointCloud(1, {0.0, 0.1, 0.2}));
  auto t = share(PointCloud(1, {0.1}));
  PoolingLayer mean(Reducer::mean, s, t, 0.15);
  PoolTape tape;
  mean.forward(Field::Ones(3, 1), &tape);
  const Field d = mean.backward(tape, Field::Constant(1, 1, 3.0));
  CHECK(d(0, 0) == doctest::Approx(1.0));
  CHECK(d(2, 0) == doctest::Approx(1.0));
}

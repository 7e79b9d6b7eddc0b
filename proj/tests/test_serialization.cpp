#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "gmlsnet/error.hpp"
#include "gmlsnet/serialization.hpp"
#include "support.hpp"

using namespace gmls;
using namespace gmls::test;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "gmlsnet_test_serialization";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// GMLS(mlp) -> pool -> GMLS(linear) -> relu -> readout -> head
Network full_network() {
  auto fine = share(random_cloud(2, 120, 1.0, 4, true));
  auto coarse = share(fine->subsample(30, 5));
  auto e1 = make_encoder(fine, fine, 0.2, 2);
  FunctionalMap m1 = FunctionalMap::mlp(e1->q(), {5}, 3);
  m1.initialize(6);
  auto e2 = make_encoder(coarse, coarse, 0.4, 1);
  FunctionalMap m2 = FunctionalMap::linear(2, 3 * e2->q());
  m2.initialize(7);
  Network net;
  net.add(GMLSLayer(e1, 1, m1));
  net.add(PoolingLayer(Reducer::max, fine, coarse, 0.15));
  net.add(GMLSLayer(e2, 3, m2));
  net.add_activation(Activation::relu);
  net.add_mean_readout();
  net.add_affine_head(1, 8);
  return net;
}

}  // namespace

TEST_CASE("doubles survive text round trips exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int k = 0; k < 1000; ++k) {
    const double v = u(rng) * std::pow(10.0, k % 40 - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("checkpoint round trip reproduces the forward pass bit for bit") {
  Network net = full_network();
  const auto& cloud = std::get<GMLSLayer>(net.stages().front()).source();
  std::mt19937_64 rng(9);
  const Field u = random_matrix(static_cast<Eigen::Index>(cloud.size()), 1, rng);
  Json meta;
  meta["tag"] = "roundtrip";
  const auto path = scratch("checkpoint.json");
  save_checkpoint(path, net, meta);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.metadata["tag"] == "roundtrip");
  REQUIRE(ck.network.stages().size() == net.stages().size());
  const Field a = network_forward(net, u), b = network_forward(ck.network, u);
  CHECK(a == b);
  // the pooled cloud is shared by two stages and must stay shared
  const auto& pool = std::get<PoolingLayer>(ck.network.stages()[1]);
  const auto& second = std::get<GMLSLayer>(ck.network.stages()[2]);
  CHECK(&pool.target() == &second.source());
  // saving the loaded network again yields the same bytes
  const auto path2 = scratch("checkpoint2.json");
  save_checkpoint(path2, ck.network, ck.metadata);
  CHECK(file_hash(path) == file_hash(path2));
}

TEST_CASE("checkpoint version mismatch is rejected") {
  const auto path = scratch("bad_version.json");
  Json j = read_json(scratch("checkpoint.json"));
  j["version"] = kCheckpointVersion + 1;
  write_json(path, j);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("stencil and matrix json round trips") {
  auto c = share(uniform_grid(1, 20, 1.0, true));
  auto enc = make_encoder(c, c, 0.16, 2);
  Eigen::VectorXd xi(3);
  xi << 0.0, 0.0, 1.0;
  const StencilMatrix s = enc->stencil(xi);
  const StencilMatrix r = stencil_from_json(to_json(s));
  CHECK(r.rows == s.rows);
  CHECK(r.col_idx == s.col_idx);
  CHECK(r.values == s.values);
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd m = random_matrix(3, 4, rng);
  CHECK(matrix_from_json(to_json(m)) == m);
  const PointCloud back = cloud_from_json(to_json(*c));
  CHECK(back.size() == c->size());
  CHECK(back.periodic() == c->periodic());
}

TEST_CASE("csv writer and reader agree") {
  const auto path = scratch("table.csv");
  write_csv(path, {"a", "b"}, {{1.0, 0.1}, {-2.5, 1e-300}});
  const CsvTable t = read_csv(path);
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == 0.1);
  CHECK(t.rows[1][1] == 1e-300);
}

TEST_CASE("file hash is FNV-1a") {
  const auto path = scratch("hash.txt");
  { std::ofstream(path) << "a"; }
  // FNV-1a 64 of "a"
  CHECK(file_hash(path) == "af63dc4c8601ec8c");
}

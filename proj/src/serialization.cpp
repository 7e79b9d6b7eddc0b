#include "gmlsnet/serialization.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gmlsnet/error.hpp"

namespace gmls {

namespace {

std::string reducer_name(Reducer r) { return r == Reducer::max ? "max" : "mean"; }

Reducer reducer_from_name(const std::string& s) {
  if (s == "max") return Reducer::max;
  if (s == "mean") return Reducer::mean;
  throw Error("unknown reducer '" + s + "'");
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

const Json& member(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(std::string("checkpoint is missing '") + key + "'");
  return *it;
}

// Clouds referenced by several stages are written once.
class CloudTable {
 public:
  std::size_t index(const std::shared_ptr<const PointCloud>& c) {
    auto it = ids_.find(c.get());
    if (it != ids_.end()) return it->second;
    ids_.emplace(c.get(), json_.size());
    json_.push_back(to_json(*c));
    return json_.size() - 1;
  }
  Json take() { return std::move(json_); }

 private:
  std::map<const PointCloud*, std::size_t> ids_;
  Json json_ = Json::array();
};

}  // namespace

Json to_json(const PointCloud& cloud) {
  Json j;
  j["dim"] = cloud.dim();
  if (cloud.periodic()) {
    Json p = Json::array();
    for (int a = 0; a < cloud.dim(); ++a) p.push_back((*cloud.period())[a]);
    j["period"] = p;
  } else {
    j["period"] = nullptr;
  }
  j["coords"] = cloud.coords();
  return j;
}

PointCloud cloud_from_json(const Json& j) {
  const int dim = member(j, "dim").get<int>();
  std::optional<Coord> period;
  const Json& p = member(j, "period");
  if (!p.is_null()) {
    Coord c{0.0, 0.0};
    for (int a = 0; a < dim; ++a) c[a] = p.at(a).get<double>();
    period = c;
  }
  return PointCloud(dim, member(j, "coords").get<std::vector<double>>(), period);
}

Json to_json(const Eigen::MatrixXd& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> v(m.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), m.rows(), m.cols()) = m;
  j["data"] = std::move(v);
  return j;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = member(j, "rows").get<Eigen::Index>();
  const auto cols = member(j, "cols").get<Eigen::Index>();
  const auto v = member(j, "data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw Error("matrix data has the wrong length");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), rows, cols);
}

Json to_json(const CoefficientField& f) {
  Json j;
  j["targets"] = f.targets;
  j["channels"] = f.channels;
  j["q"] = f.q;
  j["dim"] = f.dim;
  j["order"] = f.order;
  j["provenance"] = f.provenance;
  j["data"] = f.data;
  return j;
}

CoefficientField coefficient_field_from_json(const Json& j) {
  CoefficientField f;
  f.targets = member(j, "targets").get<std::size_t>();
  f.channels = member(j, "channels").get<std::size_t>();
  f.q = member(j, "q").get<std::size_t>();
  f.dim = member(j, "dim").get<int>();
  f.order = member(j, "order").get<int>();
  f.provenance = member(j, "provenance").get<std::uint64_t>();
  f.data = member(j, "data").get<std::vector<double>>();
  if (f.data.size() != f.targets * f.channels * f.q) throw Error("coefficient data has the wrong length");
  return f;
}

Json to_json(const StencilMatrix& s) {
  Json j;
  j["rows"] = s.rows;
  j["cols"] = s.cols;
  j["row_ptr"] = s.row_ptr;
  j["col_idx"] = s.col_idx;
  j["values"] = s.values;
  return j;
}

StencilMatrix stencil_from_json(const Json& j) {
  StencilMatrix s;
  s.rows = member(j, "rows").get<std::size_t>();
  s.cols = member(j, "cols").get<std::size_t>();
  s.row_ptr = member(j, "row_ptr").get<std::vector<std::size_t>>();
  s.col_idx = member(j, "col_idx").get<std::vector<std::uint32_t>>();
  s.values = member(j, "values").get<std::vector<double>>();
  if (s.row_ptr.size() != s.rows + 1 || s.col_idx.size() != s.values.size() || s.row_ptr.back() != s.values.size())
    throw Error("inconsistent stencil arrays");
  return s;
}

Json network_to_json(const Network& net) {
  CloudTable clouds;
  Json stages = Json::array();
  for (const Stage& stage : net.stages()) {
    Json s;
    s["kind"] = stage_kind(stage);
    if (const auto* layer = std::get_if<GMLSLayer>(&stage)) {
      Json encs = Json::array();
      for (const auto& e : layer->encoders()) {
        Json je;
        je["source"] = clouds.index(e->source_ptr());
        je["target"] = clouds.index(e->target_ptr());
        je["epsilon"] = e->kernel().epsilon;
        je["power"] = e->kernel().power;
        je["order"] = e->basis().order();
        je["scale"] = e->basis().scale();
        je["ridge_scale"] = e->options().ridge_scale;
        je["qr_rcond"] = e->options().qr_rcond;
        je["svd_cutoff"] = e->options().svd_cutoff;
        encs.push_back(je);
      }
      s["encoders"] = encs;
      s["binding"] = layer->binding();
      const FunctionalMap& map = layer->map();
      Json jm;
      jm["kind"] = map.is_linear() ? "linear" : "mlp";
      jm["in_width"] = map.in_width();
      jm["out_channels"] = map.out_channels();
      jm["hidden"] = map.hidden();
      jm["activation"] = to_string(map.activation());
      Json params = Json::object();
      for (const Parameter& p : map.parameters()) params[p.name] = to_json(p.value);
      jm["parameters"] = params;
      s["map"] = jm;
    } else if (const auto* pool = std::get_if<PoolingLayer>(&stage)) {
      s["reducer"] = reducer_name(pool->reducer());
      s["source"] = clouds.index(pool->source_ptr());
      s["target"] = clouds.index(pool->target_ptr());
      s["epsilon"] = pool->epsilon();
    } else if (const auto* act = std::get_if<ActivationStage>(&stage)) {
      s["activation"] = to_string(act->activation);
    } else if (const auto* head = std::get_if<AffineHead>(&stage)) {
      s["weight"] = to_json(head->weight.value);
      s["bias"] = to_json(head->bias.value);
    }
    stages.push_back(s);
  }
  Json j;
  j["clouds"] = clouds.take();
  j["stages"] = stages;
  return j;
}

Network network_from_json(const Json& j) {
  std::vector<std::shared_ptr<const PointCloud>> clouds;
  for (const Json& c : member(j, "clouds")) clouds.push_back(std::make_shared<const PointCloud>(cloud_from_json(c)));
  auto cloud = [&](const Json& idx) {
    const auto k = idx.get<std::size_t>();
    if (k >= clouds.size()) throw Error("checkpoint refers to a missing cloud");
    return clouds[k];
  };
  Network net;
  for (const Json& s : member(j, "stages")) {
    const std::string kind = member(s, "kind").get<std::string>();
    if (kind == "gmls") {
      std::vector<std::shared_ptr<const CoefficientEncoder>> encs;
      for (const Json& je : member(s, "encoders")) {
        const double eps = member(je, "epsilon").get<double>();
        SolverOptions opt;
        opt.ridge_scale = member(je, "ridge_scale").get<double>();
        opt.qr_rcond = member(je, "qr_rcond").get<double>();
        opt.svd_cutoff = member(je, "svd_cutoff").get<double>();
        auto src = cloud(member(je, "source"));
        encs.push_back(std::make_shared<const CoefficientEncoder>(
            src, cloud(member(je, "target")), WeightKernel{eps, member(je, "power").get<int>()},
            MonomialBasis(src->dim(), member(je, "order").get<int>(), member(je, "scale").get<double>()), opt));
      }
      const Json& jm = member(s, "map");
      FunctionalMap map;
      const auto in_width = member(jm, "in_width").get<std::size_t>();
      const auto out = member(jm, "out_channels").get<std::size_t>();
      if (member(jm, "kind").get<std::string>() == "linear") {
        map = FunctionalMap::linear(out, in_width);
      } else {
        map = FunctionalMap::mlp(in_width, member(jm, "hidden").get<std::vector<std::size_t>>(), out,
                                 activation_from_string(member(jm, "activation").get<std::string>()));
      }
      const Json& params = member(jm, "parameters");
      for (Parameter& p : map.parameters()) {
        Eigen::MatrixXd v = matrix_from_json(member(params, p.name.c_str()));
        if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) throw Error("parameter '" + p.name + "' has the wrong shape");
        p.value = std::move(v);
      }
      net.add(GMLSLayer(std::move(encs), member(s, "binding").get<std::vector<std::size_t>>(), std::move(map)));
    } else if (kind == "pool") {
      net.add(PoolingLayer(reducer_from_name(member(s, "reducer").get<std::string>()), cloud(member(s, "source")),
                           cloud(member(s, "target")), member(s, "epsilon").get<double>()));
    } else if (kind == "activation") {
      net.add_activation(activation_from_string(member(s, "activation").get<std::string>()));
    } else if (kind == "mean_readout") {
      net.add_mean_readout();
    } else if (kind == "affine_head") {
      const Eigen::MatrixXd b = matrix_from_json(member(s, "bias"));
      net.add_affine_head(matrix_from_json(member(s, "weight")), b.col(0));
    } else {
      throw Error("unknown stage kind '" + kind + "'");
    }
  }
  return net;
}

void save_checkpoint(const std::filesystem::path& path, const Network& net, const Json& metadata) {
  Json j;
  j["version"] = kCheckpointVersion;
  j["network"] = network_to_json(net);
  j["metadata"] = metadata;
  write_json(path, j);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Json j = read_json(path);
  const int version = member(j, "version").get<int>();
  if (version != kCheckpointVersion)
    throw Error("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                std::to_string(kCheckpointVersion) + ")");
  Checkpoint c{network_from_json(member(j, "network")), j.value("metadata", Json::object())};
  return c;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_json(const std::filesystem::path& path, const Json& j) { open_out(path) << dump(j); }

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out = open_out(path);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw Error("csv row width does not match the header");
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
    out << '\n';
  }
}

void write_field_csv(const std::filesystem::path& path, const PointCloud& cloud, const Field& field,
                     const std::vector<std::string>& channel_names) {
  if (static_cast<std::size_t>(field.rows()) != cloud.size()) throw Error("field rows do not match the cloud");
  std::vector<std::string> header{"x"};
  if (cloud.dim() == 2) header.push_back("y");
  for (Eigen::Index c = 0; c < field.cols(); ++c)
    header.push_back(static_cast<std::size_t>(c) < channel_names.size() ? channel_names[c] : "u" + std::to_string(c));
  std::vector<std::vector<double>> rows(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < cloud.dim(); ++a) rows[i].push_back(cloud.coord(i, a));
    for (Eigen::Index c = 0; c < field.cols(); ++c) rows[i].push_back(field(i, c));
  }
  write_csv(path, header, rows);
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<double>& times,
                          const std::vector<Eigen::VectorXd>& states) {
  if (times.size() != states.size()) throw Error("trajectory times and states differ in length");
  std::vector<std::string> header{"t"};
  const Eigen::Index n = states.empty() ? 0 : states.front().size();
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("u" + std::to_string(i));
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < states.size(); ++k) {
    std::vector<double> row{times[k]};
    row.insert(row.end(), states[k].data(), states[k].data() + states[k].size());
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

void write_stencil_csv(const std::filesystem::path& path, const StencilMatrix& s) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k)
      rows.push_back({static_cast<double>(i), static_cast<double>(s.col_idx[k]), s.values[k]});
  write_csv(path, {"row", "col", "value"}, rows);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path.string() + "' is empty");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) {
      double v = 0.0;
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (r.ec != std::errc{} || r.ptr != cell.data() + cell.size())
        throw Error("'" + path.string() + "' line " + std::to_string(lineno) + ": not a number: '" + cell + "'");
      row.push_back(v);
    }
    if (row.size() != t.header.size())
      throw Error("'" + path.string() + "' line " + std::to_string(lineno) + ": wrong column count");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace gmls

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gmlsnet/network.hpp"

namespace gmls {

using Json = nlohmann::ordered_json;

inline constexpr int kCheckpointVersion = 1;

Json to_json(const PointCloud& cloud);
PointCloud cloud_from_json(const Json& j);

Json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json to_json(const CoefficientField& field);
CoefficientField coefficient_field_from_json(const Json& j);

Json to_json(const StencilMatrix& stencil);
StencilMatrix stencil_from_json(const Json& j);

/// Architecture, geometry and parameters. Clouds are stored once and referenced by index.
Json network_to_json(const Network& net);
/// Rebuilds encoders from the stored geometry; parameters are restored bitwise.
Network network_from_json(const Json& j);

/// {"version", "network", "metadata"}.
void save_checkpoint(const std::filesystem::path& path, const Network& net, const Json& metadata = Json::object());
struct Checkpoint {
  Network network;
  Json metadata;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized text is a function of content only (ordered keys, shortest round-trip doubles).
std::string dump(const Json& j);
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

/// Doubles printed with 17 significant digits.
std::string format_double(double v);

/// Header row then one comma-separated row per entry.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
/// Columns x[, y], then one column per field channel.
void write_field_csv(const std::filesystem::path& path, const PointCloud& cloud, const Field& field,
                     const std::vector<std::string>& channel_names = {});
/// Rows: time, then the state entries.
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<double>& times,
                          const std::vector<Eigen::VectorXd>& states);
/// row, col, value triplets.
void write_stencil_csv(const std::filesystem::path& path, const StencilMatrix& stencil);

/// Numeric CSV with one header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace gmls

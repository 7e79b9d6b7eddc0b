#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gmlsnet/config.hpp"
#include "gmlsnet/datagen.hpp"
#include "gmlsnet/serialization.hpp"
#include "gmlsnet/training.hpp"

namespace gmls {

/// One acceptance threshold. `upper` means value <= threshold passes.
struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool upper = true;
  bool passed = false;
};

struct ExperimentResult {
  Json metrics;
  std::vector<Check> checks;
  bool passed = false;
};

/// Runs the configured experiment and writes metrics.json, CSV tables and
/// checkpoint.json under cfg.output_dir. Metrics depend only on (config, seed).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes the experiment's input data under cfg.output_dir: CSV files plus a
/// manifest.json with the generating parameters, seeds and file hashes.
void generate_data(const ExperimentConfig& cfg);

/// Re-evaluates a regress-operator or qoi checkpoint on the test split of a
/// gen-data bundle, or on the split regenerated from the checkpoint metadata
/// when `data_dir` is empty. Returns the metrics object.
Json evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir = {});

/// Regression datasets, exposed for tests and the evaluation path.
struct RegressGeometry {
  std::shared_ptr<const PointCloud> cloud;
  double spacing = 0.0;
};
RegressGeometry regress_geometry(const RegressConfig& cfg, std::uint64_t seed);
Dataset regress_dataset(const RegressConfig& cfg, const PointCloud& cloud, std::uint64_t seed,
                        std::size_t first_index, std::size_t count);

/// Scalar label: the integral of u^2 over the periodic box, exact by Parseval.
double field_energy(const SpectralField& field);

}  // namespace gmls

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gmlsnet/functional_map.hpp"
#include "gmlsnet/training.hpp"

namespace gmls {

enum class ExperimentKind { regress_operator, advdiff, brownian, qoi };
std::string to_string(ExperimentKind k);
ExperimentKind experiment_from_string(const std::string& tag);

/// One operator/dimension combination of the regression experiment.
struct RegressCase {
  std::size_t nodes_per_axis = 100;
  bool random_layout = false;  // false: cell-centered grid
  double epsilon_spacings = 3.5;
  int kernel_power = 4;
  int order = 4;
  bool mlp = false;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::relu;
  TrainConfig train;
  double max_test_relative_l2 = 1e-3;
};

struct RegressConfig {
  std::string op = "laplacian";  // laplacian | burgers
  int dim = 1;
  std::size_t train_samples = 5000;
  std::size_t test_samples = 1000;
  int max_wavenumber = 8;
  double alpha1 = 0.1;
  double burgers_viscosity = 0.01;
  std::map<std::string, RegressCase> cases;  // keyed "<op>-<dim>d"

  static std::string case_key(const std::string& op, int dim) { return op + "-" + std::to_string(dim) + "d"; }
  const RegressCase& active() const;
};

struct DiscretizationSection {
  double epsilon_cells = 3.5;
  int order = -1;
  int kernel_power = 4;
};

struct AdvDiffExperimentConfig {
  double advection = 1.0;
  double diffusion = 1.0;
  double x0 = 5.0;
  double length = 30.0;
  std::size_t cells = 100;
  double train_time = 1.0;
  double horizon_cfl_steps = 100.0;  // rollout horizon in units of dt_cfl
  std::vector<double> dt_ratios{0.1, 1.0, 10.0};
  DiscretizationSection fdm{3.1, 3, 4};
  DiscretizationSection fvm{4.5, 4, 4};
  TrainConfig train;
  double linearity_factor = 3.0;
  double min_trained_gain = 5.0;
  double gain_ratio = 10.0;
  double max_trained_spread = 4.0;
};

struct BrownianExperimentConfig {
  std::size_t particles = 100000;
  double diffusivity = 1.0;
  double lx = 1.0;
  double ly = 0.1;
  double dt = 1e-4;
  std::size_t cells = 50;
  double filter_sigma_cells = 2.0;
  std::size_t window_start = 10;
  std::size_t window_end = 12;
  DiscretizationSection fvm{3.5, 4, 4};
  std::size_t rollout_steps = 100;
  bool filtered_initial = false;
  TrainConfig train;
  double max_final_relative_l2 = 0.1;
};

struct QoiExperimentConfig {
  int dim = 2;
  std::size_t points = 400;
  bool jittered = false;  // true: one uniform point per grid cell; needs a square count in 2D
  std::size_t pooled_points = 100;
  bool pooled_grid = true;  // false: random subsample of the input cloud
  int max_wavenumber = 4;
  double alpha1 = 0.1;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 500;
  double encoder_epsilon = 0.15;
  int encoder_order = 2;
  std::vector<std::size_t> hidden{16};
  std::size_t channels = 8;
  double pool_epsilon = 0.1;
  double second_epsilon = 0.3;
  int second_order = 1;
  std::size_t second_channels = 8;
  TrainConfig train;
  double max_test_relative_rmse = 0.05;
};

using ExperimentParams =
    std::variant<RegressConfig, AdvDiffExperimentConfig, BrownianExperimentConfig, QoiExperimentConfig>;

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::regress_operator;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::filesystem::path source;  // file the config was read from
  ExperimentParams params;

  template <class T>
  const T& as() const { return std::get<T>(params); }
  template <class T>
  T& as() { return std::get<T>(params); }
};

/// Schema-checked parse. Throws ConfigError naming the offending line.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& source = "<string>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Command-line overrides applied after parsing.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::string> op;
  std::optional<int> dim;
  std::optional<double> dt_ratio;
};
void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o);

}  // namespace gmls

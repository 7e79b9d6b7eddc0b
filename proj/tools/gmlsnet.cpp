#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "gmlsnet/error.hpp"
#include "gmlsnet/experiments.hpp"
#include "gmlsnet/parallel.hpp"

namespace {

// 0: thresholds met, 1: thresholds missed, 2: invalid configuration, 3: numerical failure
constexpr int kOk = 0;
constexpr int kThresholdMiss = 1;
constexpr int kBadConfig = 2;
constexpr int kNumerical = 3;

struct Common {
  std::string tag;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("experiment", c.tag, "experiment tag resolving to configs/<tag>.yaml");
  cmd->add_option("--config", c.config, "YAML config file");
  cmd->add_option("--seed", c.seed, "master seed override");
  cmd->add_option("--threads", c.threads, "worker thread cap (0 = hardware)");
  cmd->add_option("--out", c.out, "output directory");
}

std::filesystem::path resolve_config(const Common& c) {
  if (!c.config.empty()) return c.config;
  if (c.tag.empty()) throw gmls::ConfigError("give an experiment tag or --config");
  return std::filesystem::path(GMLSNET_CONFIG_DIR) / (c.tag + ".yaml");
}

gmls::ExperimentConfig load(const Common& c, gmls::ConfigOverrides o) {
  gmls::ExperimentConfig cfg = gmls::load_config(resolve_config(c));
  if (!c.tag.empty() && c.tag != gmls::to_string(cfg.kind) && !c.config.empty())
    throw gmls::ConfigError("config describes '" + gmls::to_string(cfg.kind) + "', not '" + c.tag + "'");
  o.seed = c.seed;
  if (!c.out.empty()) o.output_dir = c.out;
  gmls::apply_overrides(cfg, o);
  if (c.threads > 0) gmls::set_thread_count(c.threads);
  return cfg;
}

void print_checks(const gmls::ExperimentResult& r) {
  for (const auto& c : r.checks)
    std::printf("%s %s = %.6g (%s %.6g)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value, c.upper ? "<=" : ">=",
                c.threshold);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized moving least squares networks"};
  app.require_subcommand(1);

  Common run_opts, gen_opts;
  gmls::ConfigOverrides run_over;
  std::string op;
  int dim = 0;
  double dt_ratio = 0.0;
  auto* run = app.add_subcommand("run", "train and evaluate an experiment");
  add_common(run, run_opts);
  auto* op_opt = run->add_option("--op", op, "regression operator: laplacian | burgers");
  auto* dim_opt = run->add_option("--dim", dim, "regression dimension");
  auto* ratio_opt = run->add_option("--dt-ratio", dt_ratio, "advdiff: single dt / dt_cfl");

  auto* gen = app.add_subcommand("gen-data", "write the experiment's dataset bundle");
  add_common(gen, gen_opts);
  auto* gen_op = gen->add_option("--op", op, "regression operator");
  auto* gen_dim = gen->add_option("--dim", dim, "regression dimension");

  std::string checkpoint, data, eval_out;
  std::size_t eval_threads = 0;
  auto* eval = app.add_subcommand("eval", "re-evaluate a checkpoint on its test split");
  eval->add_option("--checkpoint", checkpoint, "checkpoint.json")->required();
  eval->add_option("--data", data, "gen-data bundle (default: regenerate from metadata)");
  eval->add_option("--out", eval_out, "directory for eval_metrics.json");
  eval->add_option("--threads", eval_threads, "worker thread cap");

  std::string st_checkpoint, st_out;
  std::size_t out_channel = 0, in_channel = 0;
  auto* exp = app.add_subcommand("export-stencil", "write the sparse stencil of a linear first layer");
  exp->add_option("--checkpoint", st_checkpoint, "checkpoint.json")->required();
  exp->add_option("--out", st_out, "output directory")->required();
  exp->add_option("--output-channel", out_channel);
  exp->add_option("--input-channel", in_channel);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kBadConfig;
  }

  try {
    if (*run) {
      if (*op_opt) run_over.op = op;
      if (*dim_opt) run_over.dim = dim;
      if (*ratio_opt) run_over.dt_ratio = dt_ratio;
      const gmls::ExperimentConfig cfg = load(run_opts, run_over);
      const gmls::ExperimentResult r = gmls::run_experiment(cfg);
      print_checks(r);
      std::printf("metrics written to %s\n", (cfg.output_dir / "metrics.json").string().c_str());
      return r.passed ? kOk : kThresholdMiss;
    }
    if (*gen) {
      gmls::ConfigOverrides o;
      if (*gen_op) o.op = op;
      if (*gen_dim) o.dim = dim;
      const gmls::ExperimentConfig cfg = load(gen_opts, o);
      gmls::generate_data(cfg);
      std::printf("dataset written to %s\n", cfg.output_dir.string().c_str());
      return kOk;
    }
    if (*eval) {
      if (eval_threads > 0) gmls::set_thread_count(eval_threads);
      const gmls::Json j = gmls::evaluate_checkpoint(checkpoint, data);
      if (!eval_out.empty()) {
        std::filesystem::create_directories(eval_out);
        gmls::write_json(std::filesystem::path(eval_out) / "eval_metrics.json", j);
      }
      std::cout << gmls::dump(j);
      return kOk;
    }
    if (*exp) {
      const gmls::Checkpoint ck = gmls::load_checkpoint(st_checkpoint);
      const auto* layer = std::get_if<gmls::GMLSLayer>(&ck.network.stages().front());
      if (!layer || !layer->map().is_linear()) throw gmls::Error("export-stencil needs a linear GMLS first layer");
      const gmls::StencilMatrix s = gmls::export_stencil(*layer, out_channel, in_channel);
      std::filesystem::create_directories(st_out);
      gmls::write_stencil_csv(std::filesystem::path(st_out) / "stencil.csv", s);
      const std::size_t mid = s.rows / 2;
      std::printf("row %zu:", mid);
      for (std::size_t k = s.row_ptr[mid]; k < s.row_ptr[mid + 1]; ++k) std::printf(" %u:%.10g", s.col_idx[k], s.values[k]);
      std::printf("\n");
      return kOk;
    }
  } catch (const gmls::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kBadConfig;
  } catch (const gmls::UnisolvencyError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const gmls::EmptyNeighborhoodError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const gmls::DivergenceError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  }
  return kOk;
}

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fftkf/config.hpp"
#include "fftkf/optimizer.hpp"
#include "fftkf/problems.hpp"

namespace fftkf::harness {

/// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;      // bad config / arguments / IO
inline constexpr int kExitVerifyFailed = 2;
inline constexpr int kExitInfeasible = 3;  // privacy target unreachable

struct ProblemSpec {
  std::string kind = "quadratic";  // quadratic | logistic | mlp

  // quadratic
  std::size_t dimension = 64;
  double mu = 0.1;
  double L = 1.0;
  double tau = 0.0;
  std::size_t n_samples = 256;
  std::uint64_t problem_seed = 7;

  // dataset problems
  std::string dataset = "auto";  // auto | mnist | synthetic
  std::size_t subset_n = 0;      // train truncation, 0 = all
  std::size_t test_subset_n = 0;
  std::size_t synthetic_train_n = 12000;
  std::size_t synthetic_test_n = 2000;
  std::uint64_t synthetic_seed = 7777;
};

struct ArmSpec {
  std::string name;
  optimizer::MethodConfig cfg;  // cfg.seed is filled per cell
  double epochs = 0.0;          // > 0: steps = round(epochs * N / B), resolved
                                // once the dataset size is known
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<ArmSpec> arms;
  std::vector<std::uint64_t> seeds;
  long long eval_interval = 0;
  std::string output_dir = "out";
  bool emit_plot_data = false;
  bool timing = false;
  // Copy the named arm's calibrated noise scales into every arm (matched-noise
  // comparison). Empty string: each arm resolves its own privacy budget.
  std::string matched_sigma_from;

  bool has_sweep = false;
  std::string sweep_template;
  std::vector<double> sweep_rho;
  std::vector<double> sweep_epsilon;
};

ExperimentConfig parse_experiment(const config::RawConfig& raw);
ExperimentConfig load_experiment(const std::string& path);

struct ProblemBundle {
  std::shared_ptr<problems::Problem> problem;
  std::string source;  // one-line provenance for logs
};

/// Instantiate the problem. Dataset problems read IDX files from data_dir
/// when present (or when dataset = mnist demands them); otherwise a seeded
/// synthetic dataset is materialized as IDX files under scratch_dir and
/// loaded back through the same parser as real data.
ProblemBundle make_problem(const ProblemSpec& spec, const std::string& data_dir,
                           const std::string& scratch_dir);

struct CliOptions {
  std::optional<std::uint64_t> seed_override;
  std::string output_dir;  // empty keeps the config value
  int parallelism = 1;
  std::size_t subset_n = 0;  // 0 keeps the config value
  std::string data_dir;      // dataset root (from FFTKF_DATA_DIR)
};

/// Runs every (arm x seed) cell, writes <arm>_seed<seed>.csv per cell plus
/// summary.csv (and plot_data.csv when configured) under the output
/// directory, and prints per-arm summaries.
int cli_train(const std::string& config_path, const CliOptions& opts,
              std::ostream& out, std::ostream& err);

/// Expands the [sweep] grid (template arm x rho x epsilon), runs each grid
/// cell over all seeds, and writes sweep.csv with one row per (rho, epsilon).
int cli_sweep(const std::string& config_path, const CliOptions& opts,
              std::ostream& out, std::ostream& err);

/// Self-contained invariant suite; prints one row per check. Returns
/// kExitVerifyFailed if any row fails. inject_mask_fault deliberately breaks
/// the Hermitian symmetry of one test mask so the realness check must trip
/// (hook for testing the failure path).
int cli_verify(bool inject_mask_fault, std::ostream& out, std::ostream& err);

/// Times apply_filter, one full training step, and the plain DP-SGD step at
/// each dimension (all powers of two), writes bench.csv, and checks the
/// filter cost scaling (ratio per doubling, FFT calls per step).
int cli_bench(std::vector<std::size_t> dims, const std::string& output_dir,
              std::ostream& out, std::ostream& err);

/// Shortest round-trip decimal form via std::to_chars; locale independent.
/// NaN prints as "nan", infinities as "inf"/"-inf".
std::string format_double(double v);

std::string metrics_header();
void append_metrics_rows(std::string& buf, const std::string& arm,
                         std::uint64_t seed, const optimizer::RunResult& res);

}  // namespace fftkf::harness

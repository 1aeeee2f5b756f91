#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fftkf/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"FFT-shaped differentially private optimization toolkit"};
  app.require_subcommand(1);

  fftkf::harness::CliOptions opts;
  if (const char* env = std::getenv("FFTKF_DATA_DIR")) opts.data_dir = env;

  std::string config_path;
  std::uint64_t seed_override = 0;
  bool have_seed_override = false;
  std::vector<std::size_t> dims;
  bool inject_mask_fault = false;
  std::string bench_output_dir;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment config file (ini)")
        ->required();
    cmd->add_option("--seed-override", seed_override,
                    "run only this seed instead of the configured list")
        ->each([&](const std::string&) { have_seed_override = true; });
    cmd->add_option("--output-dir", opts.output_dir,
                    "write outputs here instead of the configured directory");
    cmd->add_option("--parallelism", opts.parallelism,
                    "worker threads across (arm x seed) cells")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--subset-n", opts.subset_n,
                    "truncate the training dataset to this many examples");
  };

  CLI::App* train = app.add_subcommand(
      "train", "run every configured arm over every seed and write metrics");
  add_run_flags(train);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "run the [sweep] grid (rho x epsilon) over the template arm");
  add_run_flags(sweep);

  CLI::App* verify = app.add_subcommand(
      "verify", "run the built-in invariant checks and report pass/fail");
  verify->add_flag("--inject-mask-fault", inject_mask_fault,
                   "deliberately break mask symmetry (tests the failure path)");

  CLI::App* bench = app.add_subcommand(
      "bench", "time the spectral filter and full training steps");
  bench->add_option("--dims", dims,
                    "power-of-two dimensions (default 16384..131072)");
  bench->add_option("--output-dir", bench_output_dir,
                    "directory for bench.csv (default out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fftkf::harness::kExitConfig;
  }

  if (have_seed_override) opts.seed_override = seed_override;

  if (train->parsed()) {
    return fftkf::harness::cli_train(config_path, opts, std::cout, std::cerr);
  }
  if (sweep->parsed()) {
    return fftkf::harness::cli_sweep(config_path, opts, std::cout, std::cerr);
  }
  if (verify->parsed()) {
    return fftkf::harness::cli_verify(inject_mask_fault, std::cout, std::cerr);
  }
  if (bench->parsed()) {
    return fftkf::harness::cli_bench(dims, bench_output_dir, std::cout,
                                     std::cerr);
  }
  return fftkf::harness::kExitConfig;
}

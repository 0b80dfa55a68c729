#include "gctl/cli/commands.hpp"

#include <CLI11.hpp>

#include <map>

using namespace gctl;

int main(int argc, char** argv) {
  CLI::App app{"Galerkin log-transform optimal control: reference solves, reduced models, sampling and bounds"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  const std::map<std::string, int (*)(const cli::ExperimentConfig&, const cli::RunOptions&)> commands{
      {"reference", cli::cmd_reference}, {"solve", cli::cmd_solve}, {"sample", cli::cmd_sample},
      {"bounds", cli::cmd_bounds},       {"mca", cli::cmd_mca},     {"all", cli::cmd_all}};
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (YAML)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
    sub->add_option("--seed", seed, "RNG seed (overrides sampling.seed)");
    sub->add_option("--threads", threads, "worker threads for path ensembles")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kValidation;
  }
  try {
    auto cfg = cli::load_config(config_path);
    if (seed) cfg.sampling.seed = *seed;
    cli::RunOptions opt;
    opt.out_dir = out_dir;
    opt.threads = threads;
    for (const auto* sub : app.get_subcommands()) return commands.at(sub->get_name())(cfg, opt);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return cli::kValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return cli::kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rtslab/cli/config.hpp"
#include "rtslab/cli/pipeline.hpp"
#include "rtslab/errors.hpp"

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kConfig = 2, kMissing = 3, kCheckFailed = 4 };

struct Common {
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool check = false;
};

void add_common(CLI::App* cmd, Common& c, bool writes) {
  cmd->add_option("-c,--config", c.config_path, "experiment config (JSON)")->required();
  cmd->add_option("-o,--output-dir", c.output_dir, "override output_dir");
  cmd->add_option("--seed", c.seed, "base seed; sets train/poison/defend seeds to s, s+1, s+2");
  cmd->add_flag("--check", c.check, "exit 4 if the stage's acceptance checks fail");
  if (writes) cmd->add_flag("-f,--force", c.force, "overwrite existing outputs");
}

rtslab::cli::ExperimentConfig resolve(const Common& c) {
  auto config = rtslab::cli::load_config(c.config_path);
  if (!c.output_dir.empty()) config.output_dir = c.output_dir;
  if (c.seed) config.seeds = {*c.seed, *c.seed + 1, *c.seed + 2};
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trigger-sanitizing defenses for backdoored RL policies"};
  app.set_version_flag("--version", rtslab::cli::tool_version());
  app.require_subcommand(1);

  Common common;
  auto* train = app.add_subcommand("train", "train clean and poisoned victims");
  auto* defend = app.add_subcommand("defend", "collect rollouts, train and calibrate both defenders");
  auto* eval = app.add_subcommand("eval", "evaluate the condition x schedule matrix");
  auto* report = app.add_subcommand("report", "print the evaluation summary");
  for (auto* cmd : {train, defend, eval}) add_common(cmd, common, true);
  add_common(report, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto config = resolve(common);
    const rtslab::cli::RunOptions opt{common.force};
    rtslab::cli::StageResult result;
    if (train->parsed()) {
      result = rtslab::cli::cmd_train(config, opt, std::cerr);
    } else if (defend->parsed()) {
      result = rtslab::cli::cmd_defend(config, opt, std::cerr);
    } else if (eval->parsed()) {
      result = rtslab::cli::cmd_eval(config, opt, std::cerr);
    } else {
      result = rtslab::cli::cmd_report(config, std::cout);
    }
    for (const auto& p : result.outputs) std::cout << p.string() << "\n";
    if (common.check && !result.checks_passed) {
      std::cerr << "acceptance checks failed\n";
      return kCheckFailed;
    }
    return kOk;
  } catch (const rtslab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const rtslab::cli::OutputExistsError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const rtslab::MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kMissing;
  } catch (const rtslab::ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}

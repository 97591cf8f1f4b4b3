#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "skatelab/app.hpp"

using namespace skatelab;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::string> task;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "run config (YAML)");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--variant", o.variant, "ss | fs-cs | fs-js");
  cmd->add_option("--task", o.task, "forward | goal");
  cmd->add_option("-o,--out", o.out, "output directory");
}

RunConfig resolve(const CommonOptions& o) {
  ConfigOverrides ov;
  ov.seed = o.seed;
  ov.out = o.out;
  try {
    if (o.variant) ov.variant = parse_variant(*o.variant);
    if (o.task) ov.task = parse_task(*o.task);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return load_run_config(o.config, ov);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skatelab: quadruped skating simulation and PPO training"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string checkpoint, source, path;
  std::optional<int> trials;
  bool greedy = false;
  bool tune = false;

  auto* train = app.add_subcommand("train", "train a policy");
  add_common(train, common);
  std::optional<std::string> resume;
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over randomized trials");
  add_common(eval, common);
  eval->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--trials", trials, "number of trials");
  eval->add_flag("--greedy", greedy, "argmax actions instead of sampling");

  auto* baseline = app.add_subcommand("baseline", "run the open-loop gait");
  add_common(baseline, common);
  baseline->add_option("--trials", trials, "number of trials");
  baseline->add_flag("--tune", tune, "flat-ground sweep over Y, Phi and omega");

  auto* iktable = app.add_subcommand("iktable", "build, inspect or benchmark IK tables");
  iktable->require_subcommand(1);
  auto* ik_build = iktable->add_subcommand("build", "build one table per limb");
  add_common(ik_build, common);
  ik_build->add_option("dir", path, "output directory")->required();
  auto* ik_inspect = iktable->add_subcommand("inspect", "print a table header");
  ik_inspect->add_option("path", path, "table file or directory")->required();
  auto* ik_bench = iktable->add_subcommand("bench", "direct IK vs table lookup timing");
  add_common(ik_bench, common);

  auto* plotdata = app.add_subcommand("plotdata", "export plot-ready CSVs from run directories");
  plotdata->add_option("run_dir", path, "run directory or parent of several runs")->required();

  auto* transfer = app.add_subcommand("transfer", "initialize from another checkpoint and train");
  add_common(transfer, common);
  transfer->add_option("source", source, "source checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  CommandContext ctx{&std::cout, &std::cerr};
  try {
    if (train->parsed()) {
      std::optional<std::filesystem::path> r;
      if (resume) r = *resume;
      cmd_train(resolve(common), ctx, r);
    } else if (eval->parsed()) {
      const RunConfig c = resolve(common);
      cmd_eval(c, checkpoint, trials.value_or(c.eval.trials), greedy || c.eval.greedy, ctx);
    } else if (baseline->parsed()) {
      const RunConfig c = resolve(common);
      if (tune) {
        const SweepResult s = tune_baseline(c, {0.04, 0.06, 0.08, 0.1},
                                            {0.1, 0.15, 0.2, 0.25, 0.3}, {2, 3, 4, 5, 6});
        std::cout << s.reached << " of " << s.candidates << " candidates reached the goal\n";
        if (s.best_steps == 0) return 2;
        std::cout << "best: y_amplitude " << s.best.y_amplitude << ", yaw_amplitude "
                  << s.best.yaw_amplitude << ", omega " << s.best.omega << " (" << s.best_steps
                  << " steps)\n";
      } else {
        cmd_baseline(c, trials.value_or(c.eval.trials), ctx);
      }
    } else if (ik_build->parsed()) {
      cmd_iktable_build(resolve(common), path, ctx);
    } else if (ik_inspect->parsed()) {
      cmd_iktable_inspect(path, ctx);
    } else if (ik_bench->parsed()) {
      cmd_iktable_bench(resolve(common), ctx);
    } else if (plotdata->parsed()) {
      cmd_plotdata(path, ctx);
    } else if (transfer->parsed()) {
      cmd_transfer(resolve(common), source, ctx);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DimensionMismatch& e) {
    std::cerr << "dimension mismatch: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

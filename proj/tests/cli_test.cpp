#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "skatelab/app.hpp"
#include "support.hpp"

using namespace skatelab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "skatelab_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text, {}, "run.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunConfig tiny_run(Variant v, Task task, const fs::path& out, std::int64_t steps) {
  RunConfig c = default_run_config(v, task);
  c.seed = 3;
  c.rl.total_timesteps = steps;
  c.rl.horizon = 64;
  c.rl.num_envs = 2;
  c.rl.hidden = 16;
  c.output.directory = out.string();
  c.output.checkpoint_interval = 128;
  c.output.trace_steps = 30;
  c.env.max_steps = 40;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SKATELAB_BIN) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::ostringstream sink;
const CommandContext kQuiet{&sink, &sink};

}  // namespace

TEST(Config, UnknownKeyReportsPosition) {
  const std::string msg = config_error("seed: 1\nenv:\n  dt: 0.01\n  bogus: 3\n");
  EXPECT_NE(msg.find("run.yaml:4:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;
}

TEST(Config, BadValuesReportPosition) {
  EXPECT_NE(config_error("rl:\n  horizon: lots\n").find("run.yaml:2:"), std::string::npos);
  EXPECT_NE(config_error("env:\n  variant: hover\n").find("run.yaml:2:"), std::string::npos);
  EXPECT_NE(config_error("seed: [1\n").find("run.yaml:"), std::string::npos);
  EXPECT_FALSE(config_error("rl:\n  clip: 2.0\n").empty());
  EXPECT_FALSE(config_error("env:\n  nominal: [[0, 0, 0]]\n").empty());
  EXPECT_THROW(load_run_config("/nonexistent/run.yaml"), ConfigError);
}

TEST(Config, OverridesWinOverFile) {
  ConfigOverrides o;
  o.seed = 7;
  o.variant = Variant::kFSJS;
  const RunConfig c = parse_run_config("seed: 5\nenv:\n  variant: ss\n", o);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.env.variant, Variant::kFSJS);
  const RunConfig d = parse_run_config("seed: 5\n");
  EXPECT_EQ(d.seed, 5u);
}

TEST(Config, VariantAndTaskDefaults) {
  const RunConfig goal = default_run_config(Variant::kFSCS, Task::kGoal);
  EXPECT_EQ(goal.env.observation_size(), 50);
  EXPECT_NE(goal.kin.table_mode, IkMode::kDirect);
  const RunConfig js = default_run_config(Variant::kFSJS, Task::kForward);
  EXPECT_EQ(js.env.action_heads(), 16);
}

TEST(ConfigProperty, DumpParseRoundTrip) {
  skatelab::testing::Gen g(91);
  for (int n = 0; n < 200; ++n) {
    const Variant v = static_cast<Variant>(g.integer(0, 2));
    const Task t = static_cast<Task>(g.integer(0, 1));
    RunConfig c = default_run_config(v, t);
    c.seed = static_cast<std::uint64_t>(g.integer(0, 1 << 30));
    c.env.dt = g.real(0.005, 0.02);
    c.env.max_tilt = g.real(0.2, 0.6);
    c.sim.torso_mass = g.real(30, 90);
    c.rl.learning_rate = g.real(1e-5, 1e-3);
    c.rl.entropy_coef = g.real(0.0, 0.05);
    c.baseline.omega = g.real(1, 8);
    c.eval.trials = g.integer(1, 500);
    c.output.directory = "runs/r" + std::to_string(n);
    const std::string text = dump_run_config(c);
    const RunConfig back = parse_run_config(text);
    ASSERT_EQ(dump_run_config(back), text);
    ASSERT_EQ(back.env.dt, c.env.dt);
    ASSERT_EQ(back.rl.learning_rate, c.rl.learning_rate);
  }
}

TEST(Curve, CsvRoundTripKeepsNan) {
  const fs::path dir = fresh_dir("curve");
  std::vector<CurvePoint> curve = {{128, std::nan(""), std::nan(""), 0.5},
                                   {256, -1.0 / 3.0, 40.0, 1.25}};
  write_curve_csv(curve, dir / "curve.csv");
  const auto back = read_curve_csv(dir / "curve.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(std::isnan(back[0].ep_rew_mean));
  EXPECT_EQ(back[1].ep_rew_mean, -1.0 / 3.0);
  EXPECT_EQ(back[1].wall_clock_s, 1.25);
}

TEST(TrainCommand, ZeroTimestepsWritesInitialCheckpointOnly) {
  const fs::path dir = fresh_dir("zero");
  const RunConfig c = tiny_run(Variant::kSS, Task::kForward, dir, 0);
  const TrainResult r = cmd_train(c, kQuiet);
  EXPECT_EQ(r.steps, 0);
  const Checkpoint ck = load_checkpoint(dir / "checkpoint.bin");
  EXPECT_EQ(ck.timestep, 0);
  EXPECT_TRUE(read_curve_csv(dir / "curve.csv").empty());
  EXPECT_TRUE(fs::exists(dir / "config.yaml"));
}

TEST(TrainCommand, ArtifactsResumeAndPlotData) {
  const fs::path dir = fresh_dir("train");
  RunConfig c = tiny_run(Variant::kFSCS, Task::kForward, dir, 256);
  cmd_train(c, kQuiet);
  for (const char* f : {"config.yaml", "curve.csv", "timing.csv", "trace.csv", "checkpoint.bin",
                        "checkpoints/step_128.bin", "checkpoints/step_256.bin"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  // The written config reloads to the same run.
  EXPECT_EQ(dump_run_config(load_run_config(dir / "config.yaml")), dump_run_config(c));
  // 30 trace steps plus the reset row and the header.
  std::ifstream trace(dir / "trace.csv");
  int lines = 0;
  for (std::string line; std::getline(trace, line);) ++lines;
  EXPECT_EQ(lines, 32);

  // Resuming from the first checkpoint rewrites the tail of the curve.
  const auto before = read_curve_csv(dir / "curve.csv");
  c.rl.total_timesteps = 256;
  cmd_train(c, kQuiet, dir / "checkpoints/step_128.bin");
  const auto after = read_curve_csv(dir / "curve.csv");
  ASSERT_EQ(after.size(), before.size());
  for (std::size_t k = 0; k < after.size(); ++k) {
    EXPECT_EQ(after[k].timestep, before[k].timestep);
    EXPECT_EQ(std::isnan(after[k].ep_rew_mean), std::isnan(before[k].ep_rew_mean));
    if (!std::isnan(after[k].ep_rew_mean)) {
      EXPECT_EQ(after[k].ep_rew_mean, before[k].ep_rew_mean);
    }
  }

  const auto files = cmd_plotdata(dir, kQuiet);
  EXPECT_EQ(files.size(), 4u);
  for (const fs::path& f : files) EXPECT_TRUE(fs::exists(f)) << f;
}

TEST(PlotData, IncompleteRunListsMissingFiles) {
  const fs::path dir = fresh_dir("empty");
  try {
    cmd_plotdata(dir, kQuiet);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    for (const char* f : {"config.yaml", "curve.csv", "timing.csv", "trace.csv"}) {
      EXPECT_NE(msg.find(f), std::string::npos) << msg;
    }
  }
  EXPECT_THROW(cmd_plotdata(dir / "nowhere", kQuiet), std::runtime_error);
}

TEST(EvalCommand, ScatterRecountAndDeterminism) {
  const fs::path dir = fresh_dir("eval");
  RunConfig c = tiny_run(Variant::kSS, Task::kGoal, dir, 0);
  c.env.max_steps = 1000;
  cmd_train(c, kQuiet);
  const EvalReport a = cmd_eval(c, dir / "checkpoint.bin", 6, false, kQuiet);
  const std::string report = slurp(dir / "eval_report.yaml");
  EXPECT_EQ(a.trials, 6);
  EXPECT_EQ(count_scatter_successes(dir / "scatter.csv", c.env.success_radius, c.env.goal.x,
                                    c.env.goal.y),
            a.successes);
  const EvalReport b = cmd_eval(c, dir / "checkpoint.bin", 6, false, kQuiet);
  EXPECT_EQ(slurp(dir / "eval_report.yaml"), report);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t k = 0; k < a.results.size(); ++k) EXPECT_EQ(a.results[k].x, b.results[k].x);

  // A forward-task checkpoint has the wrong layout for the goal task.
  const fs::path fwd = fresh_dir("eval_fwd");
  cmd_train(tiny_run(Variant::kSS, Task::kForward, fwd, 0), kQuiet);
  EXPECT_THROW(cmd_eval(c, fwd / "checkpoint.bin", 1, false, kQuiet), DimensionMismatch);
}

TEST(Baseline, ReachesGoalOnFlatGround) {
  RunConfig c = default_run_config(Variant::kSS, Task::kGoal);
  c.eval.terrain.amplitude = {0.0, 0.0};
  c.env.perturbation = {};
  const EvalReport r = evaluate_baseline(c, 3);
  for (const TrialResult& t : r.results) {
    EXPECT_TRUE(t.success);
    EXPECT_EQ(t.reason, Termination::kGoalReached);
    EXPECT_LT(std::abs(t.y), 0.05);
  }
}

TEST(Baseline, SetpointsMirrorAcrossSides) {
  const BaselineConfig b;
  const EnvConfig env = goal_task_config(Variant::kSS);
  skatelab::testing::Gen g(92);
  for (int n = 0; n < 1000; ++n) {
    const double t = g.real(0, 20);
    const auto s = baseline_setpoints(b, env, t);
    for (int i = 0; i < kNumSkates; ++i) {
      ASSERT_LE(std::abs(s[i][1] - env.nominal[i][1]), b.y_amplitude + 1e-12);
      ASSERT_LE(std::abs(s[i][3] - env.nominal[i][3]), b.yaw_amplitude + 1e-12);
    }
    // Skates 0 and 3 are left/right partners in front, 1 and 2 at the rear.
    ASSERT_NEAR(s[0][1] - env.nominal[0][1], -(s[3][1] - env.nominal[3][1]), 1e-12);
    ASSERT_NEAR(s[1][3] - env.nominal[1][3], -(s[2][3] - env.nominal[2][3]), 1e-12);
  }
}

TEST(IkTableCommand, BuildInspectAndLoad) {
  const fs::path dir = fresh_dir("tables");
  RunConfig c = default_run_config(Variant::kFSCS, Task::kForward);
  cmd_iktable_build(c, dir, kQuiet);
  for (int i = 0; i < kNumSkates; ++i) {
    EXPECT_TRUE(fs::exists(dir / ("ik_table_" + std::to_string(i) + ".bin")));
  }
  std::ostringstream info;
  cmd_iktable_inspect(dir, {&info, &info});
  EXPECT_FALSE(info.str().empty());

  c.kin.table_mode = IkMode::kEager;
  c.kin.table_dir = dir.string();
  const IkTableSet loaded = load_or_build_tables(c);
  c.kin.table_dir.clear();
  const IkTableSet built = load_or_build_tables(c);
  for (int i = 0; i < kNumSkates; ++i) {
    ASSERT_TRUE(loaded[i] && built[i]);
    EXPECT_EQ(loaded[i]->size(), built[i]->size());
  }

  c.kin.table_dir = dir.string();
  c.kin.quantization.step[3] = 0.02;
  EXPECT_THROW(load_or_build_tables(c), ConfigError);
  EXPECT_THROW(cmd_iktable_inspect(dir / "missing.bin", kQuiet), std::runtime_error);
}

TEST(IkTableCommand, LookupBeatsDirectSolve) {
  const RunConfig c = default_run_config(Variant::kFSCS, Task::kForward);
  const IkBenchResult r = cmd_iktable_bench(c, kQuiet);
  EXPECT_GT(r.direct_ns, 0.0);
  EXPECT_LT(r.lookup_ns, r.direct_ns);
  EXPECT_NEAR(r.episode_direct_ms, r.direct_ns * 4000 * 1e-6, 1e-9);
}

TEST(TransferCommand, EvaluatesThenTrains) {
  const fs::path src = fresh_dir("transfer_src");
  cmd_train(tiny_run(Variant::kSS, Task::kForward, src, 128), kQuiet);
  const fs::path dst = fresh_dir("transfer_dst");
  RunConfig c = tiny_run(Variant::kFSCS, Task::kForward, dst, 128);
  c.eval.transfer_episodes = 3;
  const TrainResult r = cmd_transfer(c, src / "checkpoint.bin", kQuiet);
  EXPECT_EQ(r.checkpoint.timestep, 128);
  std::ifstream in(dst / "transfer_eval.csv");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 4);

  RunConfig js = tiny_run(Variant::kFSJS, Task::kForward, fresh_dir("transfer_js"), 128);
  EXPECT_THROW(cmd_transfer(js, src / "checkpoint.bin", kQuiet), DimensionMismatch);
}

TEST(Binary, ExitCodes) {
  const fs::path dir = fresh_dir("binary");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("train --variant hover -o " + (dir / "a").string()), 1);
  {
    std::ofstream bad(dir / "bad.yaml");
    bad << "rl:\n  horizn: 64\n";
  }
  EXPECT_EQ(run_cli("train -c " + (dir / "bad.yaml").string()), 1);
  EXPECT_EQ(run_cli("plotdata " + (dir / "nothing").string()), 2);
  cmd_train(tiny_run(Variant::kSS, Task::kForward, dir / "ss", 0), kQuiet);
  EXPECT_EQ(run_cli("eval " + (dir / "ss/checkpoint.bin").string() +
                    " --variant fs-js --task forward --trials 1 -o " + (dir / "e").string()),
            3);
}

TEST(Config, ShippedConfigsLoad) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(SKATELAB_CONFIG_DIR)) {
    if (entry.path().extension() != ".yaml") continue;
    EXPECT_NO_THROW(load_run_config(entry.path())) << entry.path();
    ++n;
  }
  EXPECT_GE(n, 3);
  const RunConfig goal = load_run_config(fs::path(SKATELAB_CONFIG_DIR) / "goal.yaml");
  EXPECT_EQ(goal.env.variant, Variant::kFSCS);
  EXPECT_EQ(goal.rl.total_timesteps, 3'000'000);
}

// Acceptance run: trains the forward-task variants and the goal-task policy,
// measures timing, transfer and goal success, then reruns the property
// suites. Prints one PASS/FAIL line per criterion and exits non-zero if any
// criterion fails.
//
// usage: acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "skatelab/app.hpp"

using namespace skatelab;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kForwardSteps = 300'000;
constexpr std::int64_t kGoalSteps = 3'000'000;
constexpr std::int64_t kTimingSteps = 100'000;
constexpr int kSeeds = 3;
constexpr Variant kVariants[] = {Variant::kSS, Variant::kFSCS, Variant::kFSJS};

std::ostringstream sink;
const CommandContext kQuiet{&sink, &sink};

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};
std::vector<Verdict> verdicts;

void report(const std::string& name, bool pass, const std::string& detail) {
  verdicts.push_back({name, pass, detail});
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig forward_run(Variant v, std::uint64_t seed, const fs::path& dir) {
  RunConfig c = default_run_config(v, Task::kForward);
  c.seed = seed;
  c.rl.seed = seed;
  c.rl.total_timesteps = kForwardSteps;
  c.rl.curve_window = 50;  // final curve point averages the last 50 episodes
  c.output.directory = dir.string();
  c.output.checkpoint_interval = 0;
  c.output.trace_steps = 1500;
  return c;
}

struct ForwardRun {
  double final_return = 0.0;
  double final_length = 0.0;
  double seconds = 0.0;
};

// Mean return over `episodes` stochastic episodes, with the same env and
// sampling streams the transfer command uses.
double mean_return(const RunConfig& config, const PolicyNet& net, int episodes) {
  const EnvFactory make_env = make_env_factory(config);
  const std::uint64_t stream = derive_seed(config.seed, 6000);
  double sum = 0.0;
  for (int k = 0; k < episodes; ++k) {
    Env env = make_env(0);
    env.seed(derive_seed(stream, k));
    std::mt19937_64 rng(derive_seed(stream ^ 0x5bd1e995ull, k));
    sum += run_episode(net, env, false, rng).total_reward;
  }
  return sum / episodes;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

int run_suite(const std::string& binary, const std::string& filter) {
  const std::string cmd = binary + " --gtest_brief=1 --gtest_filter='" + filter + "' > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_runs";
  fs::create_directories(work);
  std::cout << "acceptance runs under " << work << std::endl;

  // --- 1, 2: forward task, three variants x three seeds -------------------
  const auto t_forward = std::chrono::steady_clock::now();
  std::vector<std::vector<ForwardRun>> runs(3);
  for (int vi = 0; vi < 3; ++vi) {
    for (int s = 0; s < kSeeds; ++s) {
      const Variant v = kVariants[vi];
      const fs::path dir = work / ("forward-" + std::string(to_string(v)) + "-" + std::to_string(s));
      const TrainResult r = cmd_train(forward_run(v, s, dir), kQuiet);
      ForwardRun fr;
      fr.final_return = r.curve.back().ep_rew_mean;
      fr.final_length = r.curve.back().ep_len_mean;
      fr.seconds = r.seconds;
      runs[vi].push_back(fr);
      std::cout << "  forward " << to_string(v) << " seed " << s << ": return "
                << fmt(fr.final_return, 1) << ", length " << fmt(fr.final_length, 1) << ", "
                << fmt(fr.seconds, 1) << " s" << std::endl;
    }
  }
  const double forward_minutes = seconds_since(t_forward) / 60.0;
  auto mean_of = [&](int vi, double ForwardRun::*field) {
    double s = 0.0;
    for (const ForwardRun& r : runs[vi]) s += r.*field;
    return s / runs[vi].size();
  };
  const double ret_ss = mean_of(0, &ForwardRun::final_return);
  const double ret_cs = mean_of(1, &ForwardRun::final_return);
  const double ret_js = mean_of(2, &ForwardRun::final_return);
  report("1 cartesian-vs-joint sample efficiency",
         ret_cs >= 2.0 * ret_js && ret_ss >= ret_js,
         "mean final return SS " + fmt(ret_ss, 1) + ", FS-CS " + fmt(ret_cs, 1) + ", FS-JS " +
             fmt(ret_js, 1) + " (need FS-CS >= 2x FS-JS and SS >= FS-JS); " +
             fmt(forward_minutes, 1) + " min for 9 runs");

  const double len_js = mean_of(2, &ForwardRun::final_length);
  bool full_length = true;
  for (int vi = 0; vi < 2; ++vi) {
    for (const ForwardRun& r : runs[vi]) full_length = full_length && r.final_length == 1000.0;
  }
  report("2 early-termination gap", len_js < 1000.0 && full_length,
         "mean length over last 50 episodes SS " + fmt(mean_of(0, &ForwardRun::final_length), 1) +
             ", FS-CS " + fmt(mean_of(1, &ForwardRun::final_length), 1) + ", FS-JS " +
             fmt(len_js, 1));

  // --- 3: wall clock per 1e4 steps ----------------------------------------
  // Interleaved repeats, median per setup, identical seed and budget.
  struct Setup {
    const char* name;
    Variant variant;
    IkMode mode;
  };
  const Setup setups[] = {{"SS", Variant::kSS, IkMode::kDirect},
                          {"FS-CS table", Variant::kFSCS, IkMode::kEager},
                          {"FS-CS direct IK", Variant::kFSCS, IkMode::kDirect}};
  std::vector<std::vector<double>> timing(3);
  for (int rep = 0; rep < 3; ++rep) {
    for (int k = 0; k < 3; ++k) {
      RunConfig c = forward_run(setups[k].variant, 0, work / "timing");
      c.kin.table_mode = setups[k].mode;
      c.rl.total_timesteps = kTimingSteps;
      const TrainResult r = train(make_env_factory(c), c.rl);
      timing[k].push_back(r.seconds_per_10k);
    }
  }
  const double t_ss = median(timing[0]), t_table = median(timing[1]), t_direct = median(timing[2]);
  const double gap_table = t_table / t_ss - 1.0, gap_direct = t_direct / t_table - 1.0;
  report("3 wall-clock ordering", gap_table >= 0.05 && gap_direct >= 0.05,
         "s per 1e4 steps SS " + fmt(t_ss, 4) + ", FS-CS table " + fmt(t_table, 4) +
             ", FS-CS direct IK " + fmt(t_direct, 4) + "; gaps " + fmt(100 * gap_table, 1) +
             "% and " + fmt(100 * gap_direct, 1) + "% (need >= 5% each)");

  // --- 4: transfer warm start ----------------------------------------------
  double own = 0.0, transferred = 0.0, random_init = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    const Checkpoint src = load_checkpoint(work / ("forward-ss-" + std::to_string(s)) / "checkpoint.bin");
    const RunConfig ss = forward_run(Variant::kSS, s, work / "transfer");
    const RunConfig cs = forward_run(Variant::kFSCS, s, work / "transfer");
    const PolicyNet net = transfer_init(src, make_env_factory(cs)(0));
    const PolicyNet fresh = initial_checkpoint(make_env_factory(cs), cs.rl).net;
    const int n = cs.eval.transfer_episodes;
    own += mean_return(ss, src.net, n) / kSeeds;
    transferred += mean_return(cs, net, n) / kSeeds;
    random_init += mean_return(cs, fresh, n) / kSeeds;
  }
  report("4 transfer warm start",
         transferred >= 0.25 * own && transferred >= 5.0 * random_init,
         "first 10 episodes: transferred " + fmt(transferred, 1) + ", SS own " + fmt(own, 1) +
             " (ratio " + fmt(own != 0.0 ? transferred / own : 0.0, 2) + ", need >= 0.25), random init " +
             fmt(random_init, 2) + " (need transferred >= 5x)");

  // --- 5: goal task, policy vs hand-designed baseline ----------------------
  RunConfig goal = default_run_config(Variant::kFSCS, Task::kGoal);
  goal.rl.total_timesteps = kGoalSteps;
  goal.output.directory = (work / "goal-fs-cs").string();
  goal.output.checkpoint_interval = 500'000;
  const TrainResult trained = cmd_train(goal, kQuiet);
  const EvalReport policy = cmd_eval(goal, work / "goal-fs-cs" / "checkpoint.bin",
                                     goal.eval.trials, false, kQuiet);
  goal.output.directory = (work / "goal-baseline").string();
  const EvalReport baseline = cmd_baseline(goal, goal.eval.trials, kQuiet);
  const double ratio = baseline.successes > 0
                           ? static_cast<double>(policy.successes) / baseline.successes
                           : 0.0;
  report("5 goal-task superiority", policy.successes > baseline.successes,
         "policy " + std::to_string(policy.successes) + "/" + std::to_string(policy.trials) +
             ", baseline " + std::to_string(baseline.successes) + "/" +
             std::to_string(baseline.trials) + ", ratio " + fmt(ratio, 2) +
             (ratio >= 1.5 ? " (1.5x target met)" : " (1.5x target not met)") + "; trained " +
             std::to_string(trained.checkpoint.timestep) + " steps in " +
             fmt(trained.seconds, 0) + " s");

  // --- 6: property suites ---------------------------------------------------
  struct Suite {
    const char* name;
    const char* binary;
    const char* filter;
  };
  const Suite suites[] = {
      {"fk(ik) round trip", KIN_TEST, "IkProperty.FkOfIkRoundTripPerFamily"},
      {"ik table equals direct ik", KIN_TEST, "IkTable.ForwardWorkspaceGridExhaustive:IkTable.LazyMatchesEager"},
      {"network and ppo gradients", RL_TEST,
       "ForwardProperty.BackwardMatchesFiniteDifferences:PpoLossProperty.*"},
      {"gae brute force", RL_TEST, "GaeProperty.*"},
      {"shaping invariance", ENV_TEST, "ShapingInvariance.*"},
      {"shaped return telescoping", ENV_TEST, "RewardProperty.*"},
      {"mirror symmetry", DYNAMICS_TEST, "StepProperty.MirrorSymmetry"},
      {"train determinism", TRAIN_TEST, "Train.SameSeedIsBitIdentical:Train.ResumeMatchesUninterruptedRun"},
      {"eval determinism", CLI_TEST, "EvalCommand.ScatterRecountAndDeterminism"},
      {"joint rate limit", KIN_TEST, "ClampJointStepProperty.*"},
      {"joint rate limit in env", ENV_TEST, "EnvStepProperty.*"},
  };
  std::string failed;
  for (const Suite& s : suites) {
    if (run_suite(s.binary, s.filter) != 0) failed += std::string(failed.empty() ? "" : ", ") + s.name;
  }
  report("6 property suites", failed.empty(),
         failed.empty() ? std::to_string(std::size(suites)) + " suites pass" : "failing: " + failed);

  int failures = 0;
  for (const Verdict& v : verdicts) failures += !v.pass;
  std::cout << "\nsummary: " << verdicts.size() - failures << " of " << verdicts.size()
            << " criteria pass" << std::endl;
  for (const Verdict& v : verdicts) std::cout << (v.pass ? "PASS " : "FAIL ") << v.name << std::endl;
  return failures == 0 ? 0 : 1;
}

#include <cmath>

#include "skatelab/app.hpp"

namespace skatelab {
namespace {

bool right_side(int skate) { return skate == 0 || skate == 1; }
bool rear(int skate) { return skate == 1 || skate == 2; }

// Runs the open-loop gait until the episode ends.
TrialResult run_baseline_episode(const BaselineConfig& b, Env& env) {
  env.reset();
  TrialResult r;
  const EnvConfig& e = env.config();
  StepResult step;
  for (int n = 0; n < e.max_steps; ++n) {
    step = env.apply_setpoints(baseline_setpoints(b, e, (n + 1) * e.dt));
    r.total_reward += step.reward;
    if (step.done) break;
  }
  r.steps = env.steps();
  r.reason = step.reason;
  r.x = env.body().position.x;
  r.y = env.body().position.y;
  r.terrain = env.terrain();
  r.success = goal_distance_xy(env.body(), e.goal) < e.success_radius;
  return r;
}

}  // namespace

std::array<SkatePose, kNumSkates> baseline_setpoints(const BaselineConfig& b,
                                                     const EnvConfig& env, double t) {
  std::array<SkatePose, kNumSkates> target = env.nominal;
  for (int i = 0; i < kNumSkates; ++i) {
    const double side = right_side(i) ? -1.0 : 1.0;
    const double phase = b.omega * t + (rear(i) ? b.front_rear_phase : 0.0);
    target[i].y += side * b.y_amplitude * std::sin(phase);
    target[i].yaw += side * b.yaw_amplitude * std::cos(phase);
  }
  return target;
}

SweepResult tune_baseline(const RunConfig& config, const std::vector<double>& y_amplitudes,
                          const std::vector<double>& yaw_amplitudes,
                          const std::vector<double>& omegas) {
  EnvConfig e = goal_task_config(Variant::kFSCS);
  e.goal = config.env.goal;
  e.success_radius = config.env.success_radius;
  e.terrain = TerrainRanges{};
  e.perturbation = ResetPerturbation{};
  const KinSetup kin = kin_setup(config);
  SweepResult out;
  for (double y : y_amplitudes) {
    for (double yaw : yaw_amplitudes) {
      for (double w : omegas) {
        BaselineConfig b = config.baseline;
        b.y_amplitude = y;
        b.yaw_amplitude = yaw;
        b.omega = w;
        Env env(e, config.sim, kin, {}, config.seed);
        const TrialResult r = run_baseline_episode(b, env);
        ++out.candidates;
        if (!r.success) continue;
        ++out.reached;
        if (out.best_steps == 0 || r.steps < out.best_steps) {
          out.best_steps = r.steps;
          out.best = b;
        }
      }
    }
  }
  return out;
}

EvalReport evaluate_baseline(const RunConfig& config, int trials) {
  EnvConfig e = config.env;
  e.variant = Variant::kFSCS;
  e.terrain = config.eval.terrain;
  RunConfig cs = config;
  cs.env = e;
  const IkTableSet tables = load_or_build_tables(cs);
  const KinSetup kin = kin_setup(config);
  const std::uint64_t stream = derive_seed(config.seed, 3000);

  EvalReport report;
  report.source = "baseline";
  report.trials = trials;
  report.success_radius = e.success_radius;
  for (int k = 0; k < trials; ++k) {
    Env env(e, config.sim, kin, tables, derive_seed(stream, k));
    TrialResult r = run_baseline_episode(config.baseline, env);
    r.trial = k;
    report.successes += r.success;
    report.results.push_back(r);
  }
  return report;
}

}  // namespace skatelab

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skatelab/env.hpp"
#include "skatelab/ppo.hpp"
#include "skatelab/train.hpp"

namespace skatelab {

// Invalid configuration; the message carries file:line:column when known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KinConfig {
  std::array<LimbGeometry, kNumSkates> limbs = default_limbs();
  Quantization quantization;
  IkMode table_mode = IkMode::kDirect;
  IkFamily family = IkFamily::kElbowUp;
  // Directory of prebuilt table files (ik_table_<i>.bin); empty builds in memory.
  std::string table_dir;
};

struct OutputConfig {
  std::string directory = "runs/default";
  std::int64_t checkpoint_interval = 100'000;
  bool curve = true;
  bool trace = true;
  int trace_steps = 1500;
};

// Open-loop gait: y_i(t) = y0 + s_i Y sin(w t + psi_i) and
// yaw_i(t) = yaw0 + s_i Phi cos(w t + psi_i), with s_i = -1 on the right
// side, psi = 0 in front and front_rear_phase at the rear.
struct BaselineConfig {
  double y_amplitude = 0.1;
  double yaw_amplitude = 0.2;
  double omega = 5.0;
  double front_rear_phase = kPi / 2;

  void validate() const;
};

struct EvalConfig {
  int trials = 100;
  bool greedy = false;
  TerrainRanges terrain{{0.0, 0.2}, {0.5, 1.0}, {-1.0, 1.0}};
  int transfer_episodes = 10;
};

struct RunConfig {
  std::uint64_t seed = 0;
  EnvConfig env;
  SimParams sim;
  KinConfig kin;
  TrainConfig rl;
  OutputConfig output;
  BaselineConfig baseline;
  EvalConfig eval;

  // Throws ConfigError.
  void validate() const;
};

RunConfig default_run_config(Variant variant, Task task);

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<Variant> variant;
  std::optional<Task> task;
  std::optional<std::string> out;
};

// Defaults for the selected (variant, task), then the file, then overrides.
// An empty path means defaults only. Unknown keys and bad values raise
// ConfigError with their position in the file.
RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});
RunConfig parse_run_config(const std::string& text, const ConfigOverrides& overrides = {},
                           const std::string& source = "<config>");
// Every field, in the same schema load_run_config reads.
std::string dump_run_config(const RunConfig& config);

// Environment factory for training with this config: env i gets
// derive_seed(seed, i). Tables are built or loaded once and shared.
EnvFactory make_env_factory(const RunConfig& config);
KinSetup kin_setup(const RunConfig& config);
IkTableSet load_or_build_tables(const RunConfig& config);

// --- baseline -------------------------------------------------------------

std::array<SkatePose, kNumSkates> baseline_setpoints(const BaselineConfig& b,
                                                     const EnvConfig& env, double t);

struct SweepResult {
  BaselineConfig best;
  int best_steps = 0;  // steps to reach the goal; 0 when nothing reached it
  int candidates = 0;
  int reached = 0;
};

// Flat-ground sweep over amplitude, yaw amplitude and frequency; picks the
// candidate that reaches the goal in the fewest steps.
SweepResult tune_baseline(const RunConfig& config, const std::vector<double>& y_amplitudes,
                          const std::vector<double>& yaw_amplitudes,
                          const std::vector<double>& omegas);

// --- evaluation -----------------------------------------------------------

struct TrialResult {
  int trial = 0;
  double x = 0.0;
  double y = 0.0;
  int steps = 0;
  double total_reward = 0.0;
  Termination reason = Termination::kNone;
  bool success = false;
  Terrain terrain;
};

struct EvalReport {
  std::string source;  // "policy" or "baseline"
  int trials = 0;
  int successes = 0;
  double success_radius = 0.2;
  std::vector<TrialResult> results;
};

// Goal-task campaign: trial k uses a fresh terrain drawn from config.eval
// with stream derive_seed(seed, k).
EvalReport evaluate_policy(const RunConfig& config, const PolicyNet& net, int trials,
                           bool greedy);
EvalReport evaluate_baseline(const RunConfig& config, int trials);

void write_scatter_csv(const EvalReport& report, const std::filesystem::path& path);
void write_report(const EvalReport& report, const std::filesystem::path& path);
// Recount of successes from a scatter CSV.
int count_scatter_successes(const std::filesystem::path& path, double success_radius,
                            double goal_x, double goal_y);

// --- artifacts ------------------------------------------------------------

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);
std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path);

// Rolls the policy for `steps` steps (ignoring the episode limit) and writes
// one row per state, starting with the reset state.
void write_trace_csv(const RunConfig& config, const PolicyNet& net, int steps,
                     const std::filesystem::path& path);

// --- commands -------------------------------------------------------------

struct CommandContext {
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

TrainResult cmd_train(const RunConfig& config, const CommandContext& ctx,
                      const std::optional<std::filesystem::path>& resume = std::nullopt,
                      const PolicyNet* init = nullptr);
EvalReport cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
                    int trials, bool greedy, const CommandContext& ctx);
EvalReport cmd_baseline(const RunConfig& config, int trials, const CommandContext& ctx);

struct IkBenchResult {
  double direct_ns = 0.0;
  double lookup_ns = 0.0;
  double episode_direct_ms = 0.0;  // 4 calls x 1000 steps
  double episode_lookup_ms = 0.0;
};
void cmd_iktable_build(const RunConfig& config, const std::filesystem::path& dir,
                       const CommandContext& ctx);
void cmd_iktable_inspect(const std::filesystem::path& path, const CommandContext& ctx);
IkBenchResult cmd_iktable_bench(const RunConfig& config, const CommandContext& ctx);

// Returns the written files. Throws std::runtime_error listing every missing
// input when the run directory is incomplete.
std::vector<std::filesystem::path> cmd_plotdata(const std::filesystem::path& run_dir,
                                                const CommandContext& ctx);

// Evaluates the source weights on the target for eval.transfer_episodes
// episodes (transfer_eval.csv), then trains from them.
TrainResult cmd_transfer(const RunConfig& config, const std::filesystem::path& source,
                         const CommandContext& ctx);

}  // namespace skatelab

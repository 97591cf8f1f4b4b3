#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "skatelab/env.hpp"
#include "skatelab/nn.hpp"
#include "skatelab/ppo.hpp"

namespace skatelab {

// Raised when a network or checkpoint does not fit an environment's
// observation or action layout.
class DimensionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to continue a training run bit for bit.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  Variant variant = Variant::kSS;
  Task task = Task::kForward;
  int observation_size = 0;
  int action_heads = 0;
  std::uint64_t seed = 0;
  std::int64_t timestep = 0;
  std::int64_t updates = 0;

  PolicyNet net;
  AdamState adam;
  RunningMeanStd reward_rms{1};
  std::vector<double> reward_accum;  // per env discounted return for scaling

  std::string rng_state;
  std::vector<EnvState> envs;
  std::vector<double> episode_return;  // per env, unscaled
  std::vector<int> episode_length;
  std::vector<double> recent_returns;  // most recent episodes, oldest first
  std::vector<double> recent_lengths;
  std::int64_t episodes = 0;
  double wall_clock_s = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws std::runtime_error on a missing or malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws DimensionMismatch unless the checkpoint fits the environment.
void check_dimensions(const Checkpoint& ckpt, const Env& env);

struct CurvePoint {
  std::int64_t timestep = 0;
  double ep_rew_mean = 0.0;  // NaN before the first finished episode
  double ep_len_mean = 0.0;
  double wall_clock_s = 0.0;
};

struct TrainHooks {
  std::function<void(const CurvePoint&)> on_curve;
  // Called every checkpoint_interval timesteps (0: never) and at the end.
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::int64_t checkpoint_interval = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<CurvePoint> curve;
  double seconds = 0.0;
  std::int64_t steps = 0;  // timesteps collected by this call
  double seconds_per_10k = 0.0;
  std::int64_t rejected_batches = 0;
  bool aborted = false;
  std::string error;
};

// Environment i of a run. Must return an environment seeded deterministically
// from the run seed and i.
using EnvFactory = std::function<Env(int index)>;

struct TrainInit {
  const Checkpoint* resume = nullptr;  // continue a previous run
  const PolicyNet* net = nullptr;      // start from these weights
};

// Fresh network and freshly reset environments.
Checkpoint initial_checkpoint(const EnvFactory& make_env, const TrainConfig& config,
                              const PolicyNet* net = nullptr);

// Runs PPO until config.total_timesteps. On non-finite parameters training
// stops and the result holds the last good checkpoint with aborted set.
TrainResult train(const EnvFactory& make_env, const TrainConfig& config,
                  const TrainHooks& hooks = {}, TrainInit init = {});

// Copies the source weights and observation statistics for a new run on
// target. Throws DimensionMismatch when the layouts differ.
PolicyNet transfer_init(const Checkpoint& source, const Env& target);

struct EpisodeResult {
  double total_reward = 0.0;
  int length = 0;
  Termination reason = Termination::kNone;
  BodyState final_body;
};

// Resets env and rolls one episode with the policy.
EpisodeResult run_episode(const PolicyNet& net, Env& env, bool greedy, std::mt19937_64& rng,
                          const std::function<void(const Env&)>& on_step = {});

}  // namespace skatelab

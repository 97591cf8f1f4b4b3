#include "skatelab/train.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

namespace skatelab {
namespace {

constexpr double kRewardClip = 10.0;

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint: corrupt RNG state");
  return rng;
}

double mean_of(const std::deque<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

struct Rollout {
  Eigen::MatrixXd obs;      // normalized, obs x n
  Eigen::MatrixXd raw_obs;  // obs x n
  Eigen::MatrixXi actions;  // heads x n
  Eigen::VectorXd log_probs, values;
  // Per env, time ordered.
  std::vector<std::vector<double>> rewards, env_values;
  std::vector<std::vector<std::uint8_t>> dones;
};

}  // namespace

void check_dimensions(const Checkpoint& ckpt, const Env& env) {
  if (ckpt.observation_size != env.observation_size() ||
      ckpt.action_heads != env.action_heads() ||
      ckpt.net.observation_size() != env.observation_size() ||
      ckpt.net.action_heads() != env.action_heads()) {
    throw DimensionMismatch(
        "checkpoint expects " + std::to_string(ckpt.observation_size) + " observations and " +
        std::to_string(ckpt.action_heads) + " action heads; environment (" +
        std::string(to_string(env.config().variant)) + ") has " +
        std::to_string(env.observation_size()) + " and " + std::to_string(env.action_heads()));
  }
}

Checkpoint initial_checkpoint(const EnvFactory& make_env, const TrainConfig& config,
                              const PolicyNet* net) {
  config.validate();
  Checkpoint c;
  c.seed = config.seed;
  for (int i = 0; i < config.num_envs; ++i) {
    Env env = make_env(i);
    env.reset();
    if (i == 0) {
      c.variant = env.config().variant;
      c.task = env.config().task;
      c.observation_size = env.observation_size();
      c.action_heads = env.action_heads();
    }
    c.envs.push_back(env.state());
  }
  if (net) {
    c.net = *net;
  } else {
    c.net = make_policy_net(c.observation_size, c.action_heads, derive_seed(config.seed, 2000),
                            config.hidden, config.normalize_observations);
  }
  if (c.net.observation_size() != c.observation_size || c.net.action_heads() != c.action_heads) {
    throw DimensionMismatch("initial network does not fit the environment layout");
  }
  c.reward_accum.assign(config.num_envs, 0.0);
  c.episode_return.assign(config.num_envs, 0.0);
  c.episode_length.assign(config.num_envs, 0);
  c.rng_state = rng_to_string(std::mt19937_64(derive_seed(config.seed, 1000)));
  return c;
}

TrainResult train(const EnvFactory& make_env, const TrainConfig& config, const TrainHooks& hooks,
                  TrainInit init) {
  config.validate();
  TrainResult result;
  Checkpoint ck = init.resume ? *init.resume : initial_checkpoint(make_env, config, init.net);
  const int num_envs = config.num_envs;
  if (static_cast<int>(ck.envs.size()) != num_envs) {
    throw std::invalid_argument("train: checkpoint holds " + std::to_string(ck.envs.size()) +
                                " environments, config asks for " + std::to_string(num_envs));
  }

  std::vector<Env> envs;
  std::vector<Observation> obs(num_envs);
  for (int i = 0; i < num_envs; ++i) {
    envs.push_back(make_env(i));
    check_dimensions(ck, envs.back());
    envs.back().restore(ck.envs[i]);
    obs[i] = envs.back().observe();
  }
  std::mt19937_64 rng = rng_from_string(ck.rng_state);
  std::deque<double> recent_returns(ck.recent_returns.begin(), ck.recent_returns.end());
  std::deque<double> recent_lengths(ck.recent_lengths.begin(), ck.recent_lengths.end());

  const AdamConfig adam_config{0.9, 0.999, 1e-5, config.max_grad_norm};
  const int obs_size = ck.observation_size;
  const int heads = ck.action_heads;
  const int n = config.horizon * num_envs;
  const int minibatch = n / config.minibatches;

  const auto start = std::chrono::steady_clock::now();
  const double wall_offset = ck.wall_clock_s;
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  auto snapshot = [&] {
    ck.rng_state = rng_to_string(rng);
    for (int i = 0; i < num_envs; ++i) ck.envs[i] = envs[i].state();
    ck.recent_returns.assign(recent_returns.begin(), recent_returns.end());
    ck.recent_lengths.assign(recent_lengths.begin(), recent_lengths.end());
    ck.wall_clock_s = wall_offset + elapsed();
  };
  std::int64_t next_checkpoint =
      hooks.checkpoint_interval > 0 ? ck.timestep + hooks.checkpoint_interval : -1;

  Rollout ro;
  ro.obs.resize(obs_size, n);
  ro.raw_obs.resize(obs_size, n);
  ro.actions.resize(heads, n);
  ro.log_probs.resize(n);
  ro.values.resize(n);

  while (ck.timestep < config.total_timesteps) {
    snapshot();
    const Checkpoint last_good = ck;

    ro.rewards.assign(num_envs, {});
    ro.env_values.assign(num_envs, {});
    ro.dones.assign(num_envs, {});
    for (int t = 0; t < config.horizon; ++t) {
      for (int i = 0; i < num_envs; ++i) {
        const int col = t * num_envs + i;
        const Eigen::VectorXd x = ck.net.normalize(obs[i]);
        ro.raw_obs.col(col) = Eigen::Map<const Eigen::VectorXd>(obs[i].data(), obs_size);
        ro.obs.col(col) = x;
        const NetOutput out = forward_normalized(ck.net, x);
        const ActionSample s = sample(out.logits, rng);
        for (int h = 0; h < heads; ++h) ro.actions(h, col) = s.action[h];
        ro.log_probs[col] = s.log_prob;
        ro.values[col] = out.value;

        const StepResult step = envs[i].apply_action(s.action);
        ck.episode_return[i] += step.reward;
        ck.episode_length[i] += 1;
        double r = step.reward;
        if (config.normalize_rewards) {
          ck.reward_accum[i] = ck.reward_accum[i] * config.gamma + step.reward;
          ck.reward_rms.update(Eigen::MatrixXd::Constant(1, 1, ck.reward_accum[i]));
          r = std::clamp(step.reward / std::sqrt(ck.reward_rms.var[0] + 1e-8), -kRewardClip,
                         kRewardClip);
        }
        ro.rewards[i].push_back(r);
        ro.env_values[i].push_back(out.value);
        ro.dones[i].push_back(step.done ? 1 : 0);
        if (step.done) {
          recent_returns.push_back(ck.episode_return[i]);
          recent_lengths.push_back(ck.episode_length[i]);
          while (static_cast<int>(recent_returns.size()) > config.curve_window) {
            recent_returns.pop_front();
            recent_lengths.pop_front();
          }
          ++ck.episodes;
          ck.episode_return[i] = 0.0;
          ck.episode_length[i] = 0;
          ck.reward_accum[i] = 0.0;
          obs[i] = envs[i].reset();
        } else {
          obs[i] = step.observation;
        }
      }
    }
    ck.timestep += n;

    Eigen::VectorXd advantages(n), returns(n);
    for (int i = 0; i < num_envs; ++i) {
      const double last_value = forward(ck.net, obs[i]).value;
      const GaeResult g = gae(ro.rewards[i], ro.env_values[i], ro.dones[i], last_value,
                              config.gamma, config.lambda);
      for (int t = 0; t < config.horizon; ++t) {
        advantages[t * num_envs + i] = g.advantages[t];
        returns[t * num_envs + i] = g.returns[t];
      }
    }
    if (ck.net.normalize_observations) ck.net.obs_rms.update(ro.raw_obs);

    std::vector<int> order(n);
    PpoBatch batch;
    batch.observations.resize(obs_size, minibatch);
    batch.actions.resize(heads, minibatch);
    batch.old_log_probs.resize(minibatch);
    batch.advantages.resize(minibatch);
    batch.returns.resize(minibatch);
    Eigen::VectorXd grad;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (int mb = 0; mb < config.minibatches; ++mb) {
        for (int k = 0; k < minibatch; ++k) {
          const int j = order[mb * minibatch + k];
          batch.observations.col(k) = ro.obs.col(j);
          batch.actions.col(k) = ro.actions.col(j);
          batch.old_log_probs[k] = ro.log_probs[j];
          batch.advantages[k] = advantages[j];
          batch.returns[k] = returns[j];
        }
        const PpoLoss loss = ppo_loss(ck.net, batch, config, &grad);
        if (!loss.finite) {
          ++result.rejected_batches;
          continue;
        }
        assert(epoch > 0 || mb > 0 || loss.max_ratio_error < 1e-9);
        Eigen::VectorXd params = ck.net.flat_params();
        adam_step(params, grad, ck.adam, config.learning_rate, adam_config);
        ck.net.set_flat_params(params);
      }
    }
    ++ck.updates;

    if (!ck.net.flat_params().allFinite()) {
      result.aborted = true;
      result.error = "non-finite network parameters after update " +
                     std::to_string(ck.updates) + "; kept the last good checkpoint";
      ck = last_good;
      if (hooks.on_checkpoint) hooks.on_checkpoint(ck);
      break;
    }

    CurvePoint point{ck.timestep, mean_of(recent_returns), mean_of(recent_lengths),
                     wall_offset + elapsed()};
    result.curve.push_back(point);
    if (hooks.on_curve) hooks.on_curve(point);
    if (next_checkpoint >= 0 && ck.timestep >= next_checkpoint &&
        ck.timestep < config.total_timesteps) {
      snapshot();
      if (hooks.on_checkpoint) hooks.on_checkpoint(ck);
      while (next_checkpoint <= ck.timestep) next_checkpoint += hooks.checkpoint_interval;
    }
  }

  if (!result.aborted) {
    snapshot();
    if (hooks.on_checkpoint) hooks.on_checkpoint(ck);
  }
  result.seconds = elapsed();
  result.steps = ck.timestep - (init.resume ? init.resume->timestep : 0);
  result.seconds_per_10k = result.steps > 0 ? result.seconds / result.steps * 1e4 : 0.0;
  result.checkpoint = std::move(ck);
  return result;
}

PolicyNet transfer_init(const Checkpoint& source, const Env& target) {
  check_dimensions(source, target);
  return source.net;
}

EpisodeResult run_episode(const PolicyNet& net, Env& env, bool greedy, std::mt19937_64& rng,
                          const std::function<void(const Env&)>& on_step) {
  if (net.observation_size() != env.observation_size() ||
      net.action_heads() != env.action_heads()) {
    throw DimensionMismatch("network does not fit the environment layout");
  }
  EpisodeResult res;
  Observation obs = env.reset();
  while (true) {
    const NetOutput out = forward(net, obs);
    const Action a = greedy ? greedy_action(out.logits) : sample(out.logits, rng).action;
    const StepResult step = env.apply_action(a);
    res.total_reward += step.reward;
    ++res.length;
    if (on_step) on_step(env);
    if (step.done) {
      res.reason = step.reason;
      break;
    }
    obs = step.observation;
  }
  res.final_body = env.body();
  return res;
}

}  // namespace skatelab

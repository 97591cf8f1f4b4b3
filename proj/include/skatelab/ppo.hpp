#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skatelab/nn.hpp"

namespace skatelab {

struct TrainConfig {
  std::int64_t total_timesteps = 1'000'000;
  int horizon = 2048;  // steps per environment between updates
  int num_envs = 1;
  int minibatches = 4;
  int epochs = 4;
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double learning_rate = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  bool normalize_observations = true;
  bool normalize_rewards = true;
  int hidden = 64;
  // Episodes averaged for the learning curve.
  int curve_window = 100;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// dones[t] marks step t as the last of its episode. last_value is V of the
// state after the final step.
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              const std::vector<std::uint8_t>& dones, double last_value, double gamma,
              double lambda);

struct PpoBatch {
  Eigen::MatrixXd observations;  // normalized, observation_size x n
  Eigen::MatrixXi actions;       // action_heads x n
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

struct PpoLoss {
  double loss = 0.0;
  double surrogate = 0.0;  // mean of min(r A, clip(r) A)
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double max_ratio_error = 0.0;  // max |r - 1|
  bool finite = true;
  std::string diagnostic;
};

// Clipped surrogate plus value and entropy terms. When grad is given it is
// resized to net.param_count() and set to dL/dparams (policy then value).
PpoLoss ppo_loss(const PolicyNet& net, const PpoBatch& batch, const TrainConfig& config,
                 Eigen::VectorXd* grad = nullptr);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;
  double max_grad_norm = 0.5;  // <= 0 disables the cap
};

// One bias-corrected Adam update after capping the global gradient norm.
// Returns the gradient norm before capping.
double adam_step(Eigen::VectorXd& params, Eigen::VectorXd grads, AdamState& state,
                 double learning_rate, const AdamConfig& config = {});

}  // namespace skatelab

#include "skatelab/ppo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace skatelab {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("TrainConfig: " + what);
  };
  if (total_timesteps < 0) fail("total_timesteps must be >= 0");
  if (horizon <= 0 || num_envs <= 0) fail("horizon and num_envs must be > 0");
  if (minibatches <= 0 || (static_cast<std::int64_t>(horizon) * num_envs) % minibatches != 0) {
    fail("horizon * num_envs must be divisible by minibatches");
  }
  if (epochs <= 0) fail("epochs must be > 0");
  if (!(clip > 0.0 && clip < 1.0)) fail("clip must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) fail("lambda must lie in (0, 1]");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(value_coef >= 0.0 && entropy_coef >= 0.0)) fail("loss coefficients must be >= 0");
  if (hidden <= 0) fail("hidden must be > 0");
  if (curve_window <= 0) fail("curve_window must be > 0");
}

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              const std::vector<std::uint8_t>& dones, double last_value, double gamma,
              double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("gae: rewards, values and dones must align");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = k + 1 < n ? values[k + 1] : last_value;
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
  }
  return out;
}

PpoLoss ppo_loss(const PolicyNet& net, const PpoBatch& batch, const TrainConfig& config,
                 Eigen::VectorXd* grad) {
  const Eigen::Index n = batch.observations.cols();
  const int heads = net.action_heads();
  if (batch.actions.rows() != heads || batch.actions.cols() != n ||
      batch.old_log_probs.size() != n || batch.advantages.size() != n ||
      batch.returns.size() != n) {
    throw std::invalid_argument("ppo_loss: batch arrays do not align");
  }
  PpoLoss out;
  if (n == 0) {
    if (grad) *grad = Eigen::VectorXd::Zero(net.param_count());
    return out;
  }

  Eigen::VectorXd adv = batch.advantages;
  if (config.normalize_advantages && n > 1) {
    const double mean = adv.mean();
    const double sd = std::sqrt((adv.array() - mean).square().mean());
    adv = (adv.array() - mean) / (sd + 1e-8);
  }

  Mlp::Cache pcache, vcache;
  const Eigen::MatrixXd logits = net.policy.forward(batch.observations, grad ? &pcache : nullptr);
  const Eigen::MatrixXd values = net.value.forward(batch.observations, grad ? &vcache : nullptr);

  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(logits.rows(), n);
  Eigen::MatrixXd dvalues(1, n);
  double surrogate = 0.0, value_loss = 0.0, ent = 0.0, kl = 0.0, clipped = 0.0;
  std::vector<std::array<double, kChoicesPerHead>> probs(heads), logps(heads);
  std::vector<double> head_entropy(heads);
  for (Eigen::Index j = 0; j < n; ++j) {
    double logp = 0.0;
    for (int h = 0; h < heads; ++h) {
      const double* z = logits.col(j).data() + kChoicesPerHead * h;
      const double m = std::max({z[0], z[1], z[2]});
      const double lse =
          m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m) + std::exp(z[2] - m));
      double hh = 0.0;
      for (int k = 0; k < kChoicesPerHead; ++k) {
        const double lp = z[k] - lse;
        logps[h][k] = lp;
        probs[h][k] = std::exp(lp);
        hh -= probs[h][k] * lp;
      }
      head_entropy[h] = hh;
      ent += hh;
      logp += z[batch.actions(h, j)] - lse;
    }
    const double log_ratio = logp - batch.old_log_probs[j];
    const double ratio = std::exp(log_ratio);
    if (!std::isfinite(ratio)) {
      out.finite = false;
      out.diagnostic = "non-finite probability ratio at sample " + std::to_string(j);
      return out;
    }
    out.max_ratio_error = std::max(out.max_ratio_error, std::abs(ratio - 1.0));
    const double a = adv[j];
    const double unclipped = ratio * a;
    const double clipped_term = std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip) * a;
    surrogate += std::min(unclipped, clipped_term);
    if (std::abs(ratio - 1.0) > config.clip) clipped += 1.0;
    kl += (ratio - 1.0) - log_ratio;
    const double verr = values(0, j) - batch.returns[j];
    value_loss += verr * verr;

    if (grad) {
      // d(-min(rA, clip(r)A))/dlogp is -rA on the unclipped branch, else 0.
      const double dlogp = unclipped <= clipped_term ? -unclipped * inv_n : 0.0;
      for (int h = 0; h < heads; ++h) {
        double* dz = dlogits.col(j).data() + kChoicesPerHead * h;
        for (int k = 0; k < kChoicesPerHead; ++k) {
          const double p = probs[h][k];
          const double onehot = batch.actions(h, j) == k ? 1.0 : 0.0;
          dz[k] = dlogp * (onehot - p);
          // Entropy term: dH/dz_k = -p_k (log p_k + H).
          dz[k] += config.entropy_coef * inv_n * p * (logps[h][k] + head_entropy[h]);
        }
      }
      dvalues(0, j) = 2.0 * config.value_coef * inv_n * verr;
    }
  }
  out.surrogate = surrogate * inv_n;
  out.value_loss = value_loss * inv_n;
  out.entropy = ent * inv_n;
  out.approx_kl = kl * inv_n;
  out.clip_fraction = clipped * inv_n;
  out.loss = -out.surrogate + config.value_coef * out.value_loss - config.entropy_coef * out.entropy;
  if (!std::isfinite(out.loss)) {
    out.finite = false;
    out.diagnostic = "non-finite loss";
    return out;
  }
  if (grad) {
    grad->setZero(net.param_count());
    net.policy.backward(pcache, dlogits, grad->head(net.policy.param_count()));
    net.value.backward(vcache, dvalues, grad->tail(net.value.param_count()));
  }
  return out;
}

double adam_step(Eigen::VectorXd& params, Eigen::VectorXd grads, AdamState& state,
                 double learning_rate, const AdamConfig& config) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: shape mismatch");
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.t = 0;
  }
  const double norm = grads.norm();
  if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm) {
    grads *= config.max_grad_norm / (norm + 1e-6);
  }
  ++state.t;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  params.array() -= learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + config.epsilon);
  return norm;
}

}  // namespace skatelab

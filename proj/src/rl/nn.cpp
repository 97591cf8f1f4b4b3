#include "skatelab/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace skatelab {
namespace {

// Log-softmax of one 3-way head, shifted by the max for stability.
std::array<double, kChoicesPerHead> head_log_softmax(const double* z) {
  const double m = std::max({z[0], z[1], z[2]});
  const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m) + std::exp(z[2] - m));
  return {z[0] - lse, z[1] - lse, z[2] - lse};
}

void check_logits(const Eigen::VectorXd& logits) {
  if (logits.size() % kChoicesPerHead != 0) {
    throw std::invalid_argument("logits length must be a multiple of 3");
  }
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least two sizes");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) {
      throw std::invalid_argument("Mlp: layer sizes must be positive");
    }
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(total);
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int l) const {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
  return {params_.data() + offsets_[l] + Eigen::Index{sizes_[l + 1]} * sizes_[l], sizes_[l + 1]};
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(int l) {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(int l) {
  return {params_.data() + offsets_[l] + Eigen::Index{sizes_[l + 1]} * sizes_[l], sizes_[l + 1]};
}

void Mlp::init_orthogonal(std::mt19937_64& rng, double hidden_gain, double output_gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < num_layers(); ++l) {
    const int rows = sizes_[l + 1], cols = sizes_[l];
    const int big = std::max(rows, cols), small = std::min(rows, cols);
    Eigen::MatrixXd g(big, small);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(small);
    for (int j = 0; j < small; ++j) {
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    const double gain = l + 1 == num_layers() ? output_gain : hidden_gain;
    if (rows >= cols) {
      weight(l) = gain * q;
    } else {
      weight(l) = gain * q.transpose();
    }
    bias(l).setZero();
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (x.rows() != input_size()) {
    throw std::invalid_argument("Mlp::forward: expected input of size " +
                                std::to_string(input_size()) + ", got " +
                                std::to_string(x.rows()));
  }
  if (cache) cache->inputs.assign(1, x);
  Eigen::MatrixXd a = x;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) {
      a = z.array().tanh();
      if (cache) cache->inputs.push_back(a);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dout,
                   Eigen::Ref<Eigen::VectorXd> grad) const {
  Eigen::MatrixXd dz = dout;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& in = cache.inputs[l];
    const int rows = sizes_[l + 1], cols = sizes_[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], rows, cols);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + Eigen::Index{rows} * cols, rows);
    gw.noalias() += dz * in.transpose();
    gb += dz.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd da = weight(l).transpose() * dz;
      dz = da.array() * (1.0 - in.array().square());
    }
  }
}

void RunningMeanStd::update(const Eigen::MatrixXd& batch) {
  const double n = static_cast<double>(batch.cols());
  if (n == 0.0) return;
  const Eigen::VectorXd batch_mean = batch.rowwise().mean();
  const Eigen::VectorXd batch_var =
      (batch.colwise() - batch_mean).array().square().rowwise().mean();
  const Eigen::VectorXd delta = batch_mean - mean;
  const double total = count + n;
  mean += delta * (n / total);
  const Eigen::ArrayXd m2 = var.array() * count + batch_var.array() * n +
                            delta.array().square() * (count * n / total);
  var = m2 / total;
  count = total;
}

Eigen::VectorXd PolicyNet::flat_params() const {
  Eigen::VectorXd p(param_count());
  p << policy.params(), value.params();
  return p;
}

void PolicyNet::set_flat_params(const Eigen::VectorXd& p) {
  if (p.size() != param_count()) throw std::invalid_argument("PolicyNet: parameter size mismatch");
  policy.params() = p.head(policy.param_count());
  value.params() = p.tail(value.param_count());
}

Eigen::VectorXd PolicyNet::normalize(const Observation& obs) const {
  if (static_cast<int>(obs.size()) != observation_size()) {
    throw std::invalid_argument("observation has " + std::to_string(obs.size()) +
                                " entries, network expects " +
                                std::to_string(observation_size()));
  }
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size());
  if (!normalize_observations) return x;
  x = ((x - obs_rms.mean).array() / obs_rms.var.array().sqrt().max(kObservationStdFloor))
          .cwiseMax(-kObservationClip)
          .cwiseMin(kObservationClip);
  return x;
}

PolicyNet make_policy_net(int observation_size, int action_heads, std::uint64_t seed,
                          int hidden, bool normalize_observations) {
  if (observation_size <= 0 || action_heads <= 0 || hidden <= 0) {
    throw std::invalid_argument("make_policy_net: sizes must be positive");
  }
  PolicyNet net;
  net.policy = Mlp({observation_size, hidden, hidden, action_heads * kChoicesPerHead});
  net.value = Mlp({observation_size, hidden, hidden, 1});
  net.obs_rms = RunningMeanStd(observation_size);
  net.normalize_observations = normalize_observations;
  std::mt19937_64 rng(seed);
  net.policy.init_orthogonal(rng, std::sqrt(2.0), 0.01);
  net.value.init_orthogonal(rng, std::sqrt(2.0), 1.0);
  return net;
}

NetOutput forward_normalized(const PolicyNet& net, const Eigen::VectorXd& obs) {
  NetOutput out;
  out.logits = net.policy.forward(obs);
  out.value = net.value.forward(obs)(0, 0);
  return out;
}

NetOutput forward(const PolicyNet& net, const Observation& obs) {
  return forward_normalized(net, net.normalize(obs));
}

ActionSample sample(const Eigen::VectorXd& logits, std::mt19937_64& rng) {
  check_logits(logits);
  const int heads = static_cast<int>(logits.size()) / kChoicesPerHead;
  ActionSample s;
  s.action.resize(heads);
  for (int h = 0; h < heads; ++h) {
    const auto lp = head_log_softmax(logits.data() + kChoicesPerHead * h);
    const double u = std::generate_canonical<double, 53>(rng);
    double acc = 0.0;
    int pick = kChoicesPerHead - 1;
    for (int k = 0; k < kChoicesPerHead; ++k) {
      acc += std::exp(lp[k]);
      if (u < acc) {
        pick = k;
        break;
      }
    }
    s.action[h] = pick;
    s.log_prob += lp[pick];
  }
  return s;
}

Action greedy_action(const Eigen::VectorXd& logits) {
  check_logits(logits);
  const int heads = static_cast<int>(logits.size()) / kChoicesPerHead;
  Action a(heads);
  for (int h = 0; h < heads; ++h) {
    Eigen::Index best = 0;
    logits.segment<kChoicesPerHead>(kChoicesPerHead * h).maxCoeff(&best);
    a[h] = static_cast<int>(best);
  }
  return a;
}

double log_prob(const Eigen::VectorXd& logits, const Action& action) {
  check_logits(logits);
  if (static_cast<Eigen::Index>(action.size()) * kChoicesPerHead != logits.size()) {
    throw std::invalid_argument("log_prob: action/logit head count mismatch");
  }
  double sum = 0.0;
  for (std::size_t h = 0; h < action.size(); ++h) {
    sum += head_log_softmax(logits.data() + kChoicesPerHead * h)[action[h]];
  }
  return sum;
}

Eigen::VectorXd head_probabilities(const Eigen::VectorXd& logits) {
  check_logits(logits);
  Eigen::VectorXd p(logits.size());
  for (Eigen::Index h = 0; h < logits.size() / kChoicesPerHead; ++h) {
    const auto lp = head_log_softmax(logits.data() + kChoicesPerHead * h);
    for (int k = 0; k < kChoicesPerHead; ++k) p[kChoicesPerHead * h + k] = std::exp(lp[k]);
  }
  return p;
}

double entropy(const Eigen::VectorXd& logits) {
  check_logits(logits);
  double sum = 0.0;
  for (Eigen::Index h = 0; h < logits.size() / kChoicesPerHead; ++h) {
    const auto lp = head_log_softmax(logits.data() + kChoicesPerHead * h);
    for (double l : lp) sum -= std::exp(l) * l;
  }
  return sum;
}

}  // namespace skatelab

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "skatelab/env.hpp"

namespace skatelab {

inline constexpr int kChoicesPerHead = 3;

// Fully connected network with tanh hidden layers and a linear output layer.
// All parameters live in one flat vector, layer by layer: the column-major
// weight matrix (out x in) followed by the bias (out).
class Mlp {
 public:
  Mlp() = default;
  // sizes = {input, hidden..., output}. Parameters start at zero.
  explicit Mlp(std::vector<int> sizes);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index param_count() const { return params_.size(); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<Eigen::VectorXd> bias(int layer);

  // Orthogonal weights scaled by the gain, zero biases.
  void init_orthogonal(std::mt19937_64& rng, double hidden_gain, double output_gain);

  struct Cache {
    // inputs[l] is the input to layer l.
    std::vector<Eigen::MatrixXd> inputs;
  };
  // x: input_size x batch. Returns output_size x batch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  // Adds dL/dparams to grad (param_count long) given dL/doutput.
  void backward(const Cache& cache, const Eigen::MatrixXd& dout,
                Eigen::Ref<Eigen::VectorXd> grad) const;

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
};

// Running mean and variance over batches (parallel-variance merge).
struct RunningMeanStd {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  double count = 1e-4;

  RunningMeanStd() = default;
  explicit RunningMeanStd(int size)
      : mean(Eigen::VectorXd::Zero(size)), var(Eigen::VectorXd::Ones(size)) {}
  // batch: size x n.
  void update(const Eigen::MatrixXd& batch);
};

// Policy and value networks plus the observation normalizer they read from.
struct PolicyNet {
  Mlp policy;
  Mlp value;
  RunningMeanStd obs_rms;
  bool normalize_observations = true;

  int observation_size() const { return policy.input_size(); }
  int action_heads() const { return policy.output_size() / kChoicesPerHead; }
  Eigen::Index param_count() const { return policy.param_count() + value.param_count(); }
  // Policy parameters followed by value parameters.
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& p);

  // Clipped to [-10, 10] after standardizing. Identity when disabled.
  Eigen::VectorXd normalize(const Observation& obs) const;
};

inline constexpr double kObservationClip = 10.0;
// Features that barely moved during training stay near zero instead of
// being blown up by a vanishing variance.
inline constexpr double kObservationStdFloor = 1e-2;

// Two tanh hidden layers per network; the final policy layer starts small.
PolicyNet make_policy_net(int observation_size, int action_heads, std::uint64_t seed,
                          int hidden = 64, bool normalize_observations = true);

struct NetOutput {
  Eigen::VectorXd logits;  // action_heads * 3
  double value = 0.0;
};

// Throws std::invalid_argument when obs has the wrong length.
NetOutput forward(const PolicyNet& net, const Observation& obs);
NetOutput forward_normalized(const PolicyNet& net, const Eigen::VectorXd& obs);

struct ActionSample {
  Action action;
  double log_prob = 0.0;
};

// Independent categorical draw per head; log_prob is the sum over heads.
ActionSample sample(const Eigen::VectorXd& logits, std::mt19937_64& rng);
Action greedy_action(const Eigen::VectorXd& logits);
double log_prob(const Eigen::VectorXd& logits, const Action& action);
// Per-head softmax, laid out like the logits.
Eigen::VectorXd head_probabilities(const Eigen::VectorXd& logits);
// Sum of the per-head entropies.
double entropy(const Eigen::VectorXd& logits);

}  // namespace skatelab

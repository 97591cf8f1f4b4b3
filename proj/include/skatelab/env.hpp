#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "skatelab/dynamics.hpp"
#include "skatelab/geom.hpp"
#include "skatelab/ik_table.hpp"
#include "skatelab/kin.hpp"

namespace skatelab {

enum class Variant { kSS, kFSCS, kFSJS };
enum class Task { kForward, kGoal };
enum class IkMode { kDirect, kEager, kLazy };

std::string_view to_string(Variant v);
std::string_view to_string(Task t);
std::string_view to_string(IkMode m);
Variant parse_variant(std::string_view s);
Task parse_task(std::string_view s);
IkMode parse_ik_mode(std::string_view s);

enum class Termination {
  kNone,
  kTimeout,
  kGoalReached,
  kSelfCollision,
  kNonSkateContact,
  kTipOver,
};
std::string_view to_string(Termination t);

struct ResetPerturbation {
  double body_xy = 0.0;
  double body_yaw = 0.0;
  double body_velocity = 0.0;
  double skate_y = 0.0;
  double skate_yaw = 0.0;
  double joint = 0.0;
};

struct EnvConfig {
  Variant variant = Variant::kSS;
  Task task = Task::kForward;
  double dt = 0.01;
  // Per-DOF offset size for Cartesian actions (x, y, z, yaw) and for joints.
  std::array<double, 4> cartesian_offset = {0.01, 0.01, 0.01, 0.01};
  double joint_offset = 0.01;
  // Allowed setpoint excursion around the nominal stance, per DOF.
  std::array<Range, 4> workspace_offset = {Range{0.0, 0.0}, Range{-0.1, 0.1},
                                           Range{0.0, 0.0}, Range{-0.3, 0.3}};
  std::array<bool, 4> actuated = {false, true, false, true};
  int max_steps = 1000;
  Vec3 goal{5.0, 0.0, 0.0};
  double success_radius = 0.2;
  double gamma = 1.0;
  TerrainRanges terrain;
  ResetPerturbation perturbation;
  std::array<SkatePose, kNumSkates> nominal = {
      SkatePose{0.6, -0.55, -0.6, 0.0}, SkatePose{-0.6, -0.55, -0.6, 0.0},
      SkatePose{-0.6, 0.55, -0.6, 0.0}, SkatePose{0.6, 0.55, -0.6, 0.0}};
  // Collision proxy geometry.
  double capsule_radius = 0.05;
  double elbow_clearance = 0.05;
  double body_half_height = 0.1;
  double max_tilt = 0.35;
  double joint_rate_limit = 1.0;
  int reset_retries = 20;

  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
  int action_heads() const;
  int observation_size() const;
  Workspace skate_workspace(int skate) const;
};

// Default training setups for the two tasks.
EnvConfig forward_task_config(Variant v);
EnvConfig goal_task_config(Variant v);

struct KinSetup {
  std::array<LimbGeometry, kNumSkates> limbs = default_limbs();
  Quantization quantization;
  IkMode mode = IkMode::kDirect;
  IkFamily family = IkFamily::kElbowUp;
};

// One IK table per limb, shared by every environment of a run.
using IkTableSet = std::array<std::shared_ptr<IkTable>, kNumSkates>;
// Eager tables cover the whole workspace; lazy tables start empty.
IkTableSet make_ik_tables(const EnvConfig& config, const KinSetup& kin);

using Observation = std::vector<double>;
// One ternary choice per head: 0 -> -offset, 1 -> 0, 2 -> +offset.
using Action = std::vector<int>;

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Termination reason = Termination::kNone;
};

// Plain-data snapshot of everything that evolves during an episode.
struct EnvState {
  BodyState body;
  SkateSetpoint skates;
  std::array<SkatePose, kNumSkates> desired{};
  JointVector joints{};
  JointVector joint_rates{};
  Terrain terrain;
  int steps = 0;
  std::uint64_t ik_failures = 0;
  std::string rng_state;
};

double reward_forward(const BodyState& s, const BodyState& s_next, double dt);
double reward_goal(const BodyState& s, const BodyState& s_next, const Vec3& goal);
double potential_shaping(double phi, double phi_next, double gamma);
double goal_distance_xy(const BodyState& s, const Vec3& goal);

class Env {
 public:
  Env(EnvConfig config, SimParams sim, KinSetup kin = {},
      IkTableSet tables = {}, std::uint64_t seed = 0);

  Observation reset();
  StepResult apply_action(const Action& action);
  // Moves each skate setpoint toward the target by at most one offset per
  // step; the open-loop baseline drives the system through here.
  StepResult apply_setpoints(const std::array<SkatePose, kNumSkates>& target);

  Observation observe() const;
  Termination check_termination(bool tipped) const;

  int observation_size() const { return config_.observation_size(); }
  int action_heads() const { return config_.action_heads(); }
  const EnvConfig& config() const { return config_; }
  const SimParams& sim() const { return sim_; }
  const KinSetup& kin() const { return kin_; }

  const BodyState& body() const { return body_; }
  const SkateSetpoint& skates() const { return skates_; }
  const std::array<SkatePose, kNumSkates>& desired() const { return desired_; }
  const JointVector& joints() const { return joints_; }
  const Terrain& terrain() const { return terrain_; }
  int steps() const { return steps_; }
  std::uint64_t ik_failures() const { return ik_failures_; }

  EnvState state() const;
  void restore(const EnvState& s);
  void seed(std::uint64_t seed) { rng_.seed(seed); }

  // Overrides the episode length, e.g. for long trajectory traces.
  void set_max_steps(int steps) { config_.max_steps = steps; }

 private:
  bool full_system() const { return config_.variant != Variant::kSS; }
  StepResult advance(const std::array<SkatePose, kNumSkates>& desired,
                     const JointVector* joint_targets);
  LimbJoints solve_limb(int limb, const SkatePose& pose, bool& ok);
  void refresh_skates_from_joints(const JointVector& prev_joints);
  LimbMassCenters limb_mass_centers() const;
  bool initialize_state();

  EnvConfig config_;
  SimParams sim_;
  KinSetup kin_;
  IkTableSet tables_;
  std::mt19937_64 rng_;

  BodyState body_;
  SkateSetpoint skates_;
  std::array<SkatePose, kNumSkates> desired_{};
  JointVector joints_{};
  JointVector joint_rates_{};
  Terrain terrain_;
  int steps_ = 0;
  std::uint64_t ik_failures_ = 0;
};

// Stream seed for environment `index` of a run seeded with `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace skatelab

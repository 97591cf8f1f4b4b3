#include "skatelab/env.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace skatelab {
namespace {

constexpr double kFkTolerance = 1e-9;

double clamp_range(double v, const Range& r) { return std::clamp(v, r.lo, r.hi); }

// Closest distance between segments p1-q1 and p2-q2.
double segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2,
                        const Vec3& q2) {
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = d1.dot(d1);
  const double e = d2.dot(d2);
  const double f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-18 && e <= 1e-18) return r.norm();
  if (a <= 1e-18) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-18) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 1e-18 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p1 + d1 * s) - (p2 + d2 * t)).norm();
}

double pose_error(const SkatePose& a, const SkatePose& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z),
                   std::abs(wrap_angle(a.yaw - b.yaw))});
}

double snap(double v, double step) { return std::round(v / step) * step; }

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kSS: return "ss";
    case Variant::kFSCS: return "fs-cs";
    case Variant::kFSJS: return "fs-js";
  }
  return "?";
}

std::string_view to_string(Task t) {
  return t == Task::kForward ? "forward" : "goal";
}

std::string_view to_string(IkMode m) {
  switch (m) {
    case IkMode::kDirect: return "none";
    case IkMode::kEager: return "eager";
    case IkMode::kLazy: return "lazy";
  }
  return "?";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kNone: return "none";
    case Termination::kTimeout: return "timeout";
    case Termination::kGoalReached: return "goal_reached";
    case Termination::kSelfCollision: return "self_collision";
    case Termination::kNonSkateContact: return "non_skate_contact";
    case Termination::kTipOver: return "tip_over";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "ss") return Variant::kSS;
  if (s == "fs-cs") return Variant::kFSCS;
  if (s == "fs-js") return Variant::kFSJS;
  throw std::invalid_argument("unknown variant '" + std::string(s) +
                              "' (expected ss, fs-cs or fs-js)");
}

Task parse_task(std::string_view s) {
  if (s == "forward") return Task::kForward;
  if (s == "goal") return Task::kGoal;
  throw std::invalid_argument("unknown task '" + std::string(s) +
                              "' (expected forward or goal)");
}

IkMode parse_ik_mode(std::string_view s) {
  if (s == "none") return IkMode::kDirect;
  if (s == "eager") return IkMode::kEager;
  if (s == "lazy") return IkMode::kLazy;
  throw std::invalid_argument("unknown table mode '" + std::string(s) +
                              "' (expected none, eager or lazy)");
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("EnvConfig: " + what);
  };
  if (!(dt > 0.0 && dt <= 0.05)) fail("dt must lie in (0, 0.05]");
  for (double e : cartesian_offset) {
    if (!(e > 0.0)) fail("cartesian offsets must be > 0");
  }
  if (!(joint_offset > 0.0)) fail("joint_offset must be > 0");
  for (const Range& r : workspace_offset) {
    if (!(r.lo <= 0.0 && r.hi >= 0.0)) fail("workspace offsets must bracket 0");
  }
  if (variant != Variant::kFSJS &&
      std::none_of(actuated.begin(), actuated.end(), [](bool b) { return b; })) {
    fail("at least one skate DOF must be actuated");
  }
  if (max_steps <= 0) fail("max_steps must be > 0");
  if (!(success_radius > 0.0)) fail("success_radius must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(capsule_radius >= 0.0 && body_half_height >= 0.0 && max_tilt > 0.0)) {
    fail("collision thresholds must be non-negative");
  }
  if (!(joint_rate_limit > 0.0)) fail("joint_rate_limit must be > 0");
  if (reset_retries < 1) fail("reset_retries must be >= 1");
}

int EnvConfig::action_heads() const {
  if (variant == Variant::kFSJS) return kNumJoints;
  return kNumSkates * static_cast<int>(std::count(actuated.begin(), actuated.end(), true));
}

int EnvConfig::observation_size() const {
  return 3 + 4 + 16 + 3 + 3 + 16 + (task == Task::kGoal ? 5 : 0);
}

Workspace EnvConfig::skate_workspace(int skate) const {
  Workspace w;
  for (int d = 0; d < 4; ++d) {
    w.bounds[d] = {nominal[skate][d] + workspace_offset[d].lo,
                   nominal[skate][d] + workspace_offset[d].hi};
  }
  return w;
}

EnvConfig forward_task_config(Variant v) {
  EnvConfig c;
  c.variant = v;
  c.task = Task::kForward;
  c.terrain.amplitude = {0.0, 0.0};
  c.terrain.friction = {1.0, 1.0};
  c.terrain.offset = {0.0, 0.0};
  c.perturbation = {0.0, 0.02, 0.02, 0.02, 0.02, 0.02};
  return c;
}

EnvConfig goal_task_config(Variant v) {
  EnvConfig c;
  c.variant = v;
  c.task = Task::kGoal;
  c.terrain.amplitude = {0.1, 0.1};
  c.terrain.friction = {0.5, 1.0};
  c.terrain.offset = {-1.0, 1.0};
  c.perturbation = {0.05, 0.05, 0.05, 0.02, 0.02, 0.02};
  return c;
}

IkTableSet make_ik_tables(const EnvConfig& config, const KinSetup& kin) {
  IkTableSet tables;
  if (config.variant != Variant::kFSCS || kin.mode == IkMode::kDirect) return tables;
  for (int i = 0; i < kNumSkates; ++i) {
    const Workspace ws = config.skate_workspace(i);
    tables[i] = std::make_shared<IkTable>(
        kin.mode == IkMode::kEager
            ? IkTable::build(kin.limbs[i], ws, kin.quantization)
            : IkTable(kin.limbs[i], ws, kin.quantization));
  }
  return tables;
}

double reward_forward(const BodyState& s, const BodyState& s_next, double dt) {
  return (s_next.position.x - s.position.x) / dt;
}

double goal_distance_xy(const BodyState& s, const Vec3& goal) {
  return std::hypot(s.position.x - goal.x, s.position.y - goal.y);
}

double reward_goal(const BodyState& s, const BodyState& s_next, const Vec3& goal) {
  return -goal_distance_xy(s_next, goal) + goal_distance_xy(s, goal);
}

double potential_shaping(double phi, double phi_next, double gamma) {
  return gamma * phi_next - phi;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Env::Env(EnvConfig config, SimParams sim, KinSetup kin, IkTableSet tables,
         std::uint64_t seed)
    : config_(std::move(config)),
      sim_(sim),
      kin_(std::move(kin)),
      tables_(std::move(tables)),
      rng_(seed) {
  config_.validate();
  sim_.dt = config_.dt;
  if (full_system()) {
    // Joint rate limits already bound the skates.
    sim_.skate_linear_rate_limit = 1e9;
    sim_.skate_yaw_rate_limit = 1e9;
  } else {
    const auto& e = config_.cartesian_offset;
    sim_.skate_linear_rate_limit = std::max({e[0], e[1], e[2]}) / config_.dt * (1.0 + 1e-9);
    sim_.skate_yaw_rate_limit = e[3] / config_.dt * (1.0 + 1e-9);
  }
  sim_.validate();
  for (const LimbGeometry& l : kin_.limbs) l.validate();
  if (config_.variant == Variant::kFSCS && kin_.mode != IkMode::kDirect) {
    for (const auto& t : tables_) {
      if (!t) throw std::invalid_argument("Env: table mode requires IK tables");
    }
  }
  body_.orientation = UnitQuat();
  skates_.pose = config_.nominal;
  desired_ = config_.nominal;
}

LimbJoints Env::solve_limb(int limb, const SkatePose& pose, bool& ok) {
  ok = true;
  if (kin_.mode == IkMode::kEager && tables_[limb]) {
    if (auto hit = tables_[limb]->lookup(pose, kin_.family)) return *hit;
  } else if (kin_.mode == IkMode::kLazy && tables_[limb]) {
    if (auto hit = tables_[limb]->lookup_or_insert(pose, kin_.family)) return *hit;
  }
  // Per-call path: solve, then confirm the solution lands on the pose.
  const IkResult r = ik(kin_.limbs[limb], pose, kin_.family);
  if (r.ok() && pose_error(fk(kin_.limbs[limb], r.joints), pose) <= kFkTolerance) {
    return r.joints;
  }
  ok = false;
  return {};
}

LimbMassCenters Env::limb_mass_centers() const {
  if (!full_system()) return skate_mass_centers(skates_);
  LimbMassCenters out;
  for (int i = 0; i < kNumSkates; ++i) {
    const LimbPoints p = limb_points(kin_.limbs[i], limb_slice(joints_, i));
    // Half the limb mass on each link, at the link midpoints.
    out[i] = (p.shoulder + p.elbow * 2.0 + p.wrist) * 0.25;
  }
  return out;
}

void Env::refresh_skates_from_joints(const JointVector& prev_joints) {
  for (int i = 0; i < kNumSkates; ++i) {
    const SkatePose now = fk(kin_.limbs[i], limb_slice(joints_, i));
    const SkatePose before = fk(kin_.limbs[i], limb_slice(prev_joints, i));
    skates_.pose[i] = now;
    for (int d = 0; d < 3; ++d) skates_.rate[i][d] = (now[d] - before[d]) / config_.dt;
    skates_.rate[i].yaw = wrap_angle(now.yaw - before.yaw) / config_.dt;
  }
  for (int j = 0; j < kNumJoints; ++j) {
    joint_rates_[j] = (joints_[j] - prev_joints[j]) / config_.dt;
  }
}

bool Env::initialize_state() {
  const ResetPerturbation& p = config_.perturbation;
  terrain_ = terrain_sample(rng_, config_.terrain);

  body_ = BodyState{};
  body_.position.x = uniform(rng_, -p.body_xy, p.body_xy);
  body_.position.y = uniform(rng_, -p.body_xy, p.body_xy);
  body_.orientation = UnitQuat::from_yaw(uniform(rng_, -p.body_yaw, p.body_yaw));
  body_.linear_velocity.x = uniform(rng_, -p.body_velocity, p.body_velocity);
  body_.linear_velocity.y = uniform(rng_, -p.body_velocity, p.body_velocity);
  body_.angular_velocity.z = uniform(rng_, -p.body_velocity, p.body_velocity);

  skates_ = SkateSetpoint{};
  joint_rates_.fill(0.0);
  bool ok = true;
  if (config_.variant == Variant::kFSJS) {
    for (int i = 0; i < kNumSkates; ++i) {
      const IkResult r = ik(kin_.limbs[i], config_.nominal[i], kin_.family);
      if (!r.ok()) return false;
      LimbJoints q = r.joints;
      for (int j = 0; j < kJointsPerLimb; ++j) {
        q[j] += uniform(rng_, -p.joint, p.joint);
        q[j] = std::clamp(q[j], kin_.limbs[i].limits.lower[j], kin_.limbs[i].limits.upper[j]);
      }
      set_limb_slice(joints_, i, q);
    }
    desired_ = config_.nominal;
  } else {
    for (int i = 0; i < kNumSkates; ++i) {
      const Workspace ws = config_.skate_workspace(i);
      SkatePose s = config_.nominal[i];
      s.y += snap(uniform(rng_, -p.skate_y, p.skate_y), config_.cartesian_offset[1]);
      s.yaw += snap(uniform(rng_, -p.skate_yaw, p.skate_yaw), config_.cartesian_offset[3]);
      for (int d = 0; d < 4; ++d) s[d] = clamp_range(s[d], ws.bounds[d]);
      desired_[i] = s;
      if (config_.variant == Variant::kFSCS) {
        bool limb_ok = false;
        set_limb_slice(joints_, i, solve_limb(i, s, limb_ok));
        ok = ok && limb_ok;
      } else {
        skates_.pose[i] = s;
      }
    }
    if (!ok) return false;
  }
  if (full_system()) {
    for (int i = 0; i < kNumSkates; ++i) {
      skates_.pose[i] = fk(kin_.limbs[i], limb_slice(joints_, i));
    }
  }
  body_ = settle_on_terrain(body_, skates_, terrain_);
  steps_ = 0;

  const LimbMassCenters masses = limb_mass_centers();
  const ContactInfo contact = contact_loads(body_, skates_, terrain_, sim_, &masses);
  return check_termination(contact.tipped_over) == Termination::kNone;
}

Observation Env::reset() {
  for (int attempt = 0; attempt < config_.reset_retries; ++attempt) {
    if (initialize_state()) return observe();
  }
  throw std::runtime_error("Env::reset: no feasible initial state after " +
                           std::to_string(config_.reset_retries) + " attempts");
}

StepResult Env::apply_action(const Action& action) {
  if (static_cast<int>(action.size()) != action_heads()) {
    throw std::invalid_argument("Env::apply_action: expected " +
                                std::to_string(action_heads()) + " heads, got " +
                                std::to_string(action.size()));
  }
  for (int a : action) {
    if (a < 0 || a > 2) throw std::invalid_argument("Env::apply_action: choice outside {0,1,2}");
  }
  if (config_.variant == Variant::kFSJS) {
    JointVector targets = joints_;
    for (int j = 0; j < kNumJoints; ++j) {
      const LimbGeometry& limb = kin_.limbs[j / kJointsPerLimb];
      const int k = j % kJointsPerLimb;
      targets[j] = std::clamp(joints_[j] + (action[j] - 1) * config_.joint_offset,
                              limb.limits.lower[k], limb.limits.upper[k]);
    }
    return advance(desired_, &targets);
  }
  std::array<SkatePose, kNumSkates> next = desired_;
  int head = 0;
  for (int i = 0; i < kNumSkates; ++i) {
    const Workspace ws = config_.skate_workspace(i);
    for (int d = 0; d < 4; ++d) {
      if (!config_.actuated[d]) continue;
      next[i][d] = clamp_range(next[i][d] + (action[head++] - 1) * config_.cartesian_offset[d],
                               ws.bounds[d]);
    }
  }
  return advance(next, nullptr);
}

StepResult Env::apply_setpoints(const std::array<SkatePose, kNumSkates>& target) {
  if (config_.variant == Variant::kFSJS) {
    throw std::logic_error("Env::apply_setpoints: joint-space variant has no setpoints");
  }
  std::array<SkatePose, kNumSkates> next = desired_;
  for (int i = 0; i < kNumSkates; ++i) {
    const Workspace ws = config_.skate_workspace(i);
    for (int d = 0; d < 4; ++d) {
      if (!config_.actuated[d]) continue;
      const double e = config_.cartesian_offset[d];
      next[i][d] = clamp_range(next[i][d] + std::clamp(target[i][d] - next[i][d], -e, e),
                               ws.bounds[d]);
    }
  }
  return advance(next, nullptr);
}

StepResult Env::advance(const std::array<SkatePose, kNumSkates>& desired,
                        const JointVector* joint_targets) {
  const BodyState before = body_;
  SkateSetpoint commanded;
  StepOutcome out;
  if (!full_system()) {
    commanded.pose = desired;
    out = step(body_, skates_, commanded, terrain_, sim_);
    skates_ = out.skates;
  } else {
    JointVector targets = joints_;
    if (joint_targets) {
      targets = *joint_targets;
    } else {
      for (int i = 0; i < kNumSkates; ++i) {
        bool ok = false;
        const LimbJoints q = solve_limb(i, desired[i], ok);
        if (ok) {
          set_limb_slice(targets, i, q);
        } else {
          ++ik_failures_;
        }
      }
    }
    const JointVector prev = joints_;
    joints_ = clamp_joint_step(joints_, targets, config_.dt, config_.joint_rate_limit);
    const SkateSetpoint old_skates = skates_;
    refresh_skates_from_joints(prev);
    commanded.pose = skates_.pose;
    const LimbMassCenters masses = limb_mass_centers();
    out = step(body_, old_skates, commanded, terrain_, sim_, &masses);
  }
  desired_ = desired;
  body_ = out.body;
  ++steps_;

  StepResult result;
  result.reward = config_.task == Task::kForward
                      ? reward_forward(before, body_, config_.dt)
                      : reward_goal(before, body_, config_.goal);
  result.reason = check_termination(out.contact.tipped_over);
  result.done = result.reason != Termination::kNone;
  result.observation = observe();
  return result;
}

Termination Env::check_termination(bool tipped) const {
  if (tipped) return Termination::kTipOver;
  if (std::abs(body_.orientation.roll()) > config_.max_tilt ||
      std::abs(body_.orientation.pitch()) > config_.max_tilt) {
    return Termination::kTipOver;
  }
  auto clearance = [&](const Vec3& body_point) {
    const Vec3 w = body_.position + body_.orientation.rotate(body_point);
    return w.z - terrain_height(terrain_, w.x, w.y);
  };
  const double hx = 0.5 * sim_.torso_length, hy = 0.5 * sim_.torso_width;
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      if (clearance({sx * hx, sy * hy, -config_.body_half_height}) < 0.0) {
        return Termination::kNonSkateContact;
      }
    }
  }
  if (full_system()) {
    std::array<LimbPoints, kNumSkates> pts;
    std::array<double, kNumSkates> elbow_clearance{};
    for (int i = 0; i < kNumSkates; ++i) {
      pts[i] = limb_points(kin_.limbs[i], limb_slice(joints_, i));
      elbow_clearance[i] = std::min(clearance(pts[i].elbow), clearance(pts[i].wrist));
      if (elbow_clearance[i] < 0.0) return Termination::kNonSkateContact;
    }
    const double reach = 2.0 * config_.capsule_radius;
    for (int i = 0; i < kNumSkates; ++i) {
      if (elbow_clearance[i] < config_.elbow_clearance) return Termination::kSelfCollision;
      // Links of neighbouring limbs.
      const int j = (i + 1) % kNumSkates;
      const std::array<std::pair<Vec3, Vec3>, 3> a = {
          std::pair{pts[i].shoulder, pts[i].elbow}, std::pair{pts[i].elbow, pts[i].wrist},
          std::pair{pts[i].wrist, pts[i].skate}};
      const std::array<std::pair<Vec3, Vec3>, 3> b = {
          std::pair{pts[j].shoulder, pts[j].elbow}, std::pair{pts[j].elbow, pts[j].wrist},
          std::pair{pts[j].wrist, pts[j].skate}};
      for (const auto& [p1, q1] : a) {
        for (const auto& [p2, q2] : b) {
          if (segment_distance(p1, q1, p2, q2) < reach) return Termination::kSelfCollision;
        }
      }
      // The arm folding back under the torso.
      for (const Vec3& q : {pts[i].elbow, pts[i].wrist}) {
        if (std::abs(q.x) < hx && std::abs(q.y) < hy && q.z > -config_.body_half_height - reach) {
          return Termination::kSelfCollision;
        }
      }
    }
  }
  if (config_.task == Task::kGoal &&
      goal_distance_xy(body_, config_.goal) < config_.success_radius) {
    return Termination::kGoalReached;
  }
  if (steps_ >= config_.max_steps) return Termination::kTimeout;
  return Termination::kNone;
}

Observation Env::observe() const {
  Observation obs;
  obs.reserve(observation_size());
  const Vec3& p = body_.position;
  const UnitQuat& q = body_.orientation;
  obs.insert(obs.end(), {p.x, p.y, p.z, q.w(), q.x(), q.y(), q.z()});
  if (config_.variant == Variant::kFSJS) {
    obs.insert(obs.end(), joints_.begin(), joints_.end());
  } else {
    for (const SkatePose& s : skates_.pose) obs.insert(obs.end(), {s.x, s.y, s.z, s.yaw});
  }
  const Vec3& v = body_.linear_velocity;
  const Vec3& w = body_.angular_velocity;
  obs.insert(obs.end(), {v.x, v.y, v.z, w.x, w.y, w.z});
  if (config_.variant == Variant::kFSJS) {
    obs.insert(obs.end(), joint_rates_.begin(), joint_rates_.end());
  } else {
    for (const SkatePose& s : skates_.rate) obs.insert(obs.end(), {s.x, s.y, s.z, s.yaw});
  }
  if (config_.task == Task::kGoal) {
    const Vec3& g = config_.goal;
    obs.insert(obs.end(), {g.x, g.y, terrain_height(terrain_, g.x, g.y),
                           -goal_distance_xy(body_, g), heading_to_goal(p, q, g)});
  }
  return obs;
}

EnvState Env::state() const {
  EnvState s;
  s.body = body_;
  s.skates = skates_;
  s.desired = desired_;
  s.joints = joints_;
  s.joint_rates = joint_rates_;
  s.terrain = terrain_;
  s.steps = steps_;
  s.ik_failures = ik_failures_;
  std::ostringstream os;
  os << rng_;
  s.rng_state = os.str();
  return s;
}

void Env::restore(const EnvState& s) {
  body_ = s.body;
  skates_ = s.skates;
  desired_ = s.desired;
  joints_ = s.joints;
  joint_rates_ = s.joint_rates;
  terrain_ = s.terrain;
  steps_ = s.steps;
  ik_failures_ = s.ik_failures;
  std::istringstream is(s.rng_state);
  is >> rng_;
}

}  // namespace skatelab

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "skatelab/app.hpp"

namespace skatelab {
namespace {

constexpr std::array<const char*, 4> kDofNames = {"x", "y", "z", "yaw"};

std::string where(const std::string& source, const YAML::Node& node) {
  const YAML::Mark m = node.Mark();
  if (m.line < 0) return source;
  return source + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
}

// One mapping of the document. Reads known keys and rejects the rest.
class Section {
 public:
  Section(const YAML::Node& node, std::string path, const std::string& source)
      : node_(node), path_(std::move(path)), source_(source) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(where(source_, node_) + ": '" + path_ + "' must be a mapping");
    }
  }

  bool has(const char* key) const { return node_ && node_.IsMap() && node_[key]; }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const YAML::Node v = node_[key];
    out = convert<T>(v, name(key));
  }

  template <typename T, std::size_t N>
  void get_array(const char* key, std::array<T, N>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const YAML::Node v = node_[key];
    if (!v.IsSequence() || v.size() != N) {
      throw ConfigError(where(source_, v) + ": '" + name(key) + "' must be a list of " +
                        std::to_string(N) + " values");
    }
    for (std::size_t i = 0; i < N; ++i) out[i] = convert<T>(v[i], name(key));
  }

  void get_range(const char* key, Range& out) {
    std::array<double, 2> r{out.lo, out.hi};
    get_array(key, r);
    out = {r[0], r[1]};
    if (has(key) && !(out.lo <= out.hi)) {
      throw ConfigError(where(source_, node_[key]) + ": '" + name(key) +
                        "' must be [low, high] with low <= high");
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), name(key), source_);
  }

  YAML::Node node(const char* key) const { return has(key) ? node_[key] : YAML::Node(); }
  void mark(const char* key) { seen_.insert(key); }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) {
        throw ConfigError(where(source_, kv.first) + ": unknown key '" +
                          (path_.empty() ? key : path_ + "." + key) + "'");
      }
    }
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  const std::string& source() const { return source_; }

 private:
  template <typename T>
  T convert(const YAML::Node& v, const std::string& what) const {
    if (!v.IsScalar()) {
      throw ConfigError(where(source_, v) + ": '" + what + "' must be a scalar");
    }
    try {
      return v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(where(source_, v) + ": '" + what + "' has invalid value '" +
                        v.Scalar() + "'");
    }
  }

  YAML::Node node_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> seen_;
};

template <typename Parse>
auto parse_enum(Section& s, const char* key, Parse parse) -> std::optional<decltype(parse(""))> {
  std::string text;
  s.get(key, text);
  if (text.empty()) return std::nullopt;
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where(s.source(), s.node(key)) + ": " + e.what());
  }
}

IkFamily parse_family(std::string_view s) {
  if (s == "elbow-up") return IkFamily::kElbowUp;
  if (s == "elbow-down") return IkFamily::kElbowDown;
  throw std::invalid_argument("unknown IK family '" + std::string(s) +
                              "' (expected elbow-up or elbow-down)");
}

std::string_view family_name(IkFamily f) {
  return f == IkFamily::kElbowUp ? "elbow-up" : "elbow-down";
}

void read_terrain_ranges(Section s, TerrainRanges& t) {
  s.get_range("amplitude", t.amplitude);
  s.get_range("friction", t.friction);
  s.get_range("offset", t.offset);
  s.finish();
}

void read_env(Section s, EnvConfig& e) {
  s.mark("variant");
  s.mark("task");
  s.get("dt", e.dt);
  s.get_array("cartesian_offset", e.cartesian_offset);
  s.get("joint_offset", e.joint_offset);
  {
    Section w = s.child("workspace_offset");
    for (int d = 0; d < 4; ++d) w.get_range(kDofNames[d], e.workspace_offset[d]);
    w.finish();
  }
  {
    Section a = s.child("actuated");
    for (int d = 0; d < 4; ++d) {
      bool v = e.actuated[d];
      a.get(kDofNames[d], v);
      e.actuated[d] = v;
    }
    a.finish();
  }
  s.get("max_steps", e.max_steps);
  std::array<double, 3> goal{e.goal.x, e.goal.y, e.goal.z};
  s.get_array("goal", goal);
  e.goal = {goal[0], goal[1], goal[2]};
  s.get("success_radius", e.success_radius);
  s.get("gamma", e.gamma);
  read_terrain_ranges(s.child("terrain"), e.terrain);
  {
    Section p = s.child("perturbation");
    p.get("body_xy", e.perturbation.body_xy);
    p.get("body_yaw", e.perturbation.body_yaw);
    p.get("body_velocity", e.perturbation.body_velocity);
    p.get("skate_y", e.perturbation.skate_y);
    p.get("skate_yaw", e.perturbation.skate_yaw);
    p.get("joint", e.perturbation.joint);
    p.finish();
  }
  if (s.has("nominal")) {
    const YAML::Node n = s.node("nominal");
    if (!n.IsSequence() || n.size() != kNumSkates) {
      throw ConfigError(where(s.source(), n) + ": 'env.nominal' must list 4 skate poses");
    }
    for (int i = 0; i < kNumSkates; ++i) {
      if (!n[i].IsSequence() || n[i].size() != 4) {
        throw ConfigError(where(s.source(), n[i]) + ": nominal pose must be [x, y, z, yaw]");
      }
      for (int d = 0; d < 4; ++d) {
        try {
          e.nominal[i][d] = n[i][d].as<double>();
        } catch (const YAML::Exception&) {
          throw ConfigError(where(s.source(), n[i][d]) + ": 'env.nominal' has invalid value");
        }
      }
    }
  }
  s.mark("nominal");
  s.get("capsule_radius", e.capsule_radius);
  s.get("elbow_clearance", e.elbow_clearance);
  s.get("body_half_height", e.body_half_height);
  s.get("max_tilt", e.max_tilt);
  s.get("joint_rate_limit", e.joint_rate_limit);
  s.get("reset_retries", e.reset_retries);
  s.finish();
}

void read_sim(Section s, SimParams& p) {
  s.get("torso_mass", p.torso_mass);
  s.get("per_limb_mass", p.per_limb_mass);
  s.get("gravity", p.gravity);
  s.get("lateral_friction_scale", p.lateral_friction_scale);
  s.get("rolling_resistance", p.rolling_resistance);
  s.get("torso_length", p.torso_length);
  s.get("torso_width", p.torso_width);
  s.finish();
}

void read_kin(Section s, KinConfig& k) {
  LimbGeometry& ref = k.limbs[0];
  double upper = ref.upper_length, lower = ref.lower_length, drop = ref.wrist_drop;
  std::array<double, 4> lo = ref.limits.lower, hi = ref.limits.upper;
  s.get("upper_length", upper);
  s.get("lower_length", lower);
  s.get("wrist_drop", drop);
  s.get_array("joint_lower", lo);
  s.get_array("joint_upper", hi);
  std::array<std::array<double, 3>, kNumSkates> mounts;
  for (int i = 0; i < kNumSkates; ++i) {
    const Vec3& m = k.limbs[i].mount_offset;
    mounts[i] = {m.x, m.y, m.z};
  }
  if (s.has("mounts")) {
    const YAML::Node n = s.node("mounts");
    if (!n.IsSequence() || n.size() != kNumSkates) {
      throw ConfigError(where(s.source(), n) + ": 'kin.mounts' must list 4 points");
    }
    for (int i = 0; i < kNumSkates; ++i) {
      if (!n[i].IsSequence() || n[i].size() != 3) {
        throw ConfigError(where(s.source(), n[i]) + ": mount must be [x, y, z]");
      }
      for (int d = 0; d < 3; ++d) {
        try {
          mounts[i][d] = n[i][d].as<double>();
        } catch (const YAML::Exception&) {
          throw ConfigError(where(s.source(), n[i][d]) + ": 'kin.mounts' has invalid value");
        }
      }
    }
  }
  s.mark("mounts");
  for (int i = 0; i < kNumSkates; ++i) {
    LimbGeometry& l = k.limbs[i];
    l.upper_length = upper;
    l.lower_length = lower;
    l.wrist_drop = drop;
    l.limits.lower = lo;
    l.limits.upper = hi;
    l.mount_offset = {mounts[i][0], mounts[i][1], mounts[i][2]};
  }
  s.get_array("quantization", k.quantization.step);
  if (auto m = parse_enum(s, "table_mode", parse_ik_mode)) k.table_mode = *m;
  if (auto f = parse_enum(s, "family", parse_family)) k.family = *f;
  s.get("table_dir", k.table_dir);
  s.finish();
}

void read_rl(Section s, TrainConfig& t) {
  s.get("total_timesteps", t.total_timesteps);
  s.get("horizon", t.horizon);
  s.get("num_envs", t.num_envs);
  s.get("minibatches", t.minibatches);
  s.get("epochs", t.epochs);
  s.get("clip", t.clip);
  s.get("gamma", t.gamma);
  s.get("lambda", t.lambda);
  s.get("learning_rate", t.learning_rate);
  s.get("value_coef", t.value_coef);
  s.get("entropy_coef", t.entropy_coef);
  s.get("max_grad_norm", t.max_grad_norm);
  s.get("normalize_advantages", t.normalize_advantages);
  s.get("normalize_observations", t.normalize_observations);
  s.get("normalize_rewards", t.normalize_rewards);
  s.get("hidden", t.hidden);
  s.get("curve_window", t.curve_window);
  s.finish();
}

void read_output(Section s, OutputConfig& o) {
  s.get("directory", o.directory);
  s.get("checkpoint_interval", o.checkpoint_interval);
  s.get("curve", o.curve);
  s.get("trace", o.trace);
  s.get("trace_steps", o.trace_steps);
  s.finish();
}

void read_baseline(Section s, BaselineConfig& b) {
  s.get("y_amplitude", b.y_amplitude);
  s.get("yaw_amplitude", b.yaw_amplitude);
  s.get("omega", b.omega);
  s.get("front_rear_phase", b.front_rear_phase);
  s.finish();
}

void read_eval(Section s, EvalConfig& e) {
  s.get("trials", e.trials);
  s.get("greedy", e.greedy);
  read_terrain_ranges(s.child("terrain"), e.terrain);
  s.get("transfer_episodes", e.transfer_episodes);
  s.finish();
}

void emit_range(YAML::Emitter& y, const char* key, const Range& r) {
  y << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << r.lo << r.hi
    << YAML::EndSeq;
}

template <typename Seq>
void emit_seq(YAML::Emitter& y, const char* key, const Seq& values) {
  y << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& v : values) y << v;
  y << YAML::EndSeq;
}

void emit_terrain(YAML::Emitter& y, const TerrainRanges& t) {
  y << YAML::Key << "terrain" << YAML::Value << YAML::BeginMap;
  emit_range(y, "amplitude", t.amplitude);
  emit_range(y, "friction", t.friction);
  emit_range(y, "offset", t.offset);
  y << YAML::EndMap;
}

}  // namespace

void BaselineConfig::validate() const {
  if (!(y_amplitude >= 0.0 && yaw_amplitude >= 0.0 && omega > 0.0)) {
    throw ConfigError("baseline: amplitudes must be >= 0 and omega > 0");
  }
}

void RunConfig::validate() const {
  try {
    env.validate();
    SimParams s = sim;
    s.dt = env.dt;
    s.validate();
    for (const LimbGeometry& l : kin.limbs) l.validate();
    for (double q : kin.quantization.step) {
      if (!(q > 0.0)) throw std::invalid_argument("kin.quantization steps must be > 0");
    }
    rl.validate();
    baseline.validate();
    if (output.directory.empty()) throw std::invalid_argument("output.directory is empty");
    if (output.checkpoint_interval < 0) {
      throw std::invalid_argument("output.checkpoint_interval must be >= 0");
    }
    if (output.trace_steps <= 0) throw std::invalid_argument("output.trace_steps must be > 0");
    if (eval.trials < 0) throw std::invalid_argument("eval.trials must be >= 0");
    if (eval.transfer_episodes <= 0) {
      throw std::invalid_argument("eval.transfer_episodes must be > 0");
    }
    for (const Range& r : {eval.terrain.amplitude, eval.terrain.friction, eval.terrain.offset}) {
      if (!(r.lo <= r.hi)) throw std::invalid_argument("eval.terrain ranges must be ordered");
    }
    if (eval.terrain.amplitude.lo < 0.0 || eval.terrain.friction.lo <= 0.0 ||
        eval.terrain.friction.hi > 2.0 || eval.terrain.offset.lo < -1.0 ||
        eval.terrain.offset.hi > 1.0) {
      throw std::invalid_argument("eval.terrain ranges exceed terrain bounds");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig default_run_config(Variant variant, Task task) {
  RunConfig c;
  c.env = task == Task::kForward ? forward_task_config(variant) : goal_task_config(variant);
  if (variant == Variant::kFSCS) c.kin.table_mode = IkMode::kEager;
  c.output.directory = "runs/" + std::string(to_string(variant)) + "-" +
                       std::string(to_string(task));
  return c;
}

RunConfig parse_run_config(const std::string& text, const ConfigOverrides& overrides,
                           const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  Section top(root, "", source);
  Section env = top.child("env");

  Variant variant = Variant::kSS;
  Task task = Task::kForward;
  if (auto v = parse_enum(env, "variant", parse_variant)) variant = *v;
  if (auto t = parse_enum(env, "task", parse_task)) task = *t;
  if (overrides.variant) variant = *overrides.variant;
  if (overrides.task) task = *overrides.task;

  RunConfig c = default_run_config(variant, task);
  top.get("seed", c.seed);
  read_env(env, c.env);
  read_sim(top.child("sim"), c.sim);
  read_kin(top.child("kin"), c.kin);
  read_rl(top.child("rl"), c.rl);
  read_output(top.child("output"), c.output);
  read_baseline(top.child("baseline"), c.baseline);
  read_eval(top.child("eval"), c.eval);
  top.finish();

  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.out) c.output.directory = *overrides.out;
  c.rl.seed = c.seed;
  c.sim.dt = c.env.dt;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  if (path.empty()) return parse_run_config("{}", overrides, "<defaults>");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), overrides, path.string());
}

std::string dump_run_config(const RunConfig& c) {
  YAML::Emitter y;
  y.SetDoublePrecision(17);
  y << YAML::BeginMap;
  y << YAML::Key << "seed" << YAML::Value << c.seed;

  const EnvConfig& e = c.env;
  y << YAML::Key << "env" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "variant" << YAML::Value << std::string(to_string(e.variant));
  y << YAML::Key << "task" << YAML::Value << std::string(to_string(e.task));
  y << YAML::Key << "dt" << YAML::Value << e.dt;
  emit_seq(y, "cartesian_offset", e.cartesian_offset);
  y << YAML::Key << "joint_offset" << YAML::Value << e.joint_offset;
  y << YAML::Key << "workspace_offset" << YAML::Value << YAML::BeginMap;
  for (int d = 0; d < 4; ++d) emit_range(y, kDofNames[d], e.workspace_offset[d]);
  y << YAML::EndMap;
  y << YAML::Key << "actuated" << YAML::Value << YAML::BeginMap;
  for (int d = 0; d < 4; ++d) y << YAML::Key << kDofNames[d] << YAML::Value << e.actuated[d];
  y << YAML::EndMap;
  y << YAML::Key << "max_steps" << YAML::Value << e.max_steps;
  emit_seq(y, "goal", std::array<double, 3>{e.goal.x, e.goal.y, e.goal.z});
  y << YAML::Key << "success_radius" << YAML::Value << e.success_radius;
  y << YAML::Key << "gamma" << YAML::Value << e.gamma;
  emit_terrain(y, e.terrain);
  y << YAML::Key << "perturbation" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "body_xy" << YAML::Value << e.perturbation.body_xy;
  y << YAML::Key << "body_yaw" << YAML::Value << e.perturbation.body_yaw;
  y << YAML::Key << "body_velocity" << YAML::Value << e.perturbation.body_velocity;
  y << YAML::Key << "skate_y" << YAML::Value << e.perturbation.skate_y;
  y << YAML::Key << "skate_yaw" << YAML::Value << e.perturbation.skate_yaw;
  y << YAML::Key << "joint" << YAML::Value << e.perturbation.joint;
  y << YAML::EndMap;
  y << YAML::Key << "nominal" << YAML::Value << YAML::BeginSeq;
  for (const SkatePose& p : e.nominal) {
    y << YAML::Flow << YAML::BeginSeq << p.x << p.y << p.z << p.yaw << YAML::EndSeq;
  }
  y << YAML::EndSeq;
  y << YAML::Key << "capsule_radius" << YAML::Value << e.capsule_radius;
  y << YAML::Key << "elbow_clearance" << YAML::Value << e.elbow_clearance;
  y << YAML::Key << "body_half_height" << YAML::Value << e.body_half_height;
  y << YAML::Key << "max_tilt" << YAML::Value << e.max_tilt;
  y << YAML::Key << "joint_rate_limit" << YAML::Value << e.joint_rate_limit;
  y << YAML::Key << "reset_retries" << YAML::Value << e.reset_retries;
  y << YAML::EndMap;

  const SimParams& s = c.sim;
  y << YAML::Key << "sim" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "torso_mass" << YAML::Value << s.torso_mass;
  y << YAML::Key << "per_limb_mass" << YAML::Value << s.per_limb_mass;
  y << YAML::Key << "gravity" << YAML::Value << s.gravity;
  y << YAML::Key << "lateral_friction_scale" << YAML::Value << s.lateral_friction_scale;
  y << YAML::Key << "rolling_resistance" << YAML::Value << s.rolling_resistance;
  y << YAML::Key << "torso_length" << YAML::Value << s.torso_length;
  y << YAML::Key << "torso_width" << YAML::Value << s.torso_width;
  y << YAML::EndMap;

  const KinConfig& k = c.kin;
  const LimbGeometry& l = k.limbs[0];
  y << YAML::Key << "kin" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "upper_length" << YAML::Value << l.upper_length;
  y << YAML::Key << "lower_length" << YAML::Value << l.lower_length;
  y << YAML::Key << "wrist_drop" << YAML::Value << l.wrist_drop;
  emit_seq(y, "joint_lower", l.limits.lower);
  emit_seq(y, "joint_upper", l.limits.upper);
  y << YAML::Key << "mounts" << YAML::Value << YAML::BeginSeq;
  for (const LimbGeometry& limb : k.limbs) {
    const Vec3& m = limb.mount_offset;
    y << YAML::Flow << YAML::BeginSeq << m.x << m.y << m.z << YAML::EndSeq;
  }
  y << YAML::EndSeq;
  emit_seq(y, "quantization", k.quantization.step);
  y << YAML::Key << "table_mode" << YAML::Value << std::string(to_string(k.table_mode));
  y << YAML::Key << "family" << YAML::Value << std::string(family_name(k.family));
  y << YAML::Key << "table_dir" << YAML::Value << k.table_dir;
  y << YAML::EndMap;

  const TrainConfig& t = c.rl;
  y << YAML::Key << "rl" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "total_timesteps" << YAML::Value << t.total_timesteps;
  y << YAML::Key << "horizon" << YAML::Value << t.horizon;
  y << YAML::Key << "num_envs" << YAML::Value << t.num_envs;
  y << YAML::Key << "minibatches" << YAML::Value << t.minibatches;
  y << YAML::Key << "epochs" << YAML::Value << t.epochs;
  y << YAML::Key << "clip" << YAML::Value << t.clip;
  y << YAML::Key << "gamma" << YAML::Value << t.gamma;
  y << YAML::Key << "lambda" << YAML::Value << t.lambda;
  y << YAML::Key << "learning_rate" << YAML::Value << t.learning_rate;
  y << YAML::Key << "value_coef" << YAML::Value << t.value_coef;
  y << YAML::Key << "entropy_coef" << YAML::Value << t.entropy_coef;
  y << YAML::Key << "max_grad_norm" << YAML::Value << t.max_grad_norm;
  y << YAML::Key << "normalize_advantages" << YAML::Value << t.normalize_advantages;
  y << YAML::Key << "normalize_observations" << YAML::Value << t.normalize_observations;
  y << YAML::Key << "normalize_rewards" << YAML::Value << t.normalize_rewards;
  y << YAML::Key << "hidden" << YAML::Value << t.hidden;
  y << YAML::Key << "curve_window" << YAML::Value << t.curve_window;
  y << YAML::EndMap;

  const OutputConfig& o = c.output;
  y << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "directory" << YAML::Value << o.directory;
  y << YAML::Key << "checkpoint_interval" << YAML::Value << o.checkpoint_interval;
  y << YAML::Key << "curve" << YAML::Value << o.curve;
  y << YAML::Key << "trace" << YAML::Value << o.trace;
  y << YAML::Key << "trace_steps" << YAML::Value << o.trace_steps;
  y << YAML::EndMap;

  const BaselineConfig& b = c.baseline;
  y << YAML::Key << "baseline" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "y_amplitude" << YAML::Value << b.y_amplitude;
  y << YAML::Key << "yaw_amplitude" << YAML::Value << b.yaw_amplitude;
  y << YAML::Key << "omega" << YAML::Value << b.omega;
  y << YAML::Key << "front_rear_phase" << YAML::Value << b.front_rear_phase;
  y << YAML::EndMap;

  y << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "trials" << YAML::Value << c.eval.trials;
  y << YAML::Key << "greedy" << YAML::Value << c.eval.greedy;
  emit_terrain(y, c.eval.terrain);
  y << YAML::Key << "transfer_episodes" << YAML::Value << c.eval.transfer_episodes;
  y << YAML::EndMap;

  y << YAML::EndMap;
  return std::string(y.c_str()) + "\n";
}

}  // namespace skatelab

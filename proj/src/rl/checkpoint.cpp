#include <fstream>

#include "skatelab/train.hpp"

namespace skatelab {
namespace {

constexpr char kMagic[8] = {'S', 'K', 'C', 'K', 'P', 'T', '0', '1'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void vec(const Eigen::VectorXd& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  template <typename T>
  void list(const std::vector<T>& v) {
    pod<std::uint64_t>(v.size());
    for (const T& x : v) pod(x);
  }
  void pose(const SkatePose& p) {
    for (int d = 0; d < 4; ++d) pod(p[d]);
  }
  void vec3(const Vec3& v) {
    pod(v.x);
    pod(v.y);
    pod(v.z);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw std::runtime_error("checkpoint: truncated file");
    return v;
  }
  std::uint64_t count() {
    const auto n = pod<std::uint64_t>();
    if (n > (std::uint64_t{1} << 32)) throw std::runtime_error("checkpoint: implausible length");
    return n;
  }
  std::string str() {
    std::string s(count(), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) throw std::runtime_error("checkpoint: truncated file");
    return s;
  }
  Eigen::VectorXd vec() {
    Eigen::VectorXd v(static_cast<Eigen::Index>(count()));
    in_.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in_) throw std::runtime_error("checkpoint: truncated file");
    return v;
  }
  template <typename T>
  std::vector<T> list() {
    std::vector<T> v(count());
    for (T& x : v) x = pod<T>();
    return v;
  }
  SkatePose pose() {
    SkatePose p;
    for (int d = 0; d < 4; ++d) p[d] = pod<double>();
    return p;
  }
  Vec3 vec3() {
    Vec3 v;
    v.x = pod<double>();
    v.y = pod<double>();
    v.z = pod<double>();
    return v;
  }

 private:
  std::istream& in_;
};

void write_mlp(Writer& w, const Mlp& m) {
  w.list(m.sizes());
  w.vec(m.params());
}

Mlp read_mlp(Reader& r) {
  Mlp m(r.list<int>());
  Eigen::VectorXd p = r.vec();
  if (p.size() != m.param_count()) throw std::runtime_error("checkpoint: layer shape mismatch");
  m.params() = p;
  return m;
}

void write_rms(Writer& w, const RunningMeanStd& s) {
  w.vec(s.mean);
  w.vec(s.var);
  w.pod(s.count);
}

RunningMeanStd read_rms(Reader& r) {
  RunningMeanStd s;
  s.mean = r.vec();
  s.var = r.vec();
  s.count = r.pod<double>();
  return s;
}

void write_env(Writer& w, const EnvState& s) {
  w.vec3(s.body.position);
  const UnitQuat& q = s.body.orientation;
  for (double c : {q.w(), q.x(), q.y(), q.z()}) w.pod(c);
  w.vec3(s.body.linear_velocity);
  w.vec3(s.body.angular_velocity);
  for (const SkatePose& p : s.skates.pose) w.pose(p);
  for (const SkatePose& p : s.skates.rate) w.pose(p);
  for (const SkatePose& p : s.desired) w.pose(p);
  for (double j : s.joints) w.pod(j);
  for (double j : s.joint_rates) w.pod(j);
  const Terrain& t = s.terrain;
  for (double v : {t.amplitude, t.period, t.offset_x, t.offset_y, t.friction}) w.pod(v);
  w.pod(s.steps);
  w.pod(s.ik_failures);
  w.str(s.rng_state);
}

EnvState read_env(Reader& r) {
  EnvState s;
  s.body.position = r.vec3();
  const double qw = r.pod<double>(), qx = r.pod<double>(), qy = r.pod<double>(),
               qz = r.pod<double>();
  s.body.orientation = UnitQuat::from_stored(qw, qx, qy, qz);
  s.body.linear_velocity = r.vec3();
  s.body.angular_velocity = r.vec3();
  for (SkatePose& p : s.skates.pose) p = r.pose();
  for (SkatePose& p : s.skates.rate) p = r.pose();
  for (SkatePose& p : s.desired) p = r.pose();
  for (double& j : s.joints) j = r.pod<double>();
  for (double& j : s.joint_rates) j = r.pod<double>();
  Terrain& t = s.terrain;
  for (double* v : {&t.amplitude, &t.period, &t.offset_x, &t.offset_y, &t.friction}) {
    *v = r.pod<double>();
  }
  s.steps = r.pod<int>();
  s.ik_failures = r.pod<std::uint64_t>();
  s.rng_state = r.str();
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.pod(c.version);
    w.pod(static_cast<std::uint8_t>(c.variant));
    w.pod(static_cast<std::uint8_t>(c.task));
    w.pod(c.observation_size);
    w.pod(c.action_heads);
    w.pod(c.seed);
    w.pod(c.timestep);
    w.pod(c.updates);

    w.pod(static_cast<std::uint8_t>(c.net.normalize_observations));
    write_mlp(w, c.net.policy);
    write_mlp(w, c.net.value);
    write_rms(w, c.net.obs_rms);

    w.vec(c.adam.m);
    w.vec(c.adam.v);
    w.pod(c.adam.t);
    write_rms(w, c.reward_rms);
    w.list(c.reward_accum);

    w.str(c.rng_state);
    w.pod<std::uint64_t>(c.envs.size());
    for (const EnvState& e : c.envs) write_env(w, e);
    w.list(c.episode_return);
    w.list(c.episode_length);
    w.list(c.recent_returns);
    w.list(c.recent_lengths);
    w.pod(c.episodes);
    w.pod(c.wall_clock_s);
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("checkpoint: file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw std::runtime_error("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  Reader r(in);
  Checkpoint c;
  c.version = r.pod<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(c.version));
  }
  const auto variant = r.pod<std::uint8_t>();
  const auto task = r.pod<std::uint8_t>();
  if (variant > 2 || task > 1) throw std::runtime_error("checkpoint: bad variant or task tag");
  c.variant = static_cast<Variant>(variant);
  c.task = static_cast<Task>(task);
  c.observation_size = r.pod<int>();
  c.action_heads = r.pod<int>();
  c.seed = r.pod<std::uint64_t>();
  c.timestep = r.pod<std::int64_t>();
  c.updates = r.pod<std::int64_t>();

  c.net.normalize_observations = r.pod<std::uint8_t>() != 0;
  c.net.policy = read_mlp(r);
  c.net.value = read_mlp(r);
  c.net.obs_rms = read_rms(r);
  if (c.net.observation_size() != c.observation_size ||
      c.net.action_heads() != c.action_heads ||
      c.net.value.input_size() != c.observation_size || c.net.value.output_size() != 1 ||
      c.net.obs_rms.mean.size() != c.observation_size ||
      c.net.obs_rms.var.size() != c.observation_size) {
    throw std::runtime_error("checkpoint: network shapes disagree with the header");
  }

  c.adam.m = r.vec();
  c.adam.v = r.vec();
  c.adam.t = r.pod<std::int64_t>();
  c.reward_rms = read_rms(r);
  c.reward_accum = r.list<double>();

  c.rng_state = r.str();
  c.envs.resize(r.count());
  for (EnvState& e : c.envs) e = read_env(r);
  c.episode_return = r.list<double>();
  c.episode_length = r.list<int>();
  c.recent_returns = r.list<double>();
  c.recent_lengths = r.list<double>();
  c.episodes = r.pod<std::int64_t>();
  c.wall_clock_s = r.pod<double>();
  return c;
}

}  // namespace skatelab

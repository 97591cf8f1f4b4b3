#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "skatelab/app.hpp"

namespace fs = std::filesystem;

namespace skatelab {
namespace {

std::ostream& out_of(const CommandContext& ctx) { return ctx.out ? *ctx.out : std::cout; }

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

fs::path table_file(const fs::path& dir, int limb) {
  return dir / ("ik_table_" + std::to_string(limb) + ".bin");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

void write_config(const RunConfig& config, const fs::path& dir) {
  std::ofstream out(dir / "config.yaml");
  if (!out) throw std::runtime_error("cannot write " + (dir / "config.yaml").string());
  out << dump_run_config(config);
}

std::string action_string(const Action& a) {
  std::string s;
  for (int v : a) s += static_cast<char>('0' + v);
  return s;
}

}  // namespace

KinSetup kin_setup(const RunConfig& c) {
  KinSetup k;
  k.limbs = c.kin.limbs;
  k.quantization = c.kin.quantization;
  k.mode = c.kin.table_mode;
  k.family = c.kin.family;
  return k;
}

IkTableSet load_or_build_tables(const RunConfig& config) {
  if (config.env.variant != Variant::kFSCS || config.kin.table_mode == IkMode::kDirect) return {};
  const KinSetup kin = kin_setup(config);
  if (config.kin.table_dir.empty() || config.kin.table_mode == IkMode::kLazy) {
    return make_ik_tables(config.env, kin);
  }
  IkTableSet tables;
  for (int i = 0; i < kNumSkates; ++i) {
    IkTable t = IkTable::load(table_file(config.kin.table_dir, i), kin.limbs[i]);
    const Workspace want = config.env.skate_workspace(i);
    for (int d = 0; d < 4; ++d) {
      if (t.quantization().step[d] != kin.quantization.step[d] ||
          t.workspace().bounds[d].lo != want.bounds[d].lo ||
          t.workspace().bounds[d].hi != want.bounds[d].hi) {
        throw ConfigError("ik table " + table_file(config.kin.table_dir, i).string() +
                          " was built for a different workspace or quantization");
      }
    }
    tables[i] = std::make_shared<IkTable>(std::move(t));
  }
  return tables;
}

EnvFactory make_env_factory(const RunConfig& config) {
  const IkTableSet tables = load_or_build_tables(config);
  const KinSetup kin = kin_setup(config);
  return [config, tables, kin](int index) {
    return Env(config.env, config.sim, kin, tables, derive_seed(config.seed, index));
  };
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const fs::path& path) {
  std::ofstream out = open_csv(path);
  out << "timestep,ep_rew_mean,ep_len_mean,wall_clock_s\n";
  for (const CurvePoint& p : curve) {
    out << p.timestep << ',' << p.ep_rew_mean << ',' << p.ep_len_mean << ',' << p.wall_clock_s
        << '\n';
  }
}

std::vector<CurvePoint> read_curve_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<CurvePoint> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 4) throw std::runtime_error("malformed row in " + path.string());
    curve.push_back({std::stoll(c[0]), parse_double(c[1]), parse_double(c[2]),
                     parse_double(c[3])});
  }
  return curve;
}

void write_trace_csv(const RunConfig& config, const PolicyNet& net, int steps,
                     const fs::path& path) {
  Env env(config.env, config.sim, kin_setup(config), load_or_build_tables(config),
          derive_seed(config.seed, 5000));
  env.set_max_steps(steps);
  std::mt19937_64 rng(derive_seed(config.seed, 5001));
  std::ofstream out = open_csv(path);
  out << "step,t,x,y,z,yaw";
  for (int i = 1; i <= kNumSkates; ++i) out << ",y_" << i;
  for (int i = 1; i <= kNumSkates; ++i) out << ",phi_" << i;
  out << ",action,reward,reason\n";
  auto row = [&](const std::string& action, double reward, Termination reason) {
    const BodyState& b = env.body();
    out << env.steps() << ',' << env.steps() * config.env.dt << ',' << b.position.x << ','
        << b.position.y << ',' << b.position.z << ',' << b.orientation.yaw();
    for (const SkatePose& s : env.skates().pose) out << ',' << s.y;
    for (const SkatePose& s : env.skates().pose) out << ',' << s.yaw;
    out << ',' << action << ',' << reward << ',' << to_string(reason) << '\n';
  };
  Observation obs = env.reset();
  row("", 0.0, Termination::kNone);
  for (int n = 0; n < steps; ++n) {
    const Action a = sample(forward(net, obs).logits, rng).action;
    const StepResult step = env.apply_action(a);
    row(action_string(a), step.reward, step.reason);
    if (step.done) break;
    obs = step.observation;
  }
}

TrainResult cmd_train(const RunConfig& config, const CommandContext& ctx,
                      const std::optional<fs::path>& resume, const PolicyNet* init) {
  config.validate();
  const fs::path dir = config.output.directory;
  fs::create_directories(dir / "checkpoints");
  write_config(config, dir);
  std::ostream& log = out_of(ctx);

  const EnvFactory factory = make_env_factory(config);
  std::optional<Checkpoint> start;
  std::vector<CurvePoint> curve;
  if (resume) {
    start = load_checkpoint(*resume);
    check_dimensions(*start, factory(0));
    if (fs::exists(dir / "curve.csv")) {
      for (const CurvePoint& p : read_curve_csv(dir / "curve.csv")) {
        if (p.timestep <= start->timestep) curve.push_back(p);
      }
    }
  }

  const fs::path curve_path = dir / "curve.csv";
  std::ofstream curve_out;
  if (config.output.curve) {
    write_curve_csv(curve, curve_path);
    curve_out.open(curve_path, std::ios::app);
    curve_out << std::setprecision(17);
  }
  TrainHooks hooks;
  hooks.checkpoint_interval = config.output.checkpoint_interval;
  hooks.on_curve = [&](const CurvePoint& p) {
    if (curve_out.is_open()) {
      curve_out << p.timestep << ',' << p.ep_rew_mean << ',' << p.ep_len_mean << ','
                << p.wall_clock_s << '\n';
      curve_out.flush();
    }
    log << "step " << p.timestep << "  ep_rew_mean " << p.ep_rew_mean << "  ep_len_mean "
        << p.ep_len_mean << '\n';
  };
  hooks.on_checkpoint = [&](const Checkpoint& c) {
    save_checkpoint(c, dir / "checkpoints" / ("step_" + std::to_string(c.timestep) + ".bin"));
    save_checkpoint(c, dir / "checkpoint.bin");
  };
  TrainInit ti;
  ti.resume = start ? &*start : nullptr;
  ti.net = init;
  TrainConfig rl = config.rl;
  rl.seed = config.seed;
  TrainResult result = train(factory, rl, hooks, ti);

  {
    std::ofstream t = open_csv(dir / "timing.csv");
    t << "steps,seconds,seconds_per_10k\n"
      << result.steps << ',' << result.seconds << ',' << result.seconds_per_10k << '\n';
  }
  if (result.aborted) throw std::runtime_error(result.error);
  if (config.output.trace) {
    write_trace_csv(config, result.checkpoint.net, config.output.trace_steps, dir / "trace.csv");
  }
  log << "trained " << result.steps << " steps in " << result.seconds << " s ("
      << result.seconds_per_10k << " s per 1e4 steps); artifacts in " << dir.string() << '\n';
  return result;
}

EvalReport cmd_eval(const RunConfig& config, const fs::path& checkpoint, int trials, bool greedy,
                    const CommandContext& ctx) {
  config.validate();
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  check_dimensions(ckpt, make_env_factory(config)(0));
  const EvalReport report = evaluate_policy(config, ckpt.net, trials, greedy);
  const fs::path dir = config.output.directory;
  fs::create_directories(dir);
  write_config(config, dir);
  write_report(report, dir / "eval_report.yaml");
  write_scatter_csv(report, dir / "scatter.csv");
  out_of(ctx) << "policy successes: " << report.successes << " / " << report.trials << '\n';
  return report;
}

EvalReport cmd_baseline(const RunConfig& config, int trials, const CommandContext& ctx) {
  config.validate();
  const EvalReport report = evaluate_baseline(config, trials);
  const fs::path dir = config.output.directory;
  fs::create_directories(dir);
  write_config(config, dir);
  write_report(report, dir / "baseline_report.yaml");
  write_scatter_csv(report, dir / "baseline_scatter.csv");
  out_of(ctx) << "baseline successes: " << report.successes << " / " << report.trials << '\n';
  return report;
}

void cmd_iktable_build(const RunConfig& config, const fs::path& dir, const CommandContext& ctx) {
  config.validate();
  fs::create_directories(dir);
  std::ostream& log = out_of(ctx);
  for (int i = 0; i < kNumSkates; ++i) {
    const IkTable t = IkTable::build(config.kin.limbs[i], config.env.skate_workspace(i),
                                     config.kin.quantization);
    const IkTableStats s = t.stats();
    if (s.entries == 0) {
      throw std::runtime_error("limb " + std::to_string(i) +
                               ": workspace lies outside the reachable region");
    }
    t.save(table_file(dir, i));
    log << table_file(dir, i).string() << ": " << s.entries << " of " << s.grid_points
        << " grid points solved, " << s.solutions << " solutions\n";
  }
}

void cmd_iktable_inspect(const fs::path& path, const CommandContext& ctx) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (int i = 0; i < kNumSkates; ++i) files.push_back(table_file(path, i));
  } else {
    files.push_back(path);
  }
  std::ostream& log = out_of(ctx);
  for (const fs::path& f : files) {
    const IkTable::FileHeader h = IkTable::read_header(f);
    log << f.string() << "\n  geometry hash " << std::hex << h.geometry_hash << std::dec
        << "\n  entries " << h.entries << "\n  workspace";
    for (const Range& r : h.workspace.bounds) log << " [" << r.lo << ", " << r.hi << "]";
    log << "\n  quantization";
    for (double q : h.quantization.step) log << ' ' << q;
    log << '\n';
  }
}

IkBenchResult cmd_iktable_bench(const RunConfig& config, const CommandContext& ctx) {
  config.validate();
  const LimbGeometry& limb = config.kin.limbs[0];
  const Workspace ws = config.env.skate_workspace(0);
  const IkTable table = IkTable::build(limb, ws, config.kin.quantization);
  std::mt19937_64 rng(derive_seed(config.seed, 7000));
  constexpr int kCalls = 200'000;
  std::vector<SkatePose> poses(kCalls);
  for (SkatePose& p : poses) {
    for (int d = 0; d < 4; ++d) p[d] = uniform(rng, ws.bounds[d].lo, ws.bounds[d].hi);
  }
  using Clock = std::chrono::steady_clock;
  volatile double sink = 0.0;
  auto t0 = Clock::now();
  for (const SkatePose& p : poses) {
    const IkResult r = ik(limb, p, config.kin.family);
    sink = sink + r.joints[0];
  }
  auto t1 = Clock::now();
  for (const SkatePose& p : poses) {
    if (auto q = table.lookup(p, config.kin.family)) sink = sink + (*q)[0];
  }
  auto t2 = Clock::now();
  IkBenchResult r;
  r.direct_ns = std::chrono::duration<double, std::nano>(t1 - t0).count() / kCalls;
  r.lookup_ns = std::chrono::duration<double, std::nano>(t2 - t1).count() / kCalls;
  r.episode_direct_ms = r.direct_ns * 4000 * 1e-6;
  r.episode_lookup_ms = r.lookup_ns * 4000 * 1e-6;
  out_of(ctx) << "direct ik: " << r.direct_ns << " ns/call, table lookup: " << r.lookup_ns
              << " ns/call\nper episode (4 calls x 1000 steps): direct " << r.episode_direct_ms
              << " ms, table " << r.episode_lookup_ms << " ms\n";
  return r;
}

std::vector<fs::path> cmd_plotdata(const fs::path& run_dir, const CommandContext& ctx) {
  const std::vector<std::string> required = {"config.yaml", "curve.csv", "timing.csv",
                                             "trace.csv"};
  if (!fs::is_directory(run_dir)) {
    throw std::runtime_error("run directory not found: " + run_dir.string());
  }
  std::vector<fs::path> runs;
  if (fs::exists(run_dir / "curve.csv") || fs::exists(run_dir / "config.yaml")) {
    runs.push_back(run_dir);
  } else {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "curve.csv")) {
        runs.push_back(entry.path());
      }
    }
    std::sort(runs.begin(), runs.end());
  }
  std::vector<std::string> missing;
  if (runs.empty()) {
    for (const std::string& f : required) missing.push_back((run_dir / f).string());
  }
  for (const fs::path& r : runs) {
    for (const std::string& f : required) {
      if (!fs::exists(r / f)) missing.push_back((r / f).string());
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing run artifacts (run 'skatelab train' first):";
    for (const std::string& m : missing) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }

  const fs::path plots = run_dir / "plots";
  fs::create_directories(plots);
  std::vector<fs::path> written;
  auto run_name = [&](const fs::path& r) {
    return r == run_dir ? run_dir.filename().string() : r.filename().string();
  };

  // Learning curves, long format plus mean and std per timestep.
  std::map<std::int64_t, std::vector<std::array<double, 2>>> by_step;
  {
    std::ofstream out = open_csv(plots / "training_curves.csv");
    out << "run,timestep,ep_rew_mean,ep_len_mean,wall_clock_s\n";
    for (const fs::path& r : runs) {
      for (const CurvePoint& p : read_curve_csv(r / "curve.csv")) {
        out << run_name(r) << ',' << p.timestep << ',' << p.ep_rew_mean << ',' << p.ep_len_mean
            << ',' << p.wall_clock_s << '\n';
        by_step[p.timestep].push_back({p.ep_rew_mean, p.ep_len_mean});
      }
    }
    written.push_back(plots / "training_curves.csv");
  }
  {
    std::ofstream out = open_csv(plots / "reward_mean_std.csv");
    out << "timestep,runs,ep_rew_mean,ep_rew_std,ep_len_mean,ep_len_std\n";
    for (const auto& [step, rows] : by_step) {
      std::array<double, 2> mean{}, var{};
      for (const auto& v : rows) {
        for (int k = 0; k < 2; ++k) mean[k] += v[k] / rows.size();
      }
      for (const auto& v : rows) {
        for (int k = 0; k < 2; ++k) var[k] += (v[k] - mean[k]) * (v[k] - mean[k]) / rows.size();
      }
      out << step << ',' << rows.size() << ',' << mean[0] << ',' << std::sqrt(var[0]) << ','
          << mean[1] << ',' << std::sqrt(var[1]) << '\n';
    }
    written.push_back(plots / "reward_mean_std.csv");
  }
  {
    std::ofstream out = open_csv(plots / "wall_clock.csv");
    out << "run,steps,seconds,seconds_per_10k\n";
    for (const fs::path& r : runs) {
      std::ifstream in(r / "timing.csv");
      std::string line;
      std::getline(in, line);
      std::getline(in, line);
      out << run_name(r) << ',' << line << '\n';
    }
    written.push_back(plots / "wall_clock.csv");
  }
  {
    std::ofstream out = open_csv(plots / "trajectory.csv");
    out << "run,t";
    for (int i = 1; i <= kNumSkates; ++i) out << ",y_" << i;
    for (int i = 1; i <= kNumSkates; ++i) out << ",phi_" << i;
    out << '\n';
    for (const fs::path& r : runs) {
      std::ifstream in(r / "trace.csv");
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        const auto c = split_csv(line);
        if (c.size() < 14) continue;
        out << run_name(r);
        for (int k = 1; k < 2 + 2 * kNumSkates; ++k) {
          if (k >= 2 && k < 6) continue;  // body pose columns
          out << ',' << c[k];
        }
        out << '\n';
      }
    }
    written.push_back(plots / "trajectory.csv");
  }
  bool any_scatter = false;
  for (const fs::path& r : runs) {
    any_scatter |= fs::exists(r / "scatter.csv") || fs::exists(r / "baseline_scatter.csv");
  }
  if (any_scatter) {
    std::ofstream out = open_csv(plots / "end_positions.csv");
    out << "run,source,trial,x,y,success\n";
    for (const fs::path& r : runs) {
      for (const auto& [file, source] : {std::pair{"scatter.csv", "policy"},
                                         std::pair{"baseline_scatter.csv", "baseline"}}) {
        if (!fs::exists(r / file)) continue;
        std::ifstream in(r / file);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          const auto c = split_csv(line);
          if (c.size() < 7) continue;
          out << run_name(r) << ',' << source << ',' << c[0] << ',' << c[1] << ',' << c[2] << ','
              << c[6] << '\n';
        }
      }
    }
    written.push_back(plots / "end_positions.csv");
  }
  std::ostream& log = out_of(ctx);
  for (const fs::path& p : written) log << "wrote " << p.string() << '\n';
  return written;
}

TrainResult cmd_transfer(const RunConfig& config, const fs::path& source,
                         const CommandContext& ctx) {
  config.validate();
  const Checkpoint src = load_checkpoint(source);
  const EnvFactory make_env = make_env_factory(config);
  const PolicyNet net = transfer_init(src, make_env(0));

  const fs::path dir = config.output.directory;
  fs::create_directories(dir);
  {
    std::ofstream out = open_csv(dir / "transfer_eval.csv");
    out << "episode,total_reward,length,reason\n";
    const std::uint64_t stream = derive_seed(config.seed, 6000);
    double sum = 0.0;
    for (int k = 0; k < config.eval.transfer_episodes; ++k) {
      Env env = make_env(0);
      env.seed(derive_seed(stream, k));
      std::mt19937_64 rng(derive_seed(stream ^ 0x5bd1e995ull, k));
      const EpisodeResult ep = run_episode(net, env, config.eval.greedy, rng);
      out << k << ',' << ep.total_reward << ',' << ep.length << ',' << to_string(ep.reason)
          << '\n';
      sum += ep.total_reward;
    }
    out_of(ctx) << "transferred policy: mean return " << sum / config.eval.transfer_episodes
                << " over " << config.eval.transfer_episodes << " episodes\n";
  }
  return cmd_train(config, ctx, std::nullopt, &net);
}

}  // namespace skatelab

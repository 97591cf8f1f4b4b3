#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "skatelab/app.hpp"

namespace skatelab {

EvalReport evaluate_policy(const RunConfig& config, const PolicyNet& net, int trials,
                           bool greedy) {
  EnvConfig e = config.env;
  e.terrain = config.eval.terrain;
  const IkTableSet tables = load_or_build_tables(config);
  const KinSetup kin = kin_setup(config);
  const std::uint64_t env_stream = derive_seed(config.seed, 3000);
  const std::uint64_t policy_stream = derive_seed(config.seed, 4000);

  EvalReport report;
  report.source = "policy";
  report.trials = trials;
  report.success_radius = e.success_radius;
  for (int k = 0; k < trials; ++k) {
    Env env(e, config.sim, kin, tables, derive_seed(env_stream, k));
    std::mt19937_64 rng(derive_seed(policy_stream, k));
    const EpisodeResult ep = run_episode(net, env, greedy, rng);
    TrialResult r;
    r.trial = k;
    r.x = ep.final_body.position.x;
    r.y = ep.final_body.position.y;
    r.steps = ep.length;
    r.total_reward = ep.total_reward;
    r.reason = ep.reason;
    r.terrain = env.terrain();
    r.success = goal_distance_xy(ep.final_body, e.goal) < e.success_radius;
    report.successes += r.success;
    report.results.push_back(r);
  }
  return report;
}

void write_scatter_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  out << "trial,x,y,steps,total_reward,reason,success,amplitude,friction,offset_x,offset_y\n";
  for (const TrialResult& r : report.results) {
    out << r.trial << ',' << r.x << ',' << r.y << ',' << r.steps << ',' << r.total_reward << ','
        << to_string(r.reason) << ',' << (r.success ? 1 : 0) << ',' << r.terrain.amplitude << ','
        << r.terrain.friction << ',' << r.terrain.offset_x << ',' << r.terrain.offset_y << '\n';
  }
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  YAML::Emitter y;
  y.SetDoublePrecision(17);
  y << YAML::BeginMap;
  y << YAML::Key << "source" << YAML::Value << report.source;
  y << YAML::Key << "trials" << YAML::Value << report.trials;
  y << YAML::Key << "successes" << YAML::Value << report.successes;
  y << YAML::Key << "success_radius" << YAML::Value << report.success_radius;
  y << YAML::Key << "results" << YAML::Value << YAML::BeginSeq;
  for (const TrialResult& r : report.results) {
    y << YAML::Flow << YAML::BeginMap;
    y << YAML::Key << "trial" << YAML::Value << r.trial;
    y << YAML::Key << "x" << YAML::Value << r.x;
    y << YAML::Key << "y" << YAML::Value << r.y;
    y << YAML::Key << "steps" << YAML::Value << r.steps;
    y << YAML::Key << "reason" << YAML::Value << std::string(to_string(r.reason));
    y << YAML::Key << "success" << YAML::Value << r.success;
    y << YAML::Key << "amplitude" << YAML::Value << r.terrain.amplitude;
    y << YAML::Key << "friction" << YAML::Value << r.terrain.friction;
    y << YAML::Key << "offset" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << r.terrain.offset_x << r.terrain.offset_y << YAML::EndSeq;
    y << YAML::EndMap;
  }
  y << YAML::EndSeq << YAML::EndMap;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << y.c_str() << '\n';
}

int count_scatter_successes(const std::filesystem::path& path, double success_radius,
                            double goal_x, double goal_y) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  int count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string trial, x, y;
    std::getline(ss, trial, ',');
    std::getline(ss, x, ',');
    std::getline(ss, y, ',');
    if (std::hypot(std::stod(x) - goal_x, std::stod(y) - goal_y) < success_radius) ++count;
  }
  return count;
}

}  // namespace skatelab

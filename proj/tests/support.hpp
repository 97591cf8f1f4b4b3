#pragma once

#include <cmath>
#include <random>

#include "skatelab/dynamics.hpp"
#include "skatelab/env.hpp"
#include "skatelab/geom.hpp"
#include "skatelab/kin.hpp"

namespace skatelab::testing {

// Hand-rolled generators for the property tests. Each test owns its engine
// and a fixed seed so failures replay exactly.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return integer(0, 1) == 1; }

  Vec3 vec3(double r) { return {real(-r, r), real(-r, r), real(-r, r)}; }

  UnitQuat quat() {
    return UnitQuat::from_components(real(-1, 1), real(-1, 1), real(-1, 1), real(-1, 1) + 1e-3);
  }

  Terrain terrain() {
    Terrain t;
    t.amplitude = real(0.0, 0.2);
    t.friction = real(0.5, 1.0);
    t.offset_x = real(-1.0, 1.0);
    t.offset_y = real(-1.0, 1.0);
    return t;
  }

  LimbJoints joints(double span = kPi) {
    return {real(-span, span), real(-span, span), real(-span, span), real(-span, span)};
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Skates at the configured nominal stance, at rest.
inline SkateSetpoint nominal_skates(const EnvConfig& c = {}) {
  SkateSetpoint s;
  s.pose = c.nominal;
  return s;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

}  // namespace skatelab::testing

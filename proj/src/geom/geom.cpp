#include "skatelab/geom.hpp"

#include <string>

namespace skatelab {

double wrap_angle(double angle) {
  double a = std::remainder(angle, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

UnitQuat UnitQuat::from_components(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("UnitQuat: zero or non-finite components");
  }
  return UnitQuat(w / n, x / n, y / n, z / n);
}

UnitQuat UnitQuat::from_stored(double w, double x, double y, double z) {
  const UnitQuat q(w, x, y, z);
  if (!(std::abs(q.norm() - 1.0) <= 1e-9)) {
    throw std::invalid_argument("UnitQuat: stored components are not unit length");
  }
  return q;
}

UnitQuat UnitQuat::from_yaw(double yaw) {
  return from_components(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
}

UnitQuat UnitQuat::from_euler(double roll, double pitch, double yaw) {
  const double cr = std::cos(0.5 * roll), sr = std::sin(0.5 * roll);
  const double cp = std::cos(0.5 * pitch), sp = std::sin(0.5 * pitch);
  const double cy = std::cos(0.5 * yaw), sy = std::sin(0.5 * yaw);
  return from_components(cy * cp * cr + sy * sp * sr,
                         cy * cp * sr - sy * sp * cr,
                         cy * sp * cr + sy * cp * sr,
                         sy * cp * cr - cy * sp * sr);
}

UnitQuat UnitQuat::operator*(const UnitQuat& o) const {
  return from_components(w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
                         w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
                         w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
                         w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_);
}

UnitQuat UnitQuat::conjugate() const { return UnitQuat(w_, -x_, -y_, -z_); }

Vec3 UnitQuat::rotate(const Vec3& v) const {
  // v' = v + 2 w (q x v) + 2 q x (q x v)
  const Vec3 q{x_, y_, z_};
  const Vec3 t = q.cross(v) * 2.0;
  return v + t * w_ + q.cross(t);
}

double UnitQuat::yaw() const {
  return std::atan2(2.0 * (w_ * z_ + x_ * y_), 1.0 - 2.0 * (y_ * y_ + z_ * z_));
}

double UnitQuat::pitch() const {
  const double s = 2.0 * (w_ * y_ - z_ * x_);
  if (s >= 1.0) return 0.5 * kPi;
  if (s <= -1.0) return -0.5 * kPi;
  return std::asin(s);
}

double UnitQuat::roll() const {
  return std::atan2(2.0 * (w_ * x_ + y_ * z_), 1.0 - 2.0 * (x_ * x_ + y_ * y_));
}

void Terrain::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("Terrain: " + what);
  };
  if (!(amplitude >= 0.0)) fail("amplitude must be >= 0");
  if (!(period > 0.0)) fail("period must be > 0");
  if (!(friction > 0.0 && friction <= 2.0)) fail("friction must lie in (0, 2]");
  if (!(offset_x >= -1.0 && offset_x <= 1.0) ||
      !(offset_y >= -1.0 && offset_y <= 1.0)) {
    fail("offsets must lie in [-1, 1]");
  }
}

double terrain_height(const Terrain& t, double x, double y) {
  if (t.amplitude == 0.0) return 0.0;
  const double k = 2.0 * kPi / t.period;
  return t.amplitude * std::sin(k * (x - t.offset_x)) *
         std::sin(k * (y - t.offset_y));
}

Slope terrain_slope(const Terrain& t, double x, double y) {
  if (t.amplitude == 0.0) return {};
  const double k = 2.0 * kPi / t.period;
  const double ax = k * (x - t.offset_x);
  const double ay = k * (y - t.offset_y);
  return {t.amplitude * k * std::cos(ax) * std::sin(ay),
          t.amplitude * k * std::sin(ax) * std::cos(ay)};
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = std::generate_canonical<double, 53>(rng);
  return lo + (hi - lo) * u;
}

Terrain terrain_sample(std::mt19937_64& rng, const TerrainRanges& ranges) {
  auto check = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) {
      throw std::invalid_argument(std::string("terrain_sample: inverted ") +
                                  name + " range");
    }
  };
  check(ranges.amplitude, "amplitude");
  check(ranges.friction, "friction");
  check(ranges.offset, "offset");
  if (ranges.amplitude.lo < 0.0) {
    throw std::invalid_argument("terrain_sample: negative amplitude range");
  }
  if (ranges.friction.lo <= 0.0 || ranges.friction.hi > 2.0) {
    throw std::invalid_argument("terrain_sample: friction range outside (0, 2]");
  }
  if (ranges.offset.lo < -1.0 || ranges.offset.hi > 1.0) {
    throw std::invalid_argument("terrain_sample: offset range outside [-1, 1]");
  }
  Terrain t;
  t.amplitude = uniform(rng, ranges.amplitude.lo, ranges.amplitude.hi);
  t.friction = uniform(rng, ranges.friction.lo, ranges.friction.hi);
  t.offset_x = uniform(rng, ranges.offset.lo, ranges.offset.hi);
  t.offset_y = uniform(rng, ranges.offset.lo, ranges.offset.hi);
  return t;
}

double heading_to_goal(const Vec3& position, const UnitQuat& orientation,
                       const Vec3& goal) {
  const double dx = goal.x - position.x;
  const double dy = goal.y - position.y;
  if (dx == 0.0 && dy == 0.0) return 0.0;
  return wrap_angle(std::atan2(dy, dx) - orientation.yaw());
}

}  // namespace skatelab

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace skatelab {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  bool operator==(const Vec3&) const = default;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Unit quaternion (w, x, y, z). Every factory and composition renormalizes,
// so the norm stays within 1e-9 of one.
class UnitQuat {
 public:
  UnitQuat() = default;

  // Normalizes the given components. Throws std::invalid_argument on a zero
  // or non-finite input.
  static UnitQuat from_components(double w, double x, double y, double z);
  // Restores saved components bit for bit. Throws std::invalid_argument
  // when they are not unit length within 1e-9.
  static UnitQuat from_stored(double w, double x, double y, double z);
  static UnitQuat from_yaw(double yaw);
  // Z-Y-X convention: R = Rz(yaw) * Ry(pitch) * Rx(roll).
  static UnitQuat from_euler(double roll, double pitch, double yaw);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  double norm() const { return std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_); }

  UnitQuat operator*(const UnitQuat& o) const;
  UnitQuat conjugate() const;
  Vec3 rotate(const Vec3& v) const;

  // Heading of the rotated body x-axis, in (-pi, pi].
  double yaw() const;
  double pitch() const;
  double roll() const;

  bool operator==(const UnitQuat&) const = default;

 private:
  UnitQuat(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {}

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

// Body-frame skate pose: Cartesian position plus yaw about +z.
struct SkatePose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  double& operator[](int i) { return i == 0 ? x : i == 1 ? y : i == 2 ? z : yaw; }
  double operator[](int i) const {
    return i == 0 ? x : i == 1 ? y : i == 2 ? z : yaw;
  }
  bool operator==(const SkatePose&) const = default;
};

// Closed interval used for sampling ranges.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
};

// Sinusoidal heightfield
//   h(x, y) = A sin(2 pi (x - dx) / period) sin(2 pi (y - dy) / period)
// with a single Coulomb friction coefficient for the whole surface.
struct Terrain {
  double amplitude = 0.0;
  double period = 2.0 * kPi;
  double offset_x = 0.0;
  double offset_y = 0.0;
  double friction = 1.0;

  // Throws std::invalid_argument when any field violates its bounds.
  void validate() const;
  bool operator==(const Terrain&) const = default;
};

struct Slope {
  double dx = 0.0;
  double dy = 0.0;
};

double terrain_height(const Terrain& t, double x, double y);
Slope terrain_slope(const Terrain& t, double x, double y);

struct TerrainRanges {
  Range amplitude{0.0, 0.0};
  Range friction{1.0, 1.0};
  Range offset{0.0, 0.0};
};

// Draws each field uniformly from its range. Throws std::invalid_argument on
// an inverted range or one outside the Terrain bounds.
Terrain terrain_sample(std::mt19937_64& rng, const TerrainRanges& ranges);

// Uniform draw on [lo, hi]; returns lo exactly when lo == hi.
double uniform(std::mt19937_64& rng, double lo, double hi);

// Angle from the body heading to the goal, in the xy-plane, wrapped to
// (-pi, pi]. Zero when the goal sits on the body position.
double heading_to_goal(const Vec3& position, const UnitQuat& orientation,
                       const Vec3& goal);

}  // namespace skatelab

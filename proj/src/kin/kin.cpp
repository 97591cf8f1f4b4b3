#include "skatelab/kin.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace skatelab {
namespace {

constexpr double kReachTolerance = 1e-12;

void fnv_mix(std::uint64_t& h, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
}

}  // namespace

void LimbGeometry::validate() const {
  if (!(upper_length > 0.0) || !(lower_length > 0.0)) {
    throw std::invalid_argument("LimbGeometry: link lengths must be > 0");
  }
  if (!(wrist_drop >= 0.0)) {
    throw std::invalid_argument("LimbGeometry: wrist_drop must be >= 0");
  }
  for (int j = 0; j < kJointsPerLimb; ++j) {
    if (!(limits.lower[j] < limits.upper[j])) {
      throw std::invalid_argument("LimbGeometry: inverted joint limits");
    }
  }
}

std::uint64_t LimbGeometry::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double v : {mount_offset.x, mount_offset.y, mount_offset.z, upper_length,
                   lower_length, wrist_drop}) {
    fnv_mix(h, v);
  }
  for (int j = 0; j < kJointsPerLimb; ++j) {
    fnv_mix(h, limits.lower[j]);
    fnv_mix(h, limits.upper[j]);
  }
  return h;
}

std::array<LimbGeometry, kNumSkates> default_limbs() {
  std::array<LimbGeometry, kNumSkates> limbs;
  const std::array<Vec3, kNumSkates> mounts = {
      Vec3{0.3, -0.25, 0.0}, Vec3{-0.3, -0.25, 0.0}, Vec3{-0.3, 0.25, 0.0},
      Vec3{0.3, 0.25, 0.0}};
  for (int i = 0; i < kNumSkates; ++i) limbs[i].mount_offset = mounts[i];
  return limbs;
}

LimbPoints limb_points(const LimbGeometry& limb, const LimbJoints& q) {
  const double cy = std::cos(q[kShoulderYaw]), sy = std::sin(q[kShoulderYaw]);
  const double a1 = q[kShoulderPitch];
  const double a2 = q[kShoulderPitch] + q[kElbowPitch];
  const double elbow_r = limb.upper_length * std::cos(a1);
  const double elbow_down = limb.upper_length * std::sin(a1);
  const double wrist_r = elbow_r + limb.lower_length * std::cos(a2);
  const double wrist_down = elbow_down + limb.lower_length * std::sin(a2);
  const Vec3& m = limb.mount_offset;
  LimbPoints pts;
  pts.shoulder = m;
  pts.elbow = {m.x + elbow_r * cy, m.y + elbow_r * sy, m.z - elbow_down};
  pts.wrist = {m.x + wrist_r * cy, m.y + wrist_r * sy, m.z - wrist_down};
  pts.skate = {pts.wrist.x, pts.wrist.y, pts.wrist.z - limb.wrist_drop};
  return pts;
}

SkatePose fk(const LimbGeometry& limb, const LimbJoints& joints) {
  const Vec3 s = limb_points(limb, joints).skate;
  return {s.x, s.y, s.z, wrap_angle(joints[kShoulderYaw] + joints[kWristYaw])};
}

IkResult ik(const LimbGeometry& limb, const SkatePose& pose, IkFamily family) {
  IkResult result;
  const double dx = pose.x - limb.mount_offset.x;
  const double dy = pose.y - limb.mount_offset.y;
  // Planar target in the arm plane: radial distance and downward drop.
  const double radial = std::hypot(dx, dy);
  const double down = limb.mount_offset.z - (pose.z + limb.wrist_drop);
  const double l1 = limb.upper_length;
  const double l2 = limb.lower_length;
  const double dist = std::hypot(radial, down);
  const double max_reach = l1 + l2;
  const double min_reach = std::abs(l1 - l2);
  if (!std::isfinite(dist) || dist > max_reach * (1.0 + kReachTolerance) ||
      dist < min_reach - kReachTolerance * max_reach) {
    return result;
  }

  const double cos_elbow =
      std::clamp((dist * dist - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  double elbow = std::acos(cos_elbow);
  if (family == IkFamily::kElbowDown) elbow = -elbow;
  const double shoulder_yaw = std::atan2(dy, dx);
  const double shoulder_pitch =
      std::atan2(down, radial) -
      std::atan2(l2 * std::sin(elbow), l1 + l2 * std::cos(elbow));

  result.joints = {shoulder_yaw, wrap_angle(shoulder_pitch), elbow,
                   wrap_angle(pose.yaw - shoulder_yaw)};
  for (int j = 0; j < kJointsPerLimb; ++j) {
    if (result.joints[j] < limb.limits.lower[j] ||
        result.joints[j] > limb.limits.upper[j]) {
      result.status = IkStatus::kJointLimit;
      return result;
    }
  }
  result.status = IkStatus::kOk;
  return result;
}

LimbJoints clamp_joint_step(const LimbJoints& prev, const LimbJoints& next,
                            double dt, double max_rate) {
  const double cap = max_rate * dt;
  LimbJoints out;
  for (int j = 0; j < kJointsPerLimb; ++j) {
    out[j] = prev[j] + std::clamp(next[j] - prev[j], -cap, cap);
  }
  return out;
}

JointVector clamp_joint_step(const JointVector& prev, const JointVector& next,
                             double dt, double max_rate) {
  const double cap = max_rate * dt;
  JointVector out;
  for (int j = 0; j < kNumJoints; ++j) {
    out[j] = prev[j] + std::clamp(next[j] - prev[j], -cap, cap);
  }
  return out;
}

LimbJoints limb_slice(const JointVector& joints, int limb) {
  LimbJoints out;
  std::copy_n(joints.begin() + limb * kJointsPerLimb, kJointsPerLimb, out.begin());
  return out;
}

void set_limb_slice(JointVector& joints, int limb, const LimbJoints& values) {
  std::copy(values.begin(), values.end(), joints.begin() + limb * kJointsPerLimb);
}

}  // namespace skatelab

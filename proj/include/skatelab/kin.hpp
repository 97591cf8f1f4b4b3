#pragma once

#include <array>
#include <cstdint>

#include "skatelab/dynamics.hpp"
#include "skatelab/geom.hpp"

namespace skatelab {

inline constexpr int kJointsPerLimb = 4;
inline constexpr int kNumJoints = kNumSkates * kJointsPerLimb;

// Joint order within a limb.
enum JointIndex : int {
  kShoulderYaw = 0,
  kShoulderPitch = 1,
  kElbowPitch = 2,
  kWristYaw = 3,
};

using LimbJoints = std::array<double, kJointsPerLimb>;
using JointVector = std::array<double, kNumJoints>;

struct JointLimits {
  std::array<double, kJointsPerLimb> lower = {-kPi, -kPi, -kPi, -kPi};
  std::array<double, kJointsPerLimb> upper = {kPi, kPi, kPi, kPi};
};

// Four-joint limb: shoulder yaw about body z, a planar shoulder/elbow pitch
// pair, then a wrist yaw. The skate contact hangs wrist_drop below the
// wrist. Pitch angles are positive downward; all zeros is a straight arm
// pointing along body +x.
struct LimbGeometry {
  Vec3 mount_offset;
  double upper_length = 0.4;
  double lower_length = 0.4;
  double wrist_drop = 0.2;
  JointLimits limits;

  // Throws std::invalid_argument on non-positive link lengths.
  void validate() const;
  // FNV-1a over the geometry and limits; used to key persisted IK tables.
  std::uint64_t hash() const;
};

// The four default limbs, ordered like the skates.
std::array<LimbGeometry, kNumSkates> default_limbs();

enum class IkFamily : std::uint8_t { kElbowUp = 0, kElbowDown = 1 };
inline constexpr int kNumIkFamilies = 2;

SkatePose fk(const LimbGeometry& limb, const LimbJoints& joints);

// Body-frame positions along the chain, for collision and clearance tests.
struct LimbPoints {
  Vec3 shoulder;
  Vec3 elbow;
  Vec3 wrist;
  Vec3 skate;
};
LimbPoints limb_points(const LimbGeometry& limb, const LimbJoints& joints);

enum class IkStatus : std::uint8_t { kOk, kUnreachable, kJointLimit };

struct IkResult {
  IkStatus status = IkStatus::kUnreachable;
  LimbJoints joints{};

  bool ok() const { return status == IkStatus::kOk; }
};

// Closed-form solution for the requested elbow family. Elbow-up has
// elbow pitch >= 0.
IkResult ik(const LimbGeometry& limb, const SkatePose& pose, IkFamily family);

// Limits every joint's change to max_rate * dt, keeping its direction.
LimbJoints clamp_joint_step(const LimbJoints& prev, const LimbJoints& next,
                            double dt, double max_rate = 1.0);
JointVector clamp_joint_step(const JointVector& prev, const JointVector& next,
                             double dt, double max_rate = 1.0);

LimbJoints limb_slice(const JointVector& joints, int limb);
void set_limb_slice(JointVector& joints, int limb, const LimbJoints& values);

}  // namespace skatelab

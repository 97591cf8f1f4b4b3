#pragma once

#include <array>
#include <optional>

#include "skatelab/geom.hpp"

namespace skatelab {

inline constexpr int kNumSkates = 4;

// Skate order viewed from above: 0 front-right, 1 rear-right, 2 rear-left,
// 3 front-left. Mirroring about the body xz-plane swaps 0<->3 and 1<->2.
inline constexpr std::array<int, kNumSkates> kMirrorSkate = {3, 2, 1, 0};

struct BodyState {
  Vec3 position;
  UnitQuat orientation;
  Vec3 linear_velocity;
  // (roll rate, pitch rate, yaw rate).
  Vec3 angular_velocity;
};

struct SkateSetpoint {
  std::array<SkatePose, kNumSkates> pose{};
  std::array<SkatePose, kNumSkates> rate{};
};

struct ContactInfo {
  std::array<double, kNumSkates> normal_force{};
  std::array<double, kNumSkates> lateral_slip_speed{};
  // Signed friction components along each wheel's lateral and rolling axes.
  std::array<double, kNumSkates> lateral_force{};
  std::array<double, kNumSkates> rolling_force{};
  std::array<bool, kNumSkates> in_contact{};
  bool tipped_over = false;
};

struct SimParams {
  double torso_mass = 60.0;
  double per_limb_mass = 8.0;
  double gravity = 9.81;
  // Lateral (and rolling) viscous coefficient per newton of normal load, s/m.
  // The resulting force saturates at mu*N laterally and at
  // rolling_resistance*N along the wheel heading.
  double lateral_friction_scale = 50.0;
  double rolling_resistance = 0.02;
  double dt = 0.01;
  // Torso footprint, used for its yaw inertia.
  double torso_length = 0.8;
  double torso_width = 0.5;
  // Per-axis rates at which skate setpoints chase their commands.
  double skate_linear_rate_limit = 1.0;
  double skate_yaw_rate_limit = 1.0;

  double total_mass() const { return torso_mass + kNumSkates * per_limb_mass; }
  // Throws std::invalid_argument on a non-positive field or dt > 0.05.
  void validate() const;
};

// Body-frame centroid of each limb's mass. Defaults to the skate positions,
// which is where the representative model carries it.
using LimbMassCenters = std::array<Vec3, kNumSkates>;

// Static normal-load distribution. Solves sum N = W n_z and zero net moment
// about the center of mass with the minimum-norm solution, then drops
// negative supports and rebalances on the remaining three. Sets tipped_over
// when no non-negative balance exists.
ContactInfo contact_loads(const BodyState& body, const SkateSetpoint& skates,
                          const Terrain& terrain, const SimParams& p,
                          const LimbMassCenters* limb_mass = nullptr);

struct StepOutcome {
  BodyState body;
  SkateSetpoint skates;
  ContactInfo contact;
};

// One semi-implicit Euler step of the planar DOFs (x, y, yaw) with z, roll
// and pitch slaved to the terrain under the four wheels. On tip-over the
// returned contact is flagged and the body is left where it was.
StepOutcome step(const BodyState& body, const SkateSetpoint& skates,
                 const SkateSetpoint& commanded, const Terrain& terrain,
                 const SimParams& p,
                 const LimbMassCenters* limb_mass = nullptr);

// World position of skate i and its world yaw (body yaw + skate yaw).
struct WorldPose {
  Vec3 position;
  double yaw = 0.0;
};
WorldPose skate_world_pose(const BodyState& body, const SkateSetpoint& skates,
                           int i);
// Inverse of skate_world_pose for a given body.
SkatePose skate_body_pose(const BodyState& body, const WorldPose& world);

// Places the body on the terrain: computes z, roll and pitch so the wheels
// touch the surface, keeping x, y and yaw.
BodyState settle_on_terrain(const BodyState& body, const SkateSetpoint& skates,
                            const Terrain& terrain);

double kinetic_energy(const BodyState& body, const SkateSetpoint& skates,
                      const SimParams& p,
                      const LimbMassCenters* limb_mass = nullptr);

// Yaw inertia about the body center for the given mass layout.
double yaw_inertia(const SimParams& p, const LimbMassCenters& limb_mass);

LimbMassCenters skate_mass_centers(const SkateSetpoint& skates);

}  // namespace skatelab

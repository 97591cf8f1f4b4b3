#include "skatelab/dynamics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <string>

namespace skatelab {
namespace {

struct Planar {
  double c = 1.0;
  double s = 0.0;
  // Rotates a body-frame horizontal vector into the world.
  std::pair<double, double> apply(double x, double y) const {
    return {c * x - s * y, s * x + c * y};
  }
};

Planar planar_of(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }

double clamp_abs(double v, double limit) { return std::clamp(v, -limit, limit); }

// Horizontal center of mass in the body frame.
std::pair<double, double> com_offset(const SimParams& p,
                                     const LimbMassCenters& limb_mass) {
  double cx = 0.0, cy = 0.0;
  for (const Vec3& m : limb_mass) {
    cx += p.per_limb_mass * m.x;
    cy += p.per_limb_mass * m.y;
  }
  return {cx / p.total_mass(), cy / p.total_mass()};
}

// Least-squares plane h = a + b X + c Y through the wheel contacts, with X, Y
// measured from the body center.
struct Plane {
  double a = 0.0;
  double bx = 0.0;
  double by = 0.0;
};

Plane fit_plane(const std::array<double, kNumSkates>& xs,
                const std::array<double, kNumSkates>& ys,
                const std::array<double, kNumSkates>& hs) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  for (int i = 0; i < kNumSkates; ++i) {
    const Eigen::Vector3d row(1.0, xs[i], ys[i]);
    m += row * row.transpose();
    r += row * hs[i];
  }
  const Eigen::Vector3d sol = m.ldlt().solve(r);
  return {sol[0], sol[1], sol[2]};
}

}  // namespace

void SimParams::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("SimParams: " + what);
  };
  if (!(torso_mass > 0.0)) fail("torso_mass must be > 0");
  if (!(per_limb_mass > 0.0)) fail("per_limb_mass must be > 0");
  if (!(gravity > 0.0)) fail("gravity must be > 0");
  if (!(lateral_friction_scale > 0.0)) fail("lateral_friction_scale must be > 0");
  if (!(rolling_resistance > 0.0)) fail("rolling_resistance must be > 0");
  if (!(dt > 0.0 && dt <= 0.05)) fail("dt must lie in (0, 0.05]");
  if (!(torso_length > 0.0 && torso_width > 0.0)) fail("torso size must be > 0");
  if (!(skate_linear_rate_limit > 0.0 && skate_yaw_rate_limit > 0.0)) {
    fail("skate rate limits must be > 0");
  }
}

LimbMassCenters skate_mass_centers(const SkateSetpoint& skates) {
  LimbMassCenters out;
  for (int i = 0; i < kNumSkates; ++i) {
    out[i] = {skates.pose[i].x, skates.pose[i].y, skates.pose[i].z};
  }
  return out;
}

double yaw_inertia(const SimParams& p, const LimbMassCenters& limb_mass) {
  double inertia = p.torso_mass *
                   (p.torso_length * p.torso_length + p.torso_width * p.torso_width) /
                   12.0;
  for (const Vec3& m : limb_mass) inertia += p.per_limb_mass * (m.x * m.x + m.y * m.y);
  return inertia;
}

WorldPose skate_world_pose(const BodyState& body, const SkateSetpoint& skates,
                           int i) {
  if (i < 0 || i >= kNumSkates) throw std::out_of_range("skate index");
  const SkatePose& s = skates.pose[i];
  const Vec3 world = body.position + body.orientation.rotate({s.x, s.y, s.z});
  return {world, wrap_angle(body.orientation.yaw() + s.yaw)};
}

SkatePose skate_body_pose(const BodyState& body, const WorldPose& world) {
  const Vec3 local = body.orientation.conjugate().rotate(world.position - body.position);
  return {local.x, local.y, local.z, wrap_angle(world.yaw - body.orientation.yaw())};
}

BodyState settle_on_terrain(const BodyState& body, const SkateSetpoint& skates,
                            const Terrain& terrain) {
  const double yaw = body.orientation.yaw();
  const Planar rot = planar_of(yaw);
  BodyState out = body;
  out.orientation = UnitQuat::from_yaw(yaw);
  std::array<double, kNumSkates> hs{};
  // Tilt moves the wheels sideways; refit at the tilted contact points.
  for (int pass = 0; pass < 3; ++pass) {
    std::array<double, kNumSkates> xs{}, ys{};
    for (int i = 0; i < kNumSkates; ++i) {
      const SkatePose& s = skates.pose[i];
      const Vec3 w = out.orientation.rotate({s.x, s.y, s.z});
      xs[i] = w.x;
      ys[i] = w.y;
      hs[i] = terrain_height(terrain, body.position.x + w.x, body.position.y + w.y);
    }
    const Plane plane = fit_plane(xs, ys, hs);
    const double slope_fwd = plane.bx * rot.c + plane.by * rot.s;
    const double slope_lat = -plane.bx * rot.s + plane.by * rot.c;
    out.orientation = UnitQuat::from_euler(std::atan(slope_lat), -std::atan(slope_fwd), yaw);
  }
  double z = 0.0;
  for (int i = 0; i < kNumSkates; ++i) {
    const SkatePose& s = skates.pose[i];
    const Vec3 w = out.orientation.rotate({s.x, s.y, s.z});
    z += terrain_height(terrain, body.position.x + w.x, body.position.y + w.y) - w.z;
  }
  out.position.z = z / kNumSkates;
  return out;
}

ContactInfo contact_loads(const BodyState& body, const SkateSetpoint& skates,
                          const Terrain& terrain, const SimParams& p,
                          const LimbMassCenters* limb_mass) {
  (void)terrain;
  const LimbMassCenters masses = limb_mass ? *limb_mass : skate_mass_centers(skates);
  const Planar rot = planar_of(body.orientation.yaw());
  const auto [cbx, cby] = com_offset(p, masses);
  const auto [cx, cy] = rot.apply(cbx, cby);

  const double normal_z = body.orientation.rotate({0.0, 0.0, 1.0}).z;
  const double load = p.total_mass() * p.gravity * normal_z;

  std::array<double, kNumSkates> rx{}, ry{};
  for (int i = 0; i < kNumSkates; ++i) {
    const auto [wx, wy] = rot.apply(skates.pose[i].x, skates.pose[i].y);
    rx[i] = wx - cx;
    ry[i] = wy - cy;
  }

  ContactInfo info;
  // Minimum-norm solution of the 3x4 balance.
  Eigen::Matrix<double, 3, 4> a;
  for (int i = 0; i < kNumSkates; ++i) a.col(i) << 1.0, rx[i], ry[i];
  const Eigen::Vector3d b(load, 0.0, 0.0);
  const Eigen::Matrix3d gram = a * a.transpose();
  Eigen::Vector4d n = a.transpose() * gram.ldlt().solve(b);

  if ((n.array() < 0.0).any()) {
    // Try dropping each support, most negative first.
    std::array<int, kNumSkates> order = {0, 1, 2, 3};
    std::sort(order.begin(), order.end(), [&](int l, int r) { return n[l] < n[r]; });
    bool found = false;
    for (int drop : order) {
      Eigen::Matrix3d sub;
      std::array<int, 3> idx{};
      int k = 0;
      for (int i = 0; i < kNumSkates; ++i) {
        if (i == drop) continue;
        idx[k] = i;
        sub.col(k) << 1.0, rx[i], ry[i];
        ++k;
      }
      Eigen::FullPivLU<Eigen::Matrix3d> lu(sub);
      if (!lu.isInvertible()) continue;
      const Eigen::Vector3d tri = lu.solve(b);
      if ((tri.array() < 0.0).any()) continue;
      n.setZero();
      for (int j = 0; j < 3; ++j) n[idx[j]] = tri[j];
      found = true;
      break;
    }
    if (!found) {
      info.tipped_over = true;
      return info;
    }
  }
  for (int i = 0; i < kNumSkates; ++i) {
    info.normal_force[i] = n[i];
    info.in_contact[i] = n[i] > 0.0;
  }
  return info;
}

double kinetic_energy(const BodyState& body, const SkateSetpoint& skates,
                      const SimParams& p, const LimbMassCenters* limb_mass) {
  const LimbMassCenters masses = limb_mass ? *limb_mass : skate_mass_centers(skates);
  const Vec3& v = body.linear_velocity;
  const double w = body.angular_velocity.z;
  return 0.5 * p.total_mass() * (v.x * v.x + v.y * v.y) +
         0.5 * yaw_inertia(p, masses) * w * w;
}

StepOutcome step(const BodyState& body, const SkateSetpoint& skates,
                 const SkateSetpoint& commanded, const Terrain& terrain,
                 const SimParams& p, const LimbMassCenters* limb_mass) {
  const double dt = p.dt;
  StepOutcome out;
  out.body = body;

  // Setpoints chase their commands at the configured rate limits.
  SkateSetpoint next;
  for (int i = 0; i < kNumSkates; ++i) {
    for (int k = 0; k < 4; ++k) {
      const double limit =
          (k == 3 ? p.skate_yaw_rate_limit : p.skate_linear_rate_limit) * dt;
      next.pose[i][k] =
          skates.pose[i][k] + clamp_abs(commanded.pose[i][k] - skates.pose[i][k], limit);
      next.rate[i][k] = (next.pose[i][k] - skates.pose[i][k]) / dt;
    }
  }
  out.skates = next;

  const LimbMassCenters masses = limb_mass ? *limb_mass : skate_mass_centers(next);
  out.contact = contact_loads(body, next, terrain, p, &masses);
  if (out.contact.tipped_over) return out;

  const double yaw = body.orientation.yaw();
  const Planar rot = planar_of(yaw);
  const double mass = p.total_mass();
  const double inertia = yaw_inertia(p, masses);

  // One scalar friction row per wheel axis: force = -k (J v + bias), |force|
  // capped; index 2i is lateral, 2i+1 rolling.
  constexpr int kRows = 2 * kNumSkates;
  std::array<Eigen::Vector3d, kRows> jac;
  std::array<double, kRows> bias{}, gain{}, cap{};
  Eigen::Vector3d external = Eigen::Vector3d::Zero();
  for (int i = 0; i < kNumSkates; ++i) {
    const SkatePose& s = next.pose[i];
    const SkatePose& sr = next.rate[i];
    const auto [rx, ry] = rot.apply(s.x, s.y);
    const auto [wx, wy] = rot.apply(sr.x, sr.y);
    const double heading = yaw + s.yaw;
    const double ch = std::cos(heading), sh = std::sin(heading);
    const double normal = out.contact.normal_force[i];
    const std::array<std::pair<double, double>, 2> axes = {
        std::pair{-sh, ch}, std::pair{ch, sh}};
    for (int a = 0; a < 2; ++a) {
      const auto [dx, dy] = axes[a];
      const int row = 2 * i + a;
      jac[row] = Eigen::Vector3d(dx, dy, -dx * ry + dy * rx);
      bias[row] = dx * wx + dy * wy;
      gain[row] = p.lateral_friction_scale * normal;
      cap[row] = (a == 0 ? terrain.friction : p.rolling_resistance) * normal;
    }
    // Gravity component along the local slope under the wheel.
    const Slope slope = terrain_slope(terrain, body.position.x + rx, body.position.y + ry);
    const double gx = -normal * slope.dx;
    const double gy = -normal * slope.dy;
    external += Eigen::Vector3d(gx, gy, rx * gy - ry * gx);
  }

  const Eigen::Vector3d v0(body.linear_velocity.x, body.linear_velocity.y,
                           body.angular_velocity.z);
  const Eigen::Vector3d inertia_diag(mass, mass, inertia);
  const Eigen::Vector3d momentum = inertia_diag.cwiseProduct(v0) / dt + external;

  // Active-set solve: rows stay viscous (implicit) until their force would
  // exceed the cap, after which they apply the saturated Coulomb force.
  std::array<int, kRows> saturated{};  // 0 viscous, +-1 saturated sign of slip
  Eigen::Vector3d v = v0;
  for (int iter = 0; iter < 16; ++iter) {
    Eigen::Matrix3d lhs = Eigen::Matrix3d::Zero();
    lhs.diagonal() = inertia_diag / dt;
    Eigen::Vector3d rhs = momentum;
    for (int r = 0; r < kRows; ++r) {
      if (saturated[r] == 0) {
        lhs += gain[r] * jac[r] * jac[r].transpose();
        rhs -= gain[r] * bias[r] * jac[r];
      } else {
        rhs -= cap[r] * saturated[r] * jac[r];
      }
    }
    v = lhs.ldlt().solve(rhs);
    bool changed = false;
    for (int r = 0; r < kRows; ++r) {
      const double slip = jac[r].dot(v) + bias[r];
      if (saturated[r] == 0) {
        if (gain[r] * std::abs(slip) > cap[r]) {
          saturated[r] = slip > 0.0 ? 1 : -1;
          changed = true;
        }
      } else if (slip * saturated[r] < 0.0) {
        saturated[r] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Apply the capped forces explicitly so the Coulomb bound holds exactly.
  Eigen::Vector3d force = external;
  for (int r = 0; r < kRows; ++r) {
    const double slip = jac[r].dot(v) + bias[r];
    const double f = saturated[r] == 0 ? clamp_abs(-gain[r] * slip, cap[r])
                                       : -cap[r] * saturated[r];
    force += f * jac[r];
    const int i = r / 2;
    if (r % 2 == 0) {
      out.contact.lateral_force[i] = f;
      out.contact.lateral_slip_speed[i] = slip;
    } else {
      out.contact.rolling_force[i] = f;
    }
  }
  v = v0 + dt * force.cwiseQuotient(inertia_diag);

  BodyState planar = body;
  planar.position.x += v[0] * dt;
  planar.position.y += v[1] * dt;
  planar.orientation = UnitQuat::from_yaw(yaw + v[2] * dt);
  BodyState settled = settle_on_terrain(planar, next, terrain);

  settled.linear_velocity = {v[0], v[1], (settled.position.z - body.position.z) / dt};
  settled.angular_velocity = {
      wrap_angle(settled.orientation.roll() - body.orientation.roll()) / dt,
      wrap_angle(settled.orientation.pitch() - body.orientation.pitch()) / dt, v[2]};
  out.body = settled;
  return out;
}

}  // namespace skatelab

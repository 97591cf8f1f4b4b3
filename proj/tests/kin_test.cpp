#include <gtest/gtest.h>

#include <filesystem>

#include "skatelab/env.hpp"
#include "skatelab/ik_table.hpp"
#include "skatelab/kin.hpp"
#include "support.hpp"

using namespace skatelab;
using skatelab::testing::Gen;

namespace {

using Mat4 = std::array<std::array<double, 4>, 4>;

Mat4 mul(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

Mat4 translate(double x, double y, double z) {
  return {{{1, 0, 0, x}, {0, 1, 0, y}, {0, 0, 1, z}, {0, 0, 0, 1}}};
}

Mat4 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {{{c, -s, 0, 0}, {s, c, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}};
}

Mat4 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {{{c, 0, s, 0}, {0, 1, 0, 0}, {-s, 0, c, 0}, {0, 0, 0, 1}}};
}

// Homogeneous-transform chain: mount, shoulder yaw, shoulder pitch, upper
// link, elbow pitch, lower link. The skate hangs wrist_drop straight below
// the wrist and its heading is the sum of the two yaw joints.
SkatePose fk_oracle(const LimbGeometry& l, const LimbJoints& q) {
  const Vec3& m = l.mount_offset;
  Mat4 t = translate(m.x, m.y, m.z);
  t = mul(t, rot_z(q[0]));
  t = mul(t, rot_y(q[1]));
  t = mul(t, translate(l.upper_length, 0, 0));
  t = mul(t, rot_y(q[2]));
  t = mul(t, translate(l.lower_length, 0, 0));
  const Mat4 heading = mul(rot_z(q[0]), rot_z(q[3]));
  return {t[0][3], t[1][3], t[2][3] - l.wrist_drop, std::atan2(heading[1][0], heading[0][0])};
}

void expect_pose_near(const SkatePose& a, const SkatePose& b, double tol) {
  EXPECT_NEAR(a.x, b.x, tol);
  EXPECT_NEAR(a.y, b.y, tol);
  EXPECT_NEAR(a.z, b.z, tol);
  EXPECT_NEAR(wrap_angle(a.yaw - b.yaw), 0.0, tol);
}

double pose_error(const SkatePose& a, const SkatePose& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z),
                   std::abs(wrap_angle(a.yaw - b.yaw))});
}

double joint_distance(const LimbJoints& a, const LimbJoints& b) {
  double d = 0.0;
  for (int j = 0; j < kJointsPerLimb; ++j) d = std::max(d, std::abs(wrap_angle(a[j] - b[j])));
  return d;
}

LimbGeometry front_right() { return default_limbs()[0]; }

Workspace forward_workspace(int skate) { return EnvConfig{}.skate_workspace(skate); }

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("skatelab_kin_" + name);
}

}  // namespace

TEST(Fk, StraightArm) {
  const LimbGeometry l = front_right();
  const SkatePose p = fk(l, {0, 0, 0, 0});
  EXPECT_NEAR(p.x, l.mount_offset.x + 0.8, 1e-15);
  EXPECT_NEAR(p.y, l.mount_offset.y, 1e-15);
  EXPECT_NEAR(p.z, l.mount_offset.z - l.wrist_drop, 1e-15);
  EXPECT_EQ(p.yaw, 0.0);
}

TEST(Fk, ShoulderYawQuarterTurn) {
  const LimbGeometry l = front_right();
  const SkatePose p = fk(l, {kPi / 2, 0, 0, 0});
  EXPECT_NEAR(p.x, l.mount_offset.x, 1e-15);
  EXPECT_NEAR(p.y, l.mount_offset.y + 0.8, 1e-15);
  EXPECT_NEAR(p.yaw, kPi / 2, 1e-15);
}

TEST(FkProperty, MatchesHomogeneousTransformOracle) {
  Gen g(51);
  const auto limbs = default_limbs();
  for (int n = 0; n < 100000; ++n) {
    const LimbGeometry& l = limbs[n % kNumSkates];
    const LimbJoints q = g.joints();
    const double err = pose_error(fk(l, q), fk_oracle(l, q));
    ASSERT_LT(err, 1e-12) << "sample " << n;
  }
}

TEST(Ik, FullReachGivesZeroPitch) {
  const LimbGeometry l = front_right();
  const SkatePose pose{l.mount_offset.x + 0.8, l.mount_offset.y,
                       l.mount_offset.z - l.wrist_drop, 0.0};
  for (IkFamily f : {IkFamily::kElbowUp, IkFamily::kElbowDown}) {
    const IkResult r = ik(l, pose, f);
    ASSERT_TRUE(r.ok());
    EXPECT_NEAR(r.joints[kShoulderPitch], 0.0, 1e-7);
    EXPECT_NEAR(r.joints[kElbowPitch], 0.0, 1e-7);
  }
}

TEST(Ik, InteriorFamiliesAreDistinct) {
  const LimbGeometry l = front_right();
  const SkatePose pose = EnvConfig{}.nominal[0];
  const IkResult up = ik(l, pose, IkFamily::kElbowUp);
  const IkResult down = ik(l, pose, IkFamily::kElbowDown);
  ASSERT_TRUE(up.ok());
  ASSERT_TRUE(down.ok());
  EXPECT_GT(up.joints[kElbowPitch], 0.0);
  EXPECT_LT(down.joints[kElbowPitch], 0.0);
  EXPECT_GT(joint_distance(up.joints, down.joints), 0.1);
  expect_pose_near(fk(l, up.joints), pose, 1e-12);
  expect_pose_near(fk(l, down.joints), pose, 1e-12);
}

TEST(Ik, BeyondReachIsUnreachable) {
  const LimbGeometry l = front_right();
  const SkatePose pose{l.mount_offset.x + 0.81, l.mount_offset.y,
                       l.mount_offset.z - l.wrist_drop, 0.0};
  EXPECT_EQ(ik(l, pose, IkFamily::kElbowUp).status, IkStatus::kUnreachable);
  const SkatePose nan_pose{std::nan(""), 0, 0, 0};
  EXPECT_EQ(ik(l, nan_pose, IkFamily::kElbowUp).status, IkStatus::kUnreachable);
}

TEST(Ik, JointLimitViolation) {
  LimbGeometry l = front_right();
  l.limits.upper[kElbowPitch] = 0.1;
  EXPECT_EQ(ik(l, EnvConfig{}.nominal[0], IkFamily::kElbowUp).status, IkStatus::kJointLimit);
  EXPECT_TRUE(ik(l, EnvConfig{}.nominal[0], IkFamily::kElbowDown).ok());
}

TEST(IkProperty, FkOfIkRoundTripPerFamily) {
  Gen g(52);
  const auto limbs = default_limbs();
  for (IkFamily f : {IkFamily::kElbowUp, IkFamily::kElbowDown}) {
    const double sign = f == IkFamily::kElbowUp ? 1.0 : -1.0;
    double worst = 0.0;
    for (int n = 0; n < 100000; ++n) {
      const LimbGeometry& l = limbs[n % kNumSkates];
      LimbJoints q = g.joints(3.0);
      q[kElbowPitch] = sign * g.real(0.05, 3.0);
      q[kShoulderPitch] = g.real(-1.5, 1.5);
      const SkatePose pose = fk(l, q);
      const IkResult r = ik(l, pose, f);
      ASSERT_TRUE(r.ok()) << "sample " << n;
      ASSERT_EQ(r.joints[kElbowPitch] > 0.0, f == IkFamily::kElbowUp);
      worst = std::max(worst, pose_error(fk(l, r.joints), pose));
      // Same family with the wrist ahead of the shoulder: the joints come back.
      const double radial = l.upper_length * std::cos(q[kShoulderPitch]) +
                            l.lower_length * std::cos(q[kShoulderPitch] + q[kElbowPitch]);
      if (radial > 1e-3) {
        ASSERT_LT(joint_distance(r.joints, q), 1e-7) << "sample " << n;
      }
    }
    EXPECT_LT(worst, 1e-9);
  }
}

TEST(ClampJointStep, Examples) {
  const LimbJoints zero{};
  EXPECT_EQ(clamp_joint_step(zero, {0.005, 0, 0, 0}, 0.01)[0], 0.005);
  EXPECT_NEAR(clamp_joint_step(zero, {0.5, -0.5, 0, 0}, 0.01)[0], 0.01, 1e-15);
  EXPECT_NEAR(clamp_joint_step(zero, {0.5, -0.5, 0, 0}, 0.01)[1], -0.01, 1e-15);
  EXPECT_EQ(clamp_joint_step(zero, zero, 0.01), zero);
}

TEST(ClampJointStepProperty, RateNeverExceedsLimit) {
  Gen g(53);
  for (int n = 0; n < 100000; ++n) {
    JointVector a{}, b{};
    for (int j = 0; j < kNumJoints; ++j) {
      a[j] = g.real(-kPi, kPi);
      b[j] = g.real(-kPi, kPi);
    }
    const double dt = g.real(0.001, 0.05);
    const JointVector c = clamp_joint_step(a, b, dt);
    for (int j = 0; j < kNumJoints; ++j) {
      ASSERT_LE(std::abs(c[j] - a[j]) / dt, 1.0 + 1e-12);
      ASSERT_GE((c[j] - a[j]) * (b[j] - a[j]), 0.0);
    }
  }
}

TEST(IkTable, SinglePointWorkspace) {
  const LimbGeometry l = front_right();
  const SkatePose p = EnvConfig{}.nominal[0];
  Workspace ws;
  for (int d = 0; d < 4; ++d) ws.bounds[d] = {p[d], p[d]};
  const IkTable t = IkTable::build(l, ws, {});
  EXPECT_EQ(t.size(), 1u);
  const auto hit = t.lookup(p, IkFamily::kElbowUp);
  ASSERT_TRUE(hit);
  EXPECT_EQ(*hit, ik(l, t.pose_of(t.key_of(p)), IkFamily::kElbowUp).joints);
}

TEST(IkTable, ForwardWorkspaceGridExhaustive) {
  const auto limbs = default_limbs();
  for (int i = 0; i < kNumSkates; ++i) {
    const IkTable t = IkTable::build(limbs[i], forward_workspace(i), {});
    const auto keys = t.grid_keys();
    // y spans 0.2 m at 0.005 m and yaw 0.6 rad at 0.01 rad.
    ASSERT_EQ(keys.size(), 41u * 61u);
    ASSERT_EQ(t.size(), keys.size());
    for (const GridKey& k : keys) {
      const SkatePose p = t.pose_of(k);
      for (IkFamily f : {IkFamily::kElbowUp, IkFamily::kElbowDown}) {
        const auto hit = t.lookup(p, f);
        const IkResult direct = ik(limbs[i], p, f);
        ASSERT_TRUE(hit);
        ASSERT_TRUE(direct.ok());
        for (int j = 0; j < kJointsPerLimb; ++j) {
          ASSERT_NEAR((*hit)[j], direct.joints[j], 1e-12);
        }
        ASSERT_LT(pose_error(fk(limbs[i], *hit), p), 1e-9);
      }
    }
  }
}

TEST(IkTable, OutsideWorkspaceMisses) {
  const IkTable t = IkTable::build(front_right(), forward_workspace(0), {});
  SkatePose p = EnvConfig{}.nominal[0];
  p.y += 0.2;
  EXPECT_FALSE(t.lookup(p, IkFamily::kElbowUp));
  const IkTableStats s = t.stats();
  EXPECT_EQ(s.misses, 1u);
}

TEST(IkTable, NearestKeyErrorBound) {
  const LimbGeometry l = front_right();
  const Workspace ws = forward_workspace(0);
  const IkTable t = IkTable::build(l, ws, {});
  Gen g(54);
  double worst = 0.0;
  for (int n = 0; n < 10000; ++n) {
    SkatePose p;
    for (int d = 0; d < 4; ++d) p[d] = g.real(ws.bounds[d].lo, ws.bounds[d].hi);
    const auto hit = t.lookup(p, IkFamily::kElbowUp);
    ASSERT_TRUE(hit);
    ASSERT_EQ(*hit, ik(l, t.pose_of(t.key_of(p)), IkFamily::kElbowUp).joints);
    worst = std::max(worst, joint_distance(*hit, ik(l, p, IkFamily::kElbowUp).joints));
  }
  // Lipschitz constant 3 (SmoothnessWithinFamily measures about 2.6) times
  // the largest distance to the nearest grid point.
  EXPECT_LE(worst, 3.0 * std::hypot(0.0025, 0.005));
  RecordProperty("max_joint_error", std::to_string(worst));
}

TEST(IkTable, SmoothnessWithinFamily) {
  const LimbGeometry l = front_right();
  const Workspace ws = forward_workspace(0);
  Gen g(55);
  double k_max = 0.0;
  for (int n = 0; n < 10000; ++n) {
    SkatePose p, q;
    for (int d = 0; d < 4; ++d) p[d] = g.real(ws.bounds[d].lo, ws.bounds[d].hi);
    q = p;
    q.y += g.real(-0.005, 0.005);
    q.yaw += g.real(-0.01, 0.01);
    const double dist = std::hypot(q.y - p.y, q.yaw - p.yaw);
    if (dist == 0.0) continue;
    const double dj = joint_distance(ik(l, p, IkFamily::kElbowUp).joints,
                                     ik(l, q, IkFamily::kElbowUp).joints);
    k_max = std::max(k_max, dj / dist);
  }
  std::cout << "empirical joint/pose Lipschitz constant K = " << k_max << '\n';
  RecordProperty("lipschitz_k", std::to_string(k_max));
  EXPECT_LT(k_max, 5.0);
}

TEST(IkTable, LazyMatchesEager) {
  const LimbGeometry l = front_right();
  const Workspace ws = forward_workspace(0);
  const IkTable eager = IkTable::build(l, ws, {});
  IkTable lazy(l, ws, {});
  Gen g(56);
  for (int n = 0; n < 5000; ++n) {
    SkatePose p;
    for (int d = 0; d < 4; ++d) p[d] = g.real(ws.bounds[d].lo, ws.bounds[d].hi);
    const IkFamily f = g.coin() ? IkFamily::kElbowUp : IkFamily::kElbowDown;
    ASSERT_EQ(lazy.lookup_or_insert(p, f), eager.lookup(p, f));
  }
  EXPECT_GT(lazy.size(), 0u);
  EXPECT_LE(lazy.size(), eager.size());
}

TEST(IkTable, SaveLoadRoundTrip) {
  const LimbGeometry l = front_right();
  const IkTable t = IkTable::build(l, forward_workspace(0), {});
  const auto path = temp_path("roundtrip.bin");
  t.save(path);
  const IkTable back = IkTable::load(path, l);
  EXPECT_EQ(back.size(), t.size());
  for (const GridKey& k : t.grid_keys()) {
    const SkatePose p = t.pose_of(k);
    ASSERT_EQ(back.lookup(p, IkFamily::kElbowUp), t.lookup(p, IkFamily::kElbowUp));
    ASSERT_EQ(back.lookup(p, IkFamily::kElbowDown), t.lookup(p, IkFamily::kElbowDown));
  }
  const IkTable::FileHeader h = IkTable::read_header(path);
  EXPECT_EQ(h.geometry_hash, l.hash());
  EXPECT_EQ(h.entries, t.size());
  std::filesystem::remove(path);
}

TEST(IkTable, LoadRejectsOtherGeometry) {
  const LimbGeometry l = front_right();
  const auto path = temp_path("hash.bin");
  IkTable::build(l, forward_workspace(0), {}).save(path);
  LimbGeometry other = l;
  other.upper_length = 0.41;
  EXPECT_NE(other.hash(), l.hash());
  EXPECT_THROW(IkTable::load(path, other), std::runtime_error);
  EXPECT_THROW(IkTable::load(temp_path("missing.bin"), l), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(IkTable, EmptyWorkspaceRejected) {
  Workspace ws;
  ws.bounds[1] = {0.101, 0.104};  // no multiple of 0.005 inside
  EXPECT_THROW(IkTable::build(front_right(), ws, {}), std::invalid_argument);
}

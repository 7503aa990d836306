#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "stvo/se3.hpp"

using namespace stvo;

namespace {

constexpr double kPi = std::numbers::pi;

Twist random_twist(std::mt19937_64& rng, double max_angle = 3.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis(u(rng), u(rng), u(rng));
  axis.normalize();
  const double angle = std::abs(u(rng)) * max_angle;
  return Twist(angle * axis, Vec3(u(rng), u(rng), u(rng)) * 3.0);
}

Mat3 rodrigues_oracle(const Vec3& u) {
  // Axis-angle via Eigen's own quaternion-based conversion.
  const double th = u.norm();
  if (th == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(th, u / th).toRotationMatrix();
}

}  // namespace

TEST(Twist, ZeroIsIdentityExactly) {
  const SE3Transform t = twist_to_transform(Twist());
  EXPECT_TRUE(t.rotation == Mat3::Identity());
  EXPECT_TRUE(t.translation == Vec3::Zero());
}

TEST(Twist, PureTranslation) {
  const SE3Transform t = twist_to_transform(Twist(Vec3::Zero(), Vec3(1, 2, 3)));
  EXPECT_TRUE(t.rotation == Mat3::Identity());
  EXPECT_EQ(t.translation, Vec3(1, 2, 3));
}

TEST(Twist, QuarterTurnAboutZ) {
  const SE3Transform t = twist_to_transform(Twist(Vec3(0, 0, kPi / 2), Vec3::Zero()));
  Mat3 want;
  want << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((t.rotation - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((transform_point(t, Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm(), 1e-15);
}

TEST(Twist, DomainChecks) {
  EXPECT_THROW(Twist(Vec3(kPi, 0, 0), Vec3::Zero()), DomainError);
  EXPECT_THROW(Twist(Vec3(0, 0, 4.0), Vec3::Zero()), DomainError);
  EXPECT_THROW(Twist(Vec3(0, 0, 0), Vec3(std::nan(""), 0, 0)), NumericError);
  EXPECT_NO_THROW(Twist(Vec3(0, 0, 3.14), Vec3::Zero()));
}

TEST(Twist, MatchesRodriguesOracleAndIsOrthonormal) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Twist t = random_twist(rng);
    const SE3Transform m = twist_to_transform(t);
    EXPECT_LT((m.rotation - rodrigues_oracle(t.rotation())).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(m.is_valid(1e-9));
  }
}

TEST(Twist, SmallAngleBranchIsContinuous) {
  const Vec3 u(3e-9, -2e-9, 1e-9);
  const Mat3 r = rotation_from_axis_angle(u);
  EXPECT_LT((r - rodrigues_oracle(u)).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(Compose, IdentityAndInverse) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const SE3Transform t = twist_to_transform(random_twist(rng));
    const SE3Transform a = compose(t, SE3Transform::identity());
    EXPECT_LT((a.matrix() - t.matrix()).cwiseAbs().maxCoeff(), 1e-12);
    const SE3Transform e = compose(t, invert(t));
    EXPECT_LT((e.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Compose, MatchesMatrixProduct) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const SE3Transform a = twist_to_transform(random_twist(rng));
    const SE3Transform b = twist_to_transform(random_twist(rng));
    const Mat4 want = a.matrix() * b.matrix();
    EXPECT_LT((compose(a, b).matrix() - want).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(compose(a, b).is_valid());
  }
}

TEST(Invert, Examples) {
  EXPECT_TRUE(invert(SE3Transform::identity()).matrix() == Mat4::Identity());
  const SE3Transform t = invert(SE3Transform::from_translation(Vec3(1, 0, 0)));
  EXPECT_EQ(t.translation, Vec3(-1, 0, 0));
  EXPECT_TRUE(t.rotation == Mat3::Identity());
}

TEST(TransformPoint, Examples) {
  const Vec3 p(1, 1, 10);
  EXPECT_EQ(transform_point(SE3Transform::identity(), p), p);
  EXPECT_EQ(transform_point(SE3Transform::from_translation(Vec3(0, 0, -0.5)), p), Vec3(1, 1, 9.5));
}

TEST(TransformPoint, IsAnIsometry) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const SE3Transform t = twist_to_transform(random_twist(rng));
    const Vec3 p(u(rng), u(rng), u(rng)), q(u(rng), u(rng), u(rng));
    EXPECT_NEAR((transform_point(t, p) - transform_point(t, q)).norm(), (p - q).norm(), 1e-9);
  }
}

TEST(TwistJacobians, TranslationBlockAndSmallAngle) {
  const Vec3 p(0.3, -1.2, 4.0);
  const Mat36 j0 = twist_jacobians(Twist(), p);
  EXPECT_TRUE(j0.rightCols<3>() == Mat3::Identity());
  EXPECT_LT((j0.leftCols<3>() + skew(p)).cwiseAbs().maxCoeff(), 1e-15);
  std::mt19937_64 rng(2);
  const Mat36 j = twist_jacobians(random_twist(rng), p);
  EXPECT_TRUE(j.rightCols<3>() == Mat3::Identity());
}

TEST(TwistJacobians, MatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const double eps = 1e-6;
  for (int n = 0; n < 100; ++n) {
    const Twist t = random_twist(rng, 2.8);
    const Vec3 p(u(rng), u(rng), u(rng));
    const Mat36 j = twist_jacobians(t, p);
    for (int k = 0; k < 6; ++k) {
      Vec6 a = t.vector(), b = t.vector();
      a[k] += eps;
      b[k] -= eps;
      const Vec3 fd = (transform_point(twist_to_transform(Twist(a)), p) -
                       transform_point(twist_to_transform(Twist(b)), p)) / (2 * eps);
      const double scale = std::max({fd.norm(), j.col(k).norm(), 1e-3});
      EXPECT_LT((fd - j.col(k)).norm() / scale, 1e-5) << "draw " << n << " column " << k;
    }
  }
}

TEST(AxisAngle, RoundTrip) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const Twist t = random_twist(rng, 3.0);
    const Vec3 back = axis_angle_from_rotation(twist_to_transform(t).rotation);
    EXPECT_LT((back - t.rotation()).norm(), 1e-9);
    EXPECT_NEAR(rotation_angle(twist_to_transform(t).rotation), t.rotation().norm(), 1e-9);
  }
}

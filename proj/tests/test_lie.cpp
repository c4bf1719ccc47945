// Copyright 2026 The regrl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "oracles.hpp"
#include "regrl/lie.hpp"
#include "regrl/rng.hpp"

#include <doctest.h>

#include <numbers>
#include <vector>

using namespace regrl;

namespace {

constexpr double kPi = std::numbers::pi;

Pose random_pose(Rng& rng) {
  Vec6 xi;
  for (int i = 0; i < 3; ++i) xi(i) = rng.uniform(-100.0, 100.0);
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  xi.tail<3>() = axis.normalized() * rng.uniform(0.0, kPi - 0.1);
  return se3_exp(Twist::from_vector(xi));
}

Eigen::Matrix<double, 3, 4> top_rows(const Pose& p) {
  Eigen::Matrix<double, 3, 4> m;
  m << p.R, p.t;
  return m;
}

}  // namespace

TEST_SUITE("lie") {

TEST_CASE("exp of zero twist is identity") {
  const Pose p = se3_exp(Twist{});
  CHECK((p.R - Mat3::Identity()).norm() == 0.0);
  CHECK(p.t.norm() == 0.0);
}

TEST_CASE("exp of quarter turn about z") {
  Twist xi;
  xi.omega = Vec3(0, 0, kPi / 2);
  const Pose p = se3_exp(xi);
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((p.R - expected).norm() < 1e-12);
  CHECK(p.t.norm() < 1e-12);
}

TEST_CASE("exp of half turn with unit translation") {
  Twist xi;
  xi.v = Vec3(1, 0, 0);
  xi.omega = Vec3(0, 0, kPi);
  const Pose p = se3_exp(xi);
  CHECK(std::abs(p.t.x()) < 1e-9);
  CHECK(std::abs(p.t.y() - 2.0 / kPi) < 1e-9);
  CHECK(std::abs(p.t.z()) < 1e-9);
  const Eigen::Matrix4d oracle = oracle::twist_matrix_exp(xi.as_vector());
  CHECK((top_rows(p) - oracle.topRows<3>()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("exp matches frozen matrix-exponential values") {
  // Frozen from an independent Pade matrix exponential of the 4x4 twist matrix.
  Vec6 xi;
  xi << 10, -20, 30, 0.3, -0.2, 0.5;
  Eigen::Matrix<double, 3, 4> frozen;
  frozen << 0.8595338985586632, -0.497991537002922, -0.11491695393636674, 12.39534326844261,  //
      0.4398676329582309, 0.8353156052067087, -0.32979433769225514, -21.41417226782924,      //
      0.26022671404809444, 0.23292116428443682, 0.937032437284918, 27.99712513180274;
  CHECK((top_rows(se3_exp(Twist::from_vector(xi))) - frozen).cwiseAbs().maxCoeff() < 1e-12);

  xi << 0, 0, 0, kPi - 1e-3, 0, 0;
  frozen << 1, 0, 0, 0,                                        //
      0, -9.999995000000415e-01, -9.999998333331955e-04, 0,  //
      0, 9.999998333331953e-04, -9.999995000000417e-01, 0;
  CHECK((top_rows(se3_exp(Twist::from_vector(xi))) - frozen).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exp agrees with the matrix exponential on random twists") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Vec6 xi;
    for (int j = 0; j < 6; ++j) xi(j) = j < 3 ? rng.uniform(-50, 50) : rng.uniform(-1.5, 1.5);
    const Eigen::Matrix4d oracle = oracle::twist_matrix_exp(xi);
    CHECK((top_rows(se3_exp(Twist::from_vector(xi))) - oracle.topRows<3>()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("log of identity and quarter turn") {
  const Twist z = se3_log(Pose::identity());
  CHECK(z.as_vector().norm() == 0.0);
  Pose p;
  p.R << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Twist q = se3_log(p);
  CHECK((q.omega - Vec3(0, 0, kPi / 2)).norm() < 1e-12);
  CHECK(q.v.norm() < 1e-12);
}

TEST_CASE("log inverts the half-turn example") {
  Pose p;
  p.R << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  p.t = Vec3(0, 2.0 / kPi, 0);
  const Twist xi = se3_log(p);
  CHECK(xi.angle() <= kPi + 1e-12);
  const Pose back = se3_exp(xi);
  CHECK((back.R - p.R).norm() < 1e-8);
  CHECK((back.t - p.t).cwiseAbs().maxCoeff() < 1e-8);
  // Axis sign at theta = pi: largest-magnitude component positive.
  CHECK(xi.omega.z() > 0);
  CHECK((xi.as_vector() - (Vec6() << 1, 0, 0, 0, 0, kPi).finished()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("round trip on random twists") {
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vec6 xi;
    for (int j = 0; j < 3; ++j) xi(j) = rng.uniform(-100, 100);
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    xi.tail<3>() = axis.normalized() * rng.uniform(0.0, kPi - 0.1);
    const Vec6 back = se3_log(se3_exp(Twist::from_vector(xi))).as_vector();
    worst = std::max(worst, (back - xi).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("small-angle continuity") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    Vec6 xi;
    for (int j = 0; j < 6; ++j) xi(j) = rng.uniform(-1, 1);
    xi *= rng.uniform(1e-12, 1e-3) / xi.norm();
    Eigen::Matrix4d lin = Eigen::Matrix4d::Identity();
    lin.topLeftCorner<3, 3>() += skew(xi.tail<3>());
    lin.block<3, 1>(0, 3) = xi.head<3>();
    CHECK((se3_exp(Twist::from_vector(xi)).matrix() - lin).norm() <= 1.0 * xi.squaredNorm());
  }
  // Either side of the series switchover, and where 1 - cos(theta) rounds to 0.
  for (double theta : {1e-8, 1.01e-8, 1e-6, 0.999e-2, 1.001e-2}) {
    const Vec3 axis = Vec3(0.3, -0.5, 0.8).normalized();
    Twist tw;
    tw.v = Vec3(1, 2, 3);
    tw.omega = theta * axis;
    CHECK((se3_exp(tw).matrix() - oracle::twist_matrix_exp(tw.as_vector())).norm() < 1e-12);
    const Twist back = se3_log(se3_exp(tw));
    CHECK((back.as_vector() - tw.as_vector()).norm() < 1e-12);
  }
}

TEST_CASE("composition and inversion") {
  Rng rng(2);
  Pose ta, tb;
  ta.t = Vec3(1, 2, 3);
  tb.t = Vec3(4, 5, 6);
  CHECK(((ta * tb).t - Vec3(5, 7, 9)).norm() == 0.0);

  Pose tr;
  tr.t = Vec3(3, -1, 2);
  CHECK((pose_inverse(tr).t + tr.t).norm() == 0.0);
  CHECK((pose_inverse(Pose::identity()).matrix() - Eigen::Matrix4d::Identity()).norm() == 0.0);

  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    const Pose q = random_pose(rng);
    CHECK(((Pose::identity() * p).matrix() - p.matrix()).norm() < 1e-12);
    CHECK(((p * pose_inverse(p)).matrix() - Eigen::Matrix4d::Identity()).norm() < 1e-9);
    CHECK((pose_inverse(p).matrix() - p.matrix().inverse()).norm() < 1e-9);
    CHECK((p * q).drift() < 1e-9);
  }
}

TEST_CASE("orthonormalize") {
  Rng rng(3);
  const Pose p = random_pose(rng);
  CHECK((orthonormalize(p.R) - p.R).norm() < 1e-12);
  CHECK((orthonormalize(1.001 * Mat3::Identity()) - Mat3::Identity()).norm() < 1e-12);

  for (int i = 0; i < 20; ++i) {
    const Mat3 r = random_pose(rng).R;
    Mat3 noisy = r;
    for (int j = 0; j < 9; ++j) noisy(j) += rng.uniform(-1e-3, 1e-3);
    const Mat3 out = orthonormalize(noisy);
    CHECK((out - r).norm() < 2e-3);
    CHECK(std::abs(out.determinant() - 1.0) < 1e-9);
    CHECK((out.transpose() * out - Mat3::Identity()).norm() < 1e-9);
    const Mat3 searched = oracle::procrustes_search(noisy, r);
    CHECK((out - searched).norm() < 1e-6);
  }

  // A reflection comes back as a proper rotation.
  Mat3 refl = Mat3::Identity();
  refl(2, 2) = -1;
  CHECK(std::abs(orthonormalize(refl).determinant() - 1.0) < 1e-9);
  CHECK_THROWS_AS(orthonormalize(Mat3::Zero()), NumericError);
}

TEST_CASE("pose error") {
  const std::vector<Vec3> pts = {{1, 0, 0}, {0, 5, 0}, {0, 0, -2}, {3, 3, 3}};
  Rng rng(4);
  const Pose tgt = random_pose(rng);
  CHECK(pose_error(tgt, tgt, pts) < 1e-18 + 1e-20);

  Pose shift;
  shift.t = Vec3(3, 4, 0);
  CHECK(std::abs(pose_error(tgt * shift, tgt, pts) - 25.0) < 1e-9);
  const std::vector<Vec3> other = {{-40, 2, 9}};
  CHECK(std::abs(pose_error(tgt * shift, tgt, other) - 25.0) < 1e-9);

  Pose half;
  half.R << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  const std::vector<Vec3> one = {{1, 0, 0}};
  CHECK(std::abs(pose_error(half, Pose::identity(), one) - 4.0) < 1e-12);

  for (int i = 0; i < 50; ++i) CHECK(pose_error(random_pose(rng), tgt, pts) > 0.0);
  CHECK_THROWS_AS(pose_error(tgt, tgt, std::vector<Vec3>{}), NumericError);
}

}  // TEST_SUITE

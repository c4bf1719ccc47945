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

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <span>
#include <stdexcept>

namespace regrl {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Raised when a numerical routine receives input it cannot handle
/// (singular rotation estimate, empty point set, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Element of se(3). Translational part first, rotational part second.
struct Twist {
  Vec3 v = Vec3::Zero();      // mm
  Vec3 omega = Vec3::Zero();  // rad

  static Twist from_vector(const Vec6& xi) {
    return {xi.head<3>(), xi.tail<3>()};
  }
  Vec6 as_vector() const {
    Vec6 xi;
    xi << v, omega;
    return xi;
  }
  double angle() const { return omega.norm(); }
};

/// Rigid transform mapping model coordinates to camera coordinates:
/// x_cam = R * x_model + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();  // mm

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return R * p + t; }
  Eigen::Matrix4d matrix() const;

  /// Frobenius distance of R^T R from I plus |det R - 1|.
  double drift() const;
};

Mat3 skew(const Vec3& w);

/// Closed-form exponential with Rodrigues rotation and the left-Jacobian V
/// applied to the translational part. Below theta = 1e-8 the second-order
/// Taylor expansions are used.
Pose se3_exp(const Twist& xi);

/// Inverse of se3_exp; returned angle lies in [0, pi]. At theta = pi the
/// rotation axis is chosen with its largest-magnitude component positive.
Twist se3_log(const Pose& p);

/// Homogeneous product a * b, re-orthonormalized when drift exceeds 1e-9.
Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& p);

inline Pose operator*(const Pose& a, const Pose& b) { return pose_compose(a, b); }

/// Nearest rotation in Frobenius norm: U diag(1, 1, det(U V^T)) V^T.
/// Throws NumericError for (numerically) singular input.
Mat3 orthonormalize(const Mat3& m);

/// Mean squared displacement of `points` under target^-1 * current, mm^2.
double pose_error(const Pose& current, const Pose& target,
                  std::span<const Vec3> points);

/// Mean displacement (not squared) of `points` under target^-1 * estimate, mm.
double mean_displacement(const Pose& estimate, const Pose& target,
                         std::span<const Vec3> points);

}  // namespace regrl

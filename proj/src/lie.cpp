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

#include "regrl/lie.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace regrl {

namespace {

constexpr double kSmallAngle = 1e-8;
// Below this the closed-form coefficients lose digits to cancellation.
constexpr double kSeriesAngle = 1e-2;
constexpr double kDriftTolerance = 1e-9;

Vec3 vee(const Mat3& w) { return {w(2, 1), w(0, 2), w(1, 0)}; }

}  // namespace

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = R;
  m.topRightCorner<3, 1>() = t;
  return m;
}

double Pose::drift() const {
  return (R.transpose() * R - Mat3::Identity()).norm() + std::abs(R.determinant() - 1.0);
}

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Pose se3_exp(const Twist& xi) {
  const double theta = xi.omega.norm();
  const Mat3 W = skew(xi.omega);
  const Mat3 W2 = W * W;
  const double th2 = theta * theta;
  double a, b, c;  // sin(t)/t, (1 - cos t)/t^2, (t - sin t)/t^3
  if (theta < kSeriesAngle) {
    a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
    b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0;
    c = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0 - th2 * th2 * th2 / 362880.0;
  } else {
    const double s = std::sin(theta);
    const double half = std::sin(0.5 * theta) / (0.5 * theta);
    a = s / theta;
    b = 0.5 * half * half;
    c = (theta - s) / (th2 * theta);
  }
  Pose out;
  out.R = Mat3::Identity() + a * W + b * W2;
  out.t = (Mat3::Identity() + b * W + c * W2) * xi.v;
  return out;
}

Twist se3_log(const Pose& p) {
  const Mat3& R = p.R;
  const double cos_theta = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  const Vec3 antisym = 0.5 * vee(R - R.transpose());  // sin(theta) * axis
  const double theta = std::atan2(antisym.norm(), cos_theta);

  Vec3 omega;
  if (theta < kSmallAngle) {
    omega = antisym;
  } else if (theta < std::numbers::pi - 1e-3) {
    omega = (theta / std::sin(theta)) * antisym;
  } else {
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part, sym(R) = cos * I + (1 - cos) * axis * axis^T.
    const Mat3 B = (0.5 * (R + R.transpose()) - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
    Eigen::Index k = 0;
    B.diagonal().maxCoeff(&k);
    Vec3 axis = B.col(k) / std::sqrt(std::max(B(k, k), 1e-300));
    axis.normalize();
    if (antisym.norm() > 1e-12) {
      if (axis.dot(antisym) < 0.0) axis = -axis;
    } else {
      Eigen::Index j = 0;
      axis.cwiseAbs().maxCoeff(&j);
      if (axis(j) < 0.0) axis = -axis;
    }
    omega = theta * axis;
  }

  const Mat3 W = skew(omega);
  Mat3 V_inv;
  if (theta < kSeriesAngle) {
    const double th2 = theta * theta;
    V_inv = Mat3::Identity() - 0.5 * W + (1.0 / 12.0 + th2 / 720.0 + th2 * th2 / 30240.0) * (W * W);
  } else {
    // theta sin / (2 (1 - cos)) written as (theta/2) cot(theta/2) to avoid 1 - cos.
    const double half = 0.5 * theta;
    const double coeff = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
    V_inv = Mat3::Identity() - 0.5 * W + coeff * (W * W);
  }
  return {V_inv * p.t, omega};
}

Pose pose_compose(const Pose& a, const Pose& b) {
  Pose out{a.R * b.R, a.R * b.t + a.t};
  if (out.drift() > kDriftTolerance) out.R = orthonormalize(out.R);
  return out;
}

Pose pose_inverse(const Pose& p) {
  Pose out;
  out.R = p.R.transpose();
  out.t = -(out.R * p.t);
  return out;
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!m.allFinite() || sv(0) == 0.0 || sv(2) <= 1e-12 * sv(0)) {
    throw NumericError("orthonormalize: degenerate rotation estimate (singular matrix)");
  }
  const Mat3& U = svd.matrixU();
  const Mat3& V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (U * V.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return U * D * V.transpose();
}

double pose_error(const Pose& current, const Pose& target, std::span<const Vec3> points) {
  if (points.empty()) throw NumericError("pose_error: empty point set");
  const Pose rel = pose_inverse(target) * current;
  double acc = 0.0;
  for (const Vec3& p : points) acc += (p - rel.apply(p)).squaredNorm();
  return acc / static_cast<double>(points.size());
}

double mean_displacement(const Pose& estimate, const Pose& target, std::span<const Vec3> points) {
  if (points.empty()) throw NumericError("mean_displacement: empty point set");
  const Pose rel = pose_inverse(target) * estimate;
  double acc = 0.0;
  for (const Vec3& p : points) acc += (p - rel.apply(p)).norm();
  return acc / static_cast<double>(points.size());
}

}  // namespace regrl

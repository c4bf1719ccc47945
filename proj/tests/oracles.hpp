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

// Reference implementations that share no code with the library. Used by
// the unit tests and the acceptance binary.

#pragma once

#include "regrl/lie.hpp"
#include "regrl/rng.hpp"
#include "regrl/scene.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <vector>

namespace regrl::oracle {

/// exp of the 4x4 twist matrix by Pade approximation with scaling and squaring.
inline Eigen::Matrix4d twist_matrix_exp(const Vec6& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m(0, 1) = -xi(5);
  m(0, 2) = xi(4);
  m(1, 0) = xi(5);
  m(1, 2) = -xi(3);
  m(2, 0) = -xi(4);
  m(2, 1) = xi(3);
  m.block<3, 1>(0, 3) = xi.head<3>();
  return m.exp();
}

/// Nearest rotation by exhaustive small-angle search around `start`:
/// coordinate descent on the axis-angle perturbation with shrinking steps.
inline Mat3 procrustes_search(const Mat3& m, const Mat3& start) {
  Mat3 best = start;
  double best_cost = (best - m).squaredNorm();
  for (double h = 1e-2; h > 1e-12; h *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int axis = 0; axis < 3; ++axis) {
        for (double s : {-h, h}) {
          Vec3 w = Vec3::Zero();
          w(axis) = s;
          const Mat3 cand = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix() * best;
          const double c = (cand - m).squaredNorm();
          if (c < best_cost) {
            best_cost = c;
            best = cand;
            improved = true;
          }
        }
      }
    }
  }
  return best;
}

struct RayHit {
  double depth = std::numeric_limits<double>::infinity();  // camera z
  double second = std::numeric_limits<double>::infinity();  // next-nearest distinct face
  int face = -1;
};

/// Moller-Trumbore ray cast through the centre of pixel (row, col) against
/// every face, in the camera frame. Returns the nearest hit's camera z and
/// the runner-up so callers can skip pixels where two faces nearly tie.
inline RayHit ray_cast_pixel(const SceneModel& scene, const Pose& pose, const CameraIntrinsics& k, int row,
                             int col) {
  const Vec3 dir((col + 0.5 - k.cx) / k.fx, (row + 0.5 - k.cy) / k.fy, 1.0);
  RayHit hit;
  for (std::size_t f = 0; f < scene.faces.size(); ++f) {
    const Vec3 a = pose.apply(scene.vertices[scene.faces[f][0]]);
    const Vec3 b = pose.apply(scene.vertices[scene.faces[f][1]]);
    const Vec3 c = pose.apply(scene.vertices[scene.faces[f][2]]);
    if (a.z() <= kZNear || b.z() <= kZNear || c.z() <= kZNear) continue;
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) continue;
    const Vec3 s = -a;
    const double u = s.dot(p) / det;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 q = s.cross(e1);
    const double v = dir.dot(q) / det;
    if (v < 0.0 || u + v > 1.0) continue;
    const double tz = e2.dot(q) / det;  // dir.z == 1, so the ray parameter is camera z
    if (tz <= 0.0) continue;
    if (tz < hit.depth) {
      hit.second = hit.depth;
      hit.depth = tz;
      hit.face = static_cast<int>(f);
    } else if (tz < hit.second) {
      hit.second = tz;
    }
  }
  return hit;
}

/// Random soup of 1 to 20 disjoint faces in front of an identity camera;
/// face 0 is liver.
inline SceneModel random_soup(Rng& rng) {
  SceneModel s;
  const int n = 1 + static_cast<int>(rng.below(20));
  for (int f = 0; f < n; ++f) {
    const Vec3 c(rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(60, 200));
    for (int i = 0; i < 3; ++i) {
      s.vertices.push_back(c + Vec3(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-20, 20)));
    }
    s.faces.push_back({3 * f, 3 * f + 1, 3 * f + 2});
    s.face_component.push_back(static_cast<ComponentId>(rng.below(4)));
  }
  s.face_component[0] = ComponentId::kLiver;
  s.sample_points = s.vertices;
  s.landmarks = {s.vertices[0]};
  return s;
}

}  // namespace regrl::oracle

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

#include "regrl/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace regrl {

namespace {

struct ScreenVertex {
  double u, v, z;
};

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

double percentile(std::vector<float> values, double pct) {
  // Linear interpolation between closest ranks.
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace

RasterBuffers rasterize(const SceneModel& scene, const Pose& pose, const CameraIntrinsics& k) {
  RasterBuffers buf;
  buf.height = k.height;
  buf.width = k.width;
  const std::size_t n = static_cast<std::size_t>(k.height) * static_cast<std::size_t>(k.width);
  buf.depth.assign(n, std::numeric_limits<double>::infinity());
  buf.pix_to_face.assign(n, -1);

  std::vector<Vec3> cam(scene.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = pose.apply(scene.vertices[i]);

  for (std::size_t f = 0; f < scene.faces.size(); ++f) {
    const auto& face = scene.faces[f];
    const Vec3& p0 = cam[face[0]];
    const Vec3& p1 = cam[face[1]];
    const Vec3& p2 = cam[face[2]];
    if (p0.z() <= kZNear || p1.z() <= kZNear || p2.z() <= kZNear) continue;

    ScreenVertex s[3];
    const Vec3* pts[3] = {&p0, &p1, &p2};
    for (int i = 0; i < 3; ++i) {
      const auto [u, v] = k.project(*pts[i]);
      s[i] = {u, v, pts[i]->z()};
    }
    const double area = edge(s[0].u, s[0].v, s[1].u, s[1].v, s[2].u, s[2].v);
    if (area == 0.0 || !std::isfinite(area)) continue;

    const double umin = std::min({s[0].u, s[1].u, s[2].u});
    const double umax = std::max({s[0].u, s[1].u, s[2].u});
    const double vmin = std::min({s[0].v, s[1].v, s[2].v});
    const double vmax = std::max({s[0].v, s[1].v, s[2].v});
    const int col0 = std::max(0, static_cast<int>(std::ceil(umin - 0.5)));
    const int col1 = std::min(k.width - 1, static_cast<int>(std::floor(umax - 0.5)));
    const int row0 = std::max(0, static_cast<int>(std::ceil(vmin - 0.5)));
    const int row1 = std::min(k.height - 1, static_cast<int>(std::floor(vmax - 0.5)));
    if (col0 > col1 || row0 > row1) continue;

    const double inv_area = 1.0 / area;
    for (int row = row0; row <= row1; ++row) {
      const double py = row + 0.5;
      for (int col = col0; col <= col1; ++col) {
        const double px = col + 0.5;
        const double b0 = edge(s[1].u, s[1].v, s[2].u, s[2].v, px, py) * inv_area;
        const double b1 = edge(s[2].u, s[2].v, s[0].u, s[0].v, px, py) * inv_area;
        const double b2 = edge(s[0].u, s[0].v, s[1].u, s[1].v, px, py) * inv_area;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        // Perspective-correct depth: 1/z is affine in screen space.
        const double z = 1.0 / (b0 / s[0].z + b1 / s[1].z + b2 / s[2].z);
        const std::size_t idx = buf.index(row, col);
        if (z < buf.depth[idx]) {
          buf.depth[idx] = z;
          buf.pix_to_face[idx] = static_cast<std::int32_t>(f);
        }
      }
    }
  }
  return buf;
}

std::size_t Observation::count_set(int c) const {
  const auto ch = channel(c);
  return static_cast<std::size_t>(std::count_if(ch.begin(), ch.end(), [](float v) { return v > 0.5f; }));
}

bool Observation::satisfies_invariants() const {
  if (data.size() != static_cast<std::size_t>(kChannels) * plane_size()) return false;
  for (int c : {kLigament, kRightRidge, kLeftRidge, kSilhouette, kLiverMask}) {
    for (float v : channel(c)) {
      if (v != 0.0f && v != 1.0f) return false;
    }
  }
  const auto depth = channel(kInverseDepth);
  const auto mask = channel(kLiverMask);
  for (std::size_t i = 0; i < plane_size(); ++i) {
    if (!(depth[i] >= 0.0f && depth[i] <= 1.0f)) return false;
    if (depth[i] != 0.0f && mask[i] == 0.0f) return false;
  }
  return true;
}

void normalize_within(std::span<float> values, std::span<const float> support,
                      std::optional<PercentileClip> clip) {
  std::vector<float> inside;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (support[i] > 0.5f) inside.push_back(values[i]);
  }
  if (inside.empty()) {
    std::fill(values.begin(), values.end(), 0.0f);
    return;
  }
  double lo = *std::min_element(inside.begin(), inside.end());
  double hi = *std::max_element(inside.begin(), inside.end());
  if (clip) {
    lo = percentile(inside, clip->lo);
    hi = percentile(inside, clip->hi);
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (support[i] <= 0.5f || !(range > 0.0)) {
      values[i] = 0.0f;
      continue;
    }
    const double x = (std::clamp(static_cast<double>(values[i]), lo, hi) - lo) / range;
    values[i] = static_cast<float>(x);
  }
}

namespace {

void morph3x3(std::span<float> plane, int height, int width, bool erode) {
  const std::vector<float> src(plane.begin(), plane.end());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      bool any = false;
      bool all = true;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
          const bool set = src[static_cast<std::size_t>(rr) * width + cc] > 0.5f;
          any = any || set;
          all = all && set;
        }
      }
      plane[static_cast<std::size_t>(r) * width + c] = (erode ? all : any) ? 1.0f : 0.0f;
    }
  }
}

}  // namespace

void dilate3x3(std::span<float> plane, int height, int width) { morph3x3(plane, height, width, false); }
void erode3x3(std::span<float> plane, int height, int width) { morph3x3(plane, height, width, true); }

Observation assemble_observation(const RasterBuffers& buf, const SceneModel& scene,
                                 std::optional<PercentileClip> clip) {
  Observation obs(buf.height, buf.width);
  auto liver = obs.channel(Observation::kLiverMask);
  auto depth = obs.channel(Observation::kInverseDepth);
  for (std::size_t i = 0; i < buf.pix_to_face.size(); ++i) {
    const int f = buf.pix_to_face[i];
    if (f < 0) continue;
    switch (scene.face_component[static_cast<std::size_t>(f)]) {
      case ComponentId::kLigament: obs.channel(Observation::kLigament)[i] = 1.0f; break;
      case ComponentId::kRightRidge: obs.channel(Observation::kRightRidge)[i] = 1.0f; break;
      case ComponentId::kLeftRidge: obs.channel(Observation::kLeftRidge)[i] = 1.0f; break;
      case ComponentId::kLiver:
        liver[i] = 1.0f;
        depth[i] = static_cast<float>(1.0 / buf.depth[i]);
        break;
    }
  }
  normalize_within(depth, liver, clip);

  // Silhouette: mask minus its erosion.
  auto sil = obs.channel(Observation::kSilhouette);
  std::copy(liver.begin(), liver.end(), sil.begin());
  erode3x3(sil, obs.height, obs.width);
  for (std::size_t i = 0; i < sil.size(); ++i) sil[i] = liver[i] - sil[i];
  return obs;
}

int scaled_pixel_threshold(int at_128, int height, int width) {
  const double scaled = at_128 * static_cast<double>(height) * width / (128.0 * 128.0);
  return std::max(1, static_cast<int>(std::lround(scaled)));
}

int count_visible_structures(const Observation& obs, int min_pixels) {
  int count = 0;
  for (int c : {Observation::kLigament, Observation::kRightRidge, Observation::kLeftRidge,
                Observation::kLiverMask}) {
    if (obs.count_set(c) >= static_cast<std::size_t>(min_pixels)) ++count;
  }
  return count;
}

void write_observation_pgm(const Observation& obs, const std::string& prefix, const Pose& pose,
                           const CameraIntrinsics& k) {
  static constexpr const char* kNames[] = {"ligament", "right_ridge", "left_ridge",
                                           "silhouette", "inv_depth", "liver_mask"};
  for (int c = 0; c < Observation::kChannels; ++c) {
    const std::string path = prefix + "_" + std::to_string(c + 1) + "_" + kNames[c] + ".pgm";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "P5\n" << obs.width << ' ' << obs.height << "\n255\n";
    for (float v : obs.channel(c)) {
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
    }
  }
  std::ofstream info(prefix + "_info.txt");
  if (!info) throw DataError("cannot write '" + prefix + "_info.txt'");
  info << std::setprecision(17);
  info << "rotation";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) info << ' ' << pose.R(r, c);
  info << "\ntranslation_mm " << pose.t.x() << ' ' << pose.t.y() << ' ' << pose.t.z() << '\n';
  info << "intrinsics fx=" << k.fx << " fy=" << k.fy << " cx=" << k.cx << " cy=" << k.cy
       << " width=" << k.width << " height=" << k.height << '\n';
  for (int c = 0; c < Observation::kChannels; ++c) info << kNames[c] << "_pixels " << obs.count_set(c) << '\n';
}

}  // namespace regrl

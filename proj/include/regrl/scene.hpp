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

#include "regrl/lie.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace regrl {

/// Malformed or inconsistent input data (scene files, checkpoints, pose strings).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ComponentId : std::uint8_t { kLigament = 0, kRightRidge = 1, kLeftRidge = 2, kLiver = 3 };

inline constexpr std::array<std::string_view, 4> kComponentNames = {"ligament", "right_ridge",
                                                                    "left_ridge", "liver"};

std::string_view component_name(ComponentId id);
std::optional<ComponentId> parse_component(std::string_view name);

struct SceneModel {
  std::vector<Vec3> vertices;  // mm, model frame
  std::vector<std::array<int, 3>> faces;
  std::vector<ComponentId> face_component;
  std::vector<Vec3> sample_points;  // error metric point set
  std::vector<Vec3> landmarks;      // TRE targets

  /// Checks every invariant; throws DataError naming the offending entity.
  void validate() const;

  Vec3 centroid() const;
  double bounding_radius() const;
  std::size_t face_count(ComponentId id) const;
};

/// Text format: `v x y z`, `g <component>`, `f i j k` (1-based),
/// `lm x y z`, `sp x y z`; blank lines and `#` comments are skipped.
/// Missing `sp` lines default to the vertex set (decimated to 2048), missing
/// `lm` lines to the vertex centroid.
SceneModel load_scene(const std::string& path);
SceneModel parse_scene(std::string_view text);
std::string format_scene(const SceneModel& scene);
void save_scene(const SceneModel& scene, const std::string& path);

/// Deformed icosphere of radius 60 mm with three labelled surface bands.
SceneModel generate_synthetic_scene(std::uint64_t seed, int n_subdiv, double bump_amp);

/// Camera on the model's +z side at 2.5x the bounding radius, looking at the
/// centroid. Pose convention: model -> camera.
Pose reference_pose(const SceneModel& scene);

struct CameraIntrinsics {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 256.0;
  double cy = 256.0;
  int width = 512;
  int height = 512;

  void validate() const;
  /// Pixel coordinates (u, v) of a camera-frame point with z > 0.
  std::pair<double, double> project(const Vec3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
};

CameraIntrinsics scale_intrinsics(const CameraIntrinsics& k, int new_w, int new_h);

inline constexpr double kZNear = 0.1;  // mm

struct RasterBuffers {
  int height = 0;
  int width = 0;
  std::vector<double> depth;       // camera-frame z, +inf where empty
  std::vector<std::int32_t> pix_to_face;  // -1 where empty

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col);
  }
};

/// Z-buffer rasterization. Pixel (row, col) samples the image point
/// (col + 0.5, row + 0.5). Faces with any vertex at z <= kZNear are dropped,
/// no back-face culling, ties keep the lower face index.
RasterBuffers rasterize(const SceneModel& scene, const Pose& pose, const CameraIntrinsics& k);

/// Six channels: ligament, right ridge, left ridge, liver silhouette,
/// normalised inverse depth, liver mask.
struct Observation {
  enum Channel : int {
    kLigament = 0,
    kRightRidge = 1,
    kLeftRidge = 2,
    kSilhouette = 3,
    kInverseDepth = 4,
    kLiverMask = 5,
  };
  static constexpr int kChannels = 6;

  int height = 0;
  int width = 0;
  std::vector<float> data;  // channel-major, kChannels * height * width

  Observation() = default;
  Observation(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(kChannels) * h * w, 0.0f) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::span<float> channel(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(int c) const { return {data.data() + c * plane_size(), plane_size()}; }
  std::size_t count_set(int c) const;

  /// Binary channels exactly {0,1}, channel 5 in [0,1] and supported inside
  /// the liver mask.
  bool satisfies_invariants() const;

  bool operator==(const Observation&) const = default;
};

struct PercentileClip {
  double lo = 2.0;   // percent
  double hi = 98.0;  // percent
};

Observation assemble_observation(const RasterBuffers& buf, const SceneModel& scene,
                                 std::optional<PercentileClip> clip = std::nullopt);

/// Min-max normalises `values` over the pixels where `support` is set and
/// zeroes everything else; a constant support region becomes all zeros.
void normalize_within(std::span<float> values, std::span<const float> support,
                      std::optional<PercentileClip> clip = std::nullopt);

/// 3x3 binary morphology. Out-of-image pixels count as set for erosion and
/// unset for dilation, so the image border is never a boundary.
void dilate3x3(std::span<float> plane, int height, int width);
void erode3x3(std::span<float> plane, int height, int width);

/// A pixel-count threshold calibrated at 128x128, scaled by area (at least 1).
int scaled_pixel_threshold(int at_128, int height, int width);

int count_visible_structures(const Observation& obs, int min_pixels);

/// Debug dump: one binary PGM per channel plus `<prefix>_info.txt`.
void write_observation_pgm(const Observation& obs, const std::string& prefix, const Pose& pose,
                           const CameraIntrinsics& k);

}  // namespace regrl

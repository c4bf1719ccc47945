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

#include "regrl/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace regrl {

namespace {

constexpr std::size_t kMaxSamplePoints = 2048;
constexpr double kSphereRadius = 60.0;

std::vector<Vec3> decimate(const std::vector<Vec3>& pts, std::size_t max_count) {
  if (pts.size() <= max_count) return pts;
  const std::size_t stride = (pts.size() + max_count - 1) / max_count;
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < pts.size(); i += stride) out.push_back(pts[i]);
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view s, int line_no) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    throw DataError("scene line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  }
  return value;
}

long parse_index(std::string_view s, int line_no) {
  long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("scene line " + std::to_string(line_no) + ": bad index '" + std::string(s) + "'");
  }
  return value;
}

Vec3 parse_vec(const std::vector<std::string_view>& tok, int line_no) {
  if (tok.size() != 4) {
    throw DataError("scene line " + std::to_string(line_no) + ": expected 3 coordinates");
  }
  return {parse_double(tok[1], line_no), parse_double(tok[2], line_no), parse_double(tok[3], line_no)};
}

}  // namespace

std::string_view component_name(ComponentId id) { return kComponentNames[static_cast<int>(id)]; }

std::optional<ComponentId> parse_component(std::string_view name) {
  for (std::size_t i = 0; i < kComponentNames.size(); ++i) {
    if (kComponentNames[i] == name) return static_cast<ComponentId>(i);
  }
  return std::nullopt;
}

void SceneModel::validate() const {
  if (vertices.empty()) throw DataError("scene has no vertices");
  if (faces.empty()) throw DataError("scene has no faces");
  if (face_component.size() != faces.size()) {
    throw DataError("scene face-to-component map does not cover every face");
  }
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= vertices.size()) {
        throw DataError("face " + std::to_string(f + 1) + " has out-of-range vertex index " +
                        std::to_string(idx + 1));
      }
    }
    const Vec3& a = vertices[faces[f][0]];
    const Vec3& b = vertices[faces[f][1]];
    const Vec3& c = vertices[faces[f][2]];
    if ((b - a).cross(c - a).norm() <= 1e-12) {
      throw DataError("face " + std::to_string(f + 1) + " is degenerate (zero area)");
    }
  }
  if (face_count(ComponentId::kLiver) == 0) throw DataError("scene has no liver component");
  if (sample_points.empty()) throw DataError("scene has no sample points");
  if (landmarks.empty()) throw DataError("scene has no landmarks");
}

Vec3 SceneModel::centroid() const {
  Vec3 c = Vec3::Zero();
  for (const Vec3& v : vertices) c += v;
  return vertices.empty() ? c : Vec3(c / static_cast<double>(vertices.size()));
}

double SceneModel::bounding_radius() const {
  const Vec3 c = centroid();
  double r = 0.0;
  for (const Vec3& v : vertices) r = std::max(r, (v - c).norm());
  return r;
}

std::size_t SceneModel::face_count(ComponentId id) const {
  return static_cast<std::size_t>(std::count(face_component.begin(), face_component.end(), id));
}

SceneModel parse_scene(std::string_view text) {
  SceneModel scene;
  std::optional<ComponentId> group;
  std::vector<std::array<long, 3>> raw_faces;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') {
      if (eol == text.size()) break;
      continue;
    }
    const std::string_view key = tok[0];
    if (key == "v") {
      scene.vertices.push_back(parse_vec(tok, line_no));
    } else if (key == "lm") {
      scene.landmarks.push_back(parse_vec(tok, line_no));
    } else if (key == "sp") {
      scene.sample_points.push_back(parse_vec(tok, line_no));
    } else if (key == "g") {
      if (tok.size() != 2) throw DataError("scene line " + std::to_string(line_no) + ": expected 'g <component>'");
      group = parse_component(tok[1]);
      if (!group) {
        throw DataError("scene line " + std::to_string(line_no) + ": unknown component '" + std::string(tok[1]) + "'");
      }
    } else if (key == "f") {
      if (tok.size() != 4) throw DataError("scene line " + std::to_string(line_no) + ": expected 3 face indices");
      if (!group) throw DataError("scene line " + std::to_string(line_no) + ": face before any 'g' group");
      raw_faces.push_back({parse_index(tok[1], line_no), parse_index(tok[2], line_no), parse_index(tok[3], line_no)});
      scene.face_component.push_back(*group);
    } else {
      throw DataError("scene line " + std::to_string(line_no) + ": unknown record '" + std::string(key) + "'");
    }
    if (eol == text.size()) break;
  }
  for (std::size_t f = 0; f < raw_faces.size(); ++f) {
    std::array<int, 3> face{};
    for (int k = 0; k < 3; ++k) {
      const long idx = raw_faces[f][k];
      if (idx < 1 || static_cast<std::size_t>(idx) > scene.vertices.size()) {
        throw DataError("face " + std::to_string(f + 1) + " has out-of-range vertex index " + std::to_string(idx));
      }
      face[k] = static_cast<int>(idx - 1);
    }
    scene.faces.push_back(face);
  }
  if (scene.sample_points.empty()) scene.sample_points = decimate(scene.vertices, kMaxSamplePoints);
  if (scene.landmarks.empty() && !scene.vertices.empty()) scene.landmarks.push_back(scene.centroid());
  scene.validate();
  return scene;
}

SceneModel load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open scene file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

std::string format_scene(const SceneModel& scene) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# regrl scene: " << scene.vertices.size() << " vertices, " << scene.faces.size() << " faces\n";
  for (const Vec3& v : scene.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  // Face order is preserved, so a group line starts every run of one component.
  for (std::size_t f = 0; f < scene.faces.size(); ++f) {
    if (f == 0 || scene.face_component[f] != scene.face_component[f - 1]) {
      out << "g " << kComponentNames[static_cast<std::size_t>(scene.face_component[f])] << '\n';
    }
    const auto& face = scene.faces[f];
    out << "f " << face[0] + 1 << ' ' << face[1] + 1 << ' ' << face[2] + 1 << '\n';
  }
  for (const Vec3& p : scene.landmarks) out << "lm " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const Vec3& p : scene.sample_points) out << "sp " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  return out.str();
}

void save_scene(const SceneModel& scene, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write scene file '" + path + "'");
  out << format_scene(scene);
  if (!out) throw DataError("failed writing scene file '" + path + "'");
}

SceneModel generate_synthetic_scene(std::uint64_t seed, int n_subdiv, double bump_amp) {
  n_subdiv = std::clamp(n_subdiv, 1, 5);
  Rng rng(Rng::mix(seed) ^ 0x5CE4E5EEDULL);

  // Icosahedron.
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> dirs = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                            {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                            {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (Vec3& d : dirs) d.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

  for (int level = 0; level < n_subdiv; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      dirs.push_back((dirs[a] + dirs[b]).normalized());
      const int idx = static_cast<int>(dirs.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  // Smooth radial relief: a sum of seeded plane waves on the unit sphere.
  struct Wave {
    Vec3 dir;
    double freq, phase, amp;
  };
  std::vector<Wave> waves;
  double amp_sum = 0.0;
  for (int k = 0; k < 6; ++k) {
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    d.normalize();
    const Wave w{d, rng.uniform(1.5, 4.0), rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.5, 1.0)};
    amp_sum += w.amp;
    waves.push_back(w);
  }

  SceneModel scene;
  scene.vertices.reserve(dirs.size());
  for (const Vec3& d : dirs) {
    double relief = 0.0;
    for (const Wave& w : waves) relief += w.amp * std::sin(w.freq * d.dot(w.dir) + w.phase);
    scene.vertices.push_back(d * (kSphereRadius + bump_amp * relief / amp_sum));
  }
  scene.faces = faces;

  // Surface bands on the camera-facing (+z) side. A face belongs to a band
  // when its centroid direction lies near a small circle n . d = offset.
  auto jitter = [&](Vec3 n) {
    n += 0.08 * Vec3(rng.normal(), rng.normal(), rng.normal());
    return Vec3(n.normalized());
  };
  const Vec3 right_n = jitter(Vec3(1.0, 0.25, 0.0));
  const Vec3 left_n = jitter(Vec3(-1.0, 0.25, 0.0));
  const Vec3 lig_n = jitter(Vec3(0.0, 1.0, 0.15));
  const double half_width = 0.09;

  scene.face_component.resize(faces.size(), ComponentId::kLiver);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 d = (dirs[faces[f][0]] + dirs[faces[f][1]] + dirs[faces[f][2]]).normalized();
    if (d.z() < 0.1) continue;
    if (std::abs(lig_n.dot(d) + 0.05) < half_width && std::abs(d.x()) < 0.3) {
      scene.face_component[f] = ComponentId::kLigament;
    } else if (std::abs(right_n.dot(d) - 0.35) < half_width) {
      scene.face_component[f] = ComponentId::kRightRidge;
    } else if (std::abs(left_n.dot(d) - 0.35) < half_width) {
      scene.face_component[f] = ComponentId::kLeftRidge;
    }
  }

  scene.sample_points = decimate(scene.vertices, kMaxSamplePoints);
  for (int k = 0; k < 8; ++k) {
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    d.normalize();
    scene.landmarks.push_back(d * (0.5 * kSphereRadius * std::cbrt(rng.uniform())));
  }
  scene.validate();
  return scene;
}

Pose reference_pose(const SceneModel& scene) {
  const Vec3 c = scene.centroid();
  const Vec3 eye = c + Vec3(0.0, 0.0, 2.5 * scene.bounding_radius());
  Pose p;
  p.R = Vec3(1.0, -1.0, -1.0).asDiagonal();
  p.t = -(p.R * eye);
  return p;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw DataError("intrinsics: image size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw DataError("intrinsics: principal point outside the image");
  }
}

CameraIntrinsics scale_intrinsics(const CameraIntrinsics& k, int new_w, int new_h) {
  if (new_w <= 0 || new_h <= 0) throw DataError("scale_intrinsics: target size must be positive");
  const double sx = static_cast<double>(new_w) / k.width;
  const double sy = static_cast<double>(new_h) / k.height;
  return {k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy, new_w, new_h};
}

}  // namespace regrl

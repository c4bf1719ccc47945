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

#include "regrl/agent.hpp"
#include "regrl/env.hpp"
#include "regrl/eval.hpp"
#include "regrl/trainer.hpp"

#include <stdexcept>
#include <string>
#include <string_view>

namespace regrl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SceneSource {
  std::string path;  // takes precedence when non-empty
  std::uint64_t seed = 7;
  int subdiv = 3;
  double bump = 4.0;
};

/// Run configuration: INI-style `[env]`, `[agent]`, `[train]`, `[eval]`
/// sections of `key = value` lines, `;` comments. Angles are in degrees,
/// lengths in mm. Unknown sections or keys are rejected.
struct RunConfig {
  SceneSource scene;
  EnvConfig env;
  AgentConfig agent;
  TrainConfig train;
  EvalConfig eval;

  /// Agent resolution and action count are derived from [env].
  void finalize();
  void validate() const;
};

RunConfig parse_run_config(std::string_view text, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

SceneModel load_scene_source(const SceneSource& src);

/// Pose string: six values "x,y,z,rx,ry,rz" (mm, degrees) give an offset
/// twist composed on the left of the scene's reference pose; twelve values
/// give an absolute model-to-camera pose, R row-major then t.
Pose parse_pose_spec(std::string_view text, const SceneModel& scene);
std::string format_pose_spec(const Pose& pose);

/// "lo:hi:step" (inclusive) or a comma-separated list.
std::vector<double> parse_threshold_spec(std::string_view text);

/// Axis names tx, ty, tz, rx, ry, rz (or indices 0-5), comma separated.
std::vector<int> parse_axes(std::string_view text);

}  // namespace regrl

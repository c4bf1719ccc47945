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
#include "regrl/rng.hpp"
#include "regrl/scene.hpp"

#include <deque>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

namespace regrl {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Target-view augmentation. Setting every count to zero (or `enabled` to
/// false) makes augmentation the identity, apart from the optional FOV disk.
struct AugmentConfig {
  bool enabled = true;
  int max_mask_morph = 2;      // channels 1-4: 3x3 dilate/erode iterations
  int max_erase_rects = 3;     // channels 1-4: random erasing
  double erase_min_frac = 0.02;
  double erase_max_frac = 0.10;
  int max_depth_occlusions = 2;  // channel 5
  int max_liver_morph = 2;       // channel 6
  double fov_radius_frac = 0.48;
};

struct EnvConfig {
  int h = 128;
  int w = 128;
  CameraIntrinsics native;  // scaled to (w, h)

  double coarse_step_t = 5.0;               // mm
  double fine_step_t = 1.0;                 // mm
  double coarse_step_r = 2.0 * kDegToRad;   // rad
  double fine_step_r = 0.5 * kDegToRad;     // rad

  double m_succ = 500.0;  // mm^2
  int max_steps = 256;
  double beta = 10.0;
  double eps = 1e-6;
  int empty_view_pixels = 16;  // at 128x128, scaled by area
  int min_pixels = 20;         // structure visibility, at 128x128
  double rot_range = 20.0 * kDegToRad;
  double trans_range = 50.0;
  int min_structures = 2;
  int sample_retries = 1000;
  bool fov_mask = false;
  bool undo_empty_view = true;
  bool augment_target = true;
  std::optional<PercentileClip> depth_clip;
  AugmentConfig augment;
  /// Enabled action axes (0-2 translation x/y/z, 3-5 rotation); action
  /// index k maps to axis axes[k / 2] with sign + for even k.
  std::vector<int> axes = {0, 1, 2, 3, 4, 5};

  void validate() const;
  int action_count() const { return 2 * static_cast<int>(axes.size()); }
  CameraIntrinsics intrinsics() const { return scale_intrinsics(native, w, h); }
  int empty_view_threshold() const { return scaled_pixel_threshold(empty_view_pixels, h, w); }
  int structure_threshold() const { return scaled_pixel_threshold(min_pixels, h, w); }
};

enum class Granularity : std::uint8_t { kCoarse = 0, kFine = 1 };

struct ActionCommand {
  int axis = 0;  // 0-5
  int sign = 1;  // +1 / -1
  Granularity granularity = Granularity::kCoarse;
  bool terminate = false;

  static ActionCommand from_index(int index, const std::vector<int>& axes, Granularity g = Granularity::kCoarse,
                                  bool terminate = false);
  int index(const std::vector<int>& axes) const;
};

enum class DoneReason : std::uint8_t { kNone = 0, kSuccess, kTermLimit, kEmptyView, kPolicyTerminate };
std::string_view done_reason_name(DoneReason r);

struct EpisodeState {
  Pose pose_cur;
  Pose pose_tgt;
  Observation obs_tgt;
  Observation obs_cur;
  double m_prev = 0.0;
  double m0 = 0.0;
  int step_idx = 0;
  bool done = true;
  DoneReason done_reason = DoneReason::kNone;
};

struct AuxLabels {
  Granularity step_mode = Granularity::kFine;
  bool terminate = false;
};

struct StepOutcome {
  const Observation* obs = nullptr;  // owned by the environment
  double reward = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::kNone;
  double m = 0.0;
  AuxLabels aux;
  bool undone = false;
};

/// +1 / -1.1 / 0 by the sign of the error decrease.
double step_reward(double delta_m);
/// beta * max(0, (m0 - mT) / (m0 + eps)).
double final_bonus(double m0, double m_final, double beta, double eps);
/// Coarse iff m > 200 mm^2; terminate iff m < 50 mm^2.
AuxLabels aux_labels(double m);

Pose apply_action(const Pose& pose, const ActionCommand& a, const EnvConfig& config);

/// Uniform twist over the enabled axes, composed on the left of the scene's
/// reference pose; re-sampled until enough structures are visible.
Pose sample_valid_pose(const SceneModel& scene, const EnvConfig& config, Rng& rng);

Observation render_observation(const SceneModel& scene, const Pose& pose, const EnvConfig& config);

Observation augment_target(const Observation& obs, Rng& rng, const EnvConfig& config);

class RegistrationEnv {
 public:
  RegistrationEnv(std::shared_ptr<const SceneModel> scene, EnvConfig config);

  void reset(Rng& rng);
  /// Starts an episode from explicit poses; the target view is augmented
  /// only when `rng` is given.
  void reset_with(const Pose& target, const Pose& initial, Rng* rng = nullptr);
  StepOutcome step(const ActionCommand& a);

  const EpisodeState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  const SceneModel& scene() const { return *scene_; }
  std::shared_ptr<const SceneModel> scene_ptr() const { return scene_; }

  void set_success_threshold(double m_succ) { config_.m_succ = m_succ; }
  /// Per-step CSV trace (step_idx,axis,sign,granularity,m,reward,done_reason);
  /// the header is written on attach.
  void set_trace(std::ostream* trace) {
    trace_ = trace;
    if (trace_ != nullptr) *trace_ << "step_idx,axis,sign,granularity,m,reward,done_reason\n";
  }

 private:
  std::shared_ptr<const SceneModel> scene_;
  EnvConfig config_;
  EpisodeState state_;
  std::ostream* trace_ = nullptr;
};

inline constexpr double kCurriculumTrigger = 0.7;
inline constexpr std::size_t kCurriculumWindow = 100;

/// Stage-wise success threshold. Advances when the trailing window of
/// episodes at the current stage is full and its success rate reaches the
/// trigger; the window restarts after each advance.
class Curriculum {
 public:
  explicit Curriculum(std::vector<double> stages = {500.0, 300.0, 100.0, 10.0});

  double m_succ() const { return stages_[stage_]; }
  std::size_t stage() const { return stage_; }
  const std::vector<double>& stages() const { return stages_; }
  void record(bool success);
  double success_rate() const;
  std::size_t window_size() const { return window_.size(); }
  /// Applies the advance rule; returns the (possibly new) threshold.
  double next();

 private:
  std::vector<double> stages_;
  std::size_t stage_ = 0;
  std::deque<bool> window_;
};

/// Pure form of the advance rule.
std::size_t curriculum_next(std::size_t stage, std::size_t n_stages, double success_rate,
                            std::size_t window_fill);

}  // namespace regrl

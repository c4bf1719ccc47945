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

#include "regrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace regrl {

void EnvConfig::validate() const {
  if (h <= 0 || w <= 0) throw std::invalid_argument("env: resolution must be positive");
  native.validate();
  if (!(coarse_step_t > fine_step_t && fine_step_t > 0.0) || !(coarse_step_r > fine_step_r && fine_step_r > 0.0)) {
    throw std::invalid_argument("env: coarse steps must exceed fine steps, which must be positive");
  }
  if (max_steps < 1) throw std::invalid_argument("env: max_steps must be >= 1");
  if (!(m_succ > 0.0)) throw std::invalid_argument("env: m_succ must be positive");
  if (beta < 0.0 || !(eps > 0.0)) throw std::invalid_argument("env: beta must be >= 0 and eps > 0");
  if (rot_range < 0.0 || trans_range < 0.0) throw std::invalid_argument("env: sampling ranges must be >= 0");
  if (axes.empty()) throw std::invalid_argument("env: at least one action axis is required");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] < 0 || axes[i] > 5) throw std::invalid_argument("env: action axis out of range");
    for (std::size_t j = 0; j < i; ++j) {
      if (axes[i] == axes[j]) throw std::invalid_argument("env: duplicate action axis");
    }
  }
  if (min_structures < 0 || min_structures > 4) throw std::invalid_argument("env: min_structures must be in [0,4]");
  if (sample_retries < 1) throw std::invalid_argument("env: sample_retries must be >= 1");
}

ActionCommand ActionCommand::from_index(int index, const std::vector<int>& axes, Granularity g, bool terminate) {
  if (index < 0 || index >= 2 * static_cast<int>(axes.size())) throw std::out_of_range("action index out of range");
  return {axes[static_cast<std::size_t>(index / 2)], index % 2 == 0 ? 1 : -1, g, terminate};
}

int ActionCommand::index(const std::vector<int>& axes) const {
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] == axis) return static_cast<int>(2 * i) + (sign > 0 ? 0 : 1);
  }
  throw std::out_of_range("action axis not enabled");
}

std::string_view done_reason_name(DoneReason r) {
  switch (r) {
    case DoneReason::kNone: return "none";
    case DoneReason::kSuccess: return "success";
    case DoneReason::kTermLimit: return "term_limit";
    case DoneReason::kEmptyView: return "empty_view";
    case DoneReason::kPolicyTerminate: return "policy_terminate";
  }
  return "none";
}

double step_reward(double delta_m) {
  if (delta_m > 0.0) return 1.0;
  if (delta_m < 0.0) return -1.1;
  return 0.0;
}

double final_bonus(double m0, double m_final, double beta, double eps) {
  return beta * std::max(0.0, (m0 - m_final) / (m0 + eps));
}

AuxLabels aux_labels(double m) {
  return {m > 200.0 ? Granularity::kCoarse : Granularity::kFine, m < 50.0};
}

Pose apply_action(const Pose& pose, const ActionCommand& a, const EnvConfig& config) {
  if (a.axis < 0 || a.axis > 5 || (a.sign != 1 && a.sign != -1)) throw std::invalid_argument("invalid action");
  const bool coarse = a.granularity == Granularity::kCoarse;
  const double mag = a.axis < 3 ? (coarse ? config.coarse_step_t : config.fine_step_t)
                                : (coarse ? config.coarse_step_r : config.fine_step_r);
  Vec6 xi = Vec6::Zero();
  xi(a.axis) = a.sign * mag;
  return se3_exp(Twist::from_vector(xi)) * pose;
}

Observation render_observation(const SceneModel& scene, const Pose& pose, const EnvConfig& config) {
  return assemble_observation(rasterize(scene, pose, config.intrinsics()), scene, config.depth_clip);
}

Pose sample_valid_pose(const SceneModel& scene, const EnvConfig& config, Rng& rng) {
  const Pose ref = reference_pose(scene);
  const int min_px = config.structure_threshold();
  for (int attempt = 0; attempt < config.sample_retries; ++attempt) {
    Vec6 xi = Vec6::Zero();
    for (int axis : config.axes) {
      const double range = axis < 3 ? config.trans_range : config.rot_range;
      xi(axis) = rng.uniform(-range, range);
    }
    const Pose pose = se3_exp(Twist::from_vector(xi)) * ref;
    if (count_visible_structures(render_observation(scene, pose, config), min_px) >= config.min_structures) {
      return pose;
    }
  }
  throw NumericError("sample_valid_pose: no pose with >= " + std::to_string(config.min_structures) +
                     " visible structures after " + std::to_string(config.sample_retries) + " attempts");
}

namespace {

void erase_rect(std::span<float> plane, int h, int w, Rng& rng, const AugmentConfig& aug) {
  const double frac = rng.uniform(aug.erase_min_frac, aug.erase_max_frac);
  const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  const double area = frac * h * w;
  const int rh = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, h);
  const int rw = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, w);
  const int r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - rh + 1)));
  const int c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - rw + 1)));
  for (int r = r0; r < r0 + rh; ++r) {
    for (int c = c0; c < c0 + rw; ++c) plane[static_cast<std::size_t>(r) * w + c] = 0.0f;
  }
}

void random_morph(std::span<float> plane, int h, int w, int max_iters, Rng& rng) {
  if (max_iters <= 0) return;
  const int iters = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_iters + 1)));
  const bool dilate = rng.bernoulli(0.5);
  for (int i = 0; i < iters; ++i) {
    if (dilate) {
      dilate3x3(plane, h, w);
    } else {
      erode3x3(plane, h, w);
    }
  }
}

}  // namespace

Observation augment_target(const Observation& obs, Rng& rng, const EnvConfig& config) {
  Observation out = obs;
  const int h = obs.height;
  const int w = obs.width;
  const AugmentConfig& aug = config.augment;

  if (aug.enabled) {
    for (int c = Observation::kLigament; c <= Observation::kSilhouette; ++c) {
      auto plane = out.channel(c);
      random_morph(plane, h, w, aug.max_mask_morph, rng);
      if (aug.max_erase_rects > 0) {
        const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(aug.max_erase_rects + 1)));
        for (int i = 0; i < n; ++i) erase_rect(plane, h, w, rng, aug);
      }
    }

    auto liver = out.channel(Observation::kLiverMask);
    random_morph(liver, h, w, aug.max_liver_morph, rng);

    // Depth keeps its original support minus occluders, restricted to the
    // augmented liver mask, then is re-normalised over what remains.
    std::vector<float> support(obs.channel(Observation::kLiverMask).begin(),
                               obs.channel(Observation::kLiverMask).end());
    if (aug.max_depth_occlusions > 0) {
      const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(aug.max_depth_occlusions + 1)));
      for (int i = 0; i < n; ++i) erase_rect(support, h, w, rng, aug);
    }
    for (std::size_t i = 0; i < support.size(); ++i) support[i] = support[i] * liver[i];
    normalize_within(out.channel(Observation::kInverseDepth), support);
  }

  if (config.fov_mask) {
    const double radius = aug.fov_radius_frac * std::min(h, w);
    const double cy = 0.5 * h;
    const double cx = 0.5 * w;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double dy = r + 0.5 - cy;
        const double dx = c + 0.5 - cx;
        if (dx * dx + dy * dy <= radius * radius) continue;
        for (int ch = 0; ch < Observation::kChannels; ++ch) {
          out.channel(ch)[static_cast<std::size_t>(r) * w + c] = 0.0f;
        }
      }
    }
  }
  return out;
}

RegistrationEnv::RegistrationEnv(std::shared_ptr<const SceneModel> scene, EnvConfig config)
    : scene_(std::move(scene)), config_(std::move(config)) {
  if (!scene_) throw std::invalid_argument("RegistrationEnv: null scene");
  config_.validate();
}

void RegistrationEnv::reset(Rng& rng) {
  const Pose target = sample_valid_pose(*scene_, config_, rng);
  Pose initial;
  int attempt = 0;
  for (;; ++attempt) {
    initial = sample_valid_pose(*scene_, config_, rng);
    if (pose_error(initial, target, scene_->sample_points) >= config_.m_succ) break;
    if (attempt + 1 >= config_.sample_retries) {
      throw NumericError("reset: every sampled initial pose is already within m_succ of the target");
    }
  }
  reset_with(target, initial, &rng);
}

void RegistrationEnv::reset_with(const Pose& target, const Pose& initial, Rng* rng) {
  state_ = EpisodeState{};
  state_.pose_tgt = target;
  state_.pose_cur = initial;
  state_.obs_tgt = render_observation(*scene_, target, config_);
  if (rng != nullptr && (config_.augment_target || config_.fov_mask)) {
    EnvConfig aug_cfg = config_;
    aug_cfg.augment.enabled = config_.augment_target && config_.augment.enabled;
    state_.obs_tgt = augment_target(state_.obs_tgt, *rng, aug_cfg);
  }
  state_.obs_cur = render_observation(*scene_, initial, config_);
  state_.m0 = pose_error(initial, target, scene_->sample_points);
  state_.m_prev = state_.m0;
  state_.step_idx = 0;
  state_.done = false;
  state_.done_reason = DoneReason::kNone;
}

StepOutcome RegistrationEnv::step(const ActionCommand& a) {
  if (state_.done) throw std::logic_error("step called on a finished episode");
  StepOutcome out;
  double m = state_.m_prev;

  if (a.terminate) {
    out.reward = final_bonus(state_.m0, m, config_.beta, config_.eps);
    state_.done = true;
    state_.done_reason = DoneReason::kPolicyTerminate;
  } else {
    const Pose previous = state_.pose_cur;
    state_.pose_cur = apply_action(previous, a, config_);
    Observation next = render_observation(*scene_, state_.pose_cur, config_);
    if (next.count_set(Observation::kLiverMask) < static_cast<std::size_t>(config_.empty_view_threshold())) {
      if (config_.undo_empty_view) {
        state_.pose_cur = previous;  // obs_cur still holds the render of `previous`
        out.undone = true;
        out.reward = -1.1;
      } else {
        state_.obs_cur = std::move(next);
        m = pose_error(state_.pose_cur, state_.pose_tgt, scene_->sample_points);
        out.reward = step_reward(state_.m_prev - m) + final_bonus(state_.m0, m, config_.beta, config_.eps);
        state_.done = true;
        state_.done_reason = DoneReason::kEmptyView;
      }
    } else {
      state_.obs_cur = std::move(next);
      m = pose_error(state_.pose_cur, state_.pose_tgt, scene_->sample_points);
      out.reward = step_reward(state_.m_prev - m);
    }
    ++state_.step_idx;
    if (!state_.done && m < config_.m_succ) {
      state_.done = true;
      state_.done_reason = DoneReason::kSuccess;
      out.reward += final_bonus(state_.m0, m, config_.beta, config_.eps);
    } else if (!state_.done && state_.step_idx >= config_.max_steps) {
      state_.done = true;
      state_.done_reason = DoneReason::kTermLimit;
      out.reward += final_bonus(state_.m0, m, config_.beta, config_.eps);
    }
  }

  state_.m_prev = m;
  out.m = m;
  out.done = state_.done;
  out.done_reason = state_.done_reason;
  out.aux = aux_labels(m);
  out.obs = &state_.obs_cur;

  if (trace_ != nullptr) {
    *trace_ << state_.step_idx << ',' << a.axis << ',' << a.sign << ','
            << (a.terminate ? "terminate" : a.granularity == Granularity::kCoarse ? "coarse" : "fine") << ',' << m
            << ',' << out.reward << ',' << done_reason_name(state_.done_reason) << '\n';
  }
  return out;
}

Curriculum::Curriculum(std::vector<double> stages) : stages_(std::move(stages)) {
  if (stages_.empty()) throw std::invalid_argument("curriculum needs at least one stage");
}

void Curriculum::record(bool success) {
  window_.push_back(success);
  while (window_.size() > kCurriculumWindow) window_.pop_front();
}

double Curriculum::success_rate() const {
  if (window_.empty()) return 0.0;
  return static_cast<double>(std::count(window_.begin(), window_.end(), true)) / static_cast<double>(window_.size());
}

double Curriculum::next() {
  const std::size_t advanced = curriculum_next(stage_, stages_.size(), success_rate(), window_.size());
  if (advanced != stage_) {
    stage_ = advanced;
    window_.clear();
  }
  return m_succ();
}

std::size_t curriculum_next(std::size_t stage, std::size_t n_stages, double success_rate, std::size_t window_fill) {
  if (stage + 1 >= n_stages) return n_stages == 0 ? 0 : n_stages - 1;
  if (window_fill >= kCurriculumWindow && success_rate >= kCurriculumTrigger) return stage + 1;
  return stage;
}

}  // namespace regrl

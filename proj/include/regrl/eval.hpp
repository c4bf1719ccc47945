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

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace regrl {

struct EvalConfig {
  std::uint64_t seed = 20261017;
  int n_pairs = 200;
  std::vector<double> thresholds = {0.5, 0.6, 0.7, 0.8, 0.9};
  int max_steps = 256;
  bool fallback = true;
  int repeat = 1;  // initial poses per target

  void validate() const;
};

enum class StopCause : std::uint8_t { kThreshold, kFallbackBestFrame, kStepLimit };
std::string_view stop_cause_name(StopCause c);

struct TraceStep {
  int frame = 0;
  double term_prob = 0.0;
  double step_prob = 0.0;
  int action = -1;  // -1 on the stopping frame
  bool undone = false;
  double m = -1.0;  // filled when the target pose is known
};

struct InferenceResult {
  Pose final_pose;
  int steps_taken = 0;
  StopCause stop_cause = StopCause::kThreshold;
  double final_m = -1.0;
  double best_term_prob = 0.0;
  std::vector<TraceStep> trace;
  std::vector<Pose> poses;  // pose per evaluated frame
};

/// Greedy registration loop. Frame k (k = 0..max_steps) is the pose after k
/// actions; the loop stops at the first frame with term_prob > threshold.
/// Otherwise the earliest frame with maximal term_prob is returned
/// (fallback), or the last frame when fallback is disabled. Empty-view
/// actions are undone. `target_pose` is only used to report errors.
InferenceResult run_inference(const Agent<float>& agent, const SceneModel& scene, const EnvConfig& env_config,
                              const Pose& init_pose, const Observation& tgt_obs, double threshold, int max_steps,
                              bool fallback = true, const std::optional<Pose>& target_pose = std::nullopt);

/// Per-threshold result derived from one trajectory run to the largest
/// threshold; identical to calling run_inference per threshold.
InferenceResult result_for_threshold(const InferenceResult& full, double threshold, int max_steps, bool fallback);

/// Mean landmark displacement under tgt^-1 est.
double compute_tre(std::span<const Vec3> landmarks, const Pose& est_pose, const Pose& tgt_pose);

struct EvalRow {
  int episode_id = 0;
  double threshold = 0.0;
  int steps = 0;
  double final_m = 0.0;
  StopCause stop_cause = StopCause::kThreshold;
  double tre = 0.0;
};

struct EpisodeTiming {
  int episode_id = 0;
  int frames = 0;
  double wall_time_s = 0.0;
};

struct PosePair {
  Pose target;
  Pose initial;
};

/// Deterministic evaluation pairs from the eval seed stream (disjoint from
/// training streams). Pair i uses target i / repeat.
std::vector<PosePair> sample_eval_pairs(const SceneModel& scene, const EnvConfig& env_config, const EvalConfig& config);

std::vector<EvalRow> threshold_sweep(const Agent<float>& agent, const SceneModel& scene, const EnvConfig& env_config,
                                     const EvalConfig& config, std::vector<EpisodeTiming>* timings = nullptr);

struct ThresholdStats {
  double threshold = 0.0;
  double mean_m = 0.0;
  double median_m = 0.0;
  double iqr_m = 0.0;
  double frac_below_50 = 0.0;
  double mean_tre = 0.0;
  double median_tre = 0.0;
  int count = 0;
};

/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

std::vector<ThresholdStats> summarize(const std::vector<EvalRow>& rows);

inline constexpr const char* kResultsHeader = "episode_id,threshold,steps,final_m_mm2,stop_cause,tre_mm";
inline constexpr const char* kStatsHeader = "threshold,mean_m,median_m,iqr_m,frac_below_50,mean_tre,median_tre";

void write_results_csv(std::ostream& out, const std::vector<EvalRow>& rows);
void write_stats_csv(std::ostream& out, const std::vector<ThresholdStats>& stats);
std::vector<EvalRow> read_results_csv(std::istream& in);

}  // namespace regrl

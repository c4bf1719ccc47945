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

#include "regrl/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace regrl {

using nn::Tensor;

void EvalConfig::validate() const {
  if (n_pairs < 1) throw std::invalid_argument("eval: n_pairs must be >= 1");
  if (thresholds.empty()) throw std::invalid_argument("eval: at least one threshold is required");
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("eval: thresholds must lie in (0, 1)");
  }
  if (max_steps < 0) throw std::invalid_argument("eval: max_steps must be >= 0");
  if (repeat < 1) throw std::invalid_argument("eval: repeat must be >= 1");
}

std::string_view stop_cause_name(StopCause c) {
  switch (c) {
    case StopCause::kThreshold: return "threshold";
    case StopCause::kFallbackBestFrame: return "fallback_best_frame";
    case StopCause::kStepLimit: return "step_limit";
  }
  return "threshold";
}

namespace {

Tensor<float> batch_of_one(const Observation& obs) {
  Tensor<float> t({1, Observation::kChannels, obs.height, obs.width});
  std::copy(obs.data.begin(), obs.data.end(), t.ptr());
  return t;
}

std::optional<StopCause> parse_stop_cause(std::string_view s) {
  for (StopCause c : {StopCause::kThreshold, StopCause::kFallbackBestFrame, StopCause::kStepLimit}) {
    if (stop_cause_name(c) == s) return c;
  }
  return std::nullopt;
}

}  // namespace

InferenceResult result_for_threshold(const InferenceResult& full, double threshold, int max_steps, bool fallback) {
  InferenceResult r;
  const std::size_t frames = full.trace.size();
  if (frames == 0) throw std::invalid_argument("result_for_threshold: empty trajectory");
  double best = -1.0;
  std::size_t best_idx = 0;
  for (std::size_t k = 0; k < frames; ++k) {
    const double p = full.trace[k].term_prob;
    if (p > best) {
      best = p;
      best_idx = k;
    }
    if (p > threshold) {
      r.final_pose = full.poses[k];
      r.steps_taken = static_cast<int>(k);
      r.stop_cause = StopCause::kThreshold;
      r.best_term_prob = best;
      r.final_m = full.trace[k].m;
      r.trace.assign(full.trace.begin(), full.trace.begin() + static_cast<std::ptrdiff_t>(k + 1));
      r.poses.assign(full.poses.begin(), full.poses.begin() + static_cast<std::ptrdiff_t>(k + 1));
      return r;
    }
  }
  if (frames != static_cast<std::size_t>(max_steps) + 1) {
    throw std::logic_error("result_for_threshold: trajectory stopped before max_steps without exceeding threshold");
  }
  const std::size_t pick = fallback ? best_idx : frames - 1;
  r.final_pose = full.poses[pick];
  r.final_m = full.trace[pick].m;
  r.steps_taken = max_steps;
  r.stop_cause = fallback ? StopCause::kFallbackBestFrame : StopCause::kStepLimit;
  r.best_term_prob = best;
  r.trace = full.trace;
  r.poses = full.poses;
  return r;
}

InferenceResult run_inference(const Agent<float>& agent, const SceneModel& scene, const EnvConfig& env_config,
                              const Pose& init_pose, const Observation& tgt_obs, double threshold, int max_steps,
                              bool fallback, const std::optional<Pose>& target_pose) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("run_inference: threshold must be in (0, 1)");
  if (max_steps < 0) throw std::invalid_argument("run_inference: max_steps must be >= 0");
  Observation obs = render_observation(scene, init_pose, env_config);
  if (count_visible_structures(obs, env_config.structure_threshold()) < 1 ||
      obs.count_set(Observation::kLiverMask) < static_cast<std::size_t>(env_config.empty_view_threshold())) {
    throw DataError("run_inference: the initial pose does not see the liver");
  }
  const Tensor<float> feat_tgt = agent.encode(batch_of_one(tgt_obs), nullptr);
  const int empty_px = env_config.empty_view_threshold();

  InferenceResult full;
  Pose pose = init_pose;
  PolicyOutput out;
  bool have_out = false;
  for (int k = 0; k <= max_steps; ++k) {
    if (!have_out) {
      out = agent.forward_features(agent.encode(batch_of_one(obs), nullptr), feat_tgt, nullptr).row(0);
      have_out = true;
    }
    TraceStep ts;
    ts.frame = k;
    ts.term_prob = out.term_prob;
    ts.step_prob = out.step_prob;
    if (target_pose) ts.m = pose_error(pose, *target_pose, scene.sample_points);
    full.trace.push_back(ts);
    full.poses.push_back(pose);
    if (out.term_prob > threshold || k == max_steps) break;

    const nn::Categorical<double> dist(out.logits);
    const int action = static_cast<int>(dist.argmax());
    const ActionCommand cmd = ActionCommand::from_index(
        action, env_config.axes, out.step_prob > 0.5 ? Granularity::kCoarse : Granularity::kFine, false);
    full.trace.back().action = action;
    const Pose next = apply_action(pose, cmd, env_config);
    Observation next_obs = render_observation(scene, next, env_config);
    if (next_obs.count_set(Observation::kLiverMask) < static_cast<std::size_t>(empty_px)) {
      full.trace.back().undone = true;  // same input, so the cached output stays valid
      continue;
    }
    pose = next;
    obs = std::move(next_obs);
    have_out = false;
  }
  return result_for_threshold(full, threshold, max_steps, fallback);
}

double compute_tre(std::span<const Vec3> landmarks, const Pose& est_pose, const Pose& tgt_pose) {
  return mean_displacement(est_pose, tgt_pose, landmarks);
}

std::vector<PosePair> sample_eval_pairs(const SceneModel& scene, const EnvConfig& env_config,
                                        const EvalConfig& config) {
  config.validate();
  // Training streams are seeded through other tags; this one is eval-only.
  Rng rng(Rng::mix(config.seed) ^ 0x4556414C5345454EULL);
  std::vector<PosePair> pairs;
  Pose target;
  for (int i = 0; i < config.n_pairs; ++i) {
    if (i % config.repeat == 0) target = sample_valid_pose(scene, env_config, rng);
    pairs.push_back({target, sample_valid_pose(scene, env_config, rng)});
  }
  return pairs;
}

std::vector<EvalRow> threshold_sweep(const Agent<float>& agent, const SceneModel& scene, const EnvConfig& env_config,
                                     const EvalConfig& config, std::vector<EpisodeTiming>* timings) {
  config.validate();
  std::vector<double> thresholds = config.thresholds;
  std::sort(thresholds.begin(), thresholds.end());
  const double t_max = thresholds.back();
  EnvConfig target_cfg = env_config;
  target_cfg.augment.enabled = false;

  std::vector<EvalRow> rows;
  const auto pairs = sample_eval_pairs(scene, env_config, config);
  Rng fov_rng(0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Observation tgt = render_observation(scene, pairs[i].target, env_config);
    if (env_config.fov_mask) tgt = augment_target(tgt, fov_rng, target_cfg);
    const InferenceResult full = run_inference(agent, scene, env_config, pairs[i].initial, tgt, t_max,
                                               config.max_steps, config.fallback, pairs[i].target);
    // The trajectory runs until t_max is exceeded, so every lower threshold
    // first crosses within it; a full-length trajectory covers fallbacks.
    for (double t : thresholds) {
      const InferenceResult r = result_for_threshold(full, t, config.max_steps, config.fallback);
      EvalRow row;
      row.episode_id = static_cast<int>(i);
      row.threshold = t;
      row.steps = r.steps_taken;
      row.final_m = pose_error(r.final_pose, pairs[i].target, scene.sample_points);
      row.stop_cause = r.stop_cause;
      row.tre = compute_tre(scene.landmarks, r.final_pose, pairs[i].target);
      rows.push_back(row);
    }
    if (timings != nullptr) {
      timings->push_back({static_cast<int>(i), static_cast<int>(full.trace.size()),
                          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    }
  }
  return rows;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<ThresholdStats> summarize(const std::vector<EvalRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("summarize: no rows");
  std::map<double, std::vector<const EvalRow*>> groups;
  for (const auto& r : rows) groups[r.threshold].push_back(&r);
  std::vector<ThresholdStats> out;
  for (const auto& [t, group] : groups) {
    std::vector<double> m, tre;
    for (const EvalRow* r : group) {
      m.push_back(r->final_m);
      tre.push_back(r->tre);
    }
    ThresholdStats s;
    s.threshold = t;
    s.count = static_cast<int>(group.size());
    double sum_m = 0.0, sum_tre = 0.0;
    int below = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      sum_m += m[i];
      sum_tre += tre[i];
      if (m[i] < 50.0) ++below;
    }
    s.mean_m = sum_m / static_cast<double>(m.size());
    s.median_m = quantile(m, 0.5);
    s.iqr_m = quantile(m, 0.75) - quantile(m, 0.25);
    s.frac_below_50 = static_cast<double>(below) / static_cast<double>(m.size());
    s.mean_tre = sum_tre / static_cast<double>(tre.size());
    s.median_tre = quantile(tre, 0.5);
    out.push_back(s);
  }
  return out;
}

void write_results_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << kResultsHeader << '\n';
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.episode_id << ',' << std::setprecision(2) << std::fixed << r.threshold << std::defaultfloat
        << std::setprecision(10) << ',' << r.steps << ',' << r.final_m << ',' << stop_cause_name(r.stop_cause) << ','
        << r.tre << '\n';
  }
}

void write_stats_csv(std::ostream& out, const std::vector<ThresholdStats>& stats) {
  out << kStatsHeader << '\n';
  for (const auto& s : stats) {
    out << std::setprecision(2) << std::fixed << s.threshold << std::defaultfloat << std::setprecision(10) << ','
        << s.mean_m << ',' << s.median_m << ',' << s.iqr_m << ',' << s.frac_below_50 << ',' << s.mean_tre << ','
        << s.median_tre << '\n';
  }
}

std::vector<EvalRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) throw DataError("results csv: unexpected header");
  std::vector<EvalRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[6];
    for (auto& field : f) {
      if (!std::getline(ls, field, ',')) throw DataError("results csv: short row at line " + std::to_string(line_no));
    }
    EvalRow r;
    try {
      r.episode_id = std::stoi(f[0]);
      r.threshold = std::stod(f[1]);
      r.steps = std::stoi(f[2]);
      r.final_m = std::stod(f[3]);
      r.tre = std::stod(f[5]);
    } catch (const std::logic_error&) {
      throw DataError("results csv: bad number at line " + std::to_string(line_no));
    }
    const auto cause = parse_stop_cause(f[4]);
    if (!cause) throw DataError("results csv: unknown stop cause at line " + std::to_string(line_no));
    r.stop_cause = *cause;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace regrl

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

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace regrl;

namespace {

const SceneModel& demo_scene() {
  static const SceneModel scene = load_scene(std::string(REGRL_DATA_DIR) + "/demo_scene.mesh");
  return scene;
}

EnvConfig small_env() {
  EnvConfig e;
  e.h = e.w = 32;
  e.axes = {0, 1};
  e.rot_range = 0.0;
  e.augment_target = false;
  return e;
}

AgentConfig small_agent() {
  AgentConfig c;
  c.h = c.w = 32;
  c.enc_channels = {6, 8, 8, 16};
  c.embed_dim = 16;
  c.head_hidden = 16;
  c.n_actions = 4;
  return c;
}

// Frame k sits at t = (k, 0, 0) so picks can be read back from the pose.
InferenceResult crafted(const std::vector<double>& term) {
  InferenceResult r;
  for (std::size_t k = 0; k < term.size(); ++k) {
    TraceStep s;
    s.frame = static_cast<int>(k);
    s.term_prob = term[k];
    s.m = 100.0 + static_cast<double>(k);
    r.trace.push_back(s);
    Pose p;
    p.t = Vec3(static_cast<double>(k), 0, 0);
    r.poses.push_back(p);
  }
  return r;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("threshold crossing picks the first frame above the threshold") {
  std::vector<double> term(11, 0.1);
  term[3] = 0.6;
  term[7] = 0.85;
  term[9] = 0.85;
  const InferenceResult full = crafted(term);
  const InferenceResult r = result_for_threshold(full, 0.8, 10, true);
  CHECK(r.stop_cause == StopCause::kThreshold);
  CHECK(r.steps_taken == 7);
  CHECK(r.final_pose.t.x() == 7.0);
  CHECK(r.final_m == 107.0);
  CHECK(r.trace.size() == 8);

  const InferenceResult low = result_for_threshold(full, 0.5, 10, true);
  CHECK(low.steps_taken == 3);
  CHECK(low.final_pose.t.x() == 3.0);

  // Equal to the threshold does not stop.
  CHECK(result_for_threshold(full, 0.85, 10, true).stop_cause == StopCause::kFallbackBestFrame);
}

TEST_CASE("fallback takes the earliest maximal frame, otherwise the last frame") {
  std::vector<double> term(11, 0.2);
  term[4] = 0.7;
  term[8] = 0.7;
  const InferenceResult full = crafted(term);
  const InferenceResult fb = result_for_threshold(full, 0.8, 10, true);
  CHECK(fb.stop_cause == StopCause::kFallbackBestFrame);
  CHECK(fb.final_pose.t.x() == 4.0);
  CHECK(fb.steps_taken == 10);
  CHECK(fb.best_term_prob == 0.7);

  const InferenceResult sl = result_for_threshold(full, 0.8, 10, false);
  CHECK(sl.stop_cause == StopCause::kStepLimit);
  CHECK(sl.final_pose.t.x() == 10.0);

  // A short trajectory with no crossing cannot answer for this threshold.
  CHECK_THROWS_AS(result_for_threshold(crafted({0.1, 0.2}), 0.8, 10, true), std::logic_error);
}

TEST_CASE("per-threshold inference matches the derived sweep") {
  const SceneModel& scene = demo_scene();
  const EnvConfig env = small_env();
  const Agent<float> agent(small_agent(), 11);
  EvalConfig ec;
  ec.n_pairs = 3;
  const auto pairs = sample_eval_pairs(scene, env, ec);
  const int max_steps = 15;
  for (const auto& pair : pairs) {
    const Observation tgt = render_observation(scene, pair.target, env);
    std::vector<double> probs;
    const InferenceResult full =
        run_inference(agent, scene, env, pair.initial, tgt, 0.99, max_steps, true, pair.target);
    for (const auto& s : full.trace) probs.push_back(s.term_prob);
    std::sort(probs.begin(), probs.end());
    // Thresholds between observed probabilities exercise both stop causes.
    for (double t : {0.05, probs[probs.size() / 2], 0.95}) {
      if (!(t > 0.0 && t < 1.0)) continue;
      const InferenceResult direct = run_inference(agent, scene, env, pair.initial, tgt, t, max_steps, true, pair.target);
      const InferenceResult derived = result_for_threshold(full, t, max_steps, true);
      CHECK(direct.steps_taken == derived.steps_taken);
      CHECK(direct.stop_cause == derived.stop_cause);
      CHECK((direct.final_pose.R - derived.final_pose.R).norm() == 0.0);
      CHECK((direct.final_pose.t - derived.final_pose.t).norm() == 0.0);
      CHECK(direct.best_term_prob == derived.best_term_prob);
    }
    // Frames are consistent with the recorded errors.
    for (std::size_t k = 0; k < full.trace.size(); ++k) {
      CHECK(full.trace[k].m == doctest::Approx(pose_error(full.poses[k], pair.target, scene.sample_points)));
      CHECK(full.trace[k].frame == static_cast<int>(k));
    }
  }
}

TEST_CASE("inference rejects bad arguments") {
  const SceneModel& scene = demo_scene();
  const EnvConfig env = small_env();
  const Agent<float> agent(small_agent(), 11);
  const Pose ref = reference_pose(scene);
  const Observation tgt = render_observation(scene, ref, env);
  CHECK_THROWS_AS(run_inference(agent, scene, env, ref, tgt, 1.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(run_inference(agent, scene, env, ref, tgt, 0.5, -1), std::invalid_argument);
  Pose away = ref;
  away.t += Vec3(0, 0, -1000.0);
  CHECK_THROWS_AS(run_inference(agent, scene, env, away, tgt, 0.5, 5), DataError);
  const InferenceResult zero = run_inference(agent, scene, env, ref, tgt, 0.99, 0, true, ref);
  CHECK(zero.trace.size() == 1);
  CHECK(zero.final_m == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("target registration error") {
  const SceneModel& scene = demo_scene();
  const Pose ref = reference_pose(scene);
  CHECK(compute_tre(scene.landmarks, ref, ref) == 0.0);
  Pose shifted = ref;
  shifted.t += Vec3(3, 4, 0);
  CHECK(compute_tre(scene.landmarks, shifted, ref) == doctest::Approx(5.0).epsilon(1e-12));
  // Jensen: the squared mean displacement never exceeds the mean squared one.
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Vec6 xi;
    for (int j = 0; j < 6; ++j) xi(j) = rng.normal() * (j < 3 ? 10.0 : 0.1);
    const Pose est = se3_exp(Twist::from_vector(xi)) * ref;
    const double tre = compute_tre(scene.sample_points, est, ref);
    CHECK(tre * tre <= pose_error(est, ref, scene.sample_points) * (1.0 + 1e-12));
  }
}

TEST_CASE("threshold sweep shape, monotone steps and determinism") {
  const SceneModel& scene = demo_scene();
  const EnvConfig env = small_env();
  const Agent<float> agent(small_agent(), 5);
  EvalConfig ec;
  ec.n_pairs = 10;
  ec.max_steps = 12;
  std::vector<EpisodeTiming> timing;
  const auto rows = threshold_sweep(agent, scene, env, ec, &timing);
  REQUIRE(rows.size() == 50);
  REQUIRE(timing.size() == 10);
  for (int e = 0; e < 10; ++e) {
    CHECK(timing[static_cast<std::size_t>(e)].frames >= 1);
    CHECK(timing[static_cast<std::size_t>(e)].frames <= ec.max_steps + 1);
    for (int t = 0; t < 5; ++t) {
      const EvalRow& r = rows[static_cast<std::size_t>(5 * e + t)];
      CHECK(r.episode_id == e);
      CHECK(r.threshold == doctest::Approx(0.5 + 0.1 * t));
      CHECK(r.final_m >= 0.0);
      CHECK(r.tre >= 0.0);
      CHECK(r.steps <= ec.max_steps);
      if (r.stop_cause != StopCause::kThreshold) CHECK(r.steps == ec.max_steps);
      if (t > 0) CHECK(r.steps >= rows[static_cast<std::size_t>(5 * e + t - 1)].steps);
    }
  }
  std::ostringstream a, b;
  write_results_csv(a, rows);
  write_results_csv(b, threshold_sweep(agent, scene, env, ec));
  CHECK(a.str() == b.str());

  // Pairs repeat targets as configured.
  ec.repeat = 2;
  const auto pairs = sample_eval_pairs(scene, env, ec);
  CHECK((pairs[0].target.t - pairs[1].target.t).norm() == 0.0);
  CHECK((pairs[0].initial.t - pairs[1].initial.t).norm() > 0.0);
  CHECK((pairs[0].target.t - pairs[2].target.t).norm() > 0.0);
}

TEST_CASE("quantiles and summaries") {
  CHECK(quantile({4, 1, 3, 2}, 0.5) == 2.5);
  CHECK(quantile({4, 1, 3, 2}, 0.25) == 1.75);
  CHECK(quantile({7}, 0.9) == 7.0);
  CHECK_THROWS(quantile({}, 0.5));

  std::vector<EvalRow> rows;
  for (int i = 0; i < 4; ++i) {
    rows.push_back({i, 0.8, 3, 20.0 + 20.0 * i, StopCause::kThreshold, 1.0 + i});
    rows.push_back({i, 0.5, 2, 30.0, StopCause::kThreshold, 2.0});
  }
  const auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].threshold == 0.5);
  CHECK(s[0].iqr_m == 0.0);
  CHECK(s[0].frac_below_50 == 1.0);
  CHECK(s[1].count == 4);
  CHECK(s[1].mean_m == 50.0);
  CHECK(s[1].median_m == 50.0);
  CHECK(s[1].iqr_m == 30.0);
  CHECK(s[1].frac_below_50 == 0.5);
  CHECK(s[1].mean_tre == 2.5);
  CHECK(s[1].median_tre == 2.5);
  CHECK_THROWS(summarize({}));
}

TEST_CASE("results csv round trip and errors") {
  const std::vector<EvalRow> rows = {{0, 0.5, 7, 12.25, StopCause::kThreshold, 1.5},
                                     {0, 0.9, 256, 80.125, StopCause::kFallbackBestFrame, 3.25},
                                     {1, 0.9, 256, 81.0, StopCause::kStepLimit, 4.0}};
  std::stringstream ss;
  write_results_csv(ss, rows);
  CHECK(ss.str().rfind(std::string(kResultsHeader) + "\n0,0.50,7,12.25,threshold,1.5\n", 0) == 0);
  const auto back = read_results_csv(ss);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].episode_id == rows[i].episode_id);
    CHECK(back[i].threshold == rows[i].threshold);
    CHECK(back[i].steps == rows[i].steps);
    CHECK(back[i].final_m == rows[i].final_m);
    CHECK(back[i].stop_cause == rows[i].stop_cause);
    CHECK(back[i].tre == rows[i].tre);
  }
  std::istringstream bad_header("a,b\n");
  CHECK_THROWS_AS(read_results_csv(bad_header), DataError);
  std::istringstream bad_cause(std::string(kResultsHeader) + "\n0,0.5,1,2,maybe,3\n");
  CHECK_THROWS_AS(read_results_csv(bad_cause), DataError);
  std::istringstream short_row(std::string(kResultsHeader) + "\n0,0.5,1\n");
  CHECK_THROWS_AS(read_results_csv(short_row), DataError);

  std::ostringstream st;
  write_stats_csv(st, summarize(rows));
  CHECK(st.str().rfind(std::string(kStatsHeader) + "\n0.50,", 0) == 0);
}

}  // TEST_SUITE

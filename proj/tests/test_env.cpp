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
#include "regrl/rng.hpp"
#include "regrl/scene.hpp"

#include <doctest.h>

#include <memory>
#include <sstream>

using namespace regrl;

namespace {

std::shared_ptr<const SceneModel> demo_scene() {
  static const auto scene = std::make_shared<const SceneModel>(load_scene(std::string(REGRL_DATA_DIR) + "/demo_scene.mesh"));
  return scene;
}

EnvConfig small_config() {
  EnvConfig c;
  c.h = c.w = 32;
  c.augment_target = false;
  return c;
}

ActionCommand act(int axis, int sign, Granularity g = Granularity::kFine) {
  ActionCommand a;
  a.axis = axis;
  a.sign = sign;
  a.granularity = g;
  return a;
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("step reward and final bonus") {
  CHECK(step_reward(5.0) == 1.0);
  CHECK(step_reward(-0.01) == -1.1);
  CHECK(step_reward(0.0) == 0.0);
  CHECK(step_reward(-0.0) == 0.0);
  CHECK(step_reward(1e-300) == 1.0);
  CHECK(final_bonus(100.0, 0.0, 1.0, 1e-6) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(final_bonus(100.0, 150.0, 10.0, 1e-6) == 0.0);
  CHECK(final_bonus(0.0, 5.0, 10.0, 1e-6) == 0.0);
  CHECK(final_bonus(0.0, 0.0, 10.0, 1e-6) == 0.0);
  for (double mt : {0.0, 1.0, 50.0, 99.0}) {
    const double b = final_bonus(100.0, mt, 10.0, 1e-6);
    CHECK(b >= 0.0);
    CHECK(b <= 10.0);
  }
}

TEST_CASE("auxiliary labels") {
  CHECK(aux_labels(250).step_mode == Granularity::kCoarse);
  CHECK_FALSE(aux_labels(250).terminate);
  CHECK(aux_labels(100).step_mode == Granularity::kFine);
  CHECK_FALSE(aux_labels(100).terminate);
  CHECK(aux_labels(30).step_mode == Granularity::kFine);
  CHECK(aux_labels(30).terminate);
  CHECK(aux_labels(200).step_mode == Granularity::kFine);
  CHECK_FALSE(aux_labels(50).terminate);
}

TEST_CASE("action application") {
  const EnvConfig c;
  const Pose p = se3_exp(Twist::from_vector((Vec6() << 3, -2, 150, 0.1, 0.2, -0.3).finished()));
  const Pose moved = apply_action(p, act(0, +1), c);
  const Pose delta = moved * pose_inverse(p);
  CHECK((delta.t - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK((delta.R - Mat3::Identity()).norm() < 1e-12);

  const Pose back = apply_action(moved, act(0, -1), c);
  CHECK((back.matrix() - p.matrix()).norm() < 1e-12);

  const Pose rot = apply_action(p, act(5, +1, Granularity::kCoarse), c);
  CHECK(std::abs(se3_log(rot * pose_inverse(p)).angle() - 2.0 * kDegToRad) < 1e-9);
  const Pose coarse_t = apply_action(p, act(2, -1, Granularity::kCoarse), c);
  CHECK(((coarse_t * pose_inverse(p)).t - Vec3(0, 0, -5)).norm() < 1e-12);
  const Pose fine_r = apply_action(p, act(3, -1), c);
  CHECK(std::abs(se3_log(fine_r * pose_inverse(p)).angle() - 0.5 * kDegToRad) < 1e-9);
}

TEST_CASE("action index mapping") {
  const std::vector<int> all = {0, 1, 2, 3, 4, 5};
  for (int k = 0; k < 12; ++k) {
    const ActionCommand a = ActionCommand::from_index(k, all);
    CHECK(a.axis == k / 2);
    CHECK(a.sign == (k % 2 == 0 ? 1 : -1));
    CHECK(a.index(all) == k);
  }
  const std::vector<int> xy = {0, 1};
  CHECK(ActionCommand::from_index(3, xy).axis == 1);
  CHECK(ActionCommand::from_index(3, xy).sign == -1);
}

TEST_CASE("pose sampling") {
  const auto scene = demo_scene();
  EnvConfig c = small_config();
  c.rot_range = 0.0;
  c.trans_range = 0.0;
  Rng rng(1);
  const Pose ref = sample_valid_pose(*scene, c, rng);
  CHECK((ref.matrix() - reference_pose(*scene).matrix()).norm() < 1e-12);

  c = small_config();
  Rng a(42), b(42);
  for (int i = 0; i < 200; ++i) {
    const Pose p = sample_valid_pose(*scene, c, a);
    CHECK((p.matrix() - sample_valid_pose(*scene, c, b).matrix()).norm() == 0.0);
    CHECK(count_visible_structures(render_observation(*scene, p, c), c.structure_threshold()) >= c.min_structures);
    const Twist off = se3_log(p * pose_inverse(reference_pose(*scene)));
    CHECK(off.angle() <= std::sqrt(3.0) * c.rot_range + 1e-9);
  }

  EnvConfig impossible = small_config();
  impossible.min_structures = 4;
  impossible.trans_range = 0.0;
  impossible.rot_range = 0.0;
  impossible.min_pixels = 1000000;
  impossible.sample_retries = 5;
  CHECK_THROWS_AS(sample_valid_pose(*scene, impossible, rng), NumericError);
}

TEST_CASE("reset") {
  const auto scene = demo_scene();
  EnvConfig c = small_config();
  c.augment_target = true;
  RegistrationEnv e1(scene, c), e2(scene, c);
  Rng r1(7), r2(7);
  for (int i = 0; i < 10; ++i) {
    e1.reset(r1);
    e2.reset(r2);
    const EpisodeState& s = e1.state();
    CHECK(s.m0 == e2.state().m0);
    CHECK(s.obs_tgt == e2.state().obs_tgt);
    CHECK(s.obs_cur == e2.state().obs_cur);
    CHECK(s.m_prev == pose_error(s.pose_cur, s.pose_tgt, scene->sample_points));
    CHECK(s.m0 >= c.m_succ);
    CHECK(s.step_idx == 0);
    CHECK_FALSE(s.done);
  }
}

TEST_CASE("episode dynamics") {
  const auto scene = demo_scene();
  EnvConfig c = small_config();
  c.m_succ = 100.0;
  RegistrationEnv env(scene, c);
  const Pose tgt = reference_pose(*scene);
  const Pose init{tgt.R, tgt.t + Vec3(20, 0, 0)};  // camera-frame offset of 20 mm along x
  env.reset_with(tgt, init);
  const Observation tgt_obs = env.state().obs_tgt;
  CHECK(env.state().m0 == doctest::Approx(400.0));

  SUBCASE("improving move earns +1 and bookkeeping stays exact") {
    const StepOutcome out = env.step(act(0, -1));
    CHECK(out.reward == 1.0);
    CHECK_FALSE(out.done);
    CHECK(env.state().m_prev == pose_error(env.state().pose_cur, tgt, scene->sample_points));
    CHECK(env.state().obs_tgt == tgt_obs);
    CHECK(env.state().step_idx == 1);
  }
  SUBCASE("worsening move earns -1.1") {
    CHECK(env.step(act(0, +1)).reward == -1.1);
  }
  SUBCASE("success adds the final bonus") {
    StepOutcome out;
    for (int i = 0; i < 3; ++i) out = env.step(act(0, -1, Granularity::kCoarse));
    // 20 -> 15 -> 10 -> 5 mm; only m = 25 is below 100.
    CHECK(out.done);
    CHECK(out.done_reason == DoneReason::kSuccess);
    const double bonus = final_bonus(400.0, 25.0, c.beta, c.eps);
    CHECK(out.reward == doctest::Approx(1.0 + bonus));
    CHECK_THROWS_AS(env.step(act(0, -1)), std::logic_error);
  }
  SUBCASE("terminate is exclusive and pays the bonus at the current error") {
    ActionCommand t = act(0, -1);
    t.terminate = true;
    const Pose before = env.state().pose_cur;
    const StepOutcome out = env.step(t);
    CHECK(out.done_reason == DoneReason::kPolicyTerminate);
    CHECK(out.reward == 0.0);
    CHECK((env.state().pose_cur.matrix() - before.matrix()).norm() == 0.0);
  }
  SUBCASE("step limit") {
    EnvConfig lim = c;
    lim.max_steps = 3;
    lim.m_succ = 1.0;
    RegistrationEnv short_env(scene, lim);
    short_env.reset_with(tgt, init);
    StepOutcome out;
    for (int i = 0; i < 3; ++i) out = short_env.step(act(1, i % 2 == 0 ? 1 : -1));
    CHECK(out.done);
    CHECK(out.done_reason == DoneReason::kTermLimit);
    CHECK(short_env.state().step_idx == 3);
  }
}

TEST_CASE("empty view is undone") {
  const auto scene = demo_scene();
  EnvConfig c = small_config();
  RegistrationEnv env(scene, c);
  const Pose tgt = reference_pose(*scene);
  env.reset_with(tgt, Pose{tgt.R, tgt.t + Vec3(140, 0, 0)});
  // Walk right until the liver leaves the frame.
  StepOutcome out;
  for (int i = 0; i < 40 && !out.undone; ++i) {
    const Pose before = env.state().pose_cur;
    const Observation obs_before = env.state().obs_cur;
    out = env.step(act(0, +1, Granularity::kCoarse));
    if (out.undone) {
      CHECK((env.state().pose_cur.matrix() - before.matrix()).norm() == 0.0);
      CHECK(env.state().obs_cur == obs_before);
      CHECK(out.reward == -1.1);
      CHECK_FALSE(out.done);
    }
  }
  CHECK(out.undone);

  EnvConfig ends = c;
  ends.undo_empty_view = false;
  RegistrationEnv env2(scene, ends);
  env2.reset_with(tgt, Pose{tgt.R, tgt.t + Vec3(140, 0, 0)});
  for (int i = 0; i < 40 && !out.done; ++i) out = env2.step(act(0, +1, Granularity::kCoarse));
  CHECK(out.done_reason == DoneReason::kEmptyView);
}

TEST_CASE("random episodes respect the lifecycle invariants") {
  const auto scene = demo_scene();
  EnvConfig c = small_config();
  c.max_steps = 60;
  RegistrationEnv env(scene, c);
  Rng rng(3);
  std::ostringstream trace;
  env.set_trace(&trace);
  for (int ep = 0; ep < 8; ++ep) {
    env.reset(rng);
    const double m0 = env.state().m0;
    StepOutcome out;
    int steps = 0;
    while (!out.done) {
      ActionCommand a = ActionCommand::from_index(static_cast<int>(rng.below(12)), c.axes,
                                                  rng.bernoulli(0.5) ? Granularity::kCoarse : Granularity::kFine,
                                                  rng.bernoulli(0.01));
      out = env.step(a);
      ++steps;
      CHECK(env.state().m_prev == pose_error(env.state().pose_cur, env.state().pose_tgt, scene->sample_points));
      const double step_part = out.reward - (out.done ? final_bonus(m0, out.m, c.beta, c.eps) : 0.0);
      if (!(out.done && out.done_reason == DoneReason::kPolicyTerminate)) {
        CHECK((step_part == doctest::Approx(1.0) || step_part == doctest::Approx(-1.1) || step_part == doctest::Approx(0.0)));
      }
    }
    CHECK(steps <= c.max_steps);
    CHECK(out.done_reason != DoneReason::kNone);
  }
  CHECK(trace.str().find("step_idx") != std::string::npos);
}

TEST_CASE("curriculum") {
  CHECK(curriculum_next(0, 4, 0.5, 100) == 0);
  CHECK(curriculum_next(0, 4, 0.7, 100) == 1);
  CHECK(curriculum_next(0, 4, 0.9, 99) == 0);
  CHECK(curriculum_next(3, 4, 0.0, 100) == 3);
  CHECK(curriculum_next(3, 4, 1.0, 100) == 3);

  Curriculum cur;
  std::vector<double> seen = {cur.m_succ()};
  for (int i = 0; i < 1000; ++i) {
    cur.record(true);
    const double m = cur.next();
    if (m != seen.back()) seen.push_back(m);
  }
  CHECK(seen == std::vector<double>{500, 300, 100, 10});

  Curriculum half;
  for (int i = 0; i < 300; ++i) {
    half.record(i % 2 == 0);
    half.next();
  }
  CHECK(half.m_succ() == 500.0);
}

TEST_CASE("target augmentation") {
  const auto scene = demo_scene();
  EnvConfig c = small_config();
  c.h = c.w = 64;
  Rng prng(5);
  const Observation obs = render_observation(*scene, sample_valid_pose(*scene, c, prng), c);

  EnvConfig off = c;
  off.augment.enabled = false;
  Rng r0(1);
  CHECK(augment_target(obs, r0, off) == obs);

  EnvConfig zero = c;
  zero.augment.max_mask_morph = 0;
  zero.augment.max_erase_rects = 0;
  zero.augment.max_depth_occlusions = 0;
  zero.augment.max_liver_morph = 0;
  CHECK(augment_target(obs, r0, zero) == obs);

  EnvConfig fov = off;
  fov.fov_mask = true;
  const Observation masked = augment_target(obs, r0, fov);
  const double radius = 0.48 * 64;
  for (int r = 0; r < 64; ++r) {
    for (int col = 0; col < 64; ++col) {
      const double dx = col + 0.5 - 32, dy = r + 0.5 - 32;
      if (dx * dx + dy * dy <= radius * radius) continue;
      for (int ch = 0; ch < Observation::kChannels; ++ch) CHECK(masked.channel(ch)[r * 64 + col] == 0.0f);
    }
  }

  Rng r1(9);
  bool changed = false;
  for (int i = 0; i < 100; ++i) {
    const Observation a = augment_target(obs, r1, c);
    CHECK(a.satisfies_invariants());
    changed = changed || !(a == obs);
  }
  CHECK(changed);
}

}  // TEST_SUITE

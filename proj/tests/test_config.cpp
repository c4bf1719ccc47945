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


#include "regrl/config.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace regrl;

TEST_SUITE("config") {

TEST_CASE("toy config parses with derived agent shape") {
  const RunConfig c = load_run_config(std::string(REGRL_DATA_DIR) + "/toy.ini");
  CHECK(c.env.h == 32);
  CHECK(c.env.w == 32);
  CHECK(c.env.axes == std::vector<int>{0, 1});
  CHECK(c.env.rot_range == 0.0);
  CHECK(c.env.trans_range == 50.0);
  CHECK(c.agent.n_actions == 4);
  CHECK(c.agent.h == 32);
  CHECK(c.train.curriculum == std::vector<double>{100.0});
  CHECK(c.env.m_succ == 100.0);
  CHECK(c.scene.path == std::string(REGRL_DATA_DIR) + "/demo_scene.mesh");
}

TEST_CASE("defaults") {
  const RunConfig c = parse_run_config("");
  CHECK(c.env.h == 128);
  CHECK(c.agent.n_actions == 12);
  CHECK(c.env.m_succ == c.train.curriculum.front());
  CHECK(c.eval.thresholds.size() == 5);
  CHECK(c.scene.path.empty());
}

TEST_CASE("angles are read in degrees") {
  const RunConfig c = parse_run_config("[env]\ncoarse_step_r = 4\nrot_range = 90\n");
  CHECK(c.env.coarse_step_r == doctest::Approx(4.0 * std::numbers::pi / 180.0).epsilon(1e-15));
  CHECK(c.env.rot_range == doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-15));
}

TEST_CASE("m_succ follows the first curriculum stage unless given") {
  CHECK(parse_run_config("[train]\ncurriculum = 300,100\n").env.m_succ == 300.0);
  CHECK(parse_run_config("[env]\nm_succ = 42\n[train]\ncurriculum = 300,100\n").env.m_succ == 42.0);
}

TEST_CASE("unknown keys, sections and bad values are rejected") {
  CHECK_THROWS_AS(parse_run_config("[env]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[nonsense]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("top = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[env]\nresolution = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[env]\nresolution = 12x\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nlr = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[env]\naxes = tx,qq\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[env]\ndepth_clip = 50,10\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[eval]\nthresholds = 0.5,1.5\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.ini"), ConfigError);
  try {
    parse_run_config("[agent]\nembed = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("agent.embed") != std::string::npos);
  }
}

TEST_CASE("axes by name or index") {
  CHECK(parse_axes("tx,ty") == std::vector<int>{0, 1});
  CHECK(parse_axes("rz, 2") == std::vector<int>{5, 2});
  CHECK(parse_run_config("[env]\naxes = tz,rx\n").agent.n_actions == 4);
  CHECK(parse_run_config("[env]\naxes = tx,ty,tz,rx,ry,rz\n").agent.n_actions == 12);
}

TEST_CASE("threshold specs") {
  const auto r = parse_threshold_spec("0.5:0.9:0.1");
  REQUIRE(r.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(r[static_cast<std::size_t>(i)] == doctest::Approx(0.5 + 0.1 * i).epsilon(1e-12));
  CHECK(parse_threshold_spec("0.6,0.8") == std::vector<double>{0.6, 0.8});
  CHECK(parse_threshold_spec("0.8:0.8:0.1").size() == 1);
  CHECK_THROWS(parse_threshold_spec("0.9:0.5:0.1"));
  CHECK_THROWS(parse_threshold_spec("0.5:0.9:0"));
}

TEST_CASE("pose strings") {
  const SceneModel scene = generate_synthetic_scene(7, 2, 4.0);
  const Pose ref = reference_pose(scene);

  const Pose zero = parse_pose_spec("0,0,0,0,0,0", scene);
  CHECK((zero.R - ref.R).norm() < 1e-15);
  CHECK((zero.t - ref.t).norm() < 1e-12);

  // A pure translation offset shifts the camera-frame translation.
  const Pose shifted = parse_pose_spec("5,-3,2,0,0,0", scene);
  CHECK((shifted.t - ref.t - Vec3(5, -3, 2)).norm() < 1e-12);

  // 90 degrees about camera z.
  const Pose rot = parse_pose_spec("0,0,0,0,0,90", scene);
  const Mat3 rz = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
  CHECK((rot.R - rz * ref.R).norm() < 1e-12);

  const Pose back = parse_pose_spec(format_pose_spec(rot), scene);
  CHECK((back.R - rot.R).norm() < 1e-14);
  CHECK((back.t - rot.t).norm() < 1e-12);

  CHECK_THROWS_AS(parse_pose_spec("1,2,3", scene), DataError);
  CHECK_THROWS_AS(parse_pose_spec("1,2,3,4,5,x", scene), DataError);
  CHECK_THROWS_AS(parse_pose_spec("1,0,0,0,1,0,0,0,1.01,0,0,0", scene), DataError);
  CHECK_THROWS_AS(parse_pose_spec("1,0,0,0,1,0,0,0,1,0,0,nan", scene), DataError);
}

}  // TEST_SUITE

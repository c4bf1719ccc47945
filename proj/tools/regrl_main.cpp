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

// Command-line front end. Talks to the library only through regrl.h.

#include "regrl/regrl.h"

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>

namespace {

// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical abort.
int exit_code(regrl_status s) {
  switch (s) {
    case REGRL_OK: return 0;
    case REGRL_ERR_CONFIG:
    case REGRL_ERR_INVALID_ARGUMENT: return 2;
    case REGRL_ERR_DATA: return 3;
    case REGRL_ERR_NUMERIC: return 4;
    case REGRL_ERR_INTERNAL: return 1;
  }
  return 1;
}

int report(regrl_status s) {
  if (s != REGRL_OK) std::fprintf(stderr, "regrl: %s: %s\n", regrl_status_name(s), regrl_last_error());
  return exit_code(s);
}

struct SceneDel {
  void operator()(regrl_scene* p) const { regrl_scene_free(p); }
};
struct ConfigDel {
  void operator()(regrl_config* p) const { regrl_config_free(p); }
};
struct AgentDel {
  void operator()(regrl_agent* p) const { regrl_agent_free(p); }
};
using ScenePtr = std::unique_ptr<regrl_scene, SceneDel>;
using ConfigPtr = std::unique_ptr<regrl_config, ConfigDel>;
using AgentPtr = std::unique_ptr<regrl_agent, AgentDel>;

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const auto dot = path.rfind(".csv");
  const std::string stem = dot != std::string::npos && dot + 4 == path.size() ? path.substr(0, dot) : path;
  return stem + suffix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Render-and-compare camera pose registration with a learned policy"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output on stderr");

  // gen-mesh
  std::uint64_t mesh_seed = 7;
  int subdiv = 3;
  double bump = 4.0;
  std::string mesh_out;
  auto* gen = app.add_subcommand("gen-mesh", "Generate a synthetic labelled scene");
  gen->add_option("--seed", mesh_seed, "Scene seed");
  gen->add_option("--subdiv", subdiv, "Icosphere subdivision level (1-5)");
  gen->add_option("--bump", bump, "Surface relief amplitude (mm)");
  gen->add_option("--out", mesh_out, "Output scene file")->required();

  // sample-poses
  std::string sp_scene, sp_out, sp_config;
  int sp_n = 10;
  std::uint64_t sp_seed = 0;
  auto* sp = app.add_subcommand("sample-poses", "Sample valid camera poses around the reference view");
  sp->add_option("--scene", sp_scene, "Scene file")->required();
  sp->add_option("--n", sp_n, "Number of poses");
  sp->add_option("--seed", sp_seed, "Sampling seed");
  sp->add_option("--config", sp_config, "Run config (sampling ranges, resolution)");
  sp->add_option("--out", sp_out, "Output CSV")->required();

  // pretrain
  std::string pt_config, pt_out;
  auto* pt = app.add_subcommand("pretrain", "Supervised relative-pose pretraining");
  pt->add_option("--config", pt_config, "Run config")->required();
  pt->add_option("--out", pt_out, "Output checkpoint")->required();

  // train
  std::string tr_config, tr_warm, tr_out, tr_metrics;
  auto* tr = app.add_subcommand("train", "PPO training with the success-threshold curriculum");
  tr->add_option("--config", tr_config, "Run config")->required();
  tr->add_option("--warm-start", tr_warm, "Initial checkpoint");
  tr->add_option("--out", tr_out, "Output checkpoint")->required();
  tr->add_option("--metrics", tr_metrics, "Metrics CSV (default: <out>.metrics.csv)");

  // eval
  std::string ev_config, ev_ckpt, ev_thresholds, ev_out, ev_stats, ev_timing;
  int ev_pairs = 0;
  int ev_repeat = 0;
  auto* ev = app.add_subcommand("eval", "Threshold sweep on unseen synthetic pose pairs");
  ev->add_option("--config", ev_config, "Run config")->required();
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--thresholds", ev_thresholds, "lo:hi:step or comma list (default from config)");
  ev->add_option("--n-pairs", ev_pairs, "Pose pairs (default from config)");
  ev->add_option("--repeat", ev_repeat, "Initial poses per target (default from config)");
  ev->add_option("--out", ev_out, "Per-episode results CSV")->required();
  ev->add_option("--stats", ev_stats, "Per-threshold stats CSV (default: <out>_stats.csv)");
  ev->add_option("--timing", ev_timing, "Per-episode wall time CSV (default: <out>_timing.csv)");

  // infer
  std::string in_config, in_ckpt, in_scene, in_target, in_init, in_trace;
  double in_threshold = 0.8;
  auto* in = app.add_subcommand("infer", "Register one initial pose against a target view");
  in->add_option("--config", in_config, "Run config")->required();
  in->add_option("--ckpt", in_ckpt, "Checkpoint")->required();
  in->add_option("--scene", in_scene, "Scene file (default from config)");
  in->add_option("--target-pose", in_target, "Target pose: x,y,z,rx,ry,rz offset or 12 absolute values")->required();
  in->add_option("--init-pose", in_init, "Initial pose, same format")->required();
  in->add_option("--threshold", in_threshold, "Termination confidence threshold");
  in->add_option("--trace", in_trace, "Per-frame trace CSV");

  // render
  std::string rd_scene, rd_pose, rd_prefix, rd_config;
  auto* rd = app.add_subcommand("render", "Render the six observation channels as PGM images");
  rd->add_option("--scene", rd_scene, "Scene file")->required();
  rd->add_option("--pose", rd_pose, "Pose string")->required();
  rd->add_option("--config", rd_config, "Run config (resolution, intrinsics)");
  rd->add_option("--out-prefix", rd_prefix, "Output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const int verbose = quiet ? 0 : 1;

  auto load_config = [](const std::string& path, ConfigPtr& out) -> regrl_status {
    if (path.empty()) return REGRL_OK;
    regrl_config* c = nullptr;
    const regrl_status s = regrl_config_load(path.c_str(), &c);
    out.reset(c);
    return s;
  };
  auto load_scene = [](const std::string& path, ScenePtr& out) {
    regrl_scene* s = nullptr;
    const regrl_status st = regrl_scene_load(path.c_str(), &s);
    out.reset(s);
    return st;
  };
  auto load_agent = [](const std::string& path, AgentPtr& out) {
    regrl_agent* a = nullptr;
    const regrl_status st = regrl_agent_load(path.c_str(), &a);
    out.reset(a);
    return st;
  };

  if (*gen) {
    regrl_scene* s = nullptr;
    regrl_status st = regrl_scene_generate(mesh_seed, subdiv, bump, &s);
    ScenePtr scene(s);
    if (st == REGRL_OK) st = regrl_scene_save(scene.get(), mesh_out.c_str());
    return report(st);
  }
  if (*sp) {
    ScenePtr scene;
    ConfigPtr cfg;
    regrl_status st = load_scene(sp_scene, scene);
    if (st == REGRL_OK) st = load_config(sp_config, cfg);
    if (st == REGRL_OK) st = regrl_sample_poses(scene.get(), cfg.get(), sp_n, sp_seed, sp_out.c_str());
    return report(st);
  }
  if (*pt) {
    ConfigPtr cfg;
    regrl_status st = load_config(pt_config, cfg);
    if (st == REGRL_OK) st = regrl_pretrain(cfg.get(), pt_out.c_str(), verbose);
    return report(st);
  }
  if (*tr) {
    ConfigPtr cfg;
    regrl_status st = load_config(tr_config, cfg);
    const std::string metrics = tr_metrics.empty() ? tr_out + ".metrics.csv" : tr_metrics;
    if (st == REGRL_OK) st = regrl_train(cfg.get(), opt(tr_warm), tr_out.c_str(), metrics.c_str(), verbose);
    return report(st);
  }
  if (*ev) {
    ConfigPtr cfg;
    AgentPtr agent;
    regrl_status st = load_config(ev_config, cfg);
    if (st == REGRL_OK) st = load_agent(ev_ckpt, agent);
    const std::string stats = ev_stats.empty() ? with_suffix(ev_out, "_stats.csv") : ev_stats;
    const std::string timing = ev_timing.empty() ? with_suffix(ev_out, "_timing.csv") : ev_timing;
    if (st == REGRL_OK) {
      st = regrl_eval(cfg.get(), agent.get(), opt(ev_thresholds), ev_pairs, ev_repeat, ev_out.c_str(), stats.c_str(),
                      timing.c_str(), verbose);
    }
    return report(st);
  }
  if (*in) {
    ConfigPtr cfg;
    AgentPtr agent;
    ScenePtr scene;
    regrl_status st = load_config(in_config, cfg);
    if (st == REGRL_OK) st = load_agent(in_ckpt, agent);
    if (st == REGRL_OK && !in_scene.empty()) st = load_scene(in_scene, scene);
    regrl_infer_result res{};
    if (st == REGRL_OK) {
      st = regrl_infer(cfg.get(), agent.get(), scene.get(), in_target.c_str(), in_init.c_str(), in_threshold,
                       opt(in_trace), &res);
    }
    if (st == REGRL_OK) {
      static const char* kCauses[] = {"threshold", "fallback_best_frame", "step_limit"};
      std::printf("steps=%d stop_cause=%s best_term_prob=%.6f final_m_mm2=%.6f tre_mm=%.6f\npose=", res.steps,
                  kCauses[res.stop_cause], res.best_term_prob, res.final_m, res.tre);
      for (int i = 0; i < 12; ++i) std::printf(i ? ",%.10g" : "%.10g", res.pose[i]);
      std::printf("\n");
    }
    return report(st);
  }
  if (*rd) {
    ScenePtr scene;
    ConfigPtr cfg;
    regrl_status st = load_scene(rd_scene, scene);
    if (st == REGRL_OK) st = load_config(rd_config, cfg);
    if (st == REGRL_OK) st = regrl_render(scene.get(), cfg.get(), rd_pose.c_str(), rd_prefix.c_str());
    return report(st);
  }
  return 2;
}

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

#include "regrl/regrl.h"

#include "regrl/config.hpp"
#include "regrl/eval.hpp"
#include "regrl/trainer.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <string>

struct regrl_scene {
  std::shared_ptr<const regrl::SceneModel> model;
};

struct regrl_config {
  regrl::RunConfig run;
};

struct regrl_agent {
  std::unique_ptr<regrl::Agent<float>> agent;
};

namespace {

thread_local std::string g_last_error;

regrl_status fail(regrl_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

/// Runs `fn`, mapping exceptions onto status codes.
template <typename Fn>
regrl_status guarded(Fn&& fn) {
  try {
    fn();
    return REGRL_OK;
  } catch (const regrl::ConfigError& e) {
    return fail(REGRL_ERR_CONFIG, e.what());
  } catch (const regrl::DataError& e) {
    return fail(REGRL_ERR_DATA, e.what());
  } catch (const regrl::NumericError& e) {
    return fail(REGRL_ERR_NUMERIC, e.what());
  } catch (const regrl::nn::ShapeError& e) {
    return fail(REGRL_ERR_DATA, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(REGRL_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(REGRL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(REGRL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(REGRL_ERR_INTERNAL, "unknown error");
  }
}

std::ofstream open_out(const char* path) {
  std::ofstream out(path);
  if (!out) throw regrl::DataError(std::string("cannot write '") + path + "'");
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

/// Agent geometry must match the run config; the freeze flag may differ.
void check_agent_matches(const regrl::AgentConfig& have, const regrl::AgentConfig& want) {
  regrl::AgentConfig a = have;
  regrl::AgentConfig b = want;
  a.freeze_encoder = b.freeze_encoder = false;
  if (a.to_text() != b.to_text()) {
    throw regrl::DataError("checkpoint agent does not match the run config:\n--- checkpoint\n" + a.to_text() +
                           "--- config\n" + b.to_text());
  }
}

const regrl::RunConfig& config_or_default(const regrl_config* config, regrl::RunConfig& storage) {
  if (config != nullptr) return config->run;
  storage.finalize();
  return storage;
}

}  // namespace

extern "C" {

const char* regrl_last_error(void) { return g_last_error.c_str(); }

const char* regrl_version(void) { return "1.0.0"; }

const char* regrl_status_name(regrl_status status) {
  switch (status) {
    case REGRL_OK: return "ok";
    case REGRL_ERR_CONFIG: return "config error";
    case REGRL_ERR_DATA: return "data error";
    case REGRL_ERR_NUMERIC: return "numerical error";
    case REGRL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case REGRL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

regrl_status regrl_scene_generate(uint64_t seed, int subdiv, double bump, regrl_scene** out) {
  if (out == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_scene_generate: null output");
  return guarded([&] {
    require(subdiv >= 1 && subdiv <= 5, "scene subdivision must be in [1, 5]");
    auto model = std::make_shared<const regrl::SceneModel>(regrl::generate_synthetic_scene(seed, subdiv, bump));
    *out = new regrl_scene{std::move(model)};
  });
}

regrl_status regrl_scene_load(const char* path, regrl_scene** out) {
  if (path == nullptr || out == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_scene_load: null argument");
  return guarded([&] { *out = new regrl_scene{std::make_shared<const regrl::SceneModel>(regrl::load_scene(path))}; });
}

regrl_status regrl_scene_save(const regrl_scene* scene, const char* path) {
  if (scene == nullptr || path == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_scene_save: null argument");
  return guarded([&] { regrl::save_scene(*scene->model, path); });
}

regrl_status regrl_scene_counts(const regrl_scene* scene, size_t* n_vertices, size_t* n_faces) {
  if (scene == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_scene_counts: null scene");
  if (n_vertices != nullptr) *n_vertices = scene->model->vertices.size();
  if (n_faces != nullptr) *n_faces = scene->model->faces.size();
  return REGRL_OK;
}

void regrl_scene_free(regrl_scene* scene) { delete scene; }

regrl_status regrl_config_load(const char* path, regrl_config** out) {
  if (path == nullptr || out == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_config_load: null argument");
  return guarded([&] { *out = new regrl_config{regrl::load_run_config(path)}; });
}

regrl_status regrl_config_default(regrl_config** out) {
  if (out == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_config_default: null output");
  return guarded([&] {
    regrl::RunConfig run;
    run.finalize();
    run.validate();
    *out = new regrl_config{run};
  });
}

regrl_status regrl_config_scene(const regrl_config* config, regrl_scene** out) {
  if (config == nullptr || out == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_config_scene: null argument");
  return guarded([&] {
    *out = new regrl_scene{std::make_shared<const regrl::SceneModel>(regrl::load_scene_source(config->run.scene))};
  });
}

void regrl_config_free(regrl_config* config) { delete config; }

regrl_status regrl_sample_poses(const regrl_scene* scene, const regrl_config* config, int n, uint64_t seed,
                                const char* out_csv) {
  if (scene == nullptr || out_csv == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_sample_poses: null argument");
  return guarded([&] {
    require(n >= 1, "sample-poses: n must be >= 1");
    regrl::RunConfig storage;
    const regrl::RunConfig& run = config_or_default(config, storage);
    const regrl::Pose ref_inv = regrl::pose_inverse(regrl::reference_pose(*scene->model));
    regrl::Rng rng(regrl::Rng::mix(seed) ^ 0x504F534553ULL);
    std::ofstream out = open_out(out_csv);
    out << "id,x,y,z,rx_deg,ry_deg,rz_deg,visible_structures\n" << std::setprecision(10);
    for (int i = 0; i < n; ++i) {
      const regrl::Pose pose = regrl::sample_valid_pose(*scene->model, run.env, rng);
      const regrl::Vec6 xi = regrl::se3_log(pose * ref_inv).as_vector();
      const int visible = regrl::count_visible_structures(regrl::render_observation(*scene->model, pose, run.env),
                                                          run.env.structure_threshold());
      out << i << ',' << xi(0) << ',' << xi(1) << ',' << xi(2) << ',' << xi(3) / regrl::kDegToRad << ','
          << xi(4) / regrl::kDegToRad << ',' << xi(5) / regrl::kDegToRad << ',' << visible << '\n';
    }
    if (!out) throw regrl::DataError(std::string("failed writing '") + out_csv + "'");
  });
}

regrl_status regrl_pretrain(const regrl_config* config, const char* out_ckpt, int verbose) {
  if (config == nullptr || out_ckpt == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_pretrain: null argument");
  return guarded([&] {
    const regrl::RunConfig& run = config->run;
    const regrl::SceneModel scene = regrl::load_scene_source(run.scene);
    regrl::Agent<float> agent(run.agent, run.train.seed);
    const auto metrics = regrl::pretrain_supervised(agent, scene, run.env, run.train, verbose ? &std::cerr : nullptr);
    regrl::save_checkpoint(agent, out_ckpt);
    if (verbose && !metrics.holdout_loss.empty()) {
      std::cerr << "pretrain holdout loss " << metrics.holdout_loss.front() << " -> " << metrics.holdout_loss.back()
                << '\n';
    }
  });
}

regrl_status regrl_train(const regrl_config* config, const char* warm_ckpt, const char* out_ckpt,
                         const char* metrics_csv, int verbose) {
  if (config == nullptr || out_ckpt == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_train: null argument");
  return guarded([&] {
    const regrl::RunConfig& run = config->run;
    auto scene = std::make_shared<const regrl::SceneModel>(regrl::load_scene_source(run.scene));
    regrl::Agent<float> agent(run.agent, run.train.seed);
    if (warm_ckpt != nullptr) {
      const regrl::Agent<float> warm = regrl::load_checkpoint<float>(warm_ckpt);
      check_agent_matches(warm.config(), run.agent);
      for (std::size_t i = 0; i < agent.params().size(); ++i) agent.params()[i].value = warm.params()[i].value;
      agent.set_freeze_encoder(run.agent.freeze_encoder);
    }
    std::ofstream metrics;
    if (metrics_csv != nullptr) metrics = open_out(metrics_csv);
    regrl::train_loop(agent, scene, run.env, run.train, out_ckpt, metrics_csv ? &metrics : nullptr,
                      verbose ? &std::cerr : nullptr);
  });
}

regrl_status regrl_agent_load(const char* path, regrl_agent** out) {
  if (path == nullptr || out == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_agent_load: null argument");
  return guarded([&] {
    *out = new regrl_agent{std::make_unique<regrl::Agent<float>>(regrl::load_checkpoint<float>(path))};
  });
}

regrl_status regrl_agent_save(const regrl_agent* agent, const char* path) {
  if (agent == nullptr || path == nullptr) return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_agent_save: null argument");
  return guarded([&] { regrl::save_checkpoint(*agent->agent, path); });
}

void regrl_agent_free(regrl_agent* agent) { delete agent; }

regrl_status regrl_eval(const regrl_config* config, const regrl_agent* agent, const char* thresholds, int n_pairs,
                        int repeat, const char* results_csv, const char* stats_csv, const char* timing_csv,
                        int verbose) {
  if (config == nullptr || agent == nullptr || results_csv == nullptr) {
    return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_eval: null argument");
  }
  return guarded([&] {
    const regrl::RunConfig& run = config->run;
    check_agent_matches(agent->agent->config(), run.agent);
    regrl::EvalConfig ec = run.eval;
    if (thresholds != nullptr) ec.thresholds = regrl::parse_threshold_spec(thresholds);
    if (n_pairs > 0) ec.n_pairs = n_pairs;
    if (repeat > 0) ec.repeat = repeat;
    try {
      ec.validate();
    } catch (const std::invalid_argument& e) {
      throw regrl::ConfigError(e.what());
    }
    const regrl::SceneModel scene = regrl::load_scene_source(run.scene);
    std::vector<regrl::EpisodeTiming> timings;
    const auto rows = regrl::threshold_sweep(*agent->agent, scene, run.env, ec, &timings);
    {
      std::ofstream out = open_out(results_csv);
      regrl::write_results_csv(out, rows);
    }
    const auto stats = regrl::summarize(rows);
    if (stats_csv != nullptr) {
      std::ofstream out = open_out(stats_csv);
      regrl::write_stats_csv(out, stats);
    }
    if (timing_csv != nullptr) {
      std::ofstream out = open_out(timing_csv);
      out << "episode_id,frames,wall_time_s\n";
      for (const auto& t : timings) out << t.episode_id << ',' << t.frames << ',' << t.wall_time_s << '\n';
    }
    if (verbose) {
      double total = 0.0;
      for (const auto& t : timings) total += t.wall_time_s;
      std::cerr << "eval: " << timings.size() << " episodes, mean wall time per episode "
                << (timings.empty() ? 0.0 : total / static_cast<double>(timings.size())) << " s\n";
      for (const auto& s : stats) {
        std::cerr << "  threshold " << s.threshold << ": median m " << s.median_m << " mm^2, mean m " << s.mean_m
                  << ", below 50 " << s.frac_below_50 << ", median TRE " << s.median_tre << " mm\n";
      }
    }
  });
}

regrl_status regrl_infer(const regrl_config* config, const regrl_agent* agent, const regrl_scene* scene,
                         const char* target_pose, const char* init_pose, double threshold, const char* trace_csv,
                         regrl_infer_result* out) {
  if (config == nullptr || agent == nullptr || target_pose == nullptr || init_pose == nullptr || out == nullptr) {
    return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_infer: null argument");
  }
  return guarded([&] {
    const regrl::RunConfig& run = config->run;
    check_agent_matches(agent->agent->config(), run.agent);
    std::shared_ptr<const regrl::SceneModel> model =
        scene != nullptr ? scene->model
                         : std::make_shared<const regrl::SceneModel>(regrl::load_scene_source(run.scene));
    const regrl::Pose tgt = regrl::parse_pose_spec(target_pose, *model);
    const regrl::Pose init = regrl::parse_pose_spec(init_pose, *model);
    regrl::Observation tgt_obs = regrl::render_observation(*model, tgt, run.env);
    if (run.env.fov_mask) {
      regrl::EnvConfig fov_only = run.env;
      fov_only.augment.enabled = false;
      regrl::Rng unused(0);
      tgt_obs = regrl::augment_target(tgt_obs, unused, fov_only);
    }
    const auto res = regrl::run_inference(*agent->agent, *model, run.env, init, tgt_obs, threshold,
                                          run.eval.max_steps, run.eval.fallback, tgt);
    out->steps = res.steps_taken;
    out->stop_cause = static_cast<regrl_stop_cause>(res.stop_cause);
    out->best_term_prob = res.best_term_prob;
    out->final_m = regrl::pose_error(res.final_pose, tgt, model->sample_points);
    out->tre = regrl::compute_tre(model->landmarks, res.final_pose, tgt);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out->pose[3 * r + c] = res.final_pose.R(r, c);
    }
    for (int i = 0; i < 3; ++i) out->pose[9 + i] = res.final_pose.t(i);
    if (trace_csv != nullptr) {
      std::ofstream tr = open_out(trace_csv);
      tr << "frame,term_prob,step_prob,action,axis,sign,granularity,undone,m_mm2\n" << std::setprecision(10);
      for (const auto& s : res.trace) {
        tr << s.frame << ',' << s.term_prob << ',' << s.step_prob << ',' << s.action << ',';
        if (s.action >= 0) {
          const auto cmd = regrl::ActionCommand::from_index(s.action, run.env.axes);
          tr << cmd.axis << ',' << cmd.sign << ',' << (s.step_prob > 0.5 ? "coarse" : "fine");
        } else {
          tr << ",,stop";
        }
        tr << ',' << (s.undone ? 1 : 0) << ',' << s.m << '\n';
      }
    }
  });
}

regrl_status regrl_render(const regrl_scene* scene, const regrl_config* config, const char* pose,
                          const char* out_prefix) {
  if (scene == nullptr || pose == nullptr || out_prefix == nullptr) {
    return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_render: null argument");
  }
  return guarded([&] {
    regrl::RunConfig storage;
    const regrl::RunConfig& run = config_or_default(config, storage);
    const regrl::Pose p = regrl::parse_pose_spec(pose, *scene->model);
    const regrl::Observation obs = regrl::render_observation(*scene->model, p, run.env);
    regrl::write_observation_pgm(obs, out_prefix, p, run.env.intrinsics());
  });
}

regrl_status regrl_pose_parse(const regrl_scene* scene, const char* pose, double out[12]) {
  if (scene == nullptr || pose == nullptr || out == nullptr) {
    return fail(REGRL_ERR_INVALID_ARGUMENT, "regrl_pose_parse: null argument");
  }
  return guarded([&] {
    const regrl::Pose p = regrl::parse_pose_spec(pose, *scene->model);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out[3 * r + c] = p.R(r, c);
    }
    for (int i = 0; i < 3; ++i) out[9 + i] = p.t(i);
  });
}

}  // extern "C"

/* Copyright 2026 The regrl Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the regrl shared library. All handles are opaque and
 * owned by the caller once returned; free them with the matching *_free.
 * Every call returns a status; on failure regrl_last_error() describes it
 * (thread-local, valid until the next failing call on that thread). */

#ifndef REGRL_REGRL_H_
#define REGRL_REGRL_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define REGRL_API __declspec(dllexport)
#else
#define REGRL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 2-4 double as CLI exit codes. */
typedef enum regrl_status {
  REGRL_OK = 0,
  REGRL_ERR_CONFIG = 2,
  REGRL_ERR_DATA = 3,
  REGRL_ERR_NUMERIC = 4,
  REGRL_ERR_INVALID_ARGUMENT = 5,
  REGRL_ERR_INTERNAL = 6
} regrl_status;

typedef enum regrl_stop_cause {
  REGRL_STOP_THRESHOLD = 0,
  REGRL_STOP_FALLBACK_BEST_FRAME = 1,
  REGRL_STOP_STEP_LIMIT = 2
} regrl_stop_cause;

typedef struct regrl_scene regrl_scene;
typedef struct regrl_config regrl_config;
typedef struct regrl_agent regrl_agent;

typedef struct regrl_infer_result {
  int steps;
  regrl_stop_cause stop_cause;
  double best_term_prob;
  double final_m;    /* mm^2, pose error against the target pose */
  double tre;        /* mm, over the scene landmarks */
  double pose[12];   /* final pose: R row-major, then t */
} regrl_infer_result;

REGRL_API const char* regrl_last_error(void);
REGRL_API const char* regrl_version(void);
REGRL_API const char* regrl_status_name(regrl_status status);

/* Scenes. */
REGRL_API regrl_status regrl_scene_generate(uint64_t seed, int subdiv, double bump, regrl_scene** out);
REGRL_API regrl_status regrl_scene_load(const char* path, regrl_scene** out);
REGRL_API regrl_status regrl_scene_save(const regrl_scene* scene, const char* path);
REGRL_API regrl_status regrl_scene_counts(const regrl_scene* scene, size_t* n_vertices, size_t* n_faces);
REGRL_API void regrl_scene_free(regrl_scene* scene);

/* Run configuration. */
REGRL_API regrl_status regrl_config_load(const char* path, regrl_config** out);
REGRL_API regrl_status regrl_config_default(regrl_config** out);
/* Loads or generates the scene named by the config's [env] section. */
REGRL_API regrl_status regrl_config_scene(const regrl_config* config, regrl_scene** out);
REGRL_API void regrl_config_free(regrl_config* config);

/* Writes id,x,y,z,rx_deg,ry_deg,rz_deg,visible_structures rows: offsets
 * from the reference pose of n valid poses. `config` may be NULL. */
REGRL_API regrl_status regrl_sample_poses(const regrl_scene* scene, const regrl_config* config, int n,
                                          uint64_t seed, const char* out_csv);

/* Supervised warm start only; writes a checkpoint. `verbose` logs to stderr. */
REGRL_API regrl_status regrl_pretrain(const regrl_config* config, const char* out_ckpt, int verbose);

/* Full training. `warm_ckpt` may be NULL; `metrics_csv` may be NULL. */
REGRL_API regrl_status regrl_train(const regrl_config* config, const char* warm_ckpt, const char* out_ckpt,
                                   const char* metrics_csv, int verbose);

REGRL_API regrl_status regrl_agent_load(const char* path, regrl_agent** out);
REGRL_API regrl_status regrl_agent_save(const regrl_agent* agent, const char* path);
REGRL_API void regrl_agent_free(regrl_agent* agent);

/* Threshold sweep. NULL thresholds / n_pairs <= 0 / repeat <= 0 fall back
 * to the config. `stats_csv` and `timing_csv` may be NULL. */
REGRL_API regrl_status regrl_eval(const regrl_config* config, const regrl_agent* agent, const char* thresholds,
                                  int n_pairs, int repeat, const char* results_csv, const char* stats_csv,
                                  const char* timing_csv, int verbose);

/* Single registration. `scene` may be NULL (config scene). Pose strings
 * take 6 offset values (mm, degrees) or 12 absolute values. `trace_csv`
 * may be NULL. */
REGRL_API regrl_status regrl_infer(const regrl_config* config, const regrl_agent* agent, const regrl_scene* scene,
                                   const char* target_pose, const char* init_pose, double threshold,
                                   const char* trace_csv, regrl_infer_result* out);

/* Writes <prefix>_<channel>.pgm images and <prefix>_info.txt. */
REGRL_API regrl_status regrl_render(const regrl_scene* scene, const regrl_config* config, const char* pose,
                                    const char* out_prefix);

/* Resolves a pose string against the scene's reference pose. */
REGRL_API regrl_status regrl_pose_parse(const regrl_scene* scene, const char* pose, double out[12]);

#ifdef __cplusplus
}
#endif

#endif /* REGRL_REGRL_H_ */

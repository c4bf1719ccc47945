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
#include "regrl/nn.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

namespace regrl {

struct TrainConfig {
  std::uint64_t seed = 0;
  int n_envs = 8;
  int rollout_len = 4096;
  int epochs = 4;
  int minibatch = 128;
  double lr = 1e-4;
  double gamma = 0.98;
  double gae_lambda = 0.95;
  double clip_eps = 0.3;
  double max_grad_norm = 0.5;
  double entropy_start = 0.05;
  double entropy_end = 0.0;
  double lambda_v = 0.5;
  double lambda_d = 0.5;
  int total_updates = 1000;
  double aux_warmup_frac = 0.25;
  std::vector<double> curriculum = {500.0, 300.0, 100.0, 10.0};
  /// Termination fires in training rollouts once term_prob exceeds this.
  double term_threshold = 0.8;
  int checkpoint_every = 50;  // 0 disables periodic checkpoints
  /// When false the metrics wall_time_s column is written as 0 so that
  /// repeated runs produce byte-identical files.
  bool log_wall_time = true;

  bool pretrain = false;
  int pretrain_pairs = 2048;  // fresh pairs per epoch
  int pretrain_epochs = 10;
  int pretrain_batch = 32;
  int pretrain_holdout = 256;
  double pretrain_lr = 1e-3;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Supervised warm start.

struct PretrainMetrics {
  std::vector<double> train_loss;    // mean per epoch
  std::vector<double> holdout_loss;  // index 0 is before any update
};

/// Relative twist se3_log(tgt^-1 cur) scaled by (trans_range, rot_range).
Vec6 normalized_relative_twist(const Pose& cur, const Pose& tgt, const EnvConfig& config);

/// Trains encoder and fusion block on pose regression through a temporary
/// linear head on the embedding; the head is discarded afterwards.
PretrainMetrics pretrain_supervised(Agent<float>& agent, const SceneModel& scene, const EnvConfig& env_config,
                                    const TrainConfig& config, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Rollouts.

/// Network input for one observation: raw [6, H, W] when the encoder is
/// trained, cached encoder features when it is frozen.
using InputPtr = std::shared_ptr<const nn::Tensor<float>>;

struct Transition {
  InputPtr cur;
  InputPtr tgt;
  int action = 0;
  bool coarse = false;
  bool terminate = false;
  double log_prob = 0.0;  // actor (motion) log-prob under the behaviour policy
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
  double m = 0.0;  // error of the state the action was chosen in
  AuxLabels aux;
};

/// Env-major: transitions of env e occupy [e*T, (e+1)*T) with T = len / n_envs.
struct RolloutBuffer {
  int n_envs = 0;
  int steps_per_env = 0;
  std::vector<Transition> steps;
  std::vector<double> bootstrap;  // V(s_T) per env, 0 when the segment ended done
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return steps.size(); }
};

struct EpisodeRecord {
  bool success = false;
  int length = 0;
  DoneReason reason = DoneReason::kNone;
  double final_m = 0.0;
};

/// Owns the parallel environments and their private rng streams.
class RolloutCollector {
 public:
  RolloutCollector(std::shared_ptr<const SceneModel> scene, const EnvConfig& env_config, int n_envs,
                   std::uint64_t seed);

  /// Collects `rollout_len` transitions. With `aux_enabled` false the
  /// granularity follows the error-derived label and the policy never
  /// terminates; otherwise granularity is sampled and termination fires
  /// when term_prob > term_threshold.
  RolloutBuffer collect(const Agent<float>& agent, int rollout_len, bool aux_enabled, double term_threshold,
                        const std::function<void(const EpisodeRecord&)>& on_episode);

  void set_success_threshold(double m_succ);
  int n_envs() const { return static_cast<int>(envs_.size()); }

 private:
  InputPtr make_input(const Agent<float>& agent, const Observation& obs) const;
  void start_episode(std::size_t e, const Agent<float>& agent);

  std::vector<RegistrationEnv> envs_;
  std::vector<Rng> env_rngs_;
  std::vector<Rng> act_rngs_;
  std::vector<InputPtr> cur_inputs_;
  std::vector<InputPtr> tgt_inputs_;
  std::vector<bool> started_;
  const Agent<float>* input_owner_ = nullptr;
  bool input_frozen_ = false;
};

/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t and
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}, per env segment with
/// the segment's bootstrap value after its last step; returns = A + V.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

/// Single-sequence form used by compute_gae.
void gae_segment(std::span<const double> rewards, std::span<const double> values, std::span<const bool> dones,
                 double bootstrap, double gamma, double lambda, std::span<double> advantages);

// ---------------------------------------------------------------------------
// Loss.

struct LossCoefs {
  double clip_eps = 0.3;
  double lambda_v = 0.5;
  double entropy = 0.05;
  double lambda_d = 0.5;
};

struct LossTargets {
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;  // already normalized
  std::vector<double> returns;
  std::vector<double> step_labels;  // 1 = coarse
  std::vector<double> term_labels;  // 1 = terminate
};

struct LossTerms {
  double total = 0.0;
  double ppo = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double step = 0.0;
  double term = 0.0;
  double clip_frac = 0.0;
};

/// L = L_ppo + lambda_v L_value - c_e H + lambda_d (L_step + L_term) over the
/// batch, with gradients w.r.t. the head outputs written into `grads`.
template <typename T>
LossTerms composite_loss(const PolicyBatch<T>& out, const LossTargets& targets, const LossCoefs& coefs,
                         std::type_identity_t<HeadGrads<T>>* grads);

/// Linear interpolation from start to end over [0, total_updates].
double entropy_coef(int update_idx, int total_updates, double start = 0.05, double end = 0.0);

/// Mean 0, std 1 (population std, guarded below by 1e-8).
std::vector<double> normalize_advantages(std::span<const double> adv);

struct UpdateMetrics {
  double loss_ppo = 0.0;
  double loss_value = 0.0;
  double entropy = 0.0;
  double loss_step = 0.0;
  double loss_term = 0.0;
  double clip_frac = 0.0;
};

UpdateMetrics ppo_update(Agent<float>& agent, nn::AdamState<float>& adam, const RolloutBuffer& buffer,
                         const TrainConfig& config, double entropy_coefficient, double lambda_d, Rng& rng);

// ---------------------------------------------------------------------------

struct TrainResult {
  int updates = 0;
  double final_success_rate = 0.0;
  std::vector<double> stage_history;  // stage m_succ per update
  std::vector<double> success_history;  // trailing-window success rate per update
  std::vector<long long> episodes_seen;  // cumulative finished episodes per update
};

/// Optional pretrain, then collect / GAE / update for total_updates with the
/// curriculum consulted after each update. Writes one metrics row per update
/// and checkpoints to `ckpt_path` (periodic and final).
TrainResult train_loop(Agent<float>& agent, std::shared_ptr<const SceneModel> scene, const EnvConfig& env_config,
                       const TrainConfig& config, const std::string& ckpt_path, std::ostream* metrics,
                       std::ostream* log = nullptr);

inline constexpr const char* kMetricsHeader =
    "update_idx,stage_m_succ,success_rate_100,mean_episode_len,loss_ppo,loss_value,entropy,loss_step,loss_term,"
    "clip_frac,wall_time_s";

}  // namespace regrl

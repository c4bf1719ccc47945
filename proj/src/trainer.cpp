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

#include "regrl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace regrl {

using nn::Tensor;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train: " + msg); };
  if (n_envs < 1) fail("n_envs must be >= 1");
  if (rollout_len < 1 || minibatch < 1 || rollout_len % minibatch != 0) {
    fail("rollout_len must be a positive multiple of minibatch");
  }
  if (rollout_len % n_envs != 0) fail("rollout_len must be divisible by n_envs");
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must be in [0, 1]");
  if (!(clip_eps > 0.0)) fail("clip_eps must be positive");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be positive");
  if (entropy_start < 0.0 || entropy_end < 0.0) fail("entropy coefficients must be >= 0");
  if (lambda_v < 0.0 || lambda_d < 0.0) fail("loss weights must be >= 0");
  if (total_updates < 0) fail("total_updates must be >= 0");
  if (!(aux_warmup_frac >= 0.0 && aux_warmup_frac <= 1.0)) fail("aux_warmup_frac must be in [0, 1]");
  if (curriculum.empty()) fail("curriculum needs at least one stage");
  for (double m : curriculum) {
    if (!(m > 0.0)) fail("curriculum thresholds must be positive");
  }
  if (!(term_threshold > 0.0 && term_threshold < 1.0)) fail("term_threshold must be in (0, 1)");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (pretrain_pairs < 1 || pretrain_epochs < 0 || pretrain_batch < 1 || pretrain_holdout < 1 ||
      !(pretrain_lr > 0.0)) {
    fail("invalid pretrain settings");
  }
}

namespace {

Tensor<float> stack_inputs(std::span<const InputPtr> inputs) {
  const auto& first = *inputs.front();
  std::vector<int> shape = {static_cast<int>(inputs.size())};
  shape.insert(shape.end(), first.shape.begin(), first.shape.end());
  Tensor<float> out(shape);
  const std::size_t per = first.size();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::copy(inputs[i]->data.begin(), inputs[i]->data.end(), out.ptr() + i * per);
  }
  return out;
}

Tensor<float> observation_tensor(const Observation& obs) {
  Tensor<float> t({Observation::kChannels, obs.height, obs.width});
  std::copy(obs.data.begin(), obs.data.end(), t.ptr());
  return t;
}

PolicyBatch<float> forward_inputs(const Agent<float>& agent, std::span<const InputPtr> cur,
                                  std::span<const InputPtr> tgt, typename Agent<float>::Cache* cache) {
  const Tensor<float> c = stack_inputs(cur);
  const Tensor<float> t = stack_inputs(tgt);
  if (agent.config().freeze_encoder) return agent.forward_features(c, t, cache ? &cache->head : nullptr);
  return agent.forward(c, t, cache);
}

double smooth_l1(double d, double* grad) {
  const double a = std::abs(d);
  if (a < 1.0) {
    *grad = d;
    return 0.5 * d * d;
  }
  *grad = d > 0.0 ? 1.0 : -1.0;
  return a - 0.5;
}

bool all_finite(const nn::ParamStore<float>& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (float g : store[i].grad.data) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pretraining

Vec6 normalized_relative_twist(const Pose& cur, const Pose& tgt, const EnvConfig& config) {
  Vec6 xi = se3_log(pose_inverse(tgt) * cur).as_vector();
  for (int i = 0; i < 6; ++i) {
    const double range = i < 3 ? config.trans_range : config.rot_range;
    xi(i) = range > 0.0 ? xi(i) / range : 0.0;
  }
  return xi;
}

namespace {

struct PretrainPair {
  Observation cur;
  Observation tgt;
  Vec6 label;
};

PretrainPair make_pretrain_pair(const SceneModel& scene, const EnvConfig& config, Rng& rng) {
  const Pose tgt = sample_valid_pose(scene, config, rng);
  const int min_liver = config.empty_view_threshold();
  for (int attempt = 0; attempt < config.sample_retries; ++attempt) {
    Vec6 xi = Vec6::Zero();
    for (int axis : config.axes) {
      const double range = axis < 3 ? config.trans_range : config.rot_range;
      xi(axis) = rng.uniform(-range, range);
    }
    const Pose cur = tgt * se3_exp(Twist::from_vector(xi));
    Observation obs_cur = render_observation(scene, cur, config);
    if (obs_cur.count_set(Observation::kLiverMask) < static_cast<std::size_t>(min_liver)) continue;
    PretrainPair pair;
    pair.tgt = render_observation(scene, tgt, config);
    if (config.augment_target || config.fov_mask) pair.tgt = augment_target(pair.tgt, rng, config);
    pair.cur = std::move(obs_cur);
    pair.label = normalized_relative_twist(cur, tgt, config);
    return pair;
  }
  throw NumericError("pretrain: no visible perturbed view after " + std::to_string(config.sample_retries) +
                     " attempts");
}

/// Mean smooth-L1 over the batch; accumulates head and agent gradients
/// when `train` is set.
double pretrain_batch_loss(Agent<float>& agent, nn::Parameter<float>& head_w, nn::Parameter<float>& head_b,
                           std::span<const PretrainPair> batch, bool train) {
  std::vector<const Observation*> cur;
  std::vector<const Observation*> tgt;
  for (const auto& p : batch) {
    cur.push_back(&p.cur);
    tgt.push_back(&p.tgt);
  }
  Agent<float>::Cache cache;
  const PolicyBatch<float> out =
      agent.forward(stack_observations<float>(cur), stack_observations<float>(tgt), train ? &cache : nullptr);
  const Tensor<float> pred = nn::linear_forward(out.embedding, head_w.value, head_b.value);
  const int n = static_cast<int>(batch.size());
  Tensor<float> dpred({n, 6});
  double loss = 0.0;
  const double scale = 1.0 / (6.0 * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 6; ++j) {
      double g = 0.0;
      loss += smooth_l1(pred[static_cast<std::size_t>(i) * 6 + j] - batch[static_cast<std::size_t>(i)].label(j), &g);
      dpred[static_cast<std::size_t>(i) * 6 + j] = static_cast<float>(g * scale);
    }
  }
  if (train) {
    HeadGrads<float> grads;
    grads.embedding = nn::linear_backward(dpred, out.embedding, head_w.value, head_w.grad, head_b.grad, true);
    agent.backward(cache, grads);
  }
  return loss * scale;
}

}  // namespace

PretrainMetrics pretrain_supervised(Agent<float>& agent, const SceneModel& scene, const EnvConfig& env_config,
                                    const TrainConfig& config, std::ostream* log) {
  const bool was_frozen = agent.config().freeze_encoder;
  agent.set_freeze_encoder(false);

  Rng root(Rng::mix(config.seed) ^ 0x5052455452ULL);
  Rng holdout_rng = root.split(1);
  Rng pair_rng = root.split(2);
  Rng head_rng = root.split(3);

  nn::ParamStore<float> head;
  auto& head_w = head.add("pretrain.head.weight", {6, agent.config().embed_dim});
  auto& head_b = head.add("pretrain.head.bias", {6});
  const double bound = 1.0 / std::sqrt(static_cast<double>(agent.config().embed_dim));
  for (float& v : head_w.value.data) v = static_cast<float>(head_rng.uniform(-bound, bound));

  std::vector<PretrainPair> holdout;
  for (int i = 0; i < config.pretrain_holdout; ++i) holdout.push_back(make_pretrain_pair(scene, env_config, holdout_rng));
  auto holdout_loss = [&] {
    double total = 0.0;
    for (std::size_t s = 0; s < holdout.size(); s += static_cast<std::size_t>(config.pretrain_batch)) {
      const std::size_t e = std::min(holdout.size(), s + static_cast<std::size_t>(config.pretrain_batch));
      total += pretrain_batch_loss(agent, head_w, head_b, std::span(holdout).subspan(s, e - s), false) *
               static_cast<double>(e - s);
    }
    return total / static_cast<double>(holdout.size());
  };

  nn::AdamHyper hp;
  hp.lr = config.pretrain_lr;
  nn::AdamState<float> agent_adam;
  nn::AdamState<float> head_adam;
  PretrainMetrics metrics;
  metrics.holdout_loss.push_back(holdout_loss());
  if (log) *log << "pretrain epoch 0 holdout " << metrics.holdout_loss.back() << '\n';

  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    double epoch_loss = 0.0;
    int batches = 0;
    for (int done = 0; done < config.pretrain_pairs; done += config.pretrain_batch) {
      const int n = std::min(config.pretrain_batch, config.pretrain_pairs - done);
      std::vector<PretrainPair> batch;
      for (int i = 0; i < n; ++i) batch.push_back(make_pretrain_pair(scene, env_config, pair_rng));
      agent.params().zero_grad();
      head.zero_grad();
      const double loss = pretrain_batch_loss(agent, head_w, head_b, batch, true);
      if (!std::isfinite(loss) || !all_finite(agent.params()) || !all_finite(head)) {
        throw NumericError("pretrain: non-finite loss or gradient at epoch " + std::to_string(epoch));
      }
      nn::clip_grad_norm(agent.params(), config.max_grad_norm);
      nn::clip_grad_norm(head, config.max_grad_norm);
      nn::adam_step(agent.params(), agent_adam, hp);
      nn::adam_step(head, head_adam, hp);
      epoch_loss += loss;
      ++batches;
    }
    metrics.train_loss.push_back(epoch_loss / std::max(1, batches));
    metrics.holdout_loss.push_back(holdout_loss());
    if (log) {
      *log << "pretrain epoch " << epoch + 1 << " train " << metrics.train_loss.back() << " holdout "
           << metrics.holdout_loss.back() << '\n';
    }
  }
  agent.params().zero_grad();
  agent.set_freeze_encoder(was_frozen);
  return metrics;
}

// ---------------------------------------------------------------------------
// Rollouts

RolloutCollector::RolloutCollector(std::shared_ptr<const SceneModel> scene, const EnvConfig& env_config, int n_envs,
                                   std::uint64_t seed) {
  if (n_envs < 1) throw std::invalid_argument("RolloutCollector: n_envs must be >= 1");
  Rng root(Rng::mix(seed) ^ 0x524F4C4CULL);
  for (int e = 0; e < n_envs; ++e) {
    envs_.emplace_back(scene, env_config);
    env_rngs_.push_back(root.split(2 * static_cast<std::uint64_t>(e)));
    act_rngs_.push_back(root.split(2 * static_cast<std::uint64_t>(e) + 1));
  }
  cur_inputs_.resize(envs_.size());
  tgt_inputs_.resize(envs_.size());
  started_.assign(envs_.size(), false);
}

void RolloutCollector::set_success_threshold(double m_succ) {
  for (auto& env : envs_) env.set_success_threshold(m_succ);
}

InputPtr RolloutCollector::make_input(const Agent<float>& agent, const Observation& obs) const {
  Tensor<float> t = observation_tensor(obs);
  if (!agent.config().freeze_encoder) return std::make_shared<const Tensor<float>>(std::move(t));
  t.shape.insert(t.shape.begin(), 1);
  Tensor<float> feat = agent.encode(t, nullptr);
  feat.shape.erase(feat.shape.begin());
  return std::make_shared<const Tensor<float>>(std::move(feat));
}

void RolloutCollector::start_episode(std::size_t e, const Agent<float>& agent) {
  envs_[e].reset(env_rngs_[e]);
  tgt_inputs_[e] = make_input(agent, envs_[e].state().obs_tgt);
  cur_inputs_[e] = make_input(agent, envs_[e].state().obs_cur);
  started_[e] = true;
}

RolloutBuffer RolloutCollector::collect(const Agent<float>& agent, int rollout_len, bool aux_enabled,
                                        double term_threshold,
                                        const std::function<void(const EpisodeRecord&)>& on_episode) {
  const std::size_t n = envs_.size();
  if (rollout_len % static_cast<int>(n) != 0) throw std::invalid_argument("rollout_len must be divisible by n_envs");
  const int steps_per_env = rollout_len / static_cast<int>(n);

  // Cached inputs are only valid for the agent and encoder mode that built them.
  if (input_owner_ != &agent || input_frozen_ != agent.config().freeze_encoder) {
    for (std::size_t e = 0; e < n; ++e) {
      if (!started_[e]) continue;
      tgt_inputs_[e] = make_input(agent, envs_[e].state().obs_tgt);
      cur_inputs_[e] = make_input(agent, envs_[e].state().obs_cur);
    }
    input_owner_ = &agent;
    input_frozen_ = agent.config().freeze_encoder;
  }
  for (std::size_t e = 0; e < n; ++e) {
    if (!started_[e]) start_episode(e, agent);
  }

  RolloutBuffer buf;
  buf.n_envs = static_cast<int>(n);
  buf.steps_per_env = steps_per_env;
  buf.steps.resize(static_cast<std::size_t>(rollout_len));
  buf.bootstrap.assign(n, 0.0);
  const std::vector<int>& axes = envs_.front().config().axes;

  for (int t = 0; t < steps_per_env; ++t) {
    const PolicyBatch<float> out = forward_inputs(agent, cur_inputs_, tgt_inputs_, nullptr);
    for (std::size_t e = 0; e < n; ++e) {
      const PolicyOutput po = out.row(e);
      Rng& rng = act_rngs_[e];
      const nn::Categorical<double> dist(po.logits);
      const int action = static_cast<int>(dist.sample(rng));
      const double m_before = envs_[e].state().m_prev;
      bool coarse = false;
      bool terminate = false;
      if (aux_enabled) {
        coarse = rng.bernoulli(po.step_prob);
        terminate = po.term_prob > term_threshold;
      } else {
        coarse = aux_labels(m_before).step_mode == Granularity::kCoarse;
      }

      Transition& tr = buf.steps[e * static_cast<std::size_t>(steps_per_env) + static_cast<std::size_t>(t)];
      tr.cur = cur_inputs_[e];
      tr.tgt = tgt_inputs_[e];
      tr.action = action;
      tr.coarse = coarse;
      tr.terminate = terminate;
      tr.log_prob = dist.log_prob(static_cast<std::size_t>(action));
      tr.value = po.value;
      tr.m = m_before;
      tr.aux = aux_labels(m_before);

      const ActionCommand cmd = ActionCommand::from_index(
          action, axes, coarse ? Granularity::kCoarse : Granularity::kFine, terminate);
      const StepOutcome res = envs_[e].step(cmd);
      tr.reward = res.reward;
      tr.done = res.done;
      if (res.done) {
        EpisodeRecord rec;
        rec.reason = res.done_reason;
        rec.success = res.done_reason == DoneReason::kSuccess;
        rec.final_m = res.m;
        rec.length = envs_[e].state().step_idx + (terminate ? 1 : 0);
        if (on_episode) on_episode(rec);
        start_episode(e, agent);
      } else if (!res.undone && !terminate) {
        cur_inputs_[e] = make_input(agent, envs_[e].state().obs_cur);
      }
    }
  }
  const PolicyBatch<float> last = forward_inputs(agent, cur_inputs_, tgt_inputs_, nullptr);
  for (std::size_t e = 0; e < n; ++e) buf.bootstrap[e] = last.value[e];
  return buf;
}

// ---------------------------------------------------------------------------
// GAE

void gae_segment(std::span<const double> rewards, std::span<const double> values, std::span<const bool> dones,
                 double bootstrap, double gamma, double lambda, std::span<double> advantages) {
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * not_done - values[i];
    advantages[i] = delta + gamma * lambda * not_done * next_adv;
    next_adv = advantages[i];
    next_value = values[i];
  }
}

void compute_gae(RolloutBuffer& buffer, double gamma, double lambda) {
  const std::size_t t_len = static_cast<std::size_t>(buffer.steps_per_env);
  buffer.advantages.assign(buffer.size(), 0.0);
  buffer.returns.assign(buffer.size(), 0.0);
  std::vector<double> r(t_len), v(t_len);
  std::unique_ptr<bool[]> d(new bool[t_len]);
  for (int e = 0; e < buffer.n_envs; ++e) {
    const std::size_t base = static_cast<std::size_t>(e) * t_len;
    for (std::size_t i = 0; i < t_len; ++i) {
      r[i] = buffer.steps[base + i].reward;
      v[i] = buffer.steps[base + i].value;
      d[i] = buffer.steps[base + i].done;
    }
    gae_segment(r, v, std::span<const bool>(d.get(), t_len), buffer.bootstrap[static_cast<std::size_t>(e)], gamma,
                lambda, std::span(buffer.advantages).subspan(base, t_len));
    for (std::size_t i = 0; i < t_len; ++i) buffer.returns[base + i] = buffer.advantages[base + i] + v[i];
  }
}

// ---------------------------------------------------------------------------
// Loss

double entropy_coef(int update_idx, int total_updates, double start, double end) {
  if (total_updates <= 0) return end;
  const double frac = std::clamp(static_cast<double>(update_idx) / total_updates, 0.0, 1.0);
  return start + (end - start) * frac;
}

std::vector<double> normalize_advantages(std::span<const double> adv) {
  std::vector<double> out(adv.begin(), adv.end());
  if (out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  double var = 0.0;
  for (double a : out) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(out.size())), 1e-8);
  for (double& a : out) a = (a - mean) / sd;
  return out;
}

template <typename T>
LossTerms composite_loss(const PolicyBatch<T>& out, const LossTargets& tg, const LossCoefs& c,
                         std::type_identity_t<HeadGrads<T>>* grads) {
  const int n = out.logits.dim(0);
  const int a_n = out.logits.dim(1);
  if (tg.actions.size() != static_cast<std::size_t>(n) || tg.old_log_probs.size() != tg.actions.size() ||
      tg.advantages.size() != tg.actions.size() || tg.returns.size() != tg.actions.size() ||
      tg.step_labels.size() != tg.actions.size() || tg.term_labels.size() != tg.actions.size()) {
    throw nn::ShapeError("composite_loss: target sizes do not match the batch");
  }
  if (grads != nullptr) {
    grads->logits = Tensor<T>({n, a_n});
    grads->value = Tensor<T>({n, 1});
    grads->step_logit = Tensor<T>({n, 1});
    grads->term_logit = Tensor<T>({n, 1});
    grads->embedding = Tensor<T>();
  }
  const T inv_n = T(1) / static_cast<T>(n);
  LossTerms lt;
  T ppo = 0, value = 0, ent = 0, step = 0, term = 0;
  int clipped = 0;
  for (int i = 0; i < n; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const nn::Categorical<T> dist(std::span<const T>(out.logits.ptr() + ui * a_n, static_cast<std::size_t>(a_n)));
    const auto& p = dist.probs();
    const int act = tg.actions[ui];
    const T logp = dist.log_prob(static_cast<std::size_t>(act));
    const T ratio = std::exp(logp - static_cast<T>(tg.old_log_probs[ui]));
    const T adv = static_cast<T>(tg.advantages[ui]);
    const T lo = static_cast<T>(1.0 - c.clip_eps);
    const T hi = static_cast<T>(1.0 + c.clip_eps);
    const T surr1 = ratio * adv;
    const T surr2 = std::clamp(ratio, lo, hi) * adv;
    ppo -= std::min(surr1, surr2);
    if (ratio < lo || ratio > hi) ++clipped;
    const T h = dist.entropy();
    ent += h;
    const T v_err = out.value[ui] - static_cast<T>(tg.returns[ui]);
    value += v_err * v_err;
    const T zs = out.step_logit[ui];
    const T zt = out.term_logit[ui];
    const T ys = static_cast<T>(tg.step_labels[ui]);
    const T yt = static_cast<T>(tg.term_labels[ui]);
    step += nn::softplus(zs) - ys * zs;
    term += nn::softplus(zt) - yt * zt;

    if (grads == nullptr) continue;
    // d(-min)/d logp is -A * ratio on the unclipped branch, zero otherwise.
    const T dlogp = surr1 <= surr2 ? -adv * ratio * inv_n : T(0);
    const T ent_scale = -static_cast<T>(c.entropy) * inv_n;
    T* gl = grads->logits.ptr() + ui * a_n;
    for (int k = 0; k < a_n; ++k) {
      const T lpk = dist.log_prob(static_cast<std::size_t>(k));
      const T dh = -p[static_cast<std::size_t>(k)] * (lpk + h);
      gl[k] = dlogp * ((k == act ? T(1) : T(0)) - p[static_cast<std::size_t>(k)]) + ent_scale * dh;
    }
    grads->value[ui] = static_cast<T>(2.0 * c.lambda_v) * v_err * inv_n;
    grads->step_logit[ui] = static_cast<T>(c.lambda_d) * (nn::sigmoid(zs) - ys) * inv_n;
    grads->term_logit[ui] = static_cast<T>(c.lambda_d) * (nn::sigmoid(zt) - yt) * inv_n;
  }
  lt.ppo = static_cast<double>(ppo * inv_n);
  lt.value = static_cast<double>(value * inv_n);
  lt.entropy = static_cast<double>(ent * inv_n);
  lt.step = static_cast<double>(step * inv_n);
  lt.term = static_cast<double>(term * inv_n);
  lt.clip_frac = static_cast<double>(clipped) / n;
  lt.total = lt.ppo + c.lambda_v * lt.value - c.entropy * lt.entropy + c.lambda_d * (lt.step + lt.term);
  return lt;
}

template LossTerms composite_loss<float>(const PolicyBatch<float>&, const LossTargets&, const LossCoefs&,
                                         HeadGrads<float>*);
template LossTerms composite_loss<double>(const PolicyBatch<double>&, const LossTargets&, const LossCoefs&,
                                          HeadGrads<double>*);

UpdateMetrics ppo_update(Agent<float>& agent, nn::AdamState<float>& adam, const RolloutBuffer& buffer,
                         const TrainConfig& config, double entropy_coefficient, double lambda_d, Rng& rng) {
  const std::size_t len = buffer.size();
  const std::size_t mb = static_cast<std::size_t>(config.minibatch);
  if (buffer.advantages.size() != len) throw std::logic_error("ppo_update: advantages not computed");
  nn::AdamHyper hp;
  hp.lr = config.lr;
  LossCoefs coefs{config.clip_eps, config.lambda_v, entropy_coefficient, lambda_d};

  UpdateMetrics m;
  int batches = 0;
  std::vector<std::size_t> order(len);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = len; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start + mb <= len; start += mb) {
      std::vector<InputPtr> cur(mb), tgt(mb);
      LossTargets tg;
      std::vector<double> adv(mb);
      for (std::size_t j = 0; j < mb; ++j) {
        const std::size_t idx = order[start + j];
        const Transition& tr = buffer.steps[idx];
        cur[j] = tr.cur;
        tgt[j] = tr.tgt;
        tg.actions.push_back(tr.action);
        tg.old_log_probs.push_back(tr.log_prob);
        tg.returns.push_back(buffer.returns[idx]);
        tg.step_labels.push_back(tr.aux.step_mode == Granularity::kCoarse ? 1.0 : 0.0);
        tg.term_labels.push_back(tr.aux.terminate ? 1.0 : 0.0);
        adv[j] = buffer.advantages[idx];
      }
      tg.advantages = normalize_advantages(adv);

      Agent<float>::Cache cache;
      const PolicyBatch<float> out = forward_inputs(agent, cur, tgt, &cache);
      HeadGrads<float> grads;
      const LossTerms lt = composite_loss(out, tg, coefs, &grads);
      if (!std::isfinite(lt.total)) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss (ppo " << lt.ppo << ", value " << lt.value << ", entropy " << lt.entropy
            << ", step " << lt.step << ", term " << lt.term << ") at epoch " << epoch;
        throw NumericError(msg.str());
      }
      agent.params().zero_grad();
      if (agent.config().freeze_encoder) {
        agent.backward_features(cache.head, grads);
      } else {
        agent.backward(cache, grads);
      }
      if (!all_finite(agent.params())) throw NumericError("ppo_update: non-finite gradient at epoch " + std::to_string(epoch));
      nn::clip_grad_norm(agent.params(), config.max_grad_norm);
      nn::adam_step(agent.params(), adam, hp);

      m.loss_ppo += lt.ppo;
      m.loss_value += lt.value;
      m.entropy += lt.entropy;
      m.loss_step += lt.step;
      m.loss_term += lt.term;
      m.clip_frac += lt.clip_frac;
      ++batches;
    }
  }
  if (batches > 0) {
    const double inv = 1.0 / batches;
    m.loss_ppo *= inv;
    m.loss_value *= inv;
    m.entropy *= inv;
    m.loss_step *= inv;
    m.loss_term *= inv;
    m.clip_frac *= inv;
  }
  return m;
}

// ---------------------------------------------------------------------------

TrainResult train_loop(Agent<float>& agent, std::shared_ptr<const SceneModel> scene, const EnvConfig& env_config,
                       const TrainConfig& config, const std::string& ckpt_path, std::ostream* metrics,
                       std::ostream* log) {
  config.validate();
  env_config.validate();
  if (agent.config().n_actions != env_config.action_count()) {
    throw std::invalid_argument("train: agent n_actions does not match the enabled action axes");
  }
  const auto t0 = std::chrono::steady_clock::now();

  if (config.pretrain) {
    pretrain_supervised(agent, *scene, env_config, config, log);
  }

  Rng master(Rng::mix(config.seed) ^ 0x5452414EULL);
  RolloutCollector collector(scene, env_config, config.n_envs, master.next_u64());
  Rng update_rng = master.split(7);
  Curriculum curriculum(config.curriculum);
  collector.set_success_threshold(curriculum.m_succ());
  nn::AdamState<float> adam;
  adam.init(agent.params());

  const int warmup = static_cast<int>(std::floor(config.aux_warmup_frac * config.total_updates));
  std::deque<bool> recent;
  long long total_episodes = 0;
  TrainResult result;
  if (metrics != nullptr) *metrics << kMetricsHeader << '\n';

  auto save = [&] {
    if (ckpt_path.empty()) return;
    CheckpointExtras<float> extras;
    extras.adam = adam;
    std::ostringstream rs;
    rs << update_rng.engine();
    extras.rng_state = rs.str();
    save_checkpoint(agent, ckpt_path, &extras);
  };

  for (int u = 0; u < config.total_updates; ++u) {
    const double stage_m = curriculum.m_succ();
    const bool aux = u >= warmup;
    long long len_sum = 0;
    int episodes = 0;
    RolloutBuffer buffer = collector.collect(
        agent, config.rollout_len, aux, config.term_threshold, [&](const EpisodeRecord& rec) {
          curriculum.record(rec.success);
          recent.push_back(rec.success);
          while (recent.size() > kCurriculumWindow) recent.pop_front();
          len_sum += rec.length;
          ++episodes;
        });
    compute_gae(buffer, config.gamma, config.gae_lambda);
    const double ent = entropy_coef(u, std::max(1, config.total_updates - 1), config.entropy_start, config.entropy_end);
    const UpdateMetrics um = ppo_update(agent, adam, buffer, config, ent, aux ? config.lambda_d : 0.0, update_rng);

    const double rate =
        recent.empty() ? 0.0
                       : static_cast<double>(std::count(recent.begin(), recent.end(), true)) / recent.size();
    total_episodes += episodes;
    result.stage_history.push_back(stage_m);
    result.success_history.push_back(rate);
    result.episodes_seen.push_back(total_episodes);
    result.final_success_rate = rate;
    result.updates = u + 1;
    const double wall =
        config.log_wall_time
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            : 0.0;
    if (metrics != nullptr) {
      *metrics << u << ',' << stage_m << ',' << rate << ',' << (episodes > 0 ? static_cast<double>(len_sum) / episodes : 0.0)
               << ',' << um.loss_ppo << ',' << um.loss_value << ',' << um.entropy << ',' << um.loss_step << ','
               << um.loss_term << ',' << um.clip_frac << ',' << wall << '\n';
      metrics->flush();
    }
    if (log != nullptr) {
      *log << "update " << u << " stage " << stage_m << " success_100 " << rate << " episodes " << episodes
           << " ppo " << um.loss_ppo << " value " << um.loss_value << " entropy " << um.entropy << " clip "
           << um.clip_frac << '\n';
      log->flush();
    }
    collector.set_success_threshold(curriculum.next());
    if (config.checkpoint_every > 0 && (u + 1) % config.checkpoint_every == 0) save();
  }
  save();
  return result;
}

}  // namespace regrl

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

#include "regrl/env.hpp"
#include "regrl/nn.hpp"
#include "regrl/scene.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace regrl {

struct AgentConfig {
  int h = 128;
  int w = 128;
  std::vector<int> enc_channels = {6, 16, 32, 64, 128};  // one stride-2 stage per step
  int embed_dim = 128;
  int head_hidden = 64;
  int n_actions = 12;
  bool freeze_encoder = false;

  void validate() const;
  int stages() const { return static_cast<int>(enc_channels.size()) - 1; }
  int feature_channels() const { return enc_channels.back(); }
  int feature_h() const;
  int feature_w() const;

  /// Canonical `key = value` text, stable across versions; used in
  /// checkpoints and for the config hash.
  std::string to_text() const;
  static AgentConfig from_text(std::string_view text);
};

/// Single-sample policy output.
struct PolicyOutput {
  std::vector<double> logits;
  double value = 0.0;
  double step_prob = 0.0;  // probability of a coarse step
  double term_prob = 0.0;
};

/// Batched head outputs; the binary heads are kept as logits so losses can
/// use the numerically stable BCE-with-logits form.
template <typename T>
struct PolicyBatch {
  nn::Tensor<T> logits;      // [N, A]
  nn::Tensor<T> value;       // [N, 1]
  nn::Tensor<T> step_logit;  // [N, 1]
  nn::Tensor<T> term_logit;  // [N, 1]
  nn::Tensor<T> embedding;   // [N, E]

  PolicyOutput row(std::size_t i) const;
};

/// Upstream gradients for a backward pass; empty tensors count as zero.
template <typename T>
struct HeadGrads {
  nn::Tensor<T> logits;
  nn::Tensor<T> value;
  nn::Tensor<T> step_logit;
  nn::Tensor<T> term_logit;
  nn::Tensor<T> embedding;
};

/// Siamese actor-critic: one encoder applied to both observations, channel
/// concatenation, a residual fusion block, global average pooling, a shared
/// MLP trunk and four heads (actor, critic, step granularity, termination).
template <typename T>
class Agent {
 public:
  struct EncoderCache {
    std::vector<nn::ConvCache<T>> conv;
    std::vector<nn::Tensor<T>> act;
  };
  struct HeadCache {
    std::vector<int> fused_shape;
    int cur_channels = 0;
    nn::ConvCache<T> proj, res1, res2;
    nn::Tensor<T> proj_out, res1_out, sum_out, embedding, hidden;
  };
  struct Cache {
    EncoderCache cur, tgt;
    HeadCache head;
  };

  explicit Agent(AgentConfig config, std::uint64_t seed = 0);

  const AgentConfig& config() const { return config_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  /// Parameters belonging to the Siamese encoder stages.
  bool is_encoder_param(std::size_t i) const { return i < encoder_param_count_; }
  std::size_t encoder_param_count() const { return encoder_param_count_; }
  void set_freeze_encoder(bool freeze);

  nn::Tensor<T> encode(const nn::Tensor<T>& obs, EncoderCache* cache) const;
  PolicyBatch<T> forward_features(const nn::Tensor<T>& feat_cur, const nn::Tensor<T>& feat_tgt,
                                  HeadCache* cache) const;
  PolicyBatch<T> forward(const nn::Tensor<T>& obs_cur, const nn::Tensor<T>& obs_tgt, Cache* cache) const;

  /// Back-propagates through the fusion block and heads, accumulating
  /// parameter gradients; returns gradients w.r.t. the two feature maps.
  std::pair<nn::Tensor<T>, nn::Tensor<T>> backward_features(const HeadCache& cache, const HeadGrads<T>& grads);
  /// Full backward; skips the encoder when it is frozen.
  void backward(const Cache& cache, const HeadGrads<T>& grads);
  void backward_encoder(const EncoderCache& cache, const nn::Tensor<T>& dfeat);

  PolicyOutput policy_forward(const Observation& cur, const Observation& tgt) const;

 private:
  AgentConfig config_;
  nn::ParamStore<T> params_;
  std::size_t encoder_param_count_ = 0;

  struct Slots {
    std::vector<nn::Parameter<T>*> enc_w, enc_b;
    nn::Parameter<T>*proj_w, *proj_b, *res1_w, *res1_b, *res2_w, *res2_b;
    nn::Parameter<T>*trunk_w, *trunk_b, *actor_w, *actor_b, *critic_w, *critic_b;
    nn::Parameter<T>*step_w, *step_b, *term_w, *term_b;
  } p_{};
};

extern template class Agent<float>;
extern template class Agent<double>;

/// Stacks observations into an [N, 6, H, W] tensor.
template <typename T>
nn::Tensor<T> stack_observations(std::span<const Observation* const> obs);

enum class SelectMode { kSample, kGreedy };

struct ActionChoice {
  int index = 0;  // motion action index into the enabled-axes table
  ActionCommand command;
};

/// Greedy: argmax action, coarse iff step_prob > 0.5, terminate iff
/// term_prob > term_threshold. Sample: categorical action, Bernoulli
/// granularity and termination (draw order: action, granularity, terminate).
ActionChoice select_action(const PolicyOutput& out, SelectMode mode, Rng& rng, double term_threshold,
                           const std::vector<int>& axes);

template <typename T>
struct CheckpointExtras {
  std::optional<nn::AdamState<T>> adam;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned binary checkpoint: magic, version, length-prefixed config text,
/// config hash, parameters (name, shape, little-endian payload), optional
/// Adam moments, rng state, trailing FNV-1a checksum.
template <typename T>
void save_checkpoint(const Agent<T>& agent, const std::string& path, const CheckpointExtras<T>* extras = nullptr);
template <typename T>
Agent<T> load_checkpoint(const std::string& path, CheckpointExtras<T>* extras = nullptr);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace regrl

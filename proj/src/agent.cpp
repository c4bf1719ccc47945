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

#include "regrl/agent.hpp"

#include <Eigen/QR>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace regrl {

using nn::Tensor;

std::string nn::shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// AgentConfig

void AgentConfig::validate() const {
  if (h <= 0 || w <= 0) throw std::invalid_argument("agent: resolution must be positive");
  if (enc_channels.size() < 2 || enc_channels.front() != Observation::kChannels) {
    throw std::invalid_argument("agent: enc_channels must start at 6 and have at least one stage");
  }
  for (int c : enc_channels) {
    if (c <= 0) throw std::invalid_argument("agent: channel widths must be positive");
  }
  if (embed_dim <= 0 || head_hidden <= 0 || n_actions < 2) {
    throw std::invalid_argument("agent: embed_dim, head_hidden must be positive and n_actions >= 2");
  }
}

int AgentConfig::feature_h() const {
  int v = h;
  for (int s = 0; s < stages(); ++s) v = nn::conv_out_extent(v, 3, 2);
  return v;
}

int AgentConfig::feature_w() const {
  int v = w;
  for (int s = 0; s < stages(); ++s) v = nn::conv_out_extent(v, 3, 2);
  return v;
}

std::string AgentConfig::to_text() const {
  std::ostringstream out;
  out << "h = " << h << "\nw = " << w << "\nenc_channels = ";
  for (std::size_t i = 0; i < enc_channels.size(); ++i) out << (i ? "," : "") << enc_channels[i];
  out << "\nembed_dim = " << embed_dim << "\nhead_hidden = " << head_hidden << "\nn_actions = " << n_actions
      << "\nfreeze_encoder = " << (freeze_encoder ? "true" : "false") << '\n';
  return out.str();
}

AgentConfig AgentConfig::from_text(std::string_view text) {
  AgentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "h") {
        cfg.h = std::stoi(value);
      } else if (key == "w") {
        cfg.w = std::stoi(value);
      } else if (key == "enc_channels") {
        cfg.enc_channels.clear();
        std::istringstream vs(value);
        std::string item;
        while (std::getline(vs, item, ',')) cfg.enc_channels.push_back(std::stoi(item));
      } else if (key == "embed_dim") {
        cfg.embed_dim = std::stoi(value);
      } else if (key == "head_hidden") {
        cfg.head_hidden = std::stoi(value);
      } else if (key == "n_actions") {
        cfg.n_actions = std::stoi(value);
      } else if (key == "freeze_encoder") {
        cfg.freeze_encoder = value == "true" || value == "1";
      } else {
        throw DataError("agent config: unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw DataError("agent config: bad value for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Agent

namespace {

/// Orthogonal rows/columns scaled by `gain`, viewing the parameter as
/// [shape[0], prod(shape[1:])].
template <typename T>
void orthogonal_init(Tensor<T>& w, double gain, Rng& rng) {
  const int rows = w.shape[0];
  const int cols = static_cast<int>(w.size()) / rows;
  const bool wide = rows < cols;
  const int m = wide ? cols : rows;
  const int n = wide ? rows : cols;
  Eigen::MatrixXd a(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(n).template triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      w[static_cast<std::size_t>(i) * cols + j] = static_cast<T>(gain * (wide ? q(j, i) : q(i, j)));
    }
  }
}

}  // namespace

template <typename T>
Agent<T>::Agent(AgentConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(Rng::mix(seed) ^ 0xA6E47ULL);
  const double relu_gain = std::sqrt(2.0);
  const int s = config_.stages();
  for (int i = 0; i < s; ++i) {
    auto& w = params_.add("enc." + std::to_string(i) + ".weight",
                          {config_.enc_channels[i + 1], config_.enc_channels[i], 3, 3});
    auto& b = params_.add("enc." + std::to_string(i) + ".bias", {config_.enc_channels[i + 1]});
    orthogonal_init(w.value, relu_gain, rng);
    p_.enc_w.push_back(&w);
    p_.enc_b.push_back(&b);
  }
  encoder_param_count_ = params_.size();

  const int fc = config_.feature_channels();
  const int e = config_.embed_dim;
  auto conv = [&](const std::string& name, int out, int in, int k, double gain) {
    auto& w = params_.add(name + ".weight", {out, in, k, k});
    auto& b = params_.add(name + ".bias", {out});
    orthogonal_init(w.value, gain, rng);
    return std::pair{&w, &b};
  };
  auto linear = [&](const std::string& name, int out, int in, double gain) {
    auto& w = params_.add(name + ".weight", {out, in});
    auto& b = params_.add(name + ".bias", {out});
    orthogonal_init(w.value, gain, rng);
    return std::pair{&w, &b};
  };
  std::tie(p_.proj_w, p_.proj_b) = conv("fuse.proj", e, 2 * fc, 1, relu_gain);
  std::tie(p_.res1_w, p_.res1_b) = conv("fuse.res1", e, e, 3, relu_gain);
  std::tie(p_.res2_w, p_.res2_b) = conv("fuse.res2", e, e, 3, relu_gain * 0.5);
  std::tie(p_.trunk_w, p_.trunk_b) = linear("trunk", config_.head_hidden, e, relu_gain);
  std::tie(p_.actor_w, p_.actor_b) = linear("head.actor", config_.n_actions, config_.head_hidden, 0.01);
  std::tie(p_.critic_w, p_.critic_b) = linear("head.critic", 1, config_.head_hidden, 1.0);
  std::tie(p_.step_w, p_.step_b) = linear("head.step", 1, config_.head_hidden, 1.0);
  std::tie(p_.term_w, p_.term_b) = linear("head.term", 1, config_.head_hidden, 1.0);
  set_freeze_encoder(config_.freeze_encoder);
}

template <typename T>
void Agent<T>::set_freeze_encoder(bool freeze) {
  config_.freeze_encoder = freeze;
  for (std::size_t i = 0; i < encoder_param_count_; ++i) {
    params_[i].frozen = freeze;
    if (freeze) params_[i].grad.fill(T(0));
  }
}

template <typename T>
Tensor<T> Agent<T>::encode(const Tensor<T>& obs, EncoderCache* cache) const {
  if (obs.shape.size() != 4 || obs.dim(1) != Observation::kChannels || obs.dim(2) != config_.h ||
      obs.dim(3) != config_.w) {
    throw nn::ShapeError("encode: expected [N, 6, " + std::to_string(config_.h) + ", " + std::to_string(config_.w) +
                         "], got " + nn::shape_str(obs.shape));
  }
  if (cache != nullptr) {
    cache->conv.assign(p_.enc_w.size(), {});
    cache->act.assign(p_.enc_w.size(), {});
  }
  Tensor<T> x = obs;
  for (std::size_t i = 0; i < p_.enc_w.size(); ++i) {
    x = nn::relu_forward(nn::conv2d_forward(x, p_.enc_w[i]->value, p_.enc_b[i]->value, 2,
                                            cache ? &cache->conv[i] : nullptr));
    if (cache != nullptr) cache->act[i] = x;
  }
  return x;
}

template <typename T>
PolicyBatch<T> Agent<T>::forward_features(const Tensor<T>& feat_cur, const Tensor<T>& feat_tgt,
                                          HeadCache* cache) const {
  const Tensor<T> fused = nn::channel_concat_forward(feat_cur, feat_tgt);
  HeadCache local;
  HeadCache& c = cache ? *cache : local;
  c.fused_shape = fused.shape;
  c.cur_channels = feat_cur.dim(1);
  c.proj_out = nn::relu_forward(nn::conv2d_forward(fused, p_.proj_w->value, p_.proj_b->value, 1, &c.proj));
  c.res1_out = nn::relu_forward(nn::conv2d_forward(c.proj_out, p_.res1_w->value, p_.res1_b->value, 1, &c.res1));
  const Tensor<T> res2 = nn::conv2d_forward(c.res1_out, p_.res2_w->value, p_.res2_b->value, 1, &c.res2);
  c.sum_out = nn::relu_forward(nn::residual_add_forward(c.proj_out, res2));
  c.embedding = nn::global_avg_pool_forward(c.sum_out);
  c.hidden = nn::relu_forward(nn::linear_forward(c.embedding, p_.trunk_w->value, p_.trunk_b->value));

  PolicyBatch<T> out;
  out.logits = nn::linear_forward(c.hidden, p_.actor_w->value, p_.actor_b->value);
  out.value = nn::linear_forward(c.hidden, p_.critic_w->value, p_.critic_b->value);
  out.step_logit = nn::linear_forward(c.hidden, p_.step_w->value, p_.step_b->value);
  out.term_logit = nn::linear_forward(c.hidden, p_.term_w->value, p_.term_b->value);
  out.embedding = c.embedding;
  return out;
}

template <typename T>
PolicyBatch<T> Agent<T>::forward(const Tensor<T>& obs_cur, const Tensor<T>& obs_tgt, Cache* cache) const {
  const Tensor<T> fc = encode(obs_cur, cache ? &cache->cur : nullptr);
  const Tensor<T> ft = encode(obs_tgt, cache ? &cache->tgt : nullptr);
  return forward_features(fc, ft, cache ? &cache->head : nullptr);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Agent<T>::backward_features(const HeadCache& c, const HeadGrads<T>& g) {
  const int n = c.hidden.dim(0);
  Tensor<T> dhidden({n, config_.head_hidden});
  auto head = [&](const Tensor<T>& dy, nn::Parameter<T>* w, nn::Parameter<T>* b) {
    if (dy.size() == 0) return;
    nn::add_into(dhidden, nn::linear_backward(dy, c.hidden, w->value, w->grad, b->grad, true));
  };
  head(g.logits, p_.actor_w, p_.actor_b);
  head(g.value, p_.critic_w, p_.critic_b);
  head(g.step_logit, p_.step_w, p_.step_b);
  head(g.term_logit, p_.term_w, p_.term_b);
  dhidden = nn::relu_backward(dhidden, c.hidden);

  Tensor<T> dembed = nn::linear_backward(dhidden, c.embedding, p_.trunk_w->value, p_.trunk_w->grad,
                                         p_.trunk_b->grad, true);
  if (g.embedding.size() != 0) nn::add_into(dembed, g.embedding);

  Tensor<T> dsum = nn::relu_backward(nn::global_avg_pool_backward(dembed, c.sum_out.shape), c.sum_out);
  Tensor<T> dres1 = nn::conv2d_backward(dsum, p_.res2_w->value, 1, c.res2, p_.res2_w->grad, p_.res2_b->grad, true);
  dres1 = nn::relu_backward(dres1, c.res1_out);
  Tensor<T> dproj = nn::conv2d_backward(dres1, p_.res1_w->value, 1, c.res1, p_.res1_w->grad, p_.res1_b->grad, true);
  nn::add_into(dproj, dsum);
  dproj = nn::relu_backward(dproj, c.proj_out);
  const Tensor<T> dfused =
      nn::conv2d_backward(dproj, p_.proj_w->value, 1, c.proj, p_.proj_w->grad, p_.proj_b->grad, true);
  return nn::channel_concat_backward(dfused, c.cur_channels);
}

template <typename T>
void Agent<T>::backward_encoder(const EncoderCache& cache, const Tensor<T>& dfeat) {
  if (config_.freeze_encoder) return;
  Tensor<T> d = dfeat;
  for (std::size_t i = p_.enc_w.size(); i-- > 0;) {
    d = nn::relu_backward(d, cache.act[i]);
    d = nn::conv2d_backward(d, p_.enc_w[i]->value, 2, cache.conv[i], p_.enc_w[i]->grad, p_.enc_b[i]->grad, i > 0);
  }
}

template <typename T>
void Agent<T>::backward(const Cache& cache, const HeadGrads<T>& grads) {
  auto [dcur, dtgt] = backward_features(cache.head, grads);
  backward_encoder(cache.cur, dcur);
  backward_encoder(cache.tgt, dtgt);
}

template <typename T>
PolicyOutput PolicyBatch<T>::row(std::size_t i) const {
  PolicyOutput out;
  const std::size_t a = static_cast<std::size_t>(logits.dim(1));
  out.logits.assign(logits.data.begin() + static_cast<std::ptrdiff_t>(i * a),
                    logits.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * a));
  out.value = value[i];
  out.step_prob = nn::sigmoid(static_cast<double>(step_logit[i]));
  out.term_prob = nn::sigmoid(static_cast<double>(term_logit[i]));
  return out;
}

template <typename T>
PolicyOutput Agent<T>::policy_forward(const Observation& cur, const Observation& tgt) const {
  const Observation* c[] = {&cur};
  const Observation* t[] = {&tgt};
  return forward(stack_observations<T>(c), stack_observations<T>(t), nullptr).row(0);
}

template <typename T>
Tensor<T> stack_observations(std::span<const Observation* const> obs) {
  if (obs.empty()) throw nn::ShapeError("stack_observations: empty batch");
  const int h = obs.front()->height;
  const int w = obs.front()->width;
  Tensor<T> out({static_cast<int>(obs.size()), Observation::kChannels, h, w});
  const std::size_t per = static_cast<std::size_t>(Observation::kChannels) * h * w;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i]->height != h || obs[i]->width != w) throw nn::ShapeError("stack_observations: mixed resolutions");
    std::copy(obs[i]->data.begin(), obs[i]->data.end(), out.ptr() + i * per);
  }
  return out;
}

template class Agent<float>;
template class Agent<double>;
template struct PolicyBatch<float>;
template struct PolicyBatch<double>;
template Tensor<float> stack_observations<float>(std::span<const Observation* const>);
template Tensor<double> stack_observations<double>(std::span<const Observation* const>);

// ---------------------------------------------------------------------------

ActionChoice select_action(const PolicyOutput& out, SelectMode mode, Rng& rng, double term_threshold,
                           const std::vector<int>& axes) {
  const nn::Categorical<double> dist(out.logits);
  ActionChoice choice;
  bool coarse = false;
  bool terminate = false;
  if (mode == SelectMode::kGreedy) {
    choice.index = static_cast<int>(dist.argmax());
    coarse = out.step_prob > 0.5;
    terminate = out.term_prob > term_threshold;
  } else {
    choice.index = static_cast<int>(dist.sample(rng));
    coarse = rng.bernoulli(out.step_prob);
    terminate = rng.bernoulli(out.term_prob);
  }
  choice.command = ActionCommand::from_index(choice.index, axes,
                                             coarse ? Granularity::kCoarse : Granularity::kFine, terminate);
  return choice;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'R', 'E', 'G', 'R', 'L', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void str(std::string_view s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  template <typename T>
  void payload(const Tensor<T>& t) {
    buf_.append(reinterpret_cast<const char*>(t.ptr()), t.size() * sizeof(T));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  template <typename U>
  U pod() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, data_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  template <typename T>
  void payload(Tensor<T>& t) {
    need(t.size() * sizeof(T));
    std::memcpy(t.ptr(), data_.data() + pos_, t.size() * sizeof(T));
    pos_ += t.size() * sizeof(T);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw DataError("checkpoint is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void save_checkpoint(const Agent<T>& agent, const std::string& path, const CheckpointExtras<T>* extras) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string cfg = agent.config().to_text();
  w.str(cfg);
  w.pod<std::uint64_t>(fnv1a(cfg));
  w.pod<std::uint32_t>(sizeof(T));
  const auto& params = agent.params();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.str(params[i].name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(params[i].value.shape.size()));
    for (int d : params[i].value.shape) w.pod<std::int32_t>(d);
    w.payload(params[i].value);
  }
  const bool has_adam = extras != nullptr && extras->adam.has_value() && extras->adam->m.size() == params.size();
  w.pod<std::uint8_t>(has_adam ? 1 : 0);
  if (has_adam) {
    w.pod<std::int64_t>(extras->adam->t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.payload(extras->adam->m[i]);
      w.payload(extras->adam->v[i]);
    }
  }
  w.str(extras != nullptr ? extras->rng_state : std::string());
  const std::uint64_t checksum = fnv1a(w.bytes());
  w.pod<std::uint64_t>(checksum);

  // Write-then-rename keeps the previous checkpoint intact on failure.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint '" + tmp + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw DataError("failed writing checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot move checkpoint into '" + path + "'");
}

template <typename T>
Agent<T> load_checkpoint(const std::string& path, CheckpointExtras<T>* extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  if (data.size() < sizeof(kMagic) + 8 || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("'" + path + "' is not a regrl checkpoint");
  }
  std::uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, data.data() + data.size() - 8, 8);
  const std::string_view body(data.data(), data.size() - 8);

  Reader r(body);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.pod<char>();
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  if (fnv1a(body) != stored_sum) throw DataError("checkpoint checksum mismatch (file corrupted)");
  const std::string cfg_text = r.str();
  if (r.pod<std::uint64_t>() != fnv1a(cfg_text)) throw DataError("checkpoint config hash mismatch");
  if (r.pod<std::uint32_t>() != sizeof(T)) throw DataError("checkpoint scalar width does not match");

  Agent<T> agent(AgentConfig::from_text(cfg_text));
  auto& params = agent.params();
  const auto n = r.pod<std::uint32_t>();
  if (n != params.size()) throw DataError("checkpoint parameter count does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = r.str();
    if (name != params[i].name) throw DataError("checkpoint parameter '" + name + "' out of order");
    const auto ndim = r.pod<std::uint32_t>();
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = r.pod<std::int32_t>();
    if (shape != params[i].value.shape) throw DataError("checkpoint parameter '" + name + "' has the wrong shape");
    r.payload(params[i].value);
  }
  const auto has_adam = r.pod<std::uint8_t>();
  std::optional<nn::AdamState<T>> adam;
  if (has_adam == 1) {
    adam.emplace();
    adam->t = r.pod<std::int64_t>();
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam->m.emplace_back(params[i].value.shape);
      adam->v.emplace_back(params[i].value.shape);
      r.payload(adam->m.back());
      r.payload(adam->v.back());
    }
  }
  std::string rng_state = r.str();
  if (r.pos() != body.size()) throw DataError("checkpoint has trailing bytes");
  if (extras != nullptr) {
    extras->adam = std::move(adam);
    extras->rng_state = std::move(rng_state);
  }
  return agent;
}

template void save_checkpoint<float>(const Agent<float>&, const std::string&, const CheckpointExtras<float>*);
template void save_checkpoint<double>(const Agent<double>&, const std::string&, const CheckpointExtras<double>*);
template Agent<float> load_checkpoint<float>(const std::string&, CheckpointExtras<float>*);
template Agent<double> load_checkpoint<double>(const std::string&, CheckpointExtras<double>*);

}  // namespace regrl

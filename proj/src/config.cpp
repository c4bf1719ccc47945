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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace regrl {

namespace pt = boost::property_tree;

std::vector<int> parse_axes(std::string_view text) {
  static const std::map<std::string, int> kNames = {{"tx", 0}, {"ty", 1}, {"tz", 2}, {"rx", 3}, {"ry", 4}, {"rz", 5}};
  std::vector<int> axes;
  std::istringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    const auto it = kNames.find(item);
    if (it != kNames.end()) {
      axes.push_back(it->second);
    } else if (item.size() == 1 && item[0] >= '0' && item[0] <= '5') {
      axes.push_back(item[0] - '0');
    } else {
      throw ConfigError("unknown action axis '" + item + "' (expected tx, ty, tz, rx, ry, rz)");
    }
  }
  return axes;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("'" + key + "': cannot parse '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("'" + key + "': expected a boolean, got '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<T>(key, item));
  if (out.empty()) throw ConfigError("'" + key + "': empty list");
  return out;
}

/// "lo:hi:step" or a comma list.
std::vector<double> parse_thresholds(const std::string& key, const std::string& value) {
  if (value.find(':') == std::string::npos) return parse_list<double>(key, value);
  const auto parts = [&] {
    std::vector<double> p;
    std::istringstream in(value);
    std::string item;
    while (std::getline(in, item, ':')) p.push_back(parse_number<double>(key, item));
    return p;
  }();
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw ConfigError("'" + key + "': expected lo:hi:step");
  }
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (int i = 0; i <= n; ++i) out.push_back(std::round((parts[0] + i * parts[2]) * 1e9) / 1e9);
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const auto* table = [] {
    auto* t = new std::map<std::string, std::map<std::string, Setter>>();
    auto& env = (*t)["env"];
    auto& agent = (*t)["agent"];
    auto& train = (*t)["train"];
    auto& eval = (*t)["eval"];
#define REGRL_NUM(section, name, field)                                                          \
  section[name] = [](RunConfig& c, const std::string& k, const std::string& v) {                 \
    c.field = parse_number<std::decay_t<decltype(c.field)>>(k, v);                               \
  }
#define REGRL_BOOL(section, name, field) \
  section[name] = [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }
#define REGRL_DEG(section, name, field)                                         \
  section[name] = [](RunConfig& c, const std::string& k, const std::string& v) { \
    c.field = parse_number<double>(k, v) * kDegToRad;                           \
  }

    env["scene"] = [](RunConfig& c, const std::string&, const std::string& v) { c.scene.path = v; };
    REGRL_NUM(env, "scene_seed", scene.seed);
    REGRL_NUM(env, "scene_subdiv", scene.subdiv);
    REGRL_NUM(env, "scene_bump", scene.bump);
    env["resolution"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.env.h = c.env.w = parse_number<int>(k, v);
    };
    REGRL_NUM(env, "h", env.h);
    REGRL_NUM(env, "w", env.w);
    REGRL_NUM(env, "fx", env.native.fx);
    REGRL_NUM(env, "fy", env.native.fy);
    REGRL_NUM(env, "cx", env.native.cx);
    REGRL_NUM(env, "cy", env.native.cy);
    REGRL_NUM(env, "native_w", env.native.width);
    REGRL_NUM(env, "native_h", env.native.height);
    REGRL_NUM(env, "coarse_step_t", env.coarse_step_t);
    REGRL_NUM(env, "fine_step_t", env.fine_step_t);
    REGRL_DEG(env, "coarse_step_r", env.coarse_step_r);
    REGRL_DEG(env, "fine_step_r", env.fine_step_r);
    REGRL_NUM(env, "m_succ", env.m_succ);
    REGRL_NUM(env, "max_steps", env.max_steps);
    REGRL_NUM(env, "beta", env.beta);
    REGRL_NUM(env, "eps", env.eps);
    REGRL_NUM(env, "empty_view_pixels", env.empty_view_pixels);
    REGRL_NUM(env, "min_pixels", env.min_pixels);
    REGRL_DEG(env, "rot_range", env.rot_range);
    REGRL_NUM(env, "trans_range", env.trans_range);
    REGRL_NUM(env, "min_structures", env.min_structures);
    REGRL_NUM(env, "sample_retries", env.sample_retries);
    REGRL_BOOL(env, "fov_mask", env.fov_mask);
    REGRL_BOOL(env, "undo_empty_view", env.undo_empty_view);
    REGRL_BOOL(env, "augment_target", env.augment_target);
    env["depth_clip"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "none") {
        c.env.depth_clip.reset();
        return;
      }
      const auto p = parse_list<double>(k, v);
      if (p.size() != 2 || !(p[0] >= 0.0 && p[0] < p[1] && p[1] <= 100.0)) {
        throw ConfigError("'" + k + "': expected 'none' or 'lo,hi' percentiles");
      }
      c.env.depth_clip = PercentileClip{p[0], p[1]};
    };
    REGRL_BOOL(env, "augment", env.augment.enabled);
    REGRL_NUM(env, "aug_mask_morph", env.augment.max_mask_morph);
    REGRL_NUM(env, "aug_erase_rects", env.augment.max_erase_rects);
    REGRL_NUM(env, "aug_erase_min_frac", env.augment.erase_min_frac);
    REGRL_NUM(env, "aug_erase_max_frac", env.augment.erase_max_frac);
    REGRL_NUM(env, "aug_depth_occlusions", env.augment.max_depth_occlusions);
    REGRL_NUM(env, "aug_liver_morph", env.augment.max_liver_morph);
    REGRL_NUM(env, "fov_radius_frac", env.augment.fov_radius_frac);
    env["axes"] = [](RunConfig& c, const std::string&, const std::string& v) { c.env.axes = parse_axes(v); };

    agent["enc_channels"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.agent.enc_channels = parse_list<int>(k, v);
    };
    REGRL_NUM(agent, "embed_dim", agent.embed_dim);
    REGRL_NUM(agent, "head_hidden", agent.head_hidden);
    REGRL_BOOL(agent, "freeze_encoder", agent.freeze_encoder);

    REGRL_NUM(train, "seed", train.seed);
    REGRL_NUM(train, "n_envs", train.n_envs);
    REGRL_NUM(train, "rollout_len", train.rollout_len);
    REGRL_NUM(train, "epochs_per_update", train.epochs);
    REGRL_NUM(train, "minibatch", train.minibatch);
    REGRL_NUM(train, "lr", train.lr);
    REGRL_NUM(train, "gamma", train.gamma);
    REGRL_NUM(train, "gae_lambda", train.gae_lambda);
    REGRL_NUM(train, "clip_eps", train.clip_eps);
    REGRL_NUM(train, "max_grad_norm", train.max_grad_norm);
    REGRL_NUM(train, "entropy_start", train.entropy_start);
    REGRL_NUM(train, "entropy_end", train.entropy_end);
    REGRL_NUM(train, "lambda_v", train.lambda_v);
    REGRL_NUM(train, "lambda_d", train.lambda_d);
    REGRL_NUM(train, "total_updates", train.total_updates);
    REGRL_NUM(train, "aux_warmup_frac", train.aux_warmup_frac);
    train["curriculum"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.curriculum = parse_list<double>(k, v);
    };
    REGRL_NUM(train, "term_threshold", train.term_threshold);
    REGRL_NUM(train, "checkpoint_every", train.checkpoint_every);
    REGRL_BOOL(train, "log_wall_time", train.log_wall_time);
    REGRL_BOOL(train, "pretrain", train.pretrain);
    REGRL_NUM(train, "pretrain_pairs", train.pretrain_pairs);
    REGRL_NUM(train, "pretrain_epochs", train.pretrain_epochs);
    REGRL_NUM(train, "pretrain_batch", train.pretrain_batch);
    REGRL_NUM(train, "pretrain_holdout", train.pretrain_holdout);
    REGRL_NUM(train, "pretrain_lr", train.pretrain_lr);

    REGRL_NUM(eval, "seed", eval.seed);
    REGRL_NUM(eval, "n_pairs", eval.n_pairs);
    eval["thresholds"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.eval.thresholds = parse_thresholds(k, v);
    };
    REGRL_NUM(eval, "max_steps", eval.max_steps);
    REGRL_BOOL(eval, "fallback", eval.fallback);
    REGRL_NUM(eval, "repeat", eval.repeat);
#undef REGRL_NUM
#undef REGRL_BOOL
#undef REGRL_DEG
    return t;
  }();
  return *table;
}

}  // namespace

void RunConfig::finalize() {
  agent.h = env.h;
  agent.w = env.w;
  agent.n_actions = env.action_count();
}

void RunConfig::validate() const {
  try {
    env.validate();
    agent.validate();
    train.validate();
    eval.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (scene.path.empty() && (scene.subdiv < 1 || scene.subdiv > 5)) {
    throw ConfigError("env: scene_subdiv must be in [1, 5]");
  }
}

RunConfig parse_run_config(std::string_view text, const std::string& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  RunConfig cfg;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    const auto sit = table.find(section);
    if (sit == table.end() || body.empty()) {
      throw ConfigError("unknown config section or top-level key '" + section + "'");
    }
    for (const auto& [key, node] : body) {
      const auto kit = sit->second.find(key);
      if (kit == sit->second.end()) throw ConfigError("unknown key '" + section + "." + key + "'");
      kit->second(cfg, section + "." + key, node.get_value<std::string>());
    }
  }
  if (!cfg.scene.path.empty() && std::filesystem::path(cfg.scene.path).is_relative()) {
    cfg.scene.path = (std::filesystem::path(base_dir) / cfg.scene.path).lexically_normal().string();
  }
  cfg.env.m_succ = tree.get_optional<std::string>("env.m_succ") ? cfg.env.m_succ : cfg.train.curriculum.front();
  cfg.finalize();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_run_config(ss.str(), dir.empty() ? "." : dir.string());
}

std::vector<double> parse_threshold_spec(std::string_view text) {
  return parse_thresholds("thresholds", std::string(text));
}

Pose parse_pose_spec(std::string_view text, const SceneModel& scene) {
  std::vector<double> v;
  try {
    v = parse_list<double>("pose", std::string(text));
  } catch (const ConfigError& e) {
    throw DataError(std::string("pose string: ") + e.what());
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw DataError("pose string: non-finite value");
  }
  if (v.size() == 6) {
    Vec6 xi;
    xi << v[0], v[1], v[2], v[3] * kDegToRad, v[4] * kDegToRad, v[5] * kDegToRad;
    return se3_exp(Twist::from_vector(xi)) * reference_pose(scene);
  }
  if (v.size() == 12) {
    Pose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.R(r, c) = v[static_cast<std::size_t>(3 * r + c)];
    }
    p.t = Vec3(v[9], v[10], v[11]);
    if (p.drift() > 1e-6) throw DataError("pose string: rotation block is not orthonormal");
    p.R = orthonormalize(p.R);
    return p;
  }
  throw DataError("pose string: expected 6 or 12 comma-separated values, got " + std::to_string(v.size()));
}

std::string format_pose_spec(const Pose& pose) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << pose.R(r, c) << ',';
  }
  out << pose.t.x() << ',' << pose.t.y() << ',' << pose.t.z();
  return out.str();
}

SceneModel load_scene_source(const SceneSource& src) {
  if (!src.path.empty()) return load_scene(src.path);
  return generate_synthetic_scene(src.seed, src.subdiv, src.bump);
}

}  // namespace regrl

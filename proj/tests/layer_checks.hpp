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


// Finite-difference checks for every layer, shared by the unit tests and
// the acceptance binary.

#pragma once

#include "gradcheck.hpp"
#include "regrl/nn.hpp"

#include <string>
#include <utility>
#include <vector>

namespace regrl::oracle {

struct LayerCheck {
  std::string layer;
  GradCheckResult result;
};

inline std::vector<LayerCheck> check_all_layers(std::uint64_t seed, int directions = 20) {
  using nn::Tensor;
  Rng rng(seed);
  std::vector<LayerCheck> out;

  auto conv_case = [&](const std::string& name, int cin, int cout, int k, int stride) {
    Tensor<double> x = random_tensor({2, cin, 7, 6}, rng);
    Tensor<double> w = random_tensor({cout, cin, k, k}, rng, 0.5);
    Tensor<double> b = random_tensor({cout}, rng);
    const Tensor<double> probe = nn::conv2d_forward(x, w, b, stride, nullptr);
    const Tensor<double> g = random_tensor(probe.shape, rng);
    Tensor<double> dx, dw(w.shape), db(b.shape);
    auto loss = [&] { return dot(g, nn::conv2d_forward(x, w, b, stride, nullptr)); };
    auto grad = [&] {
      nn::ConvCache<double> cache;
      nn::conv2d_forward(x, w, b, stride, &cache);
      dw.fill(0.0);
      db.fill(0.0);
      dx = nn::conv2d_backward(g, w, stride, cache, dw, db, true);
    };
    grad();
    out.push_back({name, gradcheck({{&x, &dx}, {&w, &dw}, {&b, &db}}, loss, grad, rng, directions)});
  };
  conv_case("conv3x3_stride1", 3, 4, 3, 1);
  conv_case("conv3x3_stride2", 3, 5, 3, 2);
  conv_case("conv1x1", 4, 3, 1, 1);

  {
    Tensor<double> x = random_tensor({5, 7}, rng);
    Tensor<double> w = random_tensor({4, 7}, rng);
    Tensor<double> b = random_tensor({4}, rng);
    const Tensor<double> g = random_tensor({5, 4}, rng);
    Tensor<double> dx, dw(w.shape), db(b.shape);
    auto loss = [&] { return dot(g, nn::linear_forward(x, w, b)); };
    auto grad = [&] {
      dw.fill(0.0);
      db.fill(0.0);
      dx = nn::linear_backward(g, x, w, dw, db, true);
    };
    grad();
    out.push_back({"linear", gradcheck({{&x, &dx}, {&w, &dw}, {&b, &db}}, loss, grad, rng, directions)});
  }

  auto unary = [&](const std::string& name, std::vector<int> shape, auto fwd, auto bwd) {
    Tensor<double> x = random_tensor(shape, rng);
    const Tensor<double> g = random_tensor(fwd(x).shape, rng);
    Tensor<double> dx;
    auto loss = [&] { return dot(g, fwd(x)); };
    auto grad = [&] { dx = bwd(g, x); };
    grad();
    out.push_back({name, gradcheck({{&x, &dx}}, loss, grad, rng, directions)});
  };
  unary("relu", {3, 4, 5},
        [](const Tensor<double>& x) { return nn::relu_forward(x); },
        [](const Tensor<double>& g, const Tensor<double>& x) { return nn::relu_backward(g, nn::relu_forward(x)); });
  unary("sigmoid", {4, 6},
        [](const Tensor<double>& x) { return nn::sigmoid_forward(x); },
        [](const Tensor<double>& g, const Tensor<double>& x) { return nn::sigmoid_backward(g, nn::sigmoid_forward(x)); });
  unary("softmax", {3, 12},
        [](const Tensor<double>& x) { return nn::softmax_forward(x); },
        [](const Tensor<double>& g, const Tensor<double>& x) { return nn::softmax_backward(g, nn::softmax_forward(x)); });
  unary("global_avg_pool", {2, 3, 4, 5},
        [](const Tensor<double>& x) { return nn::global_avg_pool_forward(x); },
        [](const Tensor<double>& g, const Tensor<double>& x) { return nn::global_avg_pool_backward(g, x.shape); });

  {
    Tensor<double> a = random_tensor({2, 3, 4, 4}, rng);
    Tensor<double> b = random_tensor({2, 2, 4, 4}, rng);
    const Tensor<double> g = random_tensor({2, 5, 4, 4}, rng);
    Tensor<double> da, db;
    auto loss = [&] { return dot(g, nn::channel_concat_forward(a, b)); };
    auto grad = [&] { std::tie(da, db) = nn::channel_concat_backward(g, 3); };
    grad();
    out.push_back({"channel_concat", gradcheck({{&a, &da}, {&b, &db}}, loss, grad, rng, directions)});
  }
  {
    Tensor<double> a = random_tensor({2, 3, 4}, rng);
    Tensor<double> b = random_tensor({2, 3, 4}, rng);
    const Tensor<double> g = random_tensor({2, 3, 4}, rng);
    Tensor<double> da = g, db = g;  // the sum hands dy to both operands
    auto loss = [&] { return dot(g, nn::residual_add_forward(a, b)); };
    auto grad = [] {};
    out.push_back({"residual_add", gradcheck({{&a, &da}, {&b, &db}}, loss, grad, rng, directions)});
  }
  return out;
}

}  // namespace regrl::oracle

//
// Copyright 2026 The DPPS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPPS_TASKS_MLP_HPP_
#define DPPS_TASKS_MLP_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/partition.hpp"
#include "dpps/rng.hpp"
#include "dpps/tasks/dataset.hpp"
#include "dpps/vector_ops.hpp"

namespace dpps {

struct LayerDims {
  std::size_t in = 0;
  std::size_t out = 0;
};

// Bias-free linear layers with tanh between them and softmax cross-entropy on
// the logits. Layer k's weights are an out x in row-major block.
struct MlpSpec {
  std::vector<LayerDims> layers;

  // F -> H -> F -> C, three equally sized blocks when H == C. With
  // (784, 10, 10) every layer holds 7840 weights.
  static MlpSpec bottleneck(std::size_t features, std::size_t hidden,
                            std::size_t classes) {
    return MlpSpec{{{features, hidden}, {hidden, features}, {features, classes}}};
  }

  void validate() const {
    if (layers.empty()) throw ValidationError("MLP needs at least one layer");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (layers[k].in == 0 || layers[k].out == 0) {
        throw ValidationError("MLP layer " + std::to_string(k) + " is empty");
      }
      if (k > 0 && layers[k].in != layers[k - 1].out) {
        throw ValidationError("MLP layer " + std::to_string(k) +
                              " input does not match previous output");
      }
    }
  }

  std::size_t n_inputs() const { return layers.front().in; }
  std::size_t n_outputs() const { return layers.back().out; }

  std::size_t n_params() const {
    std::size_t total = 0;
    for (const auto& l : layers) total += l.in * l.out;
    return total;
  }

  std::vector<NamedBlock> blocks() const {
    std::vector<NamedBlock> out;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      out.push_back({"layer" + std::to_string(k), layers[k].in * layers[k].out});
    }
    return out;
  }
};

// Weights uniform in +-1/sqrt(fan_in).
inline Vector init_mlp_params(const MlpSpec& spec, Engine& engine) {
  Vector params;
  params.reserve(spec.n_params());
  for (const auto& l : spec.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t k = 0; k < l.in * l.out; ++k) params.push_back(dist(engine));
  }
  return params;
}

inline Vector softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp(logits[c] - top);
    sum += p[c];
  }
  for (double& x : p) x /= sum;
  return p;
}

namespace internal {

// activations[0] = x; activations[k + 1] = tanh(W_k a_k), except the last
// entry which holds the raw logits.
inline void mlp_forward(const MlpSpec& spec, std::span<const double> params,
                        std::span<const double> x,
                        std::vector<Vector>& activations) {
  activations.resize(spec.layers.size() + 1);
  activations[0].assign(x.begin(), x.end());
  std::size_t offset = 0;
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const auto [in, out] = spec.layers[k];
    const double* w = params.data() + offset;
    const Vector& a = activations[k];
    Vector& z = activations[k + 1];
    z.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * a[i];
      z[o] = acc;
    }
    if (k + 1 < spec.layers.size()) {
      for (double& v : z) v = std::tanh(v);
    }
    offset += in * out;
  }
}

}  // namespace internal

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

// Mean cross-entropy over `batch` and its exact gradient by backpropagation.
inline LossAndGrad mlp_loss_and_grad(const MlpSpec& spec,
                                     std::span<const double> params,
                                     const Dataset& data,
                                     std::span<const std::size_t> batch) {
  require_same_size(params.size(), spec.n_params(), "MLP parameters");
  require_same_size(data.n_features, spec.n_inputs(), "MLP input features");
  if (batch.empty()) throw ValidationError("MLP loss over an empty batch");

  const std::size_t n_layers = spec.layers.size();
  std::vector<std::size_t> offsets(n_layers, 0);
  for (std::size_t k = 1; k < n_layers; ++k) {
    offsets[k] = offsets[k - 1] + spec.layers[k - 1].in * spec.layers[k - 1].out;
  }

  LossAndGrad result{0.0, Vector(params.size(), 0.0)};
  std::vector<Vector> acts;
  Vector delta, prev_delta;
  for (std::size_t idx : batch) {
    internal::mlp_forward(spec, params, data.row(idx), acts);
    const Vector& logits = acts.back();
    const int label = data.labels[idx];
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - top);
    result.loss += top + std::log(sum) - logits[label];

    delta.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
      delta[c] = std::exp(logits[c] - top) / sum;
    }
    delta[label] -= 1.0;

    for (std::size_t k = n_layers; k-- > 0;) {
      const auto [in, out] = spec.layers[k];
      const Vector& a = acts[k];
      double* g = result.grad.data() + offsets[k];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* grow = g + o * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
      }
      if (k == 0) break;
      const double* w = params.data() + offsets[k];
      prev_delta.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) prev_delta[i] += row[i] * d;
      }
      for (std::size_t i = 0; i < in; ++i) prev_delta[i] *= 1.0 - a[i] * a[i];
      delta.swap(prev_delta);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  result.loss *= inv;
  for (double& g : result.grad) g *= inv;
  return result;
}

inline int mlp_predict(const MlpSpec& spec, std::span<const double> params,
                       std::span<const double> x) {
  std::vector<Vector> acts;
  internal::mlp_forward(spec, params, x, acts);
  const Vector& logits = acts.back();
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                          logits.begin());
}

inline double mlp_accuracy(const MlpSpec& spec, std::span<const double> params,
                           const Dataset& data) {
  if (data.size() == 0) throw ValidationError("accuracy over an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (mlp_predict(spec, params, data.row(i)) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Loss value plus partial derivatives with respect to the shared and the
// local coordinates, before any clipping.
struct PartialGradients {
  double loss = 0.0;
  Vector shared;
  Vector local;
};

// An objective over a partitioned parameter vector, evaluated on batches of a
// training set it owns. The optimizer is written against this concept.
template <class T>
concept PartitionedObjective =
    requires(const T& task, std::span<const double> params,
             std::span<const std::size_t> batch) {
      { task.partition() } -> std::same_as<const PartitionedModel&>;
      { task.loss_and_grads(params, params, batch) } -> std::same_as<PartialGradients>;
      { task.train_size() } -> std::convertible_to<std::size_t>;
    };

class MlpTask {
 public:
  MlpTask(MlpSpec spec, PartitionedModel partition, const Dataset& train)
      : spec_(std::move(spec)), partition_(std::move(partition)), train_(&train) {
    spec_.validate();
    require_same_size(partition_.total_dim(), spec_.n_params(),
                      "MLP partition size");
  }

  const MlpSpec& spec() const { return spec_; }
  const PartitionedModel& partition() const { return partition_; }
  const Dataset& train() const { return *train_; }
  std::size_t train_size() const { return train_->size(); }

  PartialGradients loss_and_grads(std::span<const double> shared,
                                  std::span<const double> local,
                                  std::span<const std::size_t> batch) const {
    const Vector params = partition_.join(shared, local);
    LossAndGrad lg = mlp_loss_and_grad(spec_, params, *train_, batch);
    if (!std::isfinite(lg.loss) || !all_finite(lg.grad)) {
      throw DivergenceError("MLP loss or gradient is not finite (loss=" +
                            std::to_string(lg.loss) + ")");
    }
    auto [gs, gl] = partition_.split(lg.grad);
    return PartialGradients{lg.loss, std::move(gs), std::move(gl)};
  }

  double accuracy(std::span<const double> shared, std::span<const double> local,
                  const Dataset& test) const {
    return mlp_accuracy(spec_, partition_.join(shared, local), test);
  }

 private:
  MlpSpec spec_;
  PartitionedModel partition_;
  const Dataset* train_;
};

static_assert(PartitionedObjective<MlpTask>);

}  // namespace dpps

#endif  // DPPS_TASKS_MLP_HPP_

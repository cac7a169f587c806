#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "styletx/autograd.hpp"

namespace styletx {

using GradMap = std::map<std::string, Tensor>;

struct SequenceLoss {
  Var value;
  /// Set when every weight was zero; value is then exactly 0.
  bool all_padding = false;
};

/// Weighted cross-entropy over N rows of logits:
///   sum_t w_t * -log softmax(logits_t)[target_t] / max(1, sum_t w_t)
/// Rows with zero weight contribute nothing, whatever their logits.
inline SequenceLoss sequence_loss(const Var& logits, std::span<const TokenId> targets,
                                  std::span<const double> weights) {
  const Shape& s = logits.shape();
  if (s.size() != 2) throw ShapeError("sequence_loss: logits must be N x V, got " + to_string(s));
  const std::size_t rows = s[0], vocab = s[1];
  if (targets.size() != rows || weights.size() != rows) {
    throw ShapeError("sequence_loss: " + std::to_string(rows) + " logit rows but " +
                     std::to_string(targets.size()) + " targets and " +
                     std::to_string(weights.size()) + " weights");
  }
  double total_weight = 0.0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (targets[t] >= vocab) {
      throw IndexError("sequence_loss: target " + std::to_string(targets[t]) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
    total_weight += weights[t];
  }
  const double norm = 1.0 / std::max(1.0, total_weight);
  Tensor pick = Tensor::zeros({rows, vocab});
  for (std::size_t t = 0; t < rows; ++t) pick(t, targets[t]) = -weights[t] * norm;
  Var loss = sum(log_softmax(logits) * logits.tape().constant(std::move(pick)));
  return {loss, total_weight == 0.0};
}

/// Sum over rows of -log p(label | logit), computed as a two-way
/// log-softmax over [0, z] for stability.
inline Var binary_cross_entropy_sum(Tape& tape, const Var& logits, bool label) {
  const std::size_t b = logits.shape()[0];
  Var pair = concat({tape.constant(Tensor::zeros({b, 1})), logits}, 1);
  Tensor pick = Tensor::zeros({b, 2});
  for (std::size_t j = 0; j < b; ++j) pick(j, label ? 1 : 0) = -1.0;
  return sum(log_softmax(pair) * tape.constant(std::move(pick)));
}

struct ClipSpec {
  double lower = -5.0;
  double upper = 5.0;
};

/// Elementwise clamp of every gradient entry into [lower, upper].
inline GradMap clip_by_value(GradMap grads, const ClipSpec& spec = {}) {
  if (!(spec.lower < spec.upper)) throw ConfigError("clip bounds must satisfy lower < upper");
  for (auto& [name, g] : grads) {
    for (auto& v : g.values) v = std::min(spec.upper, std::max(spec.lower, v));
  }
  return grads;
}

struct AdamState {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One Adam update with bias correction. Callers clip first.
///
/// Parameters without an entry in `grads` see a zero gradient. A non-finite
/// gradient aborts the whole step before any parameter changes.
inline void adam_step(std::span<Parameter* const> params, const GradMap& grads, AdamState& state) {
  for (const auto* p : params) {
    auto it = grads.find(p->name);
    if (it == grads.end()) continue;
    if (it->second.shape != p->value.shape) {
      throw ShapeError("gradient for " + p->name + " has shape " + to_string(it->second.shape) +
                       ", parameter has " + to_string(p->value.shape));
    }
    for (double g : it->second.values) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter " + p->name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(state.beta1, t);
  const double correct2 = 1.0 - std::pow(state.beta2, t);
  for (auto* p : params) {
    auto& m = state.first_moment[p->name];
    auto& v = state.second_moment[p->name];
    if (m.shape != p->value.shape) m = Tensor::zeros(p->value.shape);
    if (v.shape != p->value.shape) v = Tensor::zeros(p->value.shape);
    auto it = grads.find(p->name);
    const Tensor* g = it == grads.end() ? nullptr : &it->second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p->value[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

inline void adam_step(const std::vector<Parameter*>& params, const GradMap& grads, AdamState& state) {
  adam_step(std::span<Parameter* const>(params.data(), params.size()), grads, state);
}

}  // namespace styletx

#pragma once

#include <span>
#include <string>
#include <vector>

#include "styletx/autograd.hpp"
#include "styletx/rng.hpp"

namespace styletx {

/// Half-width of the uniform initialiser applied to every parameter entry.
inline constexpr double kInitRange = 0.1;

inline Tensor uniform_tensor(Shape shape, Rng& rng, double range = kInitRange) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values) v = rng.uniform(-range, range);
  return t;
}

/// V x E lookup table; one row per vocabulary entry, reserved tokens included.
struct EmbeddingTable {
  Parameter table;

  EmbeddingTable() = default;
  EmbeddingTable(const std::string& name, std::size_t vocab_size, std::size_t dim, Rng& rng)
      : table(name, uniform_tensor({vocab_size, dim}, rng)) {}

  std::size_t vocab_size() const { return table.value.shape[0]; }
  std::size_t dim() const { return table.value.shape[1]; }
  bool trainable() const { return table.value.requires_grad; }
  void set_trainable(bool on) { table.value.requires_grad = on; }
};

/// One row per id. Only the touched rows receive gradient.
inline Var embed(Tape& tape, const EmbeddingTable& table, std::span<const TokenId> ids) {
  for (TokenId id : ids) {
    if (id >= table.vocab_size()) {
      throw IndexError("token id " + std::to_string(id) + " outside embedding of " +
                       std::to_string(table.vocab_size()) + " rows");
    }
  }
  return gather_rows(tape.parameter(table.table), ids);
}

/// Gate order along the 4H axis: input, forget, cell candidate, output.
struct LSTMCellParams {
  Parameter input_weights;   // E_in x 4H
  Parameter hidden_weights;  // H x 4H
  Parameter bias;            // 4H

  LSTMCellParams() = default;
  LSTMCellParams(const std::string& prefix, std::size_t input_size, std::size_t hidden, Rng& rng)
      : input_weights(prefix + ".wx", uniform_tensor({input_size, 4 * hidden}, rng)),
        hidden_weights(prefix + ".wh", uniform_tensor({hidden, 4 * hidden}, rng)),
        bias(prefix + ".b", uniform_tensor({4 * hidden}, rng)) {}

  std::size_t input_size() const { return input_weights.value.shape[0]; }
  std::size_t hidden_size() const { return hidden_weights.value.shape[0]; }

  std::vector<Parameter*> parameters() { return {&input_weights, &hidden_weights, &bias}; }
};

struct LSTMState {
  Var h;
  Var c;
};

/// One LSTM step over a batch: x is B x E_in, h and c are B x H.
///   i = s(x Wx_i + h Wh_i + b_i)   f, o likewise
///   g = tanh(x Wx_g + h Wh_g + b_g)
///   c' = f * c + i * g
///   h' = o * tanh(c')
inline LSTMState lstm_step(Tape& tape, const LSTMCellParams& cell, const Var& x, const Var& h,
                           const Var& c) {
  const std::size_t hidden = cell.hidden_size();
  const Shape& xs = x.shape();
  const Shape& hs = h.shape();
  const Shape& cs = c.shape();
  if (xs.size() != 2 || xs[1] != cell.input_size() || hs.size() != 2 || hs[1] != hidden ||
      hs[0] != xs[0] || cs != hs) {
    throw ShapeError("lstm_step: cell expects input [B, " + std::to_string(cell.input_size()) +
                     "] and state [B, " + std::to_string(hidden) + "], got x " + to_string(xs) +
                     ", h " + to_string(hs) + ", c " + to_string(cs));
  }
  Var gates = matmul(x, tape.parameter(cell.input_weights)) +
              matmul(h, tape.parameter(cell.hidden_weights)) + tape.parameter(cell.bias);
  Var i = sigmoid(slice(gates, 1, 0, hidden));
  Var f = sigmoid(slice(gates, 1, hidden, 2 * hidden));
  Var g = styletx::tanh(slice(gates, 1, 2 * hidden, 3 * hidden));
  Var o = sigmoid(slice(gates, 1, 3 * hidden, 4 * hidden));
  Var c_next = f * c + i * g;
  Var h_next = o * styletx::tanh(c_next);
  return {h_next, c_next};
}

/// Inverted dropout. Identity when not training or rate is zero.
inline Var dropout(const Var& x, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  if (!rng) throw ConfigError("dropout in training mode needs an rng");
  Tensor mask = Tensor::zeros(x.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask.values) m = rng->bernoulli(rate) ? 0.0 : keep;
  return x * x.tape().constant(std::move(mask));
}

enum class Direction { forward, bidirectional };

/// Stack of LSTM layers; bidirectional stacks hold a backward cell per layer
/// and emit 2H-wide outputs.
struct LSTMStack {
  Direction direction = Direction::forward;
  double dropout_rate = 0.0;
  std::vector<LSTMCellParams> forward_cells;
  std::vector<LSTMCellParams> backward_cells;

  LSTMStack() = default;
  LSTMStack(const std::string& prefix, std::size_t input_size, std::size_t hidden_per_direction,
            std::size_t layers, Direction dir, double dropout, Rng& rng)
      : direction(dir), dropout_rate(dropout) {
    if (layers == 0 || hidden_per_direction == 0) throw ConfigError("empty LSTM stack");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    std::size_t in = input_size;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string name = prefix + ".l" + std::to_string(l);
      forward_cells.emplace_back(name + ".fwd", in, hidden_per_direction, rng);
      if (dir == Direction::bidirectional) {
        backward_cells.emplace_back(name + ".bwd", in, hidden_per_direction, rng);
      }
      in = output_width();
    }
  }

  bool bidirectional() const { return direction == Direction::bidirectional; }
  std::size_t layers() const { return forward_cells.size(); }
  std::size_t hidden_per_direction() const { return forward_cells.front().hidden_size(); }
  std::size_t input_size() const { return forward_cells.front().input_size(); }
  std::size_t output_width() const {
    return bidirectional() ? 2 * hidden_per_direction() : hidden_per_direction();
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (std::size_t l = 0; l < layers(); ++l) {
      for (auto* p : forward_cells[l].parameters()) out.push_back(p);
      if (bidirectional()) {
        for (auto* p : backward_cells[l].parameters()) out.push_back(p);
      }
    }
    return out;
  }
};

struct StackOutput {
  std::vector<Var> outputs;              // one B x W tensor per timestep
  std::vector<LSTMState> final_state;    // per layer, width W
};

struct RunOptions {
  bool training = false;
  Rng* rng = nullptr;
  /// Initial per-layer state for forward stacks; zeros when null.
  const std::vector<LSTMState>* initial = nullptr;
};

namespace detail {

/// Row mask for timestep t: 1 where t < length.
inline Tensor step_mask(std::span<const std::size_t> lengths, std::size_t t, std::size_t width,
                        bool invert) {
  Tensor m = Tensor::zeros({lengths.size(), width});
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const double on = (t < lengths[b]) != invert ? 1.0 : 0.0;
    std::fill_n(m.values.begin() + b * width, width, on);
  }
  return m;
}

inline bool all_active(std::span<const std::size_t> lengths, std::size_t t) {
  for (auto len : lengths) {
    if (t >= len) return false;
  }
  return true;
}

/// Scans one direction over the inputs. Positions at or past a sequence's
/// length leave its state untouched, so final states equal the state at the
/// last real token and reverse scans start at zeros on the last real token.
inline std::vector<Var> scan(Tape& tape, const LSTMCellParams& cell, std::span<const Var> inputs,
                             std::span<const std::size_t> lengths, LSTMState& state, bool reverse) {
  const std::size_t steps = inputs.size();
  const std::size_t hidden = cell.hidden_size();
  std::vector<Var> outputs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    LSTMState next = lstm_step(tape, cell, inputs[t], state.h, state.c);
    if (!all_active(lengths, t)) {
      Var keep_new = tape.constant(step_mask(lengths, t, hidden, false));
      Var keep_old = tape.constant(step_mask(lengths, t, hidden, true));
      next.h = next.h * keep_new + state.h * keep_old;
      next.c = next.c * keep_new + state.c * keep_old;
    }
    state = next;
    outputs[t] = state.h;
  }
  return outputs;
}

}  // namespace detail

/// Runs the stack over a batch laid out time-major: inputs[t] is B x E.
/// lengths[b] is the real length of sequence b; later positions are padding.
inline StackOutput run_stack(Tape& tape, const LSTMStack& stack, std::span<const Var> inputs,
                             std::span<const std::size_t> lengths, const RunOptions& options = {}) {
  const std::size_t batch = lengths.size();
  const std::size_t hidden = stack.hidden_per_direction();
  for (const auto& x : inputs) {
    if (x.shape().size() != 2 || x.shape()[0] != batch || x.shape()[1] != stack.input_size()) {
      throw ShapeError("run_stack: expected inputs [" + std::to_string(batch) + ", " +
                       std::to_string(stack.input_size()) + "], got " + to_string(x.shape()));
    }
  }
  if (options.initial) {
    if (stack.bidirectional()) throw ConfigError("initial state is only supported for forward stacks");
    if (options.initial->size() != stack.layers()) {
      throw ShapeError("run_stack: initial state has " + std::to_string(options.initial->size()) +
                       " layers, stack has " + std::to_string(stack.layers()));
    }
  }
  auto zeros = [&] { return tape.constant(Tensor::zeros({batch, hidden})); };

  StackOutput result;
  std::vector<Var> layer_in(inputs.begin(), inputs.end());
  for (std::size_t l = 0; l < stack.layers(); ++l) {
    if (l > 0) {
      for (auto& x : layer_in) x = dropout(x, stack.dropout_rate, options.training, options.rng);
    }
    LSTMState fwd = options.initial ? (*options.initial)[l] : LSTMState{zeros(), zeros()};
    if (options.initial && (fwd.h.shape() != Shape{batch, hidden} || fwd.c.shape() != fwd.h.shape())) {
      throw ShapeError("run_stack: initial state of layer " + std::to_string(l) + " has shape " +
                       to_string(fwd.h.shape()) + ", expected " + to_string(Shape{batch, hidden}));
    }
    std::vector<Var> out = detail::scan(tape, stack.forward_cells[l], layer_in, lengths, fwd, false);
    if (stack.bidirectional()) {
      LSTMState bwd{zeros(), zeros()};
      std::vector<Var> back =
          detail::scan(tape, stack.backward_cells[l], layer_in, lengths, bwd, true);
      for (std::size_t t = 0; t < out.size(); ++t) out[t] = concat({out[t], back[t]}, 1);
      result.final_state.push_back({concat({fwd.h, bwd.h}, 1), concat({fwd.c, bwd.c}, 1)});
    } else {
      result.final_state.push_back(fwd);
    }
    layer_in = std::move(out);
  }
  result.outputs = std::move(layer_in);
  return result;
}

/// Single-sequence form: inputs is T x E, rows past `length` are padding.
inline StackOutput run_stack(Tape& tape, const LSTMStack& stack, const Var& inputs,
                             std::size_t length, const RunOptions& options = {}) {
  const Shape& s = inputs.shape();
  if (s.size() != 2) throw ShapeError("run_stack: inputs must be T x E, got " + to_string(s));
  std::vector<Var> steps;
  for (std::size_t t = 0; t < s[0]; ++t) steps.push_back(slice(inputs, 0, t, t + 1));
  const std::size_t lengths[] = {length};
  return run_stack(tape, stack, steps, lengths, options);
}

enum class Activation { none, tanh, sigmoid };

/// Affine map with optional squashing: act(x W + b).
struct DenseLayer {
  Parameter weight;  // in x out
  Parameter bias;    // out
  Activation activation = Activation::none;

  DenseLayer() = default;
  DenseLayer(const std::string& prefix, std::size_t in, std::size_t out, Activation act, Rng& rng)
      : weight(prefix + ".w", uniform_tensor({in, out}, rng)),
        bias(prefix + ".b", uniform_tensor({out}, rng)),
        activation(act) {}

  std::size_t input_size() const { return weight.value.shape[0]; }
  std::size_t output_size() const { return weight.value.shape[1]; }

  Var apply(Tape& tape, const Var& x) const {
    Var y = matmul(x, tape.parameter(weight)) + tape.parameter(bias);
    switch (activation) {
      case Activation::tanh: return styletx::tanh(y);
      case Activation::sigmoid: return sigmoid(y);
      case Activation::none: break;
    }
    return y;
  }

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

}  // namespace styletx

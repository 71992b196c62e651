#include "evoquer/neural/blocks.hpp"

#include <array>

namespace evoquer::neural {

LstmCell::LstmCell(ParameterSet& params, const std::string& prefix,
                   int input_dim_, int hidden_)
    : input_dim(input_dim_), hidden(hidden_) {
  w = &params.create(prefix + ".w", 4 * hidden, input_dim + hidden);
  b = &params.create(prefix + ".b", 4 * hidden, 1);
}

LstmCell::State LstmCell::initial(Graph& g) const {
  return {g.constant(Mat::Zero(hidden, 1)), g.constant(Mat::Zero(hidden, 1))};
}

LstmCell::State LstmCell::step(Graph& g, Value x, const State& prev) const {
  const std::array<Value, 2> xh{x, prev.h};
  const Value pre = g.add(g.matmul(g.param(*w), g.concat_rows(xh)), g.param(*b));
  const Value in_gate = g.sigmoid(g.slice_rows(pre, 0, hidden));
  const Value forget_gate = g.sigmoid(g.slice_rows(pre, hidden, hidden));
  const Value candidate = g.tanh(g.slice_rows(pre, 2 * hidden, hidden));
  const Value out_gate = g.sigmoid(g.slice_rows(pre, 3 * hidden, hidden));
  const Value c = g.add(g.hadamard(forget_gate, prev.c),
                        g.hadamard(in_gate, candidate));
  const Value h = g.hadamard(out_gate, g.tanh(c));
  return {h, c};
}

BiLstmEncoder::BiLstmEncoder(ParameterSet& params, const std::string& prefix,
                             int input_dim, int hidden)
    : fwd(params, prefix + ".fwd", input_dim, hidden),
      bwd(params, prefix + ".bwd", input_dim, hidden) {}

BiLstmEncoder::Out BiLstmEncoder::encode(Graph& g,
                                         std::span<const Value> inputs) const {
  if (inputs.empty()) fail(ErrorKind::validation, "bi_rnn_encode: empty sequence");
  const int n = static_cast<int>(inputs.size());

  std::vector<Value> hf(static_cast<std::size_t>(n));
  LstmCell::State state = fwd.initial(g);
  for (int t = 0; t < n; ++t) {
    state = fwd.step(g, inputs[static_cast<std::size_t>(t)], state);
    hf[static_cast<std::size_t>(t)] = state.h;
  }

  std::vector<Value> hb(static_cast<std::size_t>(n));
  state = bwd.initial(g);
  for (int t = n - 1; t >= 0; --t) {
    state = bwd.step(g, inputs[static_cast<std::size_t>(t)], state);
    hb[static_cast<std::size_t>(t)] = state.h;
  }

  Out out;
  out.hiddens.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const std::array<Value, 2> parts{hf[static_cast<std::size_t>(t)],
                                     hb[static_cast<std::size_t>(t)]};
    out.hiddens.push_back(g.concat_rows(parts));
  }
  const std::array<Value, 2> final_parts{hf[static_cast<std::size_t>(n - 1)], hb[0]};
  out.summary = g.concat_rows(final_parts);
  return out;
}

AdditiveAttention::AdditiveAttention(ParameterSet& params,
                                     const std::string& prefix, int query_dim,
                                     int key_dim, int attn_dim) {
  wq = &params.create(prefix + ".wq", attn_dim, query_dim);
  wk = &params.create(prefix + ".wk", attn_dim, key_dim);
  b = &params.create(prefix + ".b", attn_dim, 1);
  v = &params.create(prefix + ".v", attn_dim, 1);
}

AdditiveAttention::Out AdditiveAttention::apply(Graph& g, Value query,
                                                std::span<const Value> keys) const {
  if (keys.empty()) fail(ErrorKind::validation, "attend: no keys");
  const Value key_matrix = g.concat_cols(keys);                  // k x n
  const Value projected = g.matmul(g.param(*wk), key_matrix);    // a x n
  const Value query_part = g.add(g.matmul(g.param(*wq), query), g.param(*b));
  const Value scores =
      g.matmul(g.transpose(g.param(*v)),
               g.tanh(g.add_col_broadcast(projected, query_part)));  // 1 x n
  Out out;
  out.weights = g.softmax(g.transpose(scores));          // n x 1
  out.context = g.matmul(key_matrix, out.weights);       // k x 1
  return out;
}

Linear::Linear(ParameterSet& params, const std::string& prefix, int in, int out) {
  w = &params.create(prefix + ".w", out, in);
  b = &params.create(prefix + ".b", out, 1);
}

Value Linear::apply(Graph& g, Value x) const {
  return g.add(g.matmul(g.param(*w), x), g.param(*b));
}

std::vector<Value> embed_sequence(Graph& g, Parameter& table,
                                  std::span<const int> tokens) {
  std::vector<Value> out;
  out.reserve(tokens.size());
  for (int t : tokens) out.push_back(g.embed(table, t));
  return out;
}

Value nll_loss(Graph& g, std::span<const Value> logits,
               std::span<const int> targets, int pad_index) {
  if (logits.size() != targets.size())
    fail(ErrorKind::validation, "nll_loss: length mismatch");
  Value total;
  int live = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == pad_index) continue;
    const Value term = g.nll_pick(logits[i], targets[i]);
    total = live == 0 ? term : g.add(total, term);
    ++live;
  }
  if (live == 0) fail(ErrorKind::validation, "nll_loss: all targets are pad");
  return g.scale(total, 1.0 / static_cast<double>(live));
}

}  // namespace evoquer::neural

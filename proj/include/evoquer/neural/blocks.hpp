#pragma once

#include <span>
#include <string>
#include <vector>

#include "evoquer/neural/graph.hpp"

namespace evoquer::neural {

// Standard LSTM cell. Gate order in the stacked preactivation is
// input, forget, cell candidate, output.
struct LstmCell {
  Parameter* w = nullptr;  // 4h x (input + h)
  Parameter* b = nullptr;  // 4h x 1
  int input_dim = 0;
  int hidden = 0;

  LstmCell() = default;
  LstmCell(ParameterSet& params, const std::string& prefix, int input_dim,
           int hidden);

  struct State {
    Value h, c;
  };

  State initial(Graph& g) const;
  State step(Graph& g, Value x, const State& prev) const;
};

// Forward and backward pass over the sequence, hidden states concatenated
// per timestep. The summary is [forward last ; backward first].
struct BiLstmEncoder {
  LstmCell fwd, bwd;

  BiLstmEncoder() = default;
  BiLstmEncoder(ParameterSet& params, const std::string& prefix, int input_dim,
                int hidden);

  struct Out {
    std::vector<Value> hiddens;  // each 2h x 1
    Value summary;               // 2h x 1
  };

  Out encode(Graph& g, std::span<const Value> inputs) const;
  int output_dim() const { return 2 * fwd.hidden; }
};

// Additive attention: score_i = v . tanh(Wq q + Wk k_i + b).
struct AdditiveAttention {
  Parameter* wq = nullptr;  // a x query_dim
  Parameter* wk = nullptr;  // a x key_dim
  Parameter* b = nullptr;   // a x 1
  Parameter* v = nullptr;   // a x 1

  AdditiveAttention() = default;
  AdditiveAttention(ParameterSet& params, const std::string& prefix,
                    int query_dim, int key_dim, int attn_dim);

  struct Out {
    Value context;  // key_dim x 1
    Value weights;  // n x 1, softmax-normalized
  };

  Out apply(Graph& g, Value query, std::span<const Value> keys) const;
};

// y = W x + b
struct Linear {
  Parameter* w = nullptr;
  Parameter* b = nullptr;

  Linear() = default;
  Linear(ParameterSet& params, const std::string& prefix, int in, int out);

  Value apply(Graph& g, Value x) const;
};

std::vector<Value> embed_sequence(Graph& g, Parameter& table,
                                  std::span<const int> tokens);

// Mean over non-pad positions of -log softmax(logits)[target].
Value nll_loss(Graph& g, std::span<const Value> logits,
               std::span<const int> targets, int pad_index);

}  // namespace evoquer::neural

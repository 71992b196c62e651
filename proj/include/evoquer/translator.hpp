#pragma once

#include <span>
#include <vector>

#include "evoquer/model_config.hpp"
#include "evoquer/neural/blocks.hpp"
#include "evoquer/resampler.hpp"

namespace evoquer::translator {

using neural::Graph;
using neural::Mat;
using neural::Parameter;
using neural::ParameterSet;
using neural::Value;
using resampler::ClipFeatures;

struct TranslatorState {
  std::vector<Value> video_hiddens;  // one per clip frame, 2h x 1
  std::vector<Value> text_hiddens;   // one per query token, 2h x 1
  Value init_h, init_c;              // decoder initial state
};

struct DecodeResult {
  std::vector<int> token_indices;            // excludes <sos>/<eos>
  std::vector<Eigen::VectorXd> step_logits;  // one row of logits per step
};

// Video-pivoted query simplifier: clip encoder + query encoder (embedding
// table shared with the grounder), decoder attending over both encoders,
// initialized from the concatenated encoder summaries through one projection.
class Translator {
 public:
  Translator(Parameter& query_embedding, const ModelConfig& config,
             int feature_dim, int simplified_vocab_size);

  TranslatorState encode_pair(Graph& g, const ClipFeatures& clip,
                              std::span<const int> query) const;

  struct StepState {
    Value h, c;
  };

  struct StepOut {
    Value logits;       // |V_simpl| x 1
    Value video_weights;
    Value text_weights;
    StepState state;
  };

  StepOut decode_step(Graph& g, const StepState& state, int prev_token,
                      const TranslatorState& encoded) const;

  // Teacher forcing: inputs <sos>, y1..yn; targets y1..yn, <eos>.
  Value teacher_forced_loss(Graph& g, const ClipFeatures& clip,
                            std::span<const int> query,
                            std::span<const int> target) const;

  DecodeResult greedy_decode(const ClipFeatures& clip,
                             std::span<const int> query, int max_len) const;

  ParameterSet& parameters() { return params_; }
  const ModelConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }

 private:
  StepState initial_state(Graph& g, const TranslatorState& encoded) const;

  Parameter* query_embedding_;
  ModelConfig config_;
  int feature_dim_;
  int vocab_size_;
  ParameterSet params_;
  neural::Linear clip_proj_;
  neural::BiLstmEncoder clip_encoder_;
  neural::BiLstmEncoder query_encoder_;
  neural::Linear init_proj_;  // 4h -> 2 * decoder hidden, split into (h0, c0)
  Parameter* decoder_embedding_;
  neural::AdditiveAttention video_attention_;
  neural::AdditiveAttention text_attention_;
  neural::LstmCell decoder_;
  neural::Linear output_;
};

}  // namespace evoquer::translator

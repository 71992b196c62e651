#pragma once

namespace evoquer {

// Network dimensions shared by the grounder and the translator. The paper
// behind these experiments never fixes hidden sizes; defaults were picked
// so the synthetic overfit run converges fast at 64-bit on one core.
struct ModelConfig {
  int embed_dim = 16;       // word embedding size
  int hidden = 64;          // recurrent hidden size per direction
  int video_proj_dim = 16;  // frame features projected to this before encoding
  int attn_dim = 32;
  int head_hidden = 32;     // grounding-head MLP width
  int max_decode_len = 8;
  int max_query_len = 20;
  double smooth_l1_beta = 1.0;
  double attention_loss_weight = 0.5;
};

}  // namespace evoquer

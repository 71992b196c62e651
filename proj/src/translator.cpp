#include "evoquer/translator.hpp"

#include <array>
#include <limits>

#include "evoquer/corpus.hpp"

namespace evoquer::translator {

namespace {
constexpr int kPad = corpus::Vocabulary::kPad;
constexpr int kSos = corpus::Vocabulary::kSos;
constexpr int kEos = corpus::Vocabulary::kEos;
}  // namespace

Translator::Translator(Parameter& query_embedding, const ModelConfig& config,
                       int feature_dim, int simplified_vocab_size)
    : query_embedding_(&query_embedding),
      config_(config),
      feature_dim_(feature_dim),
      vocab_size_(simplified_vocab_size),
      clip_proj_(params_, "translator.clip_proj", feature_dim,
                 config.video_proj_dim),
      clip_encoder_(params_, "translator.clip_enc", config.video_proj_dim,
                    config.hidden),
      query_encoder_(params_, "translator.query_enc", config.embed_dim,
                     config.hidden),
      init_proj_(params_, "translator.init_proj", 4 * config.hidden,
                 2 * config.hidden),
      decoder_embedding_(&params_.create("translator.dec_embed",
                                         simplified_vocab_size, config.embed_dim)),
      video_attention_(params_, "translator.video_attn", config.hidden,
                       2 * config.hidden, config.attn_dim),
      text_attention_(params_, "translator.text_attn", config.hidden,
                      2 * config.hidden, config.attn_dim),
      decoder_(params_, "translator.decoder",
               config.embed_dim + 4 * config.hidden, config.hidden),
      output_(params_, "translator.output", config.hidden,
              simplified_vocab_size) {}

TranslatorState Translator::encode_pair(Graph& g, const ClipFeatures& clip,
                                        std::span<const int> query) const {
  if (query.empty()) fail(ErrorKind::validation, "encode_pair: empty query");
  if (clip.frames.cols() != feature_dim_)
    fail(ErrorKind::validation, "encode_pair: feature dim mismatch");

  std::vector<Value> frame_inputs;
  frame_inputs.reserve(static_cast<std::size_t>(clip.frames.rows()));
  for (int t = 0; t < clip.frames.rows(); ++t)
    frame_inputs.push_back(g.tanh(
        clip_proj_.apply(g, g.constant(clip.frames.row(t).transpose()))));
  const auto clip_enc = clip_encoder_.encode(g, frame_inputs);

  const auto query_inputs = neural::embed_sequence(g, *query_embedding_, query);
  const auto query_enc = query_encoder_.encode(g, query_inputs);

  TranslatorState state;
  state.video_hiddens = clip_enc.hiddens;
  state.text_hiddens = query_enc.hiddens;

  // concatenate the two summaries, then one projection feeds both halves of
  // the initial decoder state
  const std::array<Value, 2> summary_parts{clip_enc.summary, query_enc.summary};
  const Value init =
      g.tanh(init_proj_.apply(g, g.concat_rows(summary_parts)));
  state.init_h = g.slice_rows(init, 0, config_.hidden);
  state.init_c = g.slice_rows(init, config_.hidden, config_.hidden);
  return state;
}

Translator::StepState Translator::initial_state(Graph&,
                                                const TranslatorState& encoded) const {
  return {encoded.init_h, encoded.init_c};
}

Translator::StepOut Translator::decode_step(Graph& g, const StepState& state,
                                            int prev_token,
                                            const TranslatorState& encoded) const {
  const auto video_att = video_attention_.apply(g, state.h, encoded.video_hiddens);
  const auto text_att = text_attention_.apply(g, state.h, encoded.text_hiddens);
  const Value prev_embed = g.embed(*decoder_embedding_, prev_token);
  const std::array<Value, 3> input_parts{prev_embed, video_att.context,
                                         text_att.context};
  const neural::LstmCell::State next =
      decoder_.step(g, g.concat_rows(input_parts), {state.h, state.c});
  StepOut out;
  out.logits = output_.apply(g, next.h);
  out.video_weights = video_att.weights;
  out.text_weights = text_att.weights;
  out.state = {next.h, next.c};
  return out;
}

Value Translator::teacher_forced_loss(Graph& g, const ClipFeatures& clip,
                                      std::span<const int> query,
                                      std::span<const int> target) const {
  if (target.empty())
    fail(ErrorKind::validation, "teacher_forced_loss: empty target");
  const TranslatorState encoded = encode_pair(g, clip, query);

  std::vector<int> inputs{kSos};
  inputs.insert(inputs.end(), target.begin(), target.end());
  std::vector<int> outputs(target.begin(), target.end());
  outputs.push_back(kEos);

  std::vector<Value> logits;
  logits.reserve(inputs.size());
  StepState state = initial_state(g, encoded);
  for (int token : inputs) {
    const StepOut step = decode_step(g, state, token, encoded);
    logits.push_back(step.logits);
    state = step.state;
  }
  return neural::nll_loss(g, logits, outputs, kPad);
}

DecodeResult Translator::greedy_decode(const ClipFeatures& clip,
                                       std::span<const int> query,
                                       int max_len) const {
  if (max_len < 1) fail(ErrorKind::validation, "greedy_decode: max_len < 1");
  Graph g;
  const TranslatorState encoded = encode_pair(g, clip, query);
  DecodeResult result;
  StepState state = initial_state(g, encoded);
  int prev = kSos;
  for (int i = 0; i < max_len; ++i) {
    const StepOut step = decode_step(g, state, prev, encoded);
    Eigen::VectorXd logits = g.value(step.logits).col(0);
    result.step_logits.push_back(logits);
    // control tokens other than <eos> are never emitted
    logits(kPad) = -std::numeric_limits<double>::infinity();
    logits(kSos) = -std::numeric_limits<double>::infinity();
    int best = 0;
    logits.maxCoeff(&best);
    if (best == kEos) break;
    result.token_indices.push_back(best);
    prev = best;
    state = step.state;
  }
  return result;
}

}  // namespace evoquer::translator

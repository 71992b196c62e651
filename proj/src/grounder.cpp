#include "evoquer/grounder.hpp"

#include <array>
#include <cmath>

#include "evoquer/resampler.hpp"

namespace evoquer::grounder {

GrounderOutput GrounderInterface::predict(const VideoFeatures& video,
                                          std::span<const int> query,
                                          double duration) {
  Graph g;
  const GrounderForward fwd = forward(g, video, query);
  GrounderOutput out;
  out.center = g.value(fwd.center)(0, 0);
  out.width = g.value(fwd.width)(0, 0);
  out.start_norm = g.value(fwd.start)(0, 0);
  out.end_norm = g.value(fwd.end)(0, 0);
  out.interval_sec = {out.start_norm * duration, out.end_norm * duration};
  const Mat& att = g.value(fwd.attention);
  out.attention.assign(att.data(), att.data() + att.size());
  return out;
}

EndpointValues endpoints_from_center_width(Graph& g, Value center, Value width,
                                           int total_frames) {
  // keep a one-frame minimum width so the downstream resampler always has
  // a non-empty clip
  const double floor = total_frames > 0 ? 1.0 / static_cast<double>(total_frames) : 0.0;
  EndpointValues out;
  out.width_floored = g.max_const(width, floor);
  const Value half = g.scale(out.width_floored, 0.5);
  out.start = g.clamp(g.sub(center, half), 0.0, 1.0);
  out.end = g.clamp(g.add(center, half), 0.0, 1.0);
  return out;
}

Value grounding_loss(Graph& g, const GrounderForward& fwd, const Interval& gold,
                     double duration, double smooth_l1_beta,
                     double attention_weight) {
  if (!(duration > 0.0)) fail(ErrorKind::validation, "grounding_loss: duration <= 0");
  if (!(gold.start >= 0.0 && gold.start < gold.end && gold.end <= duration))
    fail(ErrorKind::validation, "grounding_loss: invalid gold interval");

  const std::array<Value, 2> endpoint_parts{fwd.start, fwd.end};
  const Value pred_endpoints = g.concat_rows(endpoint_parts);
  Mat target(2, 1);
  target(0, 0) = gold.start / duration;
  target(1, 0) = gold.end / duration;
  const Value regression = g.smooth_l1(pred_endpoints, target, smooth_l1_beta);

  // attention mass inside the gold frame range; 1 - mass is the penalty
  const auto [gs, ge] =
      resampler::interval_to_frames(gold, fwd.fps, fwd.total_frames);
  Mat mask = Mat::Zero(fwd.total_frames, 1);
  for (int t = gs; t < ge; ++t) mask(t, 0) = 1.0;
  const Value inside = g.dot(fwd.attention, g.constant(mask));
  const Value attention_term = g.affine(inside, -1.0, 1.0);

  return g.add(regression, g.scale(attention_term, attention_weight));
}

ReferenceGrounder::ReferenceGrounder(Parameter& query_embedding,
                                     const ModelConfig& config, int feature_dim)
    : query_embedding_(&query_embedding),
      config_(config),
      feature_dim_(feature_dim),
      query_encoder_(params_, "grounder.query_enc", config.embed_dim, config.hidden),
      // frame features are augmented with t/T and (t/T)^2 position channels
      video_proj_(params_, "grounder.video_proj", feature_dim + 2,
                  config.video_proj_dim),
      video_encoder_(params_, "grounder.video_enc", config.video_proj_dim,
                     config.hidden),
      attention_(params_, "grounder.attention", 2 * config.hidden,
                 2 * config.hidden, config.attn_dim),
      head_hidden_(params_, "grounder.head_hidden", 4 * config.hidden,
                   config.head_hidden),
      head_out_(params_, "grounder.head_out", config.head_hidden, 2) {}

GrounderForward ReferenceGrounder::forward(Graph& g, const VideoFeatures& video,
                                           std::span<const int> query) {
  if (query.empty()) fail(ErrorKind::validation, "grounder forward: empty query");
  const int total = video.num_frames();
  if (total < 1) fail(ErrorKind::validation, "grounder forward: empty video");
  if (video.dims() != feature_dim_)
    fail(ErrorKind::validation, "grounder forward: feature dim mismatch");

  const auto query_inputs = neural::embed_sequence(g, *query_embedding_, query);
  const auto query_enc = query_encoder_.encode(g, query_inputs);

  std::vector<Value> frame_inputs;
  frame_inputs.reserve(static_cast<std::size_t>(total));
  for (int t = 0; t < total; ++t) {
    Mat f(feature_dim_ + 2, 1);
    f.topRows(feature_dim_) = video.frames.row(t).transpose();
    const double pos = static_cast<double>(t) / static_cast<double>(total);
    f(feature_dim_, 0) = pos;
    f(feature_dim_ + 1, 0) = pos * pos;
    frame_inputs.push_back(g.tanh(video_proj_.apply(g, g.constant(std::move(f)))));
  }
  const auto video_enc = video_encoder_.encode(g, frame_inputs);

  const auto att = attention_.apply(g, query_enc.summary, video_enc.hiddens);

  const std::array<Value, 2> head_parts{att.context, query_enc.summary};
  const Value hidden = g.tanh(head_hidden_.apply(g, g.concat_rows(head_parts)));
  const Value head = g.sigmoid(head_out_.apply(g, hidden));

  GrounderForward fwd;
  fwd.center = g.slice_rows(head, 0, 1);
  fwd.width = g.slice_rows(head, 1, 1);
  fwd.attention = att.weights;
  fwd.total_frames = total;
  fwd.fps = video.fps;
  const auto endpoints = endpoints_from_center_width(g, fwd.center, fwd.width, total);
  fwd.start = endpoints.start;
  fwd.end = endpoints.end;
  fwd.width = endpoints.width_floored;
  return fwd;
}

Value ReferenceGrounder::loss(Graph& g, const GrounderForward& fwd,
                              const Interval& gold, double duration) {
  return grounding_loss(g, fwd, gold, duration, config_.smooth_l1_beta,
                        config_.attention_loss_weight);
}

GrounderForward ConstantGrounder::forward(Graph& g, const VideoFeatures& video,
                                          std::span<const int> query) {
  if (query.empty()) fail(ErrorKind::validation, "grounder forward: empty query");
  const int total = video.num_frames();
  GrounderForward fwd;
  fwd.center = g.scalar_constant(center_);
  fwd.width = g.scalar_constant(width_);
  fwd.attention = g.constant(
      Mat::Constant(total, 1, 1.0 / static_cast<double>(total)));
  fwd.total_frames = total;
  fwd.fps = video.fps;
  const auto endpoints = endpoints_from_center_width(g, fwd.center, fwd.width, total);
  fwd.start = endpoints.start;
  fwd.end = endpoints.end;
  fwd.width = endpoints.width_floored;
  return fwd;
}

Value ConstantGrounder::loss(Graph& g, const GrounderForward& fwd,
                             const Interval& gold, double duration) {
  return grounding_loss(g, fwd, gold, duration, config_.smooth_l1_beta,
                        config_.attention_loss_weight);
}

}  // namespace evoquer::grounder

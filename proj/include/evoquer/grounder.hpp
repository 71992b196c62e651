#pragma once

#include <memory>
#include <span>
#include <vector>

#include "evoquer/corpus.hpp"
#include "evoquer/model_config.hpp"
#include "evoquer/neural/blocks.hpp"

namespace evoquer::grounder {

using corpus::Interval;
using corpus::VideoFeatures;
using neural::Graph;
using neural::Mat;
using neural::Parameter;
using neural::ParameterSet;
using neural::Value;

// Evaluation-mode result: normalized (center, width) plus the clamped
// interval in seconds and the per-frame attention diagnostic.
struct GrounderOutput {
  double center = 0.0;
  double width = 0.0;
  double start_norm = 0.0;
  double end_norm = 0.0;
  Interval interval_sec;
  std::vector<double> attention;
};

// Graph-side handles kept alive for the joint backward pass.
struct GrounderForward {
  Value center, width;   // 1x1 each, sigmoid-bounded
  Value start, end;      // 1x1, clamped to [0, 1]
  Value attention;       // T x 1
  int total_frames = 0;
  double fps = 0.0;
};

// Interval predictors are pluggable behind this interface; the trainer only
// sees forward/loss/parameters.
class GrounderInterface {
 public:
  virtual ~GrounderInterface() = default;

  virtual GrounderForward forward(Graph& g, const VideoFeatures& video,
                                  std::span<const int> query) = 0;
  virtual Value loss(Graph& g, const GrounderForward& fwd, const Interval& gold,
                     double duration) = 0;
  virtual ParameterSet& parameters() = 0;

  // Convenience wrapper running forward on a scratch graph.
  GrounderOutput predict(const VideoFeatures& video, std::span<const int> query,
                         double duration);
};

// Compact interval regressor: encode the query, encode position-augmented
// frame projections, attend from the sentence summary over frame states,
// regress sigmoid-bounded (center, width).
class ReferenceGrounder : public GrounderInterface {
 public:
  ReferenceGrounder(Parameter& query_embedding, const ModelConfig& config,
                    int feature_dim);

  GrounderForward forward(Graph& g, const VideoFeatures& video,
                          std::span<const int> query) override;
  Value loss(Graph& g, const GrounderForward& fwd, const Interval& gold,
             double duration) override;
  ParameterSet& parameters() override { return params_; }

 private:
  Parameter* query_embedding_;
  ModelConfig config_;
  int feature_dim_;
  ParameterSet params_;
  neural::BiLstmEncoder query_encoder_;
  neural::Linear video_proj_;
  neural::BiLstmEncoder video_encoder_;
  neural::AdditiveAttention attention_;
  neural::Linear head_hidden_;
  neural::Linear head_out_;
};

// Fixed-output stub for interface tests: no parameters, constant (c, w).
class ConstantGrounder : public GrounderInterface {
 public:
  ConstantGrounder(double center, double width)
      : center_(center), width_(width) {}

  GrounderForward forward(Graph& g, const VideoFeatures& video,
                          std::span<const int> query) override;
  Value loss(Graph& g, const GrounderForward& fwd, const Interval& gold,
             double duration) override;
  ParameterSet& parameters() override { return params_; }

 private:
  double center_, width_;
  ParameterSet params_;
  ModelConfig config_;
};

// Shared by all implementations: smooth-L1 on normalized endpoints plus the
// attention-calibration term pushing weight mass inside the gold interval.
Value grounding_loss(Graph& g, const GrounderForward& fwd, const Interval& gold,
                     double duration, double smooth_l1_beta,
                     double attention_weight);

// (center, width) -> clamped normalized endpoints with the width floored at
// one frame's span.
struct EndpointValues {
  Value start, end, width_floored;
};
EndpointValues endpoints_from_center_width(Graph& g, Value center, Value width,
                                           int total_frames);

}  // namespace evoquer::grounder

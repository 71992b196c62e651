#pragma once

#include <utility>
#include <vector>

#include "evoquer/corpus.hpp"

namespace evoquer::resampler {

constexpr int kFramesPerClip = 32;

struct ClipFeatures {
  Eigen::MatrixXd frames;           // n x D
  std::vector<int> source_indices;  // n non-decreasing untrimmed-frame indices
};

// Seconds -> frame range [start_frame, end_frame), clamped to [0, T) and
// widened to at least one frame.
std::pair<int, int> interval_to_frames(const corpus::Interval& interval,
                                       double fps, int total_frames);

// index[i] = start_frame + floor(i * L / n), the left-anchored even stride.
std::vector<int> clip_indices(int start_frame, int end_frame,
                              int n = kFramesPerClip);

ClipFeatures resample(const corpus::VideoFeatures& video, int start_frame,
                      int end_frame, int n = kFramesPerClip);

}  // namespace evoquer::resampler

#include "evoquer/resampler.hpp"

#include <algorithm>
#include <cmath>

namespace evoquer::resampler {

std::pair<int, int> interval_to_frames(const corpus::Interval& interval,
                                       double fps, int total_frames) {
  if (total_frames < 1) fail(ErrorKind::validation, "interval_to_frames: T = 0");
  if (!(fps > 0.0)) fail(ErrorKind::validation, "interval_to_frames: fps <= 0");
  if (interval.start > interval.end)
    fail(ErrorKind::validation, "interval_to_frames: start > end");

  int start = static_cast<int>(std::floor(interval.start * fps));
  int end = static_cast<int>(std::ceil(interval.end * fps));
  start = std::clamp(start, 0, total_frames - 1);
  end = std::min(end, total_frames);
  if (end <= start) end = start + 1;  // widen degenerate clips to one frame
  return {start, end};
}

std::vector<int> clip_indices(int start_frame, int end_frame, int n) {
  if (n < 1) fail(ErrorKind::validation, "clip_indices: n < 1");
  if (start_frame < 0 || end_frame <= start_frame)
    fail(ErrorKind::validation, "clip_indices: bad frame range");
  const long long len = static_cast<long long>(end_frame) - start_frame;
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    idx[static_cast<std::size_t>(i)] =
        start_frame + static_cast<int>(static_cast<long long>(i) * len / n);
  return idx;
}

ClipFeatures resample(const corpus::VideoFeatures& video, int start_frame,
                      int end_frame, int n) {
  if (end_frame > video.num_frames())
    fail(ErrorKind::validation, "resample: end_frame beyond video");
  ClipFeatures clip;
  clip.source_indices = clip_indices(start_frame, end_frame, n);
  clip.frames.resize(n, video.dims());
  for (int i = 0; i < n; ++i)
    clip.frames.row(i) = video.frames.row(clip.source_indices[static_cast<std::size_t>(i)]);
  return clip;
}

}  // namespace evoquer::resampler

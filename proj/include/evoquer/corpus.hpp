#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evoquer/common.hpp"

namespace evoquer::corpus {

using Mat = Eigen::MatrixXd;

struct Interval {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
};

// Per-frame features of one untrimmed video, frames is T x D.
struct VideoFeatures {
  std::string video_id;
  Mat frames;
  double fps = 24.0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dims() const { return static_cast<int>(frames.cols()); }
};

struct GroundingSample {
  std::string video_id;
  std::string query_text;               // raw query, join key for dumps
  std::vector<std::string> query;       // tokenized
  Interval gold;
  double duration = 0.0;
  std::vector<std::string> simplified_gold;  // may be empty until computed
};

// token <-> index bijection with reserved indices for the control tokens.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary();

  int add(const std::string& token);    // returns index, existing or new
  int index(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int index) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> indices) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

// Tokens with count >= min_count, ordered by descending count then
// lexicographically, after the four reserved slots.
Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus,
                       int min_count);

struct DatasetSplit {
  std::string name;  // train | valid | test
  std::vector<GroundingSample> samples;
};

struct SplitSpec {
  double train = 0.5;
  double valid = 0.25;  // test gets the remainder
};

std::array<DatasetSplit, 3> split_dataset(std::vector<GroundingSample> samples,
                                          const SplitSpec& spec,
                                          std::uint64_t seed);

// JSON-lines annotations: {"video_id","duration","start","end","query"},
// optionally "simplified" (array of lemmas).
std::vector<GroundingSample> load_annotations(const fs::path& path);
void save_annotations(const fs::path& path,
                      std::span<const GroundingSample> samples,
                      bool with_simplified = false);

// EVQF binary feature files: "EVQF", u32 T, u32 D, T*D float32 LE row-major.
VideoFeatures load_features(const fs::path& path, double fps = 24.0);
void save_features(const fs::path& path, const VideoFeatures& video);

struct SyntheticConfig {
  int n_videos = 64;
  int frames = 48;   // T
  int dims = 16;     // D
  std::vector<std::pair<std::string, std::string>> events;  // (verb, noun)
  double noise_scale = 0.1;
  double amplitude = 1.0;
  double fps = 1.6;  // with frames=48 every video spans 30 s
  int min_event_frames = 6;
  int max_event_frames = 16;
};

SyntheticConfig default_synthetic_config();

struct SyntheticOutput {
  std::vector<fs::path> feature_files;
  fs::path annotations;
  fs::path lexicon;
};

// Pure function of (config, seed): background noise per video plus one
// planted event on a per-event channel block, query templated from the
// (verb, noun) pair, gold interval = the planted span.
SyntheticOutput generate_synthetic(const SyntheticConfig& config,
                                   std::uint64_t seed, const fs::path& out_dir);

}  // namespace evoquer::corpus

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evoquer/common.hpp"
#include "evoquer/corpus.hpp"

namespace evoquer::metrics {

using corpus::Interval;

// |intersection| / |union|; 0 when disjoint; equal zero-length intervals -> 1.
double tiou(const Interval& pred, const Interval& gold);

// 100 * fraction of samples with tiou >= threshold.
double recall_at(std::span<const double> tious, double threshold);

// 100 * mean per-sample tIoU.
double miou(std::span<const double> tious);

// Word-set intersection over union; duplicates collapse.
double jaccard_words(std::span<const std::string> pred,
                     std::span<const std::string> gold);

// Sentence BLEU with clipped n-gram precision and brevity penalty, in [0,1].
// No smoothing unless asked: any zero precision zeroes the score.
double bleu(std::span<const std::string> pred, std::span<const std::string> gold,
            int max_n, bool smoothing = false);

// Corpus BLEU: clipped counts and lengths aggregated over all pairs.
struct TokenPair {
  std::vector<std::string> pred;
  std::vector<std::string> gold;
};
double corpus_bleu(std::span<const TokenPair> pairs, int max_n,
                   bool smoothing = false);

enum class Bucket { up, down, same, both_below };

// Rank per the threshold ladder 0.3/0.5/0.7; up/down compare ranks, both
// rank 0 -> both_below.
Bucket bucket(double tiou_ours, double tiou_base);

struct BucketCounts {
  long long up = 0;
  long long down = 0;
  long long same = 0;
  long long both_below = 0;
  // Mixed cases (one side >= 0.3, the other below) are inside up/down;
  // counted separately so the stricter reading can be recovered.
  long long mixed_up = 0;
  long long mixed_down = 0;
  long long total() const { return up + down + same + both_below; }
};

struct PredRecord {
  std::string video_id;
  std::string query;
  Interval pred;
  Interval gold;
};

struct TransRecord {
  std::string video_id;
  std::string query;
  std::vector<std::string> gold_simplified;
  std::vector<std::string> predicted_simplified;
};

struct SampleScore {
  std::string video_id;
  std::string query;
  double tiou = 0.0;
  std::optional<double> jaccard;
  std::optional<double> bleu1;
  std::optional<double> bleu2;
};

struct MetricsReport {
  std::map<double, double> r_at;  // threshold -> percentage
  double miou = 0.0;
  double miou_threshold_avg = 0.0;  // mean of R@0.3/0.5/0.7
  std::optional<double> jaccard_mean;
  std::optional<double> bleu1;  // corpus-level, percentage
  std::optional<double> bleu2;
  std::optional<double> bleu1_sentence_mean;
  std::optional<double> bleu2_sentence_mean;
  std::vector<SampleScore> samples;
};

MetricsReport compile_report(std::span<const PredRecord> preds,
                             std::span<const TransRecord> trans);

BucketCounts bucket_counts(std::span<const SampleScore> ours,
                           std::span<const SampleScore> base);

// JSON-lines dumps shared between the trainer and the eval CLI.
std::vector<PredRecord> load_prediction_dump(const fs::path& path);
void save_prediction_dump(const fs::path& path, std::span<const PredRecord> preds);
std::vector<TransRecord> load_translation_dump(const fs::path& path);
void save_translation_dump(const fs::path& path, std::span<const TransRecord> trans);

std::string report_to_json(const MetricsReport& report, bool with_samples = true);
MetricsReport report_from_json(const std::string& text);

// CSV layouts: scoreboard row (Model,R@0.3,R@0.5,R@0.7,mIoU) and the
// four-way comparison counts (up,down,same,both_below).
std::string scoreboard_csv(const std::string& model_name, const MetricsReport& report);
std::string bucket_csv(const BucketCounts& counts);

}  // namespace evoquer::metrics

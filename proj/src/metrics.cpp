#include "evoquer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace evoquer::metrics {

using nlohmann::json;

double tiou(const Interval& pred, const Interval& gold) {
  const double inter =
      std::max(0.0, std::min(pred.end, gold.end) - std::max(pred.start, gold.start));
  const double uni =
      std::max(pred.end, gold.end) - std::min(pred.start, gold.start);
  if (uni <= 0.0) {
    // both intervals are points
    return (pred.start == gold.start && pred.end == gold.end) ? 1.0 : 0.0;
  }
  return inter / uni;
}

double recall_at(std::span<const double> tious, double threshold) {
  if (tious.empty()) fail(ErrorKind::validation, "recall_at: empty list");
  long long hits = 0;
  for (double t : tious)
    if (t >= threshold) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(tious.size());
}

double miou(std::span<const double> tious) {
  if (tious.empty()) fail(ErrorKind::validation, "miou: empty list");
  double sum = 0.0;
  for (double t : tious) sum += t;
  return 100.0 * sum / static_cast<double>(tious.size());
}

double jaccard_words(std::span<const std::string> pred,
                     std::span<const std::string> gold) {
  if (gold.empty()) fail(ErrorKind::validation, "jaccard_words: empty gold");
  const std::set<std::string> p(pred.begin(), pred.end());
  const std::set<std::string> g(gold.begin(), gold.end());
  long long inter = 0;
  for (const auto& w : p)
    if (g.count(w)) ++inter;
  const long long uni =
      static_cast<long long>(p.size() + g.size()) - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

using Counts = std::map<std::vector<std::string>, long long>;

Counts ngram_counts(std::span<const std::string> tokens, int n) {
  Counts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                      tokens.begin() + static_cast<long>(i) + n)];
  return counts;
}

struct ClippedCount {
  long long matched = 0;
  long long total = 0;
};

ClippedCount clipped_ngrams(std::span<const std::string> pred,
                            std::span<const std::string> gold, int n) {
  ClippedCount c;
  const Counts pc = ngram_counts(pred, n);
  const Counts gc = ngram_counts(gold, n);
  for (const auto& [gram, count] : pc) {
    c.total += count;
    auto it = gc.find(gram);
    if (it != gc.end()) c.matched += std::min(count, it->second);
  }
  return c;
}

double bleu_from_counts(const std::vector<ClippedCount>& counts,
                        long long pred_len, long long gold_len, bool smoothing) {
  if (pred_len == 0) return 0.0;
  double log_precision_sum = 0.0;
  const int max_n = static_cast<int>(counts.size());
  for (const auto& c : counts) {
    double matched = static_cast<double>(c.matched);
    double total = static_cast<double>(c.total);
    if (smoothing) {
      matched += 1.0;
      total += 1.0;
    }
    if (matched <= 0.0 || total <= 0.0) return 0.0;
    log_precision_sum += std::log(matched / total) / max_n;
  }
  const double bp =
      pred_len > gold_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(gold_len) / static_cast<double>(pred_len));
  return bp * std::exp(log_precision_sum);
}

}  // namespace

double bleu(std::span<const std::string> pred, std::span<const std::string> gold,
            int max_n, bool smoothing) {
  if (max_n < 1 || max_n > 2) fail(ErrorKind::validation, "bleu: max_n must be 1 or 2");
  std::vector<ClippedCount> counts;
  for (int n = 1; n <= max_n; ++n) counts.push_back(clipped_ngrams(pred, gold, n));
  return bleu_from_counts(counts, static_cast<long long>(pred.size()),
                          static_cast<long long>(gold.size()), smoothing);
}

double corpus_bleu(std::span<const TokenPair> pairs, int max_n, bool smoothing) {
  if (max_n < 1 || max_n > 2)
    fail(ErrorKind::validation, "corpus_bleu: max_n must be 1 or 2");
  std::vector<ClippedCount> counts(static_cast<std::size_t>(max_n));
  long long pred_len = 0, gold_len = 0;
  for (const auto& pair : pairs) {
    pred_len += static_cast<long long>(pair.pred.size());
    gold_len += static_cast<long long>(pair.gold.size());
    for (int n = 1; n <= max_n; ++n) {
      const ClippedCount c = clipped_ngrams(pair.pred, pair.gold, n);
      counts[static_cast<std::size_t>(n - 1)].matched += c.matched;
      counts[static_cast<std::size_t>(n - 1)].total += c.total;
    }
  }
  return bleu_from_counts(counts, pred_len, gold_len, smoothing);
}

namespace {

int tiou_rank(double t) {
  if (t >= 0.7) return 3;
  if (t >= 0.5) return 2;
  if (t >= 0.3) return 1;
  return 0;
}

}  // namespace

Bucket bucket(double tiou_ours, double tiou_base) {
  const int ours = tiou_rank(tiou_ours);
  const int base = tiou_rank(tiou_base);
  if (ours == 0 && base == 0) return Bucket::both_below;
  if (ours > base) return Bucket::up;
  if (ours < base) return Bucket::down;
  return Bucket::same;
}

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

MetricsReport compile_report(std::span<const PredRecord> preds,
                             std::span<const TransRecord> trans) {
  if (preds.empty()) fail(ErrorKind::validation, "compile_report: no predictions");

  // Align by (video_id, query). Translation dump is optional but when
  // present must cover exactly the predicted samples.
  std::map<std::pair<std::string, std::string>, const TransRecord*> trans_by_key;
  for (const auto& t : trans) trans_by_key[{t.video_id, t.query}] = &t;
  if (!trans.empty()) {
    std::vector<std::string> missing;
    std::set<std::pair<std::string, std::string>> pred_keys;
    for (const auto& p : preds) {
      pred_keys.insert({p.video_id, p.query});
      if (!trans_by_key.count({p.video_id, p.query}))
        missing.push_back(p.video_id + "/" + p.query);
    }
    for (const auto& t : trans)
      if (!pred_keys.count({t.video_id, t.query}))
        missing.push_back(t.video_id + "/" + t.query);
    if (!missing.empty()) {
      std::string msg = "compile_report: dumps misaligned, missing keys:";
      for (std::size_t i = 0; i < missing.size() && i < 8; ++i) msg += " " + missing[i];
      if (missing.size() > 8) msg += " (+" + std::to_string(missing.size() - 8) + " more)";
      fail(ErrorKind::validation, msg);
    }
  }

  MetricsReport report;
  std::vector<double> tious;
  std::vector<TokenPair> pairs;
  double jaccard_sum = 0.0, bleu1_sum = 0.0, bleu2_sum = 0.0;
  for (const auto& p : preds) {
    SampleScore score;
    score.video_id = p.video_id;
    score.query = p.query;
    score.tiou = tiou(p.pred, p.gold);
    tious.push_back(score.tiou);
    if (!trans.empty()) {
      const TransRecord& t = *trans_by_key.at({p.video_id, p.query});
      score.jaccard = jaccard_words(t.predicted_simplified, t.gold_simplified);
      score.bleu1 = bleu(t.predicted_simplified, t.gold_simplified, 1);
      score.bleu2 = bleu(t.predicted_simplified, t.gold_simplified, 2);
      jaccard_sum += *score.jaccard;
      bleu1_sum += *score.bleu1;
      bleu2_sum += *score.bleu2;
      pairs.push_back({t.predicted_simplified, t.gold_simplified});
    }
    report.samples.push_back(std::move(score));
  }

  for (double thr : {0.3, 0.5, 0.7}) report.r_at[thr] = round2(recall_at(tious, thr));
  report.miou = round2(miou(tious));
  report.miou_threshold_avg =
      round2((report.r_at.at(0.3) + report.r_at.at(0.5) + report.r_at.at(0.7)) / 3.0);
  if (!trans.empty()) {
    const double n = static_cast<double>(preds.size());
    report.jaccard_mean = round2(100.0 * jaccard_sum / n);
    report.bleu1 = round2(100.0 * corpus_bleu(pairs, 1));
    report.bleu2 = round2(100.0 * corpus_bleu(pairs, 2));
    report.bleu1_sentence_mean = round2(100.0 * bleu1_sum / n);
    report.bleu2_sentence_mean = round2(100.0 * bleu2_sum / n);
  }
  return report;
}

BucketCounts bucket_counts(std::span<const SampleScore> ours,
                           std::span<const SampleScore> base) {
  std::map<std::pair<std::string, std::string>, double> base_by_key;
  for (const auto& s : base) base_by_key[{s.video_id, s.query}] = s.tiou;
  BucketCounts counts;
  std::vector<std::string> missing;
  for (const auto& s : ours) {
    auto it = base_by_key.find({s.video_id, s.query});
    if (it == base_by_key.end()) {
      missing.push_back(s.video_id + "/" + s.query);
      continue;
    }
    const double b = it->second;
    switch (bucket(s.tiou, b)) {
      case Bucket::up:
        ++counts.up;
        if (b < 0.3) ++counts.mixed_up;
        break;
      case Bucket::down:
        ++counts.down;
        if (s.tiou < 0.3) ++counts.mixed_down;
        break;
      case Bucket::same: ++counts.same; break;
      case Bucket::both_below: ++counts.both_below; break;
    }
  }
  if (!missing.empty()) {
    std::string msg = "bucket_counts: reports misaligned, missing keys:";
    for (std::size_t i = 0; i < missing.size() && i < 8; ++i) msg += " " + missing[i];
    fail(ErrorKind::validation, msg);
  }
  return counts;
}

std::vector<PredRecord> load_prediction_dump(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::runtime, "cannot open prediction dump: " + path.string());
  std::vector<PredRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      PredRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.query = j.at("query").get<std::string>();
      r.pred = {j.at("pred_start").get<double>(), j.at("pred_end").get<double>()};
      r.gold = {j.at("gold_start").get<double>(), j.at("gold_end").get<double>()};
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse,
           "prediction dump line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_prediction_dump(const fs::path& path, std::span<const PredRecord> preds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::runtime, "cannot write prediction dump: " + path.string());
  for (const auto& p : preds) {
    json j;
    j["video_id"] = p.video_id;
    j["query"] = p.query;
    j["pred_start"] = p.pred.start;
    j["pred_end"] = p.pred.end;
    j["gold_start"] = p.gold.start;
    j["gold_end"] = p.gold.end;
    out << j.dump() << "\n";
  }
}

std::vector<TransRecord> load_translation_dump(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::runtime, "cannot open translation dump: " + path.string());
  std::vector<TransRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      TransRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.query = j.at("query").get<std::string>();
      r.gold_simplified = j.at("gold_simplified").get<std::vector<std::string>>();
      r.predicted_simplified =
          j.at("predicted_simplified").get<std::vector<std::string>>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse,
           "translation dump line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_translation_dump(const fs::path& path, std::span<const TransRecord> trans) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::runtime, "cannot write translation dump: " + path.string());
  for (const auto& t : trans) {
    json j;
    j["video_id"] = t.video_id;
    j["query"] = t.query;
    j["gold_simplified"] = t.gold_simplified;
    j["predicted_simplified"] = t.predicted_simplified;
    out << j.dump() << "\n";
  }
}

std::string report_to_json(const MetricsReport& report, bool with_samples) {
  json j;
  j["r_at"] = {{"0.3", report.r_at.count(0.3) ? report.r_at.at(0.3) : 0.0},
               {"0.5", report.r_at.count(0.5) ? report.r_at.at(0.5) : 0.0},
               {"0.7", report.r_at.count(0.7) ? report.r_at.at(0.7) : 0.0}};
  j["miou"] = report.miou;
  j["miou_threshold_avg"] = report.miou_threshold_avg;
  if (report.jaccard_mean) j["jaccard_mean"] = *report.jaccard_mean;
  if (report.bleu1) j["bleu1"] = *report.bleu1;
  if (report.bleu2) j["bleu2"] = *report.bleu2;
  if (report.bleu1_sentence_mean) j["bleu1_sentence_mean"] = *report.bleu1_sentence_mean;
  if (report.bleu2_sentence_mean) j["bleu2_sentence_mean"] = *report.bleu2_sentence_mean;
  if (with_samples) {
    json samples = json::array();
    for (const auto& s : report.samples) {
      json js;
      js["video_id"] = s.video_id;
      js["query"] = s.query;
      js["tiou"] = s.tiou;
      if (s.jaccard) js["jaccard"] = *s.jaccard;
      if (s.bleu1) js["bleu1"] = *s.bleu1;
      if (s.bleu2) js["bleu2"] = *s.bleu2;
      samples.push_back(std::move(js));
    }
    j["samples"] = std::move(samples);
  }
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  MetricsReport report;
  try {
    json j = json::parse(text);
    report.r_at[0.3] = j.at("r_at").at("0.3").get<double>();
    report.r_at[0.5] = j.at("r_at").at("0.5").get<double>();
    report.r_at[0.7] = j.at("r_at").at("0.7").get<double>();
    report.miou = j.at("miou").get<double>();
    report.miou_threshold_avg = j.value("miou_threshold_avg", 0.0);
    if (j.contains("jaccard_mean")) report.jaccard_mean = j["jaccard_mean"].get<double>();
    if (j.contains("bleu1")) report.bleu1 = j["bleu1"].get<double>();
    if (j.contains("bleu2")) report.bleu2 = j["bleu2"].get<double>();
    if (j.contains("samples")) {
      for (const auto& js : j["samples"]) {
        SampleScore s;
        s.video_id = js.at("video_id").get<std::string>();
        s.query = js.at("query").get<std::string>();
        s.tiou = js.at("tiou").get<double>();
        if (js.contains("jaccard")) s.jaccard = js["jaccard"].get<double>();
        if (js.contains("bleu1")) s.bleu1 = js["bleu1"].get<double>();
        if (js.contains("bleu2")) s.bleu2 = js["bleu2"].get<double>();
        report.samples.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("report JSON: ") + e.what());
  }
  return report;
}

std::string scoreboard_csv(const std::string& model_name, const MetricsReport& report) {
  std::ostringstream out;
  out << "Model,R@0.3,R@0.5,R@0.7,mIoU\n";
  out << model_name << "," << format_pct(report.r_at.at(0.3)) << ","
      << format_pct(report.r_at.at(0.5)) << "," << format_pct(report.r_at.at(0.7))
      << "," << format_pct(report.miou) << "\n";
  return out.str();
}

std::string bucket_csv(const BucketCounts& counts) {
  std::ostringstream out;
  out << "up,down,same,both_below\n";
  out << counts.up << "," << counts.down << "," << counts.same << ","
      << counts.both_below << "\n";
  return out.str();
}

}  // namespace evoquer::metrics

#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evoquer/common.hpp"
#include "evoquer/corpus.hpp"

namespace evoquer::simplify {

enum class Pos { VERB, NOUN, OTHER };

std::string pos_name(Pos pos);
Pos pos_from_name(std::string_view name);

struct TaggedToken {
  std::string surface;
  Pos pos = Pos::OTHER;
  std::string lemma;
};

// Surface-form lookup table with suffix-rule fallback. Lookup is total:
// anything not resolvable ends up (OTHER, surface).
class PosLexicon {
 public:
  static PosLexicon load(const fs::path& path);
  static PosLexicon from_lines(std::span<const std::string> lines);

  void add(const std::string& surface, Pos pos, const std::string& lemma);
  TaggedToken tag_token(const std::string& surface) const;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Pos pos;
    std::string lemma;
  };
  const Entry* find(const std::string& surface) const;
  std::map<std::string, Entry> entries_;
};

// Lowercase, split on whitespace, strip punctuation from token edges.
std::vector<std::string> tokenize(std::string_view text);

std::vector<TaggedToken> tag_and_lemmatize(std::span<const std::string> tokens,
                                           const PosLexicon& lexicon);

// Lemmas of the verb/noun tokens, original order. With drop_subject, nouns
// before the first verb are omitted ("person closes door" -> "close door").
std::vector<std::string> simplify_query(std::span<const std::string> tokens,
                                        const PosLexicon& lexicon,
                                        bool drop_subject = false);

struct StatsRecord {
  long long n_queries = 0;
  long long n_videos = 0;
  long long input_vocab = 0;       // distinct query tokens
  long long simplified_vocab = 0;  // distinct simplified lemmas
  double mean_simplified_tokens = 0.0;
};

StatsRecord corpus_stats(std::span<const corpus::GroundingSample> samples,
                         const PosLexicon& lexicon);

std::string stats_to_json(const StatsRecord& stats);

}  // namespace evoquer::simplify

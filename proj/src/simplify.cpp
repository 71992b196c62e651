#include "evoquer/simplify.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace evoquer::simplify {

std::string pos_name(Pos pos) {
  switch (pos) {
    case Pos::VERB: return "VERB";
    case Pos::NOUN: return "NOUN";
    case Pos::OTHER: return "OTHER";
  }
  return "OTHER";
}

Pos pos_from_name(std::string_view name) {
  if (name == "VERB") return Pos::VERB;
  if (name == "NOUN") return Pos::NOUN;
  if (name == "OTHER") return Pos::OTHER;
  fail(ErrorKind::parse, "unknown POS tag: " + std::string(name));
}

PosLexicon PosLexicon::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::runtime, "cannot open lexicon: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return from_lines(lines);
}

PosLexicon PosLexicon::from_lines(std::span<const std::string> lines) {
  PosLexicon lex;
  int lineno = 0;
  for (const auto& line : lines) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string surface, tag, lemma;
    if (!std::getline(ss, surface, '\t') || !std::getline(ss, tag, '\t') ||
        !std::getline(ss, lemma, '\t'))
      fail(ErrorKind::parse, "lexicon line " + std::to_string(lineno) +
                                 ": expected token<TAB>POS<TAB>lemma");
    if (lemma.empty())
      fail(ErrorKind::parse, "lexicon line " + std::to_string(lineno) + ": empty lemma");
    lex.add(surface, pos_from_name(tag), lemma);
  }
  return lex;
}

void PosLexicon::add(const std::string& surface, Pos pos, const std::string& lemma) {
  entries_[surface] = Entry{pos, lemma};
}

const PosLexicon::Entry* PosLexicon::find(const std::string& surface) const {
  auto it = entries_.find(surface);
  return it == entries_.end() ? nullptr : &it->second;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string drop_suffix(const std::string& s, std::size_t n) {
  return s.substr(0, s.size() - n);
}

bool has_doubled_final(const std::string& stem) {
  return stem.size() >= 2 && stem[stem.size() - 1] == stem[stem.size() - 2];
}

}  // namespace

TaggedToken PosLexicon::tag_token(const std::string& surface) const {
  if (const Entry* e = find(surface))
    return {surface, e->pos, e->lemma};

  // Candidate stems per suffix; -ing/-ed resolve only via verb stems,
  // -s/-es via verb or noun stems (closes/doors).
  struct Candidate {
    std::string stem;
    bool verbs_only;
  };
  std::vector<Candidate> candidates;
  if (ends_with(surface, "ing") && surface.size() > 4) {
    const std::string stem = drop_suffix(surface, 3);
    candidates.push_back({stem, true});
    candidates.push_back({stem + "e", true});  // closing -> close
    if (has_doubled_final(stem))
      candidates.push_back({drop_suffix(stem, 1), true});  // putting -> put
  }
  if (ends_with(surface, "ied") && surface.size() > 4)
    candidates.push_back({drop_suffix(surface, 3) + "y", true});  // carried -> carry
  else if (ends_with(surface, "ed") && surface.size() > 3) {
    const std::string stem = drop_suffix(surface, 2);
    candidates.push_back({stem, true});
    candidates.push_back({drop_suffix(surface, 1), true});  // closed -> close
    if (has_doubled_final(stem))
      candidates.push_back({drop_suffix(stem, 1), true});  // dropped -> drop
  }
  if (ends_with(surface, "ies") && surface.size() > 4)
    candidates.push_back({drop_suffix(surface, 3) + "y", false});  // carries
  else if (ends_with(surface, "es") && surface.size() > 3) {
    candidates.push_back({drop_suffix(surface, 2), false});  // washes -> wash
    candidates.push_back({drop_suffix(surface, 1), false});  // closes -> close
  } else if (ends_with(surface, "s") && surface.size() > 2) {
    candidates.push_back({drop_suffix(surface, 1), false});  // doors -> door
  }

  for (const auto& cand : candidates) {
    if (const Entry* e = find(cand.stem)) {
      if (e->pos == Pos::VERB || (!cand.verbs_only && e->pos == Pos::NOUN))
        return {surface, e->pos, e->lemma};
    }
  }
  return {surface, Pos::OTHER, surface};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    // strip punctuation from the edges only ("door," -> "door")
    std::size_t b = 0, e = cur.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) out.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::vector<TaggedToken> tag_and_lemmatize(std::span<const std::string> tokens,
                                           const PosLexicon& lexicon) {
  std::vector<TaggedToken> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(lexicon.tag_token(t));
  return out;
}

std::vector<std::string> simplify_query(std::span<const std::string> tokens,
                                        const PosLexicon& lexicon,
                                        bool drop_subject) {
  std::vector<std::string> out;
  bool verb_seen = false;
  for (const auto& tagged : tag_and_lemmatize(tokens, lexicon)) {
    if (tagged.pos == Pos::VERB) {
      verb_seen = true;
      out.push_back(tagged.lemma);
    } else if (tagged.pos == Pos::NOUN) {
      if (drop_subject && !verb_seen) continue;
      out.push_back(tagged.lemma);
    }
  }
  return out;
}

StatsRecord corpus_stats(std::span<const corpus::GroundingSample> samples,
                         const PosLexicon& lexicon) {
  if (samples.empty()) fail(ErrorKind::validation, "corpus_stats: empty corpus");
  StatsRecord r;
  std::set<std::string> input_vocab, simpl_vocab, videos;
  long long total_simplified = 0;
  for (const auto& s : samples) {
    ++r.n_queries;
    videos.insert(s.video_id);
    for (const auto& t : s.query) input_vocab.insert(t);
    const auto simplified = simplify_query(s.query, lexicon);
    total_simplified += static_cast<long long>(simplified.size());
    for (const auto& t : simplified) simpl_vocab.insert(t);
  }
  r.n_videos = static_cast<long long>(videos.size());
  r.input_vocab = static_cast<long long>(input_vocab.size());
  r.simplified_vocab = static_cast<long long>(simpl_vocab.size());
  r.mean_simplified_tokens =
      static_cast<double>(total_simplified) / static_cast<double>(r.n_queries);
  return r;
}

std::string stats_to_json(const StatsRecord& stats) {
  nlohmann::json j;
  j["num_queries"] = stats.n_queries;
  j["num_videos"] = stats.n_videos;
  j["input_query_vocab"] = stats.input_vocab;
  j["simplified_query_vocab"] = stats.simplified_vocab;
  j["mean_simplified_tokens_per_query"] = stats.mean_simplified_tokens;
  return j.dump(2);
}

}  // namespace evoquer::simplify

#include "evoquer/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "evoquer/simplify.hpp"

namespace evoquer::corpus {

using nlohmann::json;

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<sos>", "<eos>", "<unk>"};
  for (int i = 0; i < kNumReserved; ++i) index_[tokens_[i]] = i;
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_[token] = id;
  return id;
}

int Vocabulary::index(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || index >= size())
    fail(ErrorKind::validation, "vocabulary index out of range: " + std::to_string(index));
  return tokens_[static_cast<std::size_t>(index)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> indices) const {
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(token(i));
  return out;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus,
                       int min_count) {
  if (corpus.empty()) fail(ErrorKind::validation, "build_vocab: empty corpus");
  std::map<std::string, long long> counts;
  for (const auto& seq : corpus)
    for (const auto& tok : seq) {
      for (const char* reserved : {"<pad>", "<sos>", "<eos>", "<unk>"})
        if (tok == reserved)
          fail(ErrorKind::validation,
               "build_vocab: reserved token in corpus text: " + tok);
      ++counts[tok];
    }

  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  for (const auto& [tok, n] : kept) vocab.add(tok);
  return vocab;
}

std::array<DatasetSplit, 3> split_dataset(std::vector<GroundingSample> samples,
                                          const SplitSpec& spec,
                                          std::uint64_t seed) {
  if (spec.train < 0 || spec.valid < 0 || spec.train + spec.valid > 1.0)
    fail(ErrorKind::validation, "split_dataset: bad proportions");
  Rng rng(seed ^ 0x5911745e7ULL);
  rng.shuffle(samples);
  const auto n = samples.size();
  const auto n_train = static_cast<std::size_t>(spec.train * static_cast<double>(n));
  const auto n_valid = static_cast<std::size_t>(spec.valid * static_cast<double>(n));

  std::array<DatasetSplit, 3> out;
  out[0].name = "train";
  out[1].name = "valid";
  out[2].name = "test";
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t which = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);
    out[which].samples.push_back(std::move(samples[i]));
  }
  return out;
}

static GroundingSample parse_annotation_line(const std::string& line, int lineno) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse,
         "annotations line " + std::to_string(lineno) + ": " + e.what());
  }
  for (const char* key : {"video_id", "duration", "start", "end", "query"}) {
    if (!j.contains(key))
      fail(ErrorKind::parse, "annotations line " + std::to_string(lineno) +
                                 ": missing key '" + key + "'");
  }
  GroundingSample s;
  try {
    s.video_id = j.at("video_id").get<std::string>();
    s.duration = j.at("duration").get<double>();
    s.gold.start = j.at("start").get<double>();
    s.gold.end = j.at("end").get<double>();
    s.query_text = j.at("query").get<std::string>();
    if (j.contains("simplified"))
      s.simplified_gold = j.at("simplified").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse,
         "annotations line " + std::to_string(lineno) + ": " + e.what());
  }
  s.query = simplify::tokenize(s.query_text);

  const std::string where = s.video_id + " (line " + std::to_string(lineno) + ")";
  if (!(s.gold.start >= 0.0))
    fail(ErrorKind::validation, where + ": start < 0");
  if (!(s.gold.start < s.gold.end))
    fail(ErrorKind::validation, where + ": start >= end");
  if (!(s.gold.end <= s.duration))
    fail(ErrorKind::validation, where + ": end > duration");
  if (s.query.empty())
    fail(ErrorKind::validation, where + ": empty query");
  return s;
}

std::vector<GroundingSample> load_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::runtime, "cannot open annotations: " + path.string());
  std::vector<GroundingSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    out.push_back(parse_annotation_line(line, lineno));
  }
  return out;
}

void save_annotations(const fs::path& path,
                      std::span<const GroundingSample> samples,
                      bool with_simplified) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::runtime, "cannot write annotations: " + path.string());
  for (const auto& s : samples) {
    json j;
    j["video_id"] = s.video_id;
    j["duration"] = s.duration;
    j["start"] = s.gold.start;
    j["end"] = s.gold.end;
    j["query"] = s.query_text;
    if (with_simplified) j["simplified"] = s.simplified_gold;
    out << j.dump() << "\n";
  }
}

static constexpr char kEvqfMagic[4] = {'E', 'V', 'Q', 'F'};

static void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

static std::uint32_t get_u32(std::istream& in, const fs::path& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    fail(ErrorKind::format, "truncated EVQF header: " + path.string());
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

VideoFeatures load_features(const fs::path& path, double fps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::runtime, "cannot open features: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kEvqfMagic, 4) != 0)
    fail(ErrorKind::format, "bad EVQF magic: " + path.string());
  const std::uint32_t t = get_u32(in, path);
  const std::uint32_t d = get_u32(in, path);
  if (t == 0 || d == 0)
    fail(ErrorKind::format, "EVQF with zero dimension: " + path.string());

  const std::size_t want = static_cast<std::size_t>(t) * d;
  std::vector<float> payload(want);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(want * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != want * sizeof(float))
    fail(ErrorKind::format, "EVQF payload truncated: " + path.string());
  // trailing bytes are also a size mismatch
  char extra;
  if (in.read(&extra, 1), in.gcount() != 0)
    fail(ErrorKind::format, "EVQF payload larger than header: " + path.string());

  VideoFeatures v;
  v.video_id = path.stem().string();
  v.fps = fps;
  v.frames.resize(t, d);
  std::size_t k = 0;
  for (std::uint32_t r = 0; r < t; ++r)
    for (std::uint32_t c = 0; c < d; ++c)
      v.frames(r, c) = static_cast<double>(payload[k++]);
  return v;
}

void save_features(const fs::path& path, const VideoFeatures& video) {
  if (video.num_frames() < 1 || video.dims() < 1)
    fail(ErrorKind::validation, "save_features: empty matrix");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::runtime, "cannot write features: " + path.string());
  out.write(kEvqfMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(video.num_frames()));
  put_u32(out, static_cast<std::uint32_t>(video.dims()));
  for (int r = 0; r < video.num_frames(); ++r) {
    for (int c = 0; c < video.dims(); ++c) {
      const float f = static_cast<float>(video.frames(r, c));
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
  if (!out) fail(ErrorKind::runtime, "short write: " + path.string());
}

SyntheticConfig default_synthetic_config() {
  SyntheticConfig c;
  c.events = {{"close", "door"}, {"open", "window"}, {"hold", "box"},
              {"lift", "book"},  {"move", "cup"},    {"turn", "lamp"},
              {"pull", "chair"}, {"drop", "bag"}};
  return c;
}

// Lexicon lines for everything the query template can emit, so simplified
// gold targets are derivable from generated data alone.
static std::string synthetic_lexicon(const SyntheticConfig& config) {
  std::string out;
  out += "a\tOTHER\ta\n";
  out += "the\tOTHER\tthe\n";
  out += "person\tNOUN\tperson\n";
  std::set<std::string> seen;
  for (const auto& [verb, noun] : config.events) {
    if (seen.insert(verb).second) {
      out += verb + "\tVERB\t" + verb + "\n";
      out += verb + "s\tVERB\t" + verb + "\n";
    }
    if (seen.insert(noun).second) out += noun + "\tNOUN\t" + noun + "\n";
  }
  return out;
}

SyntheticOutput generate_synthetic(const SyntheticConfig& config,
                                   std::uint64_t seed, const fs::path& out_dir) {
  if (config.n_videos < 1 || config.frames < 1 || config.dims < 1)
    fail(ErrorKind::validation, "generate_synthetic: bad sizes");
  if (config.events.empty())
    fail(ErrorKind::validation, "generate_synthetic: no events");
  if (config.min_event_frames < 1 || config.max_event_frames < config.min_event_frames)
    fail(ErrorKind::validation, "generate_synthetic: event shorter than 1 frame");
  if (config.max_event_frames > config.frames)
    fail(ErrorKind::validation, "generate_synthetic: event longer than video");

  const int n_events = static_cast<int>(config.events.size());
  // Disjoint channel block per event; every event needs at least one channel.
  const int block = config.dims / n_events;
  if (block < 1)
    fail(ErrorKind::validation, "generate_synthetic: fewer channels than events");

  fs::create_directories(out_dir / "features");
  Rng rng(seed);

  std::vector<GroundingSample> samples;
  SyntheticOutput out;
  for (int i = 0; i < config.n_videos; ++i) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "v%04d", i);
    VideoFeatures video;
    video.video_id = idbuf;
    video.fps = config.fps;
    video.frames.resize(config.frames, config.dims);
    for (int r = 0; r < config.frames; ++r)
      for (int c = 0; c < config.dims; ++c)
        video.frames(r, c) = config.noise_scale * rng.normal();

    const int event = i % n_events;  // balanced classes
    const int len = config.min_event_frames +
                    rng.uniform_int(config.max_event_frames - config.min_event_frames + 1);
    const int start_frame = rng.uniform_int(config.frames - len + 1);
    for (int r = start_frame; r < start_frame + len; ++r)
      for (int c = event * block; c < (event + 1) * block; ++c)
        video.frames(r, c) += config.amplitude;

    const fs::path fpath = out_dir / "features" / (video.video_id + ".evqf");
    save_features(fpath, video);
    out.feature_files.push_back(fpath);

    const auto& [verb, noun] = config.events[static_cast<std::size_t>(event)];
    GroundingSample s;
    s.video_id = video.video_id;
    s.query_text = "a person " + verb + "s the " + noun;
    s.query = simplify::tokenize(s.query_text);
    s.duration = static_cast<double>(config.frames) / config.fps;
    s.gold.start = static_cast<double>(start_frame) / config.fps;
    s.gold.end = static_cast<double>(start_frame + len) / config.fps;
    samples.push_back(std::move(s));
  }

  out.annotations = out_dir / "annotations.jsonl";
  save_annotations(out.annotations, samples, false);
  out.lexicon = out_dir / "lexicon.tsv";
  write_file(out.lexicon, synthetic_lexicon(config));
  return out;
}

}  // namespace evoquer::corpus

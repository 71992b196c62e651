#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "evoquer/corpus.hpp"

using namespace evoquer;
using corpus::GroundingSample;
using corpus::VideoFeatures;
using corpus::Vocabulary;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("evoquer_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("annotations: field mapping and validation") {
  const fs::path dir = temp_dir("annotations");
  const fs::path file = dir / "ann.jsonl";
  {
    std::ofstream out(file);
    out << R"({"video_id":"v1","duration":30.0,"start":2.0,"end":6.0,"query":"person closes the door"})"
        << "\n";
  }
  const auto samples = corpus::load_annotations(file);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].video_id == "v1");
  CHECK(samples[0].gold.start == doctest::Approx(2.0));
  CHECK(samples[0].gold.end == doctest::Approx(6.0));
  CHECK(samples[0].duration == doctest::Approx(30.0));
  CHECK(samples[0].query ==
        std::vector<std::string>{"person", "closes", "the", "door"});

  SUBCASE("start >= end is rejected with the line number") {
    std::ofstream out(file, std::ios::app);
    out << R"({"video_id":"v2","duration":30.0,"start":6.0,"end":2.0,"query":"x"})"
        << "\n";
    out.close();
    try {
      corpus::load_annotations(file);
      FAIL("expected validation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("end > duration is rejected") {
    std::ofstream out(file, std::ios::app);
    out << R"({"video_id":"v2","duration":5.0,"start":2.0,"end":6.0,"query":"x"})"
        << "\n";
    out.close();
    CHECK_THROWS_AS(corpus::load_annotations(file), Error);
  }
  SUBCASE("malformed JSON reports a parse error") {
    std::ofstream out(file, std::ios::app);
    out << "{not json}\n";
    out.close();
    try {
      corpus::load_annotations(file);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parse);
    }
  }
}

TEST_CASE("EVQF: header arithmetic and corruption") {
  const fs::path dir = temp_dir("evqf");
  Rng rng(3);
  VideoFeatures v;
  v.video_id = "v";
  v.frames.resize(48, 16);
  for (int r = 0; r < 48; ++r)
    for (int c = 0; c < 16; ++c) v.frames(r, c) = rng.normal();
  const fs::path file = dir / "v.evqf";
  corpus::save_features(file, v);

  // 4 magic + 8 header + 48*16*4 payload
  CHECK(fs::file_size(file) == 12 + 48 * 16 * 4);

  const auto loaded = corpus::load_features(file);
  CHECK(loaded.frames.rows() == 48);
  CHECK(loaded.frames.cols() == 16);

  SUBCASE("truncated payload is a format error") {
    fs::resize_file(file, fs::file_size(file) - 4);
    try {
      corpus::load_features(file);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::format);
    }
  }
  SUBCASE("bad magic is a format error") {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_AS(corpus::load_features(file), Error);
  }
  SUBCASE("trailing bytes are a format error") {
    std::ofstream f(file, std::ios::app | std::ios::binary);
    f.write("z", 1);
    f.close();
    CHECK_THROWS_AS(corpus::load_features(file), Error);
  }
}

TEST_CASE("EVQF: round-trip is float32-exact for random shapes") {
  const fs::path dir = temp_dir("evqf_roundtrip");
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const int t = 1 + rng.uniform_int(512);
    const int d = 1 + rng.uniform_int(64);
    VideoFeatures v;
    v.video_id = "r";
    v.frames.resize(t, d);
    for (int r = 0; r < t; ++r)
      for (int c = 0; c < d; ++c)
        v.frames(r, c) = static_cast<double>(static_cast<float>(rng.normal()));
    const fs::path file = dir / "r.evqf";
    corpus::save_features(file, v);
    const auto loaded = corpus::load_features(file);
    REQUIRE(loaded.frames.rows() == t);
    REQUIRE(loaded.frames.cols() == d);
    CHECK((loaded.frames - v.frames).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("vocabulary: reserved slots, thresholds, determinism") {
  const std::vector<std::vector<std::string>> corpus_small = {{"a", "b"}, {"a"}};

  const Vocabulary v1 = corpus::build_vocab(corpus_small, 1);
  CHECK(v1.size() == 6);  // 4 reserved + a + b
  CHECK(v1.token(Vocabulary::kPad) == "<pad>");
  CHECK(v1.token(Vocabulary::kSos) == "<sos>");
  CHECK(v1.token(Vocabulary::kEos) == "<eos>");
  CHECK(v1.token(Vocabulary::kUnk) == "<unk>");
  CHECK(v1.index("a") == 4);  // higher count first
  CHECK(v1.index("b") == 5);
  CHECK(v1.index("zzz") == Vocabulary::kUnk);

  const Vocabulary v2 = corpus::build_vocab(corpus_small, 2);
  CHECK(v2.size() == 5);
  CHECK(v2.contains("a"));
  CHECK_FALSE(v2.contains("b"));

  // determinism: identical corpus gives identical assignment
  const Vocabulary v3 = corpus::build_vocab(corpus_small, 1);
  for (int i = 0; i < v1.size(); ++i) CHECK(v1.token(i) == v3.token(i));

  // monotone non-increasing size in min_count
  int prev = v1.size();
  for (int mc = 2; mc <= 4; ++mc) {
    const int size = corpus::build_vocab(corpus_small, mc).size();
    CHECK(size <= prev);
    prev = size;
  }

  // reserved tokens must never appear in raw corpus text
  const std::vector<std::vector<std::string>> poisoned = {{"a", "<pad>"}};
  CHECK_THROWS_AS(corpus::build_vocab(poisoned, 1), Error);
}

TEST_CASE("synthetic generator: determinism, counts, planted signal") {
  const auto config = corpus::default_synthetic_config();

  const fs::path dir_a = temp_dir("synth_a");
  const fs::path dir_b = temp_dir("synth_b");
  corpus::generate_synthetic(config, 7, dir_a);
  corpus::generate_synthetic(config, 7, dir_b);

  // byte-identical outputs for the same seed
  CHECK(read_file(dir_a / "annotations.jsonl") == read_file(dir_b / "annotations.jsonl"));
  CHECK(read_file(dir_a / "lexicon.tsv") == read_file(dir_b / "lexicon.tsv"));
  int n_feature_files = 0;
  for (const auto& entry : fs::directory_iterator(dir_a / "features")) {
    ++n_feature_files;
    const auto rel = entry.path().filename();
    CHECK(read_file(entry.path()) == read_file(dir_b / "features" / rel));
  }
  CHECK(n_feature_files == 64);

  const auto samples = corpus::load_annotations(dir_a / "annotations.jsonl");
  CHECK(samples.size() == 64);

  double mean_duration = 0.0;
  for (const auto& s : samples) mean_duration += s.duration;
  mean_duration /= static_cast<double>(samples.size());
  CHECK(mean_duration == doctest::Approx(30.0));

  // interval invariant over several seeds
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 9ULL}) {
    const fs::path dir = temp_dir("synth_prop");
    corpus::generate_synthetic(config, seed, dir);
    for (const auto& s : corpus::load_annotations(dir / "annotations.jsonl")) {
      CHECK(s.gold.start >= 0.0);
      CHECK(s.gold.start < s.gold.end);
      CHECK(s.gold.end <= s.duration);
    }
  }

  // planted frames vs background on the event's channel block
  const int block = config.dims / static_cast<int>(config.events.size());
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& s = samples[i];
    auto video = corpus::load_features(dir_a / "features" / (s.video_id + ".evqf"));
    video.fps = static_cast<double>(video.num_frames()) / s.duration;
    const int event = static_cast<int>(i) % static_cast<int>(config.events.size());
    const int fs_frame = static_cast<int>(std::lround(s.gold.start * video.fps));
    const int fe_frame = static_cast<int>(std::lround(s.gold.end * video.fps));
    double inside = 0.0, outside = 0.0;
    int n_in = 0, n_out = 0;
    for (int t = 0; t < video.num_frames(); ++t)
      for (int c = event * block; c < (event + 1) * block; ++c) {
        if (t >= fs_frame && t < fe_frame) {
          inside += video.frames(t, c);
          ++n_in;
        } else {
          outside += video.frames(t, c);
          ++n_out;
        }
      }
    REQUIRE(n_in > 0);
    REQUIRE(n_out > 0);
    CHECK(inside / n_in - outside / n_out >= 3.0 * config.noise_scale);
  }
}

TEST_CASE("synthetic generator: config validation") {
  auto config = corpus::default_synthetic_config();
  config.min_event_frames = 0;
  CHECK_THROWS_AS(corpus::generate_synthetic(config, 1, temp_dir("synth_bad")), Error);
}

TEST_CASE("dataset split: proportions and determinism") {
  std::vector<GroundingSample> samples;
  for (int i = 0; i < 100; ++i) {
    GroundingSample s;
    s.video_id = "v" + std::to_string(i);
    s.query_text = "q";
    s.query = {"q"};
    s.duration = 10.0;
    s.gold = {1.0, 2.0};
    samples.push_back(s);
  }
  const auto splits = corpus::split_dataset(samples, {}, 7);
  CHECK(splits[0].samples.size() == 50);
  CHECK(splits[1].samples.size() == 25);
  CHECK(splits[2].samples.size() == 25);

  const auto splits2 = corpus::split_dataset(samples, {}, 7);
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < splits[k].samples.size(); ++i)
      CHECK(splits[k].samples[i].video_id == splits2[k].samples[i].video_id);

  // no sample lost or duplicated
  std::set<std::string> seen;
  for (int k = 0; k < 3; ++k)
    for (const auto& s : splits[k].samples) seen.insert(s.video_id);
  CHECK(seen.size() == 100);
}

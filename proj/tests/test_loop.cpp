#include <doctest.h>

#include <cmath>
#include <cstring>

#include "evoquer/loop.hpp"

using namespace evoquer;
using namespace evoquer::loop;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("evoquer_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TrainConfig toy_config() {
  TrainConfig config;
  config.learning_rate = 0.05;
  config.batch_size = 4;
  config.lr_decay_every = 100;
  config.lr_decay_factor = 0.5;
  config.total_epochs = 4;
  config.lambda_nll = 1.0;
  config.frames_per_clip = 8;
  config.seed = 7;
  config.model.embed_dim = 4;
  config.model.hidden = 3;
  config.model.video_proj_dim = 4;
  config.model.attn_dim = 3;
  config.model.head_hidden = 4;
  config.model.max_decode_len = 5;
  config.checkpoint_every = 0;
  config.eval_every = 0;
  return config;
}

// Tiny in-memory dataset: 8 videos, 2 planted event types.
LoadedDataset toy_dataset() {
  LoadedDataset data;
  corpus::DatasetSplit train;
  train.name = "train";
  Rng rng(41);
  for (int i = 0; i < 8; ++i) {
    const int event = i % 2;
    corpus::GroundingSample s;
    s.video_id = "v" + std::to_string(i);
    s.query_text = event == 0 ? "a person closes the door" : "a person opens the window";
    s.query = event == 0
                  ? std::vector<std::string>{"a", "person", "closes", "the", "door"}
                  : std::vector<std::string>{"a", "person", "opens", "the", "window"};
    s.simplified_gold = event == 0
                            ? std::vector<std::string>{"person", "close", "door"}
                            : std::vector<std::string>{"person", "open", "window"};
    s.duration = 12.0;
    const double start = 2.0 + i % 4;
    s.gold = {start, start + 3.0};
    train.samples.push_back(s);

    corpus::VideoFeatures v;
    v.video_id = s.video_id;
    v.fps = 1.0;
    v.frames.resize(12, 4);
    for (int t = 0; t < 12; ++t)
      for (int d = 0; d < 4; ++d) v.frames(t, d) = 0.1 * rng.normal();
    for (int t = static_cast<int>(start); t < static_cast<int>(start) + 3; ++t)
      v.frames(t, 2 * event) += 1.0;
    data.features.by_id.emplace(v.video_id, std::move(v));
  }
  std::vector<std::vector<std::string>> queries, simplified;
  for (const auto& s : train.samples) {
    queries.push_back(s.query);
    simplified.push_back(s.simplified_gold);
  }
  data.vocab_in = corpus::build_vocab(queries, 1);
  data.vocab_simpl = corpus::build_vocab(simplified, 1);
  data.feature_dim = 4;
  data.splits[0] = std::move(train);
  data.splits[1].name = "valid";
  data.splits[2].name = "test";
  return data;
}

std::string param_bytes(ParameterSet& set) {
  std::string bytes;
  for (const Parameter* p : std::as_const(set).all())
    bytes.append(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::size_t>(p->value.size()) * sizeof(double));
  return bytes;
}

}  // namespace

TEST_CASE("joint_loss: sum, ablation, NaN abort") {
  CHECK(joint_loss(2.0, 3.0, 1.0) == doctest::Approx(5.0));
  CHECK(joint_loss(2.0, 3.0, 0.0) == doctest::Approx(2.0));
  CHECK(joint_loss(1.5, 6.3279, 0.5) == doctest::Approx(4.66395).epsilon(1e-12));
  CHECK_THROWS_AS(joint_loss(std::nan(""), 1.0, 1.0), Error);
  CHECK_THROWS_AS(joint_loss(1.0, std::numeric_limits<double>::infinity(), 1.0),
                  Error);
}

TEST_CASE("lr_schedule: step decay boundaries") {
  TrainConfig config;
  config.learning_rate = 4e-5;
  config.lr_decay_every = 150;
  config.lr_decay_factor = 0.5;
  CHECK(lr_schedule(0, config) == doctest::Approx(4e-5));
  CHECK(lr_schedule(149, config) == doctest::Approx(4e-5));
  CHECK(lr_schedule(150, config) == doctest::Approx(2e-5));
  CHECK(lr_schedule(299, config) == doctest::Approx(2e-5));
  CHECK(lr_schedule(300, config) == doctest::Approx(1e-5));

  config.lr_decay_factor = 1.0;
  CHECK(lr_schedule(450, config) == doctest::Approx(4e-5));
  CHECK_THROWS_AS(lr_schedule(-1, config), Error);
}

TEST_CASE("train config: JSON round-trip and hash stability") {
  TrainConfig config = toy_config();
  const auto text = config.to_json();
  const TrainConfig back = TrainConfig::from_json(text);
  CHECK(back.learning_rate == config.learning_rate);
  CHECK(back.batch_size == config.batch_size);
  CHECK(back.model.hidden == config.model.hidden);
  CHECK(back.config_hash() == config.config_hash());

  TrainConfig other = config;
  other.lambda_nll = 0.0;
  CHECK(other.config_hash() != config.config_hash());

  CHECK_THROWS_AS(TrainConfig::from_json("{\"batch_size\":0}"), Error);
  CHECK_THROWS_AS(TrainConfig::from_json("not json"), Error);
}

TEST_CASE("presets: shipped configurations carry the documented settings") {
  const fs::path presets = fs::path(EVOQUER_SOURCE_DIR) / "presets";

  const auto anet1 = TrainConfig::load(presets / "anet1.json");
  CHECK(anet1.learning_rate == doctest::Approx(4e-5));
  CHECK(anet1.batch_size == 64);
  CHECK(anet1.lr_decay_every == 150);
  CHECK(anet1.total_epochs == 500);
  CHECK(anet1.frames_per_clip == 32);

  const auto anet2 = TrainConfig::load(presets / "anet2.json");
  CHECK(anet2.learning_rate == doctest::Approx(4e-5));
  CHECK(anet2.batch_size == 128);
  CHECK(anet2.lr_decay_every == 200);
  CHECK(anet2.total_epochs == 600);

  const auto anet3 = TrainConfig::load(presets / "anet3.json");
  CHECK(anet3.learning_rate == doctest::Approx(4e-4));
  CHECK(anet3.batch_size == 64);
  const auto anet4 = TrainConfig::load(presets / "anet4.json");
  CHECK(anet4.learning_rate == doctest::Approx(4e-4));
  CHECK(anet4.batch_size == 128);

  const auto toy = TrainConfig::load(presets / "toy-overfit.json");
  CHECK(toy.lambda_nll == doctest::Approx(1.0));
  CHECK(toy.total_epochs == 300);
  CHECK(toy.frames_per_clip == 32);
  CHECK(toy.mode == TrainMode::closed_loop);
}

TEST_CASE("train_epoch: determinism and the loss identity") {
  const auto config = toy_config();
  const auto data = toy_dataset();

  auto run = [&](int epochs) {
    ClosedLoopModel model = ClosedLoopModel::build(
        config, data.vocab_in.size(), data.vocab_simpl.size(), data.feature_dim);
    model.init_params(config.seed);
    Optimizer opt(config.optimizer);
    std::vector<EpochRecord> records;
    for (int e = 0; e < epochs; ++e)
      records.push_back(train_epoch(model, opt, data, data.splits[0], config, e));
    return std::make_pair(std::move(records), param_bytes(model.shared));
  };

  const auto [rec1, bytes1] = run(3);
  const auto [rec2, bytes2] = run(3);
  REQUIRE(rec1.size() == 3);
  for (std::size_t i = 0; i < rec1.size(); ++i) {
    CHECK(rec1[i].grounding_loss == rec2[i].grounding_loss);
    CHECK(rec1[i].nll_loss == rec2[i].nll_loss);
    CHECK(rec1[i].joint_loss == rec2[i].joint_loss);
    // identity: joint = ground + lambda * nll
    CHECK(std::abs(rec1[i].joint_loss -
                   (rec1[i].grounding_loss + 1.0 * rec1[i].nll_loss)) < 1e-9);
    CHECK(std::isfinite(rec1[i].joint_loss));
  }
  CHECK(bytes1 == bytes2);
}

TEST_CASE("grounding_only: translator parameters are untouched bitwise") {
  auto config = toy_config();
  config.mode = TrainMode::grounding_only;
  const auto data = toy_dataset();

  ClosedLoopModel model = ClosedLoopModel::build(
      config, data.vocab_in.size(), data.vocab_simpl.size(), data.feature_dim);
  model.init_params(config.seed);
  const std::string translator_before = param_bytes(model.translator->parameters());
  const std::string grounder_before = param_bytes(model.grounder->parameters());

  Optimizer opt(config.optimizer);
  const auto record = train_epoch(model, opt, data, data.splits[0], config, 0);
  CHECK(record.nll_loss == 0.0);
  CHECK(record.joint_loss == record.grounding_loss);
  CHECK(param_bytes(model.translator->parameters()) == translator_before);
  // the grounder did move
  CHECK(param_bytes(model.grounder->parameters()) != grounder_before);
}

TEST_CASE("lambda 0 closed loop matches a grounder-only run bitwise") {
  const auto data = toy_dataset();

  auto run_mode = [&](TrainMode mode, double lambda) {
    auto config = toy_config();
    config.mode = mode;
    config.lambda_nll = lambda;
    ClosedLoopModel model = ClosedLoopModel::build(
        config, data.vocab_in.size(), data.vocab_simpl.size(), data.feature_dim);
    model.init_params(config.seed);
    Optimizer opt(config.optimizer);
    for (int e = 0; e < 3; ++e)
      train_epoch(model, opt, data, data.splits[0], config, e);
    return param_bytes(model.shared) + param_bytes(model.grounder->parameters());
  };

  CHECK(run_mode(TrainMode::closed_loop, 0.0) ==
        run_mode(TrainMode::grounding_only, 0.0));
}

TEST_CASE("shared embedding receives translator gradient when lambda > 0") {
  const auto data = toy_dataset();

  auto first_batch_grad = [&](double lambda) {
    auto config = toy_config();
    config.lambda_nll = lambda;
    ClosedLoopModel model = ClosedLoopModel::build(
        config, data.vocab_in.size(), data.vocab_simpl.size(), data.feature_dim);
    model.init_params(config.seed);
    Optimizer opt(config.optimizer);
    Mat captured;
    train_epoch(model, opt, data, data.splits[0], config, 0,
                [&](int batch, const Mat& grad) {
                  if (batch == 0) captured = grad;
                });
    return captured;
  };

  const Mat g0 = first_batch_grad(0.0);
  const Mat g1 = first_batch_grad(1.0);
  REQUIRE(g0.size() == g1.size());
  CHECK((g0 - g1).cwiseAbs().maxCoeff() > 1e-12);
}

TEST_CASE("gradient stop: clip indices depend only on the grounder forward") {
  const auto data = toy_dataset();
  auto config = toy_config();

  ClosedLoopModel model = ClosedLoopModel::build(
      config, data.vocab_in.size(), data.vocab_simpl.size(), data.feature_dim);
  model.init_params(config.seed);

  const auto& sample = data.splits[0].samples[0];
  const auto& video = data.features.get(sample.video_id);
  const auto query = data.vocab_in.encode(sample.query);

  auto indices = [&] {
    const auto out = model.grounder->predict(video, query, sample.duration);
    const auto [fs_frame, fe_frame] = resampler::interval_to_frames(
        out.interval_sec, video.fps, video.num_frames());
    return resampler::clip_indices(fs_frame, fe_frame, config.frames_per_clip);
  };
  const auto before = indices();
  // perturbing translator parameters cannot change the resampled indices
  for (Parameter* p : model.translator->parameters().all()) p->value.array() += 0.37;
  CHECK(indices() == before);
}

TEST_CASE("trainer runs unmodified with a constant-output stub grounder") {
  auto config = toy_config();
  const auto data = toy_dataset();

  ClosedLoopModel model = ClosedLoopModel::build(
      config, data.vocab_in.size(), data.vocab_simpl.size(), data.feature_dim);
  model.init_params(config.seed);
  model.replace_grounder(std::make_unique<grounder::ConstantGrounder>(0.5, 0.5));

  Optimizer opt(config.optimizer);
  EpochRecord first, last;
  for (int e = 0; e < 6; ++e) {
    const auto record = train_epoch(model, opt, data, data.splits[0], config, e);
    if (e == 0) first = record;
    last = record;
  }
  CHECK(std::isfinite(last.joint_loss));
  CHECK(last.grounding_loss == doctest::Approx(first.grounding_loss));
  // the translator still learns from the stub's fixed clips
  CHECK(last.nll_loss < first.nll_loss);

  const auto eval = evaluate_split(model, data, data.splits[0], config);
  CHECK(eval.predictions.size() == 8);
  CHECK(eval.report.r_at.count(0.7) == 1);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted trajectory") {
  const auto data = toy_dataset();
  auto config = toy_config();
  config.optimizer = "adam";
  const fs::path dir = temp_dir("resume");

  auto build = [&] {
    ClosedLoopModel model = ClosedLoopModel::build(
        config, data.vocab_in.size(), data.vocab_simpl.size(), data.feature_dim);
    model.init_params(config.seed);
    return model;
  };

  // uninterrupted: 6 epochs
  ClosedLoopModel full = build();
  Optimizer full_opt(config.optimizer);
  for (int e = 0; e < 6; ++e)
    train_epoch(full, full_opt, data, data.splits[0], config, e);

  // interrupted at 3, checkpointed, resumed into a fresh model
  ClosedLoopModel half = build();
  Optimizer half_opt(config.optimizer);
  for (int e = 0; e < 3; ++e)
    train_epoch(half, half_opt, data, data.splits[0], config, e);
  save_model_checkpoint(dir / "ckpt.evqc", half, half_opt, config, 3, -1.0);

  ClosedLoopModel resumed = build();
  Optimizer resumed_opt(config.optimizer);
  const auto state =
      load_model_checkpoint(dir / "ckpt.evqc", resumed, resumed_opt, config);
  CHECK(state.next_epoch == 3);
  for (int e = state.next_epoch; e < 6; ++e)
    train_epoch(resumed, resumed_opt, data, data.splits[0], config, e);

  auto max_diff = [](ParameterSet& a, ParameterSet& b) {
    double diff = 0.0;
    const auto pa = a.all();
    const auto pb = b.all();
    for (std::size_t i = 0; i < pa.size(); ++i)
      diff = std::max(diff, (pa[i]->value - pb[i]->value).cwiseAbs().maxCoeff());
    return diff;
  };
  CHECK(max_diff(full.shared, resumed.shared) <= 1e-12);
  CHECK(max_diff(full.grounder->parameters(), resumed.grounder->parameters()) <= 1e-12);
  CHECK(max_diff(full.translator->parameters(), resumed.translator->parameters()) <=
        1e-12);

  SUBCASE("config hash mismatch is an integrity error") {
    auto other = config;
    other.learning_rate *= 2.0;
    ClosedLoopModel victim = build();
    Optimizer victim_opt(other.optimizer);
    try {
      load_model_checkpoint(dir / "ckpt.evqc", victim, victim_opt, other);
      FAIL("expected integrity error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::integrity);
    }
  }
}

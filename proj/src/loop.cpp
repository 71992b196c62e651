#include "evoquer/loop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "evoquer/resampler.hpp"

namespace evoquer::loop {

using nlohmann::json;

std::string mode_name(TrainMode mode) {
  return mode == TrainMode::closed_loop ? "closed_loop" : "grounding_only";
}

TrainMode mode_from_name(const std::string& name) {
  if (name == "closed_loop") return TrainMode::closed_loop;
  if (name == "grounding_only") return TrainMode::grounding_only;
  fail(ErrorKind::validation, "unknown train mode: " + name);
}

std::string TrainConfig::to_json() const {
  json j;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["lr_decay_every"] = lr_decay_every;
  j["lr_decay_factor"] = lr_decay_factor;
  j["total_epochs"] = total_epochs;
  j["lambda_nll"] = lambda_nll;
  j["frames_per_clip"] = frames_per_clip;
  j["seed"] = seed;
  j["mode"] = mode_name(mode);
  j["optimizer"] = optimizer;
  j["model"] = {{"embed_dim", model.embed_dim},
                {"hidden", model.hidden},
                {"video_proj_dim", model.video_proj_dim},
                {"attn_dim", model.attn_dim},
                {"head_hidden", model.head_hidden},
                {"max_decode_len", model.max_decode_len},
                {"max_query_len", model.max_query_len},
                {"smooth_l1_beta", model.smooth_l1_beta},
                {"attention_loss_weight", model.attention_loss_weight}};
  j["checkpoint_every"] = checkpoint_every;
  j["eval_every"] = eval_every;
  j["min_count"] = min_count;
  j["split"] = {{"train", split.train}, {"valid", split.valid}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("train config: ") + e.what());
  }
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.total_epochs = j.value("total_epochs", c.total_epochs);
    c.lambda_nll = j.value("lambda_nll", c.lambda_nll);
    c.frames_per_clip = j.value("frames_per_clip", c.frames_per_clip);
    c.seed = j.value("seed", c.seed);
    c.mode = mode_from_name(j.value("mode", mode_name(c.mode)));
    c.optimizer = j.value("optimizer", c.optimizer);
    if (j.contains("model")) {
      const json& m = j["model"];
      c.model.embed_dim = m.value("embed_dim", c.model.embed_dim);
      c.model.hidden = m.value("hidden", c.model.hidden);
      c.model.video_proj_dim = m.value("video_proj_dim", c.model.video_proj_dim);
      c.model.attn_dim = m.value("attn_dim", c.model.attn_dim);
      c.model.head_hidden = m.value("head_hidden", c.model.head_hidden);
      c.model.max_decode_len = m.value("max_decode_len", c.model.max_decode_len);
      c.model.max_query_len = m.value("max_query_len", c.model.max_query_len);
      c.model.smooth_l1_beta = m.value("smooth_l1_beta", c.model.smooth_l1_beta);
      c.model.attention_loss_weight =
          m.value("attention_loss_weight", c.model.attention_loss_weight);
    }
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.min_count = j.value("min_count", c.min_count);
    if (j.contains("split")) {
      c.split.train = j["split"].value("train", c.split.train);
      c.split.valid = j["split"].value("valid", c.split.valid);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("train config: ") + e.what());
  }
  if (c.batch_size < 1 || c.total_epochs < 0 || c.frames_per_clip < 1 ||
      !(c.learning_rate > 0.0) || c.lr_decay_every < 1 ||
      !(c.lr_decay_factor > 0.0) || c.lambda_nll < 0.0)
    fail(ErrorKind::validation, "train config: non-positive setting");
  if (c.optimizer != "sgd" && c.optimizer != "adam")
    fail(ErrorKind::validation, "train config: unknown optimizer " + c.optimizer);
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  return from_json(read_file(path));
}

std::string TrainConfig::config_hash() const { return hex64(fnv1a(to_json())); }

std::string EpochRecord::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["grounding_loss"] = grounding_loss;
  j["nll_loss"] = nll_loss;
  j["joint_loss"] = joint_loss;
  j["lr"] = lr;
  return j.dump();
}

EpochRecord EpochRecord::from_json(const std::string& text) {
  EpochRecord r;
  try {
    json j = json::parse(text);
    r.epoch = j.at("epoch").get<int>();
    r.grounding_loss = j.at("grounding_loss").get<double>();
    r.nll_loss = j.at("nll_loss").get<double>();
    r.joint_loss = j.at("joint_loss").get<double>();
    r.lr = j.at("lr").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("epoch record: ") + e.what());
  }
  return r;
}

double joint_loss(double l_ground, double l_nll, double lambda_nll) {
  if (!std::isfinite(l_ground) || !std::isfinite(l_nll))
    fail(ErrorKind::runtime,
         "joint_loss: non-finite input (ground=" + std::to_string(l_ground) +
             ", nll=" + std::to_string(l_nll) + ")");
  return l_ground + lambda_nll * l_nll;
}

double lr_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0) fail(ErrorKind::validation, "lr_schedule: negative epoch");
  const int steps = epoch / config.lr_decay_every;
  return config.learning_rate * std::pow(config.lr_decay_factor, steps);
}

Optimizer::Optimizer(const std::string& kind) {
  if (kind == "sgd") kind_ = Kind::sgd;
  else if (kind == "adam") kind_ = Kind::adam;
  else fail(ErrorKind::validation, "unknown optimizer: " + kind);
}

void Optimizer::step(std::span<ParameterSet* const> sets, double lr,
                     double grad_scale) {
  ++steps_;
  for (ParameterSet* set : sets) {
    for (Parameter* p : set->all()) {
      if (!p->trainable) continue;
      const Mat g = grad_scale * p->grad;
      if (kind_ == Kind::sgd) {
        p->value -= lr * g;
        continue;
      }
      constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
      Mat& m = m_[p->name];
      Mat& v = v_[p->name];
      if (m.size() == 0) m = Mat::Zero(p->rows(), p->cols());
      if (v.size() == 0) v = Mat::Zero(p->rows(), p->cols());
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      const double mc = 1.0 - std::pow(beta1, static_cast<double>(steps_));
      const double vc = 1.0 - std::pow(beta2, static_cast<double>(steps_));
      const Mat mhat = m / mc;
      const Mat vhat = v / vc;
      p->value -=
          lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(p->rows(), p->cols(), eps));
    }
  }
}

void Optimizer::save_state(neural::Checkpoint& checkpoint) const {
  if (kind_ != Kind::adam) return;
  for (const auto& [name, m] : m_) checkpoint.blocks["opt.m." + name] = m;
  for (const auto& [name, v] : v_) checkpoint.blocks["opt.v." + name] = v;
}

void Optimizer::load_state(const neural::Checkpoint& checkpoint,
                           std::span<ParameterSet* const> sets) {
  if (kind_ != Kind::adam) return;
  for (ParameterSet* set : sets) {
    for (Parameter* p : set->all()) {
      auto mi = checkpoint.blocks.find("opt.m." + p->name);
      auto vi = checkpoint.blocks.find("opt.v." + p->name);
      if (mi != checkpoint.blocks.end()) m_[p->name] = mi->second;
      if (vi != checkpoint.blocks.end()) v_[p->name] = vi->second;
    }
  }
}

ClosedLoopModel ClosedLoopModel::build(const TrainConfig& config,
                                       int input_vocab_size,
                                       int simplified_vocab_size,
                                       int feature_dim) {
  ClosedLoopModel model;
  model.model_config = config.model;
  model.query_embedding = &model.shared.create("shared.query_embed",
                                               input_vocab_size,
                                               config.model.embed_dim);
  model.grounder = std::make_unique<grounder::ReferenceGrounder>(
      *model.query_embedding, config.model, feature_dim);
  model.translator = std::make_unique<translator::Translator>(
      *model.query_embedding, config.model, feature_dim, simplified_vocab_size);
  return model;
}

void ClosedLoopModel::init_params(std::uint64_t seed) {
  Rng rng(seed ^ 0x1e17a15ULL);
  neural::init_uniform(shared, rng);
  neural::init_uniform(grounder->parameters(), rng);
  neural::init_uniform(translator->parameters(), rng);
}

std::vector<ParameterSet*> ClosedLoopModel::parameter_sets() {
  return {&shared, &grounder->parameters(), &translator->parameters()};
}

void ClosedLoopModel::replace_grounder(
    std::unique_ptr<grounder::GrounderInterface> replacement) {
  grounder = std::move(replacement);
}

const corpus::VideoFeatures& FeatureStore::get(const std::string& video_id) const {
  auto it = by_id.find(video_id);
  if (it == by_id.end())
    fail(ErrorKind::validation, "no features for video " + video_id);
  return it->second;
}

LoadedDataset load_dataset(const DataPaths& paths, const TrainConfig& config) {
  auto samples = corpus::load_annotations(paths.annotations);
  if (samples.empty()) fail(ErrorKind::validation, "dataset has no samples");
  const auto lexicon = simplify::PosLexicon::load(paths.lexicon);
  for (auto& s : samples) {
    if (s.simplified_gold.empty())
      s.simplified_gold = simplify::simplify_query(s.query, lexicon);
  }

  LoadedDataset data;
  for (const auto& s : samples) {
    if (data.features.by_id.count(s.video_id)) continue;
    auto video =
        corpus::load_features(paths.features_dir / (s.video_id + ".evqf"));
    // EVQF stores no timing; recover the frame rate from the annotated
    // duration so second <-> frame conversions stay consistent
    video.fps = static_cast<double>(video.num_frames()) / s.duration;
    data.features.by_id.emplace(s.video_id, std::move(video));
  }
  data.feature_dim = data.features.by_id.begin()->second.dims();

  data.splits = corpus::split_dataset(std::move(samples), config.split, config.seed);

  std::vector<std::vector<std::string>> queries, simplified;
  for (const auto& s : data.splits[0].samples) {
    queries.push_back(s.query);
    simplified.push_back(s.simplified_gold);
  }
  data.vocab_in = corpus::build_vocab(queries, config.min_count);
  data.vocab_simpl = corpus::build_vocab(simplified, 1);
  return data;
}

namespace {

std::vector<int> encode_query(const corpus::GroundingSample& sample,
                              const corpus::Vocabulary& vocab,
                              const ModelConfig& model) {
  auto tokens = vocab.encode(sample.query);
  if (static_cast<int>(tokens.size()) > model.max_query_len)
    tokens.resize(static_cast<std::size_t>(model.max_query_len));
  return tokens;
}

resampler::ClipFeatures clip_from_prediction(
    const corpus::VideoFeatures& video, double start_norm, double end_norm,
    double duration, int frames_per_clip) {
  const corpus::Interval pred_sec{start_norm * duration, end_norm * duration};
  const auto [fs, fe] =
      resampler::interval_to_frames(pred_sec, video.fps, video.num_frames());
  return resampler::resample(video, fs, fe, frames_per_clip);
}

}  // namespace

EpochRecord train_epoch(ClosedLoopModel& model, Optimizer& optimizer,
                        const LoadedDataset& data,
                        const corpus::DatasetSplit& split,
                        const TrainConfig& config, int epoch,
                        const BatchObserver& observer) {
  if (split.samples.empty())
    fail(ErrorKind::validation, "train_epoch: empty split");
  if (config.batch_size > static_cast<int>(split.samples.size()))
    fail(ErrorKind::validation, "train_epoch: batch size exceeds split size");

  std::vector<std::size_t> order(split.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(config.seed ^ (0x9e3779b97f4a7c15ULL +
                                 static_cast<std::uint64_t>(epoch) * 0x100000001b3ULL));
  shuffle_rng.shuffle(order);

  const double lr = lr_schedule(epoch, config);
  const auto sets = model.parameter_sets();
  const bool closed = config.mode == TrainMode::closed_loop;

  double sum_ground = 0.0, sum_nll = 0.0, sum_joint = 0.0;
  int batch_index = 0;
  std::size_t cursor = 0;
  while (cursor < order.size()) {
    const std::size_t batch_end =
        std::min(order.size(), cursor + static_cast<std::size_t>(config.batch_size));
    const int batch_n = static_cast<int>(batch_end - cursor);
    for (ParameterSet* set : sets) set->zero_grad();

    for (; cursor < batch_end; ++cursor) {
      const corpus::GroundingSample& sample = split.samples[order[cursor]];
      const corpus::VideoFeatures& video = data.features.get(sample.video_id);
      const auto query = encode_query(sample, data.vocab_in, config.model);

      neural::Graph g;
      const auto fwd = model.grounder->forward(g, video, query);
      const auto l_ground = model.grounder->loss(g, fwd, sample.gold, sample.duration);
      const double ground_val = g.value(l_ground)(0, 0);

      double nll_val = 0.0;
      neural::Value total = l_ground;
      if (closed && !sample.simplified_gold.empty()) {
        const auto clip = clip_from_prediction(
            video, g.value(fwd.start)(0, 0), g.value(fwd.end)(0, 0),
            sample.duration, config.frames_per_clip);
        const auto target = data.vocab_simpl.encode(sample.simplified_gold);
        const auto l_nll =
            model.translator->teacher_forced_loss(g, clip, query, target);
        nll_val = g.value(l_nll)(0, 0);
        total = g.add(l_ground, g.scale(l_nll, config.lambda_nll));
      }
      const double joint_val = joint_loss(ground_val, nll_val, config.lambda_nll);
      if (!std::isfinite(joint_val))
        fail(ErrorKind::runtime, "non-finite loss on sample " + sample.video_id);

      g.backward(total);
      sum_ground += ground_val;
      sum_nll += nll_val;
      sum_joint += joint_val;
    }

    if (observer) observer(batch_index, model.query_embedding->grad);
    optimizer.step(sets, lr, 1.0 / static_cast<double>(batch_n));
    ++batch_index;
  }

  const double n = static_cast<double>(split.samples.size());
  EpochRecord record;
  record.epoch = epoch;
  record.grounding_loss = sum_ground / n;
  record.nll_loss = sum_nll / n;
  record.joint_loss = sum_joint / n;
  record.lr = lr;
  return record;
}

EvalOutput evaluate_split(ClosedLoopModel& model, const LoadedDataset& data,
                          const corpus::DatasetSplit& split,
                          const TrainConfig& config) {
  if (split.samples.empty())
    fail(ErrorKind::validation, "evaluate_split: empty split");
  EvalOutput out;
  const bool closed = config.mode == TrainMode::closed_loop;
  for (const auto& sample : split.samples) {
    const corpus::VideoFeatures& video = data.features.get(sample.video_id);
    const auto query = encode_query(sample, data.vocab_in, config.model);
    const auto pred = model.grounder->predict(video, query, sample.duration);

    metrics::PredRecord record;
    record.video_id = sample.video_id;
    record.query = sample.query_text;
    record.pred = pred.interval_sec;
    record.gold = sample.gold;
    out.predictions.push_back(std::move(record));

    if (closed && !sample.simplified_gold.empty()) {
      const auto clip =
          clip_from_prediction(video, pred.start_norm, pred.end_norm,
                               sample.duration, config.frames_per_clip);
      const auto decoded = model.translator->greedy_decode(
          clip, query, config.model.max_decode_len);
      metrics::TransRecord trans;
      trans.video_id = sample.video_id;
      trans.query = sample.query_text;
      trans.gold_simplified = sample.simplified_gold;
      trans.predicted_simplified = data.vocab_simpl.decode(decoded.token_indices);
      out.translations.push_back(std::move(trans));
    }
  }
  out.report = metrics::compile_report(out.predictions, out.translations);
  return out;
}

void save_model_checkpoint(const fs::path& path, ClosedLoopModel& model,
                           const Optimizer& optimizer, const TrainConfig& config,
                           int next_epoch, double best_miou) {
  neural::Checkpoint checkpoint;
  json header;
  header["config_hash"] = config.config_hash();
  header["next_epoch"] = next_epoch;
  header["best_miou"] = best_miou;
  header["optimizer_steps"] = optimizer.steps_taken();
  checkpoint.header_json = header.dump();
  for (ParameterSet* set : model.parameter_sets())
    for (const Parameter* p : std::as_const(*set).all())
      checkpoint.blocks[p->name] = p->value;
  optimizer.save_state(checkpoint);
  save_checkpoint(path, checkpoint);
}

ResumeState load_model_checkpoint(const fs::path& path, ClosedLoopModel& model,
                                  Optimizer& optimizer,
                                  const TrainConfig& config) {
  const auto checkpoint = neural::load_checkpoint(path);
  json header;
  try {
    header = json::parse(checkpoint.header_json);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("checkpoint header: ") + e.what());
  }
  const std::string want = config.config_hash();
  const std::string got = header.value("config_hash", "");
  if (got != want)
    fail(ErrorKind::integrity, "checkpoint config hash mismatch: checkpoint " +
                                   got + " vs config " + want);

  const auto sets = model.parameter_sets();
  for (ParameterSet* set : sets) {
    for (Parameter* p : set->all()) {
      auto it = checkpoint.blocks.find(p->name);
      if (it == checkpoint.blocks.end())
        fail(ErrorKind::integrity, "checkpoint missing parameter " + p->name);
      if (it->second.rows() != p->value.rows() ||
          it->second.cols() != p->value.cols())
        fail(ErrorKind::integrity, "checkpoint shape mismatch for " + p->name);
      p->value = it->second;
    }
  }
  optimizer.load_state(checkpoint, sets);
  optimizer.set_steps_taken(header.value("optimizer_steps", 0LL));

  ResumeState state;
  state.next_epoch = header.value("next_epoch", 0);
  state.best_miou = header.value("best_miou", -1.0);
  return state;
}

namespace {

void dump_clips(const fs::path& dir, ClosedLoopModel& model,
                const LoadedDataset& data, const corpus::DatasetSplit& split,
                const TrainConfig& config) {
  fs::create_directories(dir);
  for (const auto& sample : split.samples) {
    const auto& video = data.features.get(sample.video_id);
    const auto query = encode_query(sample, data.vocab_in, config.model);
    const auto pred = model.grounder->predict(video, query, sample.duration);
    const auto clip = clip_from_prediction(video, pred.start_norm, pred.end_norm,
                                           sample.duration, config.frames_per_clip);
    corpus::VideoFeatures as_video;
    as_video.video_id = sample.video_id + "_clip";
    as_video.frames = clip.frames;
    as_video.fps = video.fps;
    corpus::save_features(dir / (as_video.video_id + ".evqf"), as_video);
  }
}

}  // namespace

ExperimentResult run_experiment(const TrainConfig& config, const DataPaths& paths,
                                const fs::path& out_dir,
                                const ExperimentOptions& options) {
  fs::create_directories(out_dir);
  const LoadedDataset data = load_dataset(paths, config);
  ClosedLoopModel model =
      ClosedLoopModel::build(config, data.vocab_in.size(), data.vocab_simpl.size(),
                             data.feature_dim);
  model.init_params(config.seed);
  Optimizer optimizer(config.optimizer);

  int start_epoch = 0;
  double best_miou = -1.0;
  if (options.resume) {
    const auto state = load_model_checkpoint(*options.resume, model, optimizer, config);
    start_epoch = state.next_epoch;
    best_miou = state.best_miou;
  }

  std::ofstream log_out(out_dir / "log.jsonl", std::ios::trunc);
  if (!log_out) fail(ErrorKind::runtime, "cannot write log.jsonl");

  ExperimentResult result;
  for (int epoch = start_epoch; epoch < config.total_epochs; ++epoch) {
    const EpochRecord record =
        train_epoch(model, optimizer, data, data.splits[0], config, epoch);
    result.log.push_back(record);
    log_out << record.to_json() << "\n";
    log_out.flush();

    const bool last = epoch + 1 == config.total_epochs;
    if (config.eval_every > 0 &&
        ((epoch + 1) % config.eval_every == 0 || last) &&
        !data.splits[1].samples.empty()) {
      const auto valid = evaluate_split(model, data, data.splits[1], config);
      if (valid.report.miou > best_miou) {
        best_miou = valid.report.miou;
        save_model_checkpoint(out_dir / "ckpt_best.evqc", model, optimizer,
                              config, epoch + 1, best_miou);
      }
    }
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      save_model_checkpoint(
          out_dir / ("ckpt_epoch" + std::to_string(epoch + 1) + ".evqc"), model,
          optimizer, config, epoch + 1, best_miou);
    }
  }

  result.final_checkpoint = out_dir / "ckpt_final.evqc";
  save_model_checkpoint(result.final_checkpoint, model, optimizer, config,
                        config.total_epochs, best_miou);

  const auto& test_split =
      data.splits[2].samples.empty() ? data.splits[0] : data.splits[2];
  auto eval = evaluate_split(model, data, test_split, config);
  metrics::save_prediction_dump(out_dir / "predictions.jsonl", eval.predictions);
  if (!eval.translations.empty())
    metrics::save_translation_dump(out_dir / "translations.jsonl", eval.translations);
  write_file(out_dir / "report.json", metrics::report_to_json(eval.report));
  write_file(out_dir / "report.csv", metrics::scoreboard_csv("evoquer", eval.report));
  if (options.dump_clips)
    dump_clips(out_dir / "clips", model, data, test_split, config);
  result.test_report = std::move(eval.report);
  return result;
}

}  // namespace evoquer::loop

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evoquer/corpus.hpp"
#include "evoquer/grounder.hpp"
#include "evoquer/metrics.hpp"
#include "evoquer/model_config.hpp"
#include "evoquer/neural/checkpoint.hpp"
#include "evoquer/simplify.hpp"
#include "evoquer/translator.hpp"

namespace evoquer::loop {

using neural::Mat;
using neural::Parameter;
using neural::ParameterSet;

enum class TrainMode { closed_loop, grounding_only };

std::string mode_name(TrainMode mode);
TrainMode mode_from_name(const std::string& name);

struct TrainConfig {
  double learning_rate = 4e-5;
  int batch_size = 64;
  int lr_decay_every = 150;
  double lr_decay_factor = 0.5;
  int total_epochs = 500;
  double lambda_nll = 1.0;
  int frames_per_clip = 32;
  std::uint64_t seed = 7;
  TrainMode mode = TrainMode::closed_loop;
  std::string optimizer = "sgd";  // "sgd" | "adam"
  ModelConfig model;
  int checkpoint_every = 50;
  int eval_every = 10;
  int min_count = 1;
  corpus::SplitSpec split;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const fs::path& path);
  // hash of the canonical JSON form; guards checkpoint resume
  std::string config_hash() const;
};

struct EpochRecord {
  int epoch = 0;
  double grounding_loss = 0.0;
  double nll_loss = 0.0;
  double joint_loss = 0.0;
  double lr = 0.0;

  std::string to_json() const;
  static EpochRecord from_json(const std::string& text);
};

// l_ground + lambda * l_nll; aborts on non-finite inputs.
double joint_loss(double l_ground, double l_nll, double lambda_nll);

// learning_rate * factor^floor(epoch / decay_every)
double lr_schedule(int epoch, const TrainConfig& config);

// Plain SGD, or adaptive moments behind the config key.
class Optimizer {
 public:
  explicit Optimizer(const std::string& kind);

  // applies lr * grad_scale * grad (SGD) or the moment update (adam),
  // visiting parameters in set order
  void step(std::span<ParameterSet* const> sets, double lr, double grad_scale);

  void save_state(neural::Checkpoint& checkpoint) const;
  void load_state(const neural::Checkpoint& checkpoint,
                  std::span<ParameterSet* const> sets);
  long long steps_taken() const { return steps_; }
  void set_steps_taken(long long steps) { steps_ = steps; }

 private:
  enum class Kind { sgd, adam } kind_;
  long long steps_ = 0;
  std::map<std::string, Mat> m_, v_;
};

// Grounder + translator around one shared query-embedding table.
struct ClosedLoopModel {
  ModelConfig model_config;
  ParameterSet shared;
  Parameter* query_embedding = nullptr;
  std::unique_ptr<grounder::GrounderInterface> grounder;
  std::unique_ptr<translator::Translator> translator;

  static ClosedLoopModel build(const TrainConfig& config, int input_vocab_size,
                               int simplified_vocab_size, int feature_dim);
  // deterministic init: shared table, grounder set, translator set, in order
  void init_params(std::uint64_t seed);
  std::vector<ParameterSet*> parameter_sets();
  // swap in a different grounder implementation (stub tests); parameters
  // already initialized by the caller
  void replace_grounder(std::unique_ptr<grounder::GrounderInterface> replacement);
};

struct FeatureStore {
  std::map<std::string, corpus::VideoFeatures> by_id;

  const corpus::VideoFeatures& get(const std::string& video_id) const;
};

struct LoadedDataset {
  std::array<corpus::DatasetSplit, 3> splits;  // train, valid, test
  FeatureStore features;
  corpus::Vocabulary vocab_in;
  corpus::Vocabulary vocab_simpl;
  int feature_dim = 0;
};

struct DataPaths {
  fs::path annotations;
  fs::path features_dir;
  fs::path lexicon;
};

LoadedDataset load_dataset(const DataPaths& paths, const TrainConfig& config);

// Called once per optimizer step, before gradients are cleared.
using BatchObserver =
    std::function<void(int batch_index, const Mat& shared_embed_grad)>;

EpochRecord train_epoch(ClosedLoopModel& model, Optimizer& optimizer,
                        const LoadedDataset& data,
                        const corpus::DatasetSplit& split,
                        const TrainConfig& config, int epoch,
                        const BatchObserver& observer = nullptr);

struct EvalOutput {
  std::vector<metrics::PredRecord> predictions;
  std::vector<metrics::TransRecord> translations;  // empty in grounding_only
  metrics::MetricsReport report;
};

EvalOutput evaluate_split(ClosedLoopModel& model, const LoadedDataset& data,
                          const corpus::DatasetSplit& split,
                          const TrainConfig& config);

struct ExperimentOptions {
  std::optional<fs::path> resume;
  bool dump_clips = false;
};

struct ExperimentResult {
  std::vector<EpochRecord> log;
  metrics::MetricsReport test_report;
  fs::path final_checkpoint;
};

ExperimentResult run_experiment(const TrainConfig& config, const DataPaths& paths,
                                const fs::path& out_dir,
                                const ExperimentOptions& options = {});

// Checkpoint plumbing shared by run_experiment and the tests.
void save_model_checkpoint(const fs::path& path, ClosedLoopModel& model,
                           const Optimizer& optimizer, const TrainConfig& config,
                           int next_epoch, double best_miou);
struct ResumeState {
  int next_epoch = 0;
  double best_miou = -1.0;
};
ResumeState load_model_checkpoint(const fs::path& path, ClosedLoopModel& model,
                                  Optimizer& optimizer, const TrainConfig& config);

}  // namespace evoquer::loop

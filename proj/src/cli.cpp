#include "evoquer/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "evoquer/corpus.hpp"
#include "evoquer/loop.hpp"
#include "evoquer/metrics.hpp"
#include "evoquer/simplify.hpp"

namespace evoquer::cli {

using nlohmann::json;

namespace {

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::validation: return "validation";
    case ErrorKind::parse: return "parse";
    case ErrorKind::format: return "format";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::runtime: return "runtime";
  }
  return "runtime";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::validation:
    case ErrorKind::parse:
    case ErrorKind::format:
      return 1;
    case ErrorKind::integrity:
    case ErrorKind::runtime:
      return 2;
  }
  return 2;
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// Run metadata written next to the primary outputs. Not itself a primary
// output: reruns differ only in the timestamp.
struct Manifest {
  std::string subcommand;
  json extra = json::object();
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;

  void write(const fs::path& path) const {
    json j;
    j["subcommand"] = subcommand;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    json in = json::object();
    for (const auto& p : inputs) in[p.string()] = hex64(hash_file(p));
    j["inputs"] = in;
    j["outputs"] = outputs;
    j["created_at"] = iso_timestamp();
    write_file(path, j.dump(2) + "\n");
  }
};

fs::path data_root_or_default(std::string flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("EVOQUER_DATA_DIR")) return env;
  fail(ErrorKind::usage, "no --data directory and EVOQUER_DATA_DIR is unset");
}

int run_gen_data(const std::string& out_dir, std::uint64_t seed, int videos,
                 int frames, int dims, double noise, double fps,
                 int min_event_frames, int max_event_frames) {
  corpus::SyntheticConfig config = corpus::default_synthetic_config();
  config.n_videos = videos;
  config.frames = frames;
  config.dims = dims;
  config.noise_scale = noise;
  config.fps = fps;
  config.min_event_frames = min_event_frames;
  config.max_event_frames = max_event_frames;

  const fs::path out(out_dir);
  fs::create_directories(out);
  const auto result = corpus::generate_synthetic(config, seed, out);

  Manifest manifest;
  manifest.subcommand = "gen-data";
  manifest.extra["seed"] = seed;
  manifest.extra["n_videos"] = videos;
  manifest.outputs.push_back("annotations.jsonl");
  manifest.outputs.push_back("lexicon.tsv");
  manifest.outputs.push_back("features/");
  manifest.write(out / "manifest.json");

  std::cout << "generated " << result.feature_files.size() << " videos under "
            << out.string() << "\n";
  return 0;
}

int run_simplify(const std::string& annotations, const std::string& lexicon_path,
                 const std::string& out_file, bool stats, bool drop_subject) {
  auto samples = corpus::load_annotations(annotations);
  const auto lexicon = simplify::PosLexicon::load(lexicon_path);
  for (auto& s : samples)
    s.simplified_gold = simplify::simplify_query(s.query, lexicon, drop_subject);

  if (!out_file.empty()) {
    corpus::save_annotations(out_file, samples, true);
    Manifest manifest;
    manifest.subcommand = "simplify";
    manifest.extra["drop_subject"] = drop_subject;
    manifest.inputs = {annotations, lexicon_path};
    manifest.outputs.push_back(fs::path(out_file).filename().string());
    manifest.write(fs::path(out_file).string() + ".manifest.json");
  }
  if (stats)
    std::cout << simplify::stats_to_json(simplify::corpus_stats(samples, lexicon))
              << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              std::string annotations, std::string features_dir,
              std::string lexicon, const std::string& out_dir,
              const std::string& resume, bool dump_clips) {
  const auto config = loop::TrainConfig::load(config_path);
  loop::DataPaths paths;
  if (annotations.empty() || features_dir.empty() || lexicon.empty()) {
    const fs::path root = data_root_or_default(data_dir);
    if (annotations.empty()) annotations = (root / "annotations.jsonl").string();
    if (features_dir.empty()) features_dir = (root / "features").string();
    if (lexicon.empty()) lexicon = (root / "lexicon.tsv").string();
  }
  paths.annotations = annotations;
  paths.features_dir = features_dir;
  paths.lexicon = lexicon;

  loop::ExperimentOptions options;
  if (!resume.empty()) options.resume = resume;
  options.dump_clips = dump_clips;

  const fs::path out(out_dir);
  const auto result = loop::run_experiment(config, paths, out, options);

  Manifest manifest;
  manifest.subcommand = "train";
  manifest.extra["config_hash"] = config.config_hash();
  manifest.extra["seed"] = config.seed;
  manifest.inputs = {config_path, paths.annotations, paths.lexicon};
  manifest.outputs = {"log.jsonl", "ckpt_final.evqc", "predictions.jsonl",
                      "report.json", "report.csv"};
  manifest.write(out / "manifest.json");

  std::cout << metrics::scoreboard_csv("evoquer", result.test_report);
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& trans_path,
             const std::string& out_dir, const std::string& model_name) {
  const auto preds = metrics::load_prediction_dump(pred_path);
  std::vector<metrics::TransRecord> trans;
  if (!trans_path.empty()) trans = metrics::load_translation_dump(trans_path);
  const auto report = metrics::compile_report(preds, trans);

  const fs::path out(out_dir);
  fs::create_directories(out);
  write_file(out / "report.json", metrics::report_to_json(report));
  write_file(out / "report.csv", metrics::scoreboard_csv(model_name, report));

  Manifest manifest;
  manifest.subcommand = "eval";
  manifest.inputs.push_back(pred_path);
  if (!trans_path.empty()) manifest.inputs.push_back(trans_path);
  manifest.outputs = {"report.json", "report.csv"};
  manifest.write(out / "manifest.json");

  std::cout << metrics::scoreboard_csv(model_name, report);
  return 0;
}

int run_compare(const std::string& ours_path, const std::string& base_path,
                const std::string& out_dir) {
  const auto ours = metrics::report_from_json(read_file(ours_path));
  const auto base = metrics::report_from_json(read_file(base_path));
  if (ours.samples.empty() || base.samples.empty())
    fail(ErrorKind::validation, "compare: reports carry no per-sample records");
  const auto counts = metrics::bucket_counts(ours.samples, base.samples);

  const fs::path out(out_dir);
  fs::create_directories(out);
  write_file(out / "table3.csv", metrics::bucket_csv(counts));
  json j;
  j["up"] = counts.up;
  j["down"] = counts.down;
  j["same"] = counts.same;
  j["both_below"] = counts.both_below;
  j["mixed_up"] = counts.mixed_up;
  j["mixed_down"] = counts.mixed_down;
  j["total"] = counts.total();
  write_file(out / "comparison.json", j.dump(2) + "\n");

  Manifest manifest;
  manifest.subcommand = "compare";
  manifest.inputs = {ours_path, base_path};
  manifest.outputs = {"table3.csv", "comparison.json"};
  manifest.write(out / "manifest.json");

  std::cout << metrics::bucket_csv(counts);
  return 0;
}

int run_report(const std::string& report_path, const std::string& log_path,
               const std::string& out_dir, const std::string& model_name) {
  const auto report = metrics::report_from_json(read_file(report_path));
  const fs::path out(out_dir);
  fs::create_directories(out);
  write_file(out / "table2.csv", metrics::scoreboard_csv(model_name, report));

  std::string curve = "epoch,grounding_loss,nll_loss,joint_loss,lr\n";
  if (!log_path.empty()) {
    std::ifstream in(log_path);
    if (!in) fail(ErrorKind::runtime, "cannot open log: " + log_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto r = loop::EpochRecord::from_json(line);
      curve += std::to_string(r.epoch) + "," + std::to_string(r.grounding_loss) +
               "," + std::to_string(r.nll_loss) + "," + std::to_string(r.joint_loss) +
               "," + std::to_string(r.lr) + "\n";
    }
  }
  write_file(out / "loss_curve.csv", curve);

  Manifest manifest;
  manifest.subcommand = "report";
  manifest.inputs.push_back(report_path);
  if (!log_path.empty()) manifest.inputs.push_back(log_path);
  manifest.outputs = {"table2.csv", "loss_curve.csv"};
  manifest.write(out / "manifest.json");
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"closed-loop temporal grounding with query simplification"};
  app.require_subcommand(1);
  bool json_errors = false;
  app.add_flag("--json-errors", json_errors,
               "print errors as JSON on standard error");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out;
  std::uint64_t gen_seed = 7;
  int gen_videos = 64, gen_frames = 48, gen_dims = 16;
  int gen_min_event = 6, gen_max_event = 16;
  double gen_noise = 0.1, gen_fps = 1.6;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--videos", gen_videos, "number of videos");
  gen->add_option("--frames", gen_frames, "frames per video (T)");
  gen->add_option("--dims", gen_dims, "feature channels (D)");
  gen->add_option("--noise", gen_noise, "background noise scale");
  gen->add_option("--fps", gen_fps, "frames per second");
  gen->add_option("--min-event-frames", gen_min_event, "shortest planted event");
  gen->add_option("--max-event-frames", gen_max_event, "longest planted event");

  // simplify
  auto* simp = app.add_subcommand("simplify", "simplify queries in an annotation file");
  std::string simp_ann, simp_lex, simp_out;
  bool simp_stats = false, simp_drop_subject = false;
  simp->add_option("--annotations", simp_ann, "JSON-lines annotations")->required();
  simp->add_option("--lexicon", simp_lex, "token<TAB>POS<TAB>lemma lexicon")->required();
  simp->add_option("--out", simp_out, "output annotations with 'simplified' field");
  simp->add_flag("--stats", simp_stats, "print corpus statistics as JSON");
  simp->add_flag("--drop-subject", simp_drop_subject,
                 "drop nouns before the first verb");

  // train
  auto* train = app.add_subcommand("train", "run a training experiment");
  std::string train_config, train_data, train_ann, train_feat, train_lex,
      train_out, train_resume;
  bool train_dump_clips = false;
  train->add_option("--config", train_config, "TrainConfig JSON file")->required();
  train->add_option("--data", train_data,
                    "dataset directory (default $EVOQUER_DATA_DIR)");
  train->add_option("--annotations", train_ann, "annotations override");
  train->add_option("--features", train_feat, "features directory override");
  train->add_option("--lexicon", train_lex, "lexicon override");
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_flag("--dump-clips", train_dump_clips,
                  "write resampled clips of the final evaluation as EVQF");

  // eval
  auto* eval = app.add_subcommand("eval", "compute metrics from dumps");
  std::string eval_pred, eval_trans, eval_out, eval_name = "evoquer";
  eval->add_option("--pred", eval_pred, "prediction dump")->required();
  eval->add_option("--trans", eval_trans, "translation dump");
  eval->add_option("--out", eval_out, "output directory")->required();
  eval->add_option("--model-name", eval_name, "row label for the CSV");

  // compare
  auto* compare = app.add_subcommand("compare", "bucket two reports");
  std::string cmp_ours, cmp_base, cmp_out;
  compare->add_option("--ours", cmp_ours, "report JSON (ours)")->required();
  compare->add_option("--base", cmp_base, "report JSON (baseline)")->required();
  compare->add_option("--out", cmp_out, "output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "emit table and curve CSVs");
  std::string rep_report, rep_log, rep_out, rep_name = "evoquer";
  report->add_option("--report", rep_report, "report JSON")->required();
  report->add_option("--log", rep_log, "EpochRecord JSON-lines log");
  report->add_option("--out", rep_out, "output directory")->required();
  report->add_option("--model-name", rep_name, "row label for the CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed())
      return run_gen_data(gen_out, gen_seed, gen_videos, gen_frames, gen_dims,
                          gen_noise, gen_fps, gen_min_event, gen_max_event);
    if (simp->parsed()) {
      if (simp_out.empty() && !simp_stats)
        fail(ErrorKind::usage, "simplify: need --out and/or --stats");
      return run_simplify(simp_ann, simp_lex, simp_out, simp_stats,
                          simp_drop_subject);
    }
    if (train->parsed())
      return run_train(train_config, train_data, train_ann, train_feat,
                       train_lex, train_out, train_resume, train_dump_clips);
    if (eval->parsed()) return run_eval(eval_pred, eval_trans, eval_out, eval_name);
    if (compare->parsed()) return run_compare(cmp_ours, cmp_base, cmp_out);
    if (report->parsed()) return run_report(rep_report, rep_log, rep_out, rep_name);
    fail(ErrorKind::usage, "no subcommand");
  } catch (const Error& e) {
    if (json_errors) {
      json j;
      j["error"] = kind_name(e.kind());
      j["message"] = e.what();
      std::cerr << j.dump() << "\n";
    } else {
      std::cerr << "error (" << kind_name(e.kind()) << "): " << e.what() << "\n";
    }
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    if (json_errors) {
      json j;
      j["error"] = "runtime";
      j["message"] = e.what();
      std::cerr << j.dump() << "\n";
    } else {
      std::cerr << "error: " << e.what() << "\n";
    }
    return 2;
  }
}

}  // namespace evoquer::cli

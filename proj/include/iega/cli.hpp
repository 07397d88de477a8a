#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iega/attribution.hpp"
#include "iega/data.hpp"
#include "iega/metrics.hpp"
#include "iega/model.hpp"
#include "iega/training.hpp"

namespace iega::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfigFailure = 2,
  kIoFailure = 3,
  kDataFailure = 4,
  kCheckpointFailure = 5,
  kTransformFailure = 6,
};

int exit_code_for(const std::exception& e);

// Everything a command needs, as one flat JSON object. model.vocab_size is
// not part of it: it always comes from the training split.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  RankingPolicy policy;
  SyntheticSpec synthetic;
  std::filesystem::path data_dir = "data";
  std::filesystem::path run_dir;  // empty: <run root>/seed<seed>

  void validate() const;
};

std::string to_json(const RunConfig& config);

// Applies the keys of a flat JSON object on top of `base`. Unknown keys and
// mistyped values raise ConfigError.
RunConfig apply_json(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

// IEGA_RUN_ROOT when set, "runs" otherwise.
std::filesystem::path default_run_root();
std::filesystem::path resolved_run_dir(const RunConfig& config);

std::string correction_mode_name(GradientFlow flow);

struct GenDataResult {
  std::map<std::string, std::size_t> counts;
};

// Writes train/valid/test JSONL plus manifest.json into out_dir.
GenDataResult cmd_gen_data(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// train.jsonl is required; valid.jsonl and test.jsonl are read when present.
// The vocabulary is built from the training split.
Corpus load_corpus(const std::filesystem::path& data_dir);

struct TrainOutcome {
  std::filesystem::path run_dir;
  TrainResult result;
  std::optional<EvalReport> valid_report;  // final parameters on "valid"
};

// Writes config.json, history.csv, checkpoint_{last,best,final}.json and
// run.json into the run directory. Every file is replaced atomically, and
// history.csv and checkpoint_last.json are refreshed after each epoch.
TrainOutcome cmd_train(const RunConfig& config);

struct LoadedSplit {
  Checkpoint checkpoint;
  Vocabulary vocabulary;
  std::vector<Example> examples;
};

// Loads a checkpoint and a JSONL split. Throws CheckpointError when the
// stored vocabulary does not match the weights.
LoadedSplit load_for_checkpoint(const std::filesystem::path& checkpoint,
                                const std::filesystem::path& split_file);

EvalReport cmd_eval(const std::filesystem::path& checkpoint,
                    const std::filesystem::path& split_file, const RankingPolicy& policy);

struct ExplainedExample {
  Example example;
  SaliencyMap map;
};

// All examples of the split, or only the one with `id` (DataError when no
// example has that id).
std::vector<ExplainedExample> explain_split(const LoadedSplit& loaded,
                                            const std::optional<std::string>& id);

inline constexpr int kHeatBuckets = 5;

// 0 (lightest) .. kHeatBuckets - 1 (darkest), monotone in alpha; the
// maximum alpha always lands in the darkest bucket.
int heat_bucket(double alpha, double max_alpha);

std::string render_text(const std::vector<ExplainedExample>& rows);
std::string render_html(const std::vector<ExplainedExample>& rows);
// One JSON object per example: id, tokens, aspect_span, alpha, score,
// gradient_norm, predicted, gold, gold_opinions.
std::string render_jsonl(const std::vector<ExplainedExample>& rows);

enum class SweepKind { kFraction, kLambda };

struct AblationRow {
  double value = 0.0;  // annotation fraction or lambda
  std::uint64_t seed = 0;
  EvalReport report;
  Parameters final_params;
};

// One training run per (value, seed). A seed sets both the training seed and
// the initialisation seed, so runs are paired across values. Reports use the
// final parameters on the test split.
std::vector<AblationRow> run_sweep(const Corpus& corpus, const RunConfig& config,
                                   SweepKind kind, const std::vector<double>& values,
                                   const std::vector<std::uint64_t>& seeds);

// fraction,seed,acc,f1,mrr,hr,aopc,ph_acc (first column "lambda" for
// lambda sweeps).
std::string ablation_csv(const std::vector<AblationRow>& rows, SweepKind kind);

std::vector<AblationRow> cmd_ablate(const RunConfig& config, SweepKind kind,
                                    const std::vector<double>& values,
                                    const std::vector<std::uint64_t>& seeds);

struct RobustnessReport {
  std::string transform;
  std::uint64_t seed = 0;
  std::size_t applied = 0;
  std::size_t unchanged = 0;
  ClassificationScores original;
  ClassificationScores transformed;
  std::vector<std::string> notes;

  double delta_accuracy() const { return transformed.accuracy - original.accuracy; }
  double delta_macro_f1() const { return transformed.macro_f1 - original.macro_f1; }
  std::string to_json() const;
  std::string to_table() const;
};

// Transforms are "adddiff", "revnon" and "identity". Both score sets cover
// only the examples the transform changed (every example for identity).
// Throws TransformError when nothing changed.
RobustnessReport robustness(const Parameters& params, const Vocabulary& vocabulary,
                            const std::vector<Example>& examples, const std::string& transform,
                            std::uint64_t seed, const Lexicon& lexicon = Lexicon::standard());

RobustnessReport cmd_robustness(const std::filesystem::path& checkpoint,
                                const std::filesystem::path& split_file,
                                const std::string& transform, std::uint64_t seed);

// Entry point of the iega binary. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace iega::cli

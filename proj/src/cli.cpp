#include "iega/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "iega/error.hpp"
#include "iega/io.hpp"

namespace iega::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double as_number(const json& v, const std::string& key) {
  if (!v.is_number()) {
    throw ConfigError("config key '" + key + "' expects a number, got " + v.dump());
  }
  return v.get<double>();
}

std::uint64_t as_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got " +
                      v.dump());
  }
  return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) {
    throw ConfigError("config key '" + key + "' expects true/false, got " + v.dump());
  }
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) {
    throw ConfigError("config key '" + key + "' expects a string, got " + v.dump());
  }
  return v.get<std::string>();
}

GradientFlow parse_flow(const std::string& s) {
  if (s == "second_order") return GradientFlow::kSecondOrder;
  if (s == "detached") return GradientFlow::kDetached;
  throw ConfigError("correction_mode must be 'second_order' or 'detached', got '" + s + "'");
}

// Returns false for keys that are not part of RunConfig.
bool set_key(RunConfig& c, const std::string& k, const json& v) {
  if (k == "embed_dim") c.model.embed_dim = as_count(v, k);
  else if (k == "hidden_dim") c.model.hidden_dim = as_count(v, k);
  else if (k == "max_len") c.model.max_len = as_count(v, k);
  else if (k == "init_seed") c.model.init_seed = as_count(v, k);
  else if (k == "lambda") c.train.lambda = as_number(v, k);
  else if (k == "learning_rate") c.train.learning_rate = as_number(v, k);
  else if (k == "batch_size") c.train.batch_size = as_count(v, k);
  else if (k == "epochs") c.train.epochs = as_count(v, k);
  else if (k == "seed") c.train.seed = as_count(v, k);
  else if (k == "correction_mode") c.train.correction_mode = parse_flow(as_string(v, k));
  else if (k == "annotated_fraction") c.train.annotated_fraction = as_number(v, k);
  else if (k == "k") c.policy.k = as_count(v, k);
  else if (k == "exclude_aspect_tokens") c.policy.exclude_aspect_tokens = as_bool(v, k);
  else if (k == "n_train") c.synthetic.n_train = as_count(v, k);
  else if (k == "n_valid") c.synthetic.n_valid = as_count(v, k);
  else if (k == "n_test") c.synthetic.n_test = as_count(v, k);
  else if (k == "aspects_per_sentence") c.synthetic.aspects_per_sentence = as_count(v, k);
  else if (k == "distractor_prob") c.synthetic.distractor_prob = as_number(v, k);
  else if (k == "filler_prob") c.synthetic.filler_prob = as_number(v, k);
  else if (k == "filler_cue_prob") c.synthetic.filler_cue_prob = as_number(v, k);
  else if (k == "data_seed") c.synthetic.seed = as_count(v, k);
  else if (k == "data_dir") c.data_dir = as_string(v, k);
  else if (k == "run_dir") c.run_dir = as_string(v, k);
  else return false;
  return true;
}

json config_json(const RunConfig& c) {
  json j;
  j["embed_dim"] = c.model.embed_dim;
  j["hidden_dim"] = c.model.hidden_dim;
  j["max_len"] = c.model.max_len;
  j["init_seed"] = c.model.init_seed;
  j["lambda"] = c.train.lambda;
  j["learning_rate"] = c.train.learning_rate;
  j["batch_size"] = c.train.batch_size;
  j["epochs"] = c.train.epochs;
  j["seed"] = c.train.seed;
  j["correction_mode"] = correction_mode_name(c.train.correction_mode);
  j["annotated_fraction"] = c.train.annotated_fraction;
  j["k"] = c.policy.k;
  j["exclude_aspect_tokens"] = c.policy.exclude_aspect_tokens;
  j["n_train"] = c.synthetic.n_train;
  j["n_valid"] = c.synthetic.n_valid;
  j["n_test"] = c.synthetic.n_test;
  j["aspects_per_sentence"] = c.synthetic.aspects_per_sentence;
  j["distractor_prob"] = c.synthetic.distractor_prob;
  j["filler_prob"] = c.synthetic.filler_prob;
  j["filler_cue_prob"] = c.synthetic.filler_cue_prob;
  j["data_seed"] = c.synthetic.seed;
  j["data_dir"] = c.data_dir.string();
  j["run_dir"] = c.run_dir.string();
  return j;
}

RunConfig apply_object(const json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!set_key(base, key, value)) throw ConfigError("unknown config key '" + key + "'");
  }
  return base;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Exclusive claim on a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      throw IoError("run directory " + dir.string() + " is in use (found " + path_.string() + ")");
    }
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

json scores_json(const ClassificationScores& s) {
  return {{"accuracy", s.accuracy}, {"macro_f1", s.macro_f1}};
}

std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

bool is_gold(const Example& e, std::size_t i) {
  return e.opinion_mask && i < e.opinion_mask->size() && (*e.opinion_mask)[i] != 0;
}

double max_alpha(const std::vector<double>& alpha) {
  return alpha.empty() ? 0.0 : *std::max_element(alpha.begin(), alpha.end());
}

ClassificationScores score(const Parameters& params, const Vocabulary& vocabulary,
                           const std::vector<Example>& examples) {
  std::vector<Polarity> predicted, gold;
  for (const Example& e : examples) {
    predicted.push_back(predict(vocabulary.encode(e.tokens), e.aspect, params).label);
    gold.push_back(e.polarity);
  }
  return accuracy_and_macro_f1(predicted, gold);
}

fs::path split_path(const std::optional<std::string>& input, const fs::path& data_dir,
                    const std::string& split) {
  if (input) return *input;
  return data_dir / (split + ".jsonl");
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigFailure;
  if (dynamic_cast<const IoError*>(&e)) return kIoFailure;
  if (dynamic_cast<const DataError*>(&e)) return kDataFailure;
  if (dynamic_cast<const CheckpointError*>(&e)) return kCheckpointFailure;
  if (dynamic_cast<const TransformError*>(&e)) return kTransformFailure;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kIoFailure;
  return kUnexpected;
}

void RunConfig::validate() const {
  ModelConfig m = model;
  m.vocab_size = std::max<std::size_t>(m.vocab_size, 1);
  m.validate();
  train.validate();
  policy.validate();
  synthetic.validate();
  if (data_dir.empty()) throw ConfigError("data_dir must not be empty");
}

std::string to_json(const RunConfig& config) { return config_json(config).dump(2) + "\n"; }

RunConfig apply_json(const std::string& text, RunConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return apply_object(j, std::move(base));
}

RunConfig load_run_config(const fs::path& path) {
  try {
    return apply_json(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

fs::path default_run_root() {
  const char* root = std::getenv("IEGA_RUN_ROOT");
  return (root != nullptr && *root != '\0') ? fs::path(root) : fs::path("runs");
}

fs::path resolved_run_dir(const RunConfig& config) {
  if (!config.run_dir.empty()) return config.run_dir;
  return default_run_root() / ("seed" + std::to_string(config.train.seed));
}

std::string correction_mode_name(GradientFlow flow) {
  return flow == GradientFlow::kSecondOrder ? "second_order" : "detached";
}

GenDataResult cmd_gen_data(const SyntheticSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const Corpus corpus = generate_synthetic(spec);
  make_dirs(out_dir);
  GenDataResult result;
  json counts;
  for (const char* name : {"train", "valid", "test"}) {
    const std::vector<Example>& split = corpus.split(name);
    save_jsonl(split, out_dir / (std::string(name) + ".jsonl"));
    result.counts[name] = split.size();
    counts[name] = split.size();
  }
  json manifest;
  manifest["seed"] = spec.seed;
  manifest["counts"] = counts;
  manifest["vocabulary_size"] = corpus.vocabulary.size();
  manifest["spec"] = {{"n_train", spec.n_train},
                      {"n_valid", spec.n_valid},
                      {"n_test", spec.n_test},
                      {"aspects_per_sentence", spec.aspects_per_sentence},
                      {"distractor_prob", spec.distractor_prob},
                      {"filler_prob", spec.filler_prob},
                      {"filler_cue_prob", spec.filler_cue_prob}};
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

Corpus load_corpus(const fs::path& data_dir) {
  const fs::path train_file = data_dir / "train.jsonl";
  if (!fs::exists(train_file)) {
    throw DataError("no training data at " + train_file.string() + " (run gen-data first)");
  }
  Corpus corpus;
  corpus.splits["train"] = load_jsonl(train_file);
  for (const char* name : {"valid", "test"}) {
    const fs::path file = data_dir / (std::string(name) + ".jsonl");
    if (fs::exists(file)) corpus.splits[name] = load_jsonl(file);
  }
  corpus.vocabulary = Vocabulary::build(corpus.splits["train"]);
  return corpus;
}

TrainOutcome cmd_train(const RunConfig& config) {
  config.validate();
  const Corpus corpus = load_corpus(config.data_dir);
  TrainOutcome outcome;
  outcome.run_dir = resolved_run_dir(config);
  make_dirs(outcome.run_dir);
  const RunLock lock(outcome.run_dir);

  RunConfig snapshot = config;
  snapshot.run_dir = outcome.run_dir;
  write_file_atomic(outcome.run_dir / "config.json", to_json(snapshot));

  const std::vector<std::string>& vocab = corpus.vocabulary.tokens();
  TrainHistory history;
  const auto on_epoch = [&](const EpochRecord& rec, const Parameters& current,
                            const Parameters& best) {
    history.epochs.push_back(rec);
    write_file_atomic(outcome.run_dir / "history.csv", history.to_csv());
    save_checkpoint({current, vocab}, outcome.run_dir / "checkpoint_last.json");
    save_checkpoint({best, vocab}, outcome.run_dir / "checkpoint_best.json");
  };
  outcome.result = train(corpus, config.train, config.model, on_epoch);
  const TrainResult& r = outcome.result;
  write_file_atomic(outcome.run_dir / "history.csv", r.history.to_csv());
  save_checkpoint({r.final_params, vocab}, outcome.run_dir / "checkpoint_final.json");
  save_checkpoint({r.best_params, vocab}, outcome.run_dir / "checkpoint_best.json");

  json record;
  record["seed"] = config.train.seed;
  record["init_seed"] = config.model.init_seed;
  record["data_seed"] = config.synthetic.seed;
  record["epochs"] = r.history.epochs.size();
  record["best_epoch"] = r.best_epoch;
  record["annotated_examples"] = r.annotated_examples;
  record["warnings"] = r.warnings;
  if (corpus.splits.count("valid") && !corpus.split("valid").empty()) {
    outcome.valid_report =
        evaluate(r.final_params, encode_all(corpus.split("valid"), corpus.vocabulary),
                 config.policy);
    record["valid"] = json::parse(outcome.valid_report->to_json());
  }
  write_file_atomic(outcome.run_dir / "run.json", record.dump(2) + "\n");
  return outcome;
}

LoadedSplit load_for_checkpoint(const fs::path& checkpoint, const fs::path& split_file) {
  LoadedSplit loaded;
  loaded.checkpoint = load_checkpoint(checkpoint);
  if (loaded.checkpoint.vocabulary.empty()) {
    throw CheckpointError(checkpoint.string() + ": checkpoint carries no vocabulary");
  }
  try {
    loaded.vocabulary = Vocabulary(loaded.checkpoint.vocabulary);
  } catch (const DataError& e) {
    throw CheckpointError(checkpoint.string() + ": " + e.what());
  }
  if (loaded.vocabulary.size() != loaded.checkpoint.params.config.vocab_size) {
    throw CheckpointError(checkpoint.string() + ": vocabulary and weights disagree");
  }
  loaded.examples = load_jsonl(split_file);
  return loaded;
}

EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& split_file,
                    const RankingPolicy& policy) {
  policy.validate();
  const LoadedSplit loaded = load_for_checkpoint(checkpoint, split_file);
  return evaluate(loaded.checkpoint.params, encode_all(loaded.examples, loaded.vocabulary),
                  policy);
}

std::vector<ExplainedExample> explain_split(const LoadedSplit& loaded,
                                            const std::optional<std::string>& id) {
  std::vector<ExplainedExample> rows;
  for (const Example& e : loaded.examples) {
    if (id && e.id != *id) continue;
    rows.push_back({e, explain(loaded.vocabulary.encode(e.tokens), e.aspect,
                               loaded.checkpoint.params)});
  }
  if (id && rows.empty()) throw DataError("no example with id '" + *id + "'");
  return rows;
}

int heat_bucket(double alpha, double max_alpha) {
  if (!(max_alpha > 0.0) || alpha >= max_alpha) return kHeatBuckets - 1;
  if (!(alpha > 0.0)) return 0;
  const int b = static_cast<int>(std::floor(kHeatBuckets * alpha / max_alpha));
  return std::clamp(b, 0, kHeatBuckets - 1);
}

std::string render_text(const std::vector<ExplainedExample>& rows) {
  std::ostringstream out;
  out << "# token:bucket, bucket 0 (lowest alpha) .. " << kHeatBuckets - 1
      << " (highest); [aspect], _gold opinion_\n";
  for (const ExplainedExample& row : rows) {
    const Example& e = row.example;
    const std::vector<double> alpha = row.map.alphas();
    const double top = max_alpha(alpha);
    out << e.id << "  gold=" << to_string(e.polarity)
        << " predicted=" << to_string(row.map.target_class) << "\n";
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      if (i == e.aspect.start) out << '[';
      const bool gold = is_gold(e, i);
      out << (gold ? "_" : "") << e.tokens[i] << (gold ? "_" : "") << ':'
          << heat_bucket(alpha[i], top);
      if (i + 1 == e.aspect.end) out << ']';
    }
    out << "\n\n";
  }
  return out.str();
}

std::string render_html(const std::vector<ExplainedExample>& rows) {
  static constexpr double kOpacity[kHeatBuckets] = {0.0, 0.2, 0.4, 0.65, 0.9};
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
         "<title>Token saliency</title>\n</head>\n"
         "<body style=\"font-family:sans-serif;line-height:2;margin:2em\">\n";
  for (const ExplainedExample& row : rows) {
    const Example& e = row.example;
    const std::vector<double> alpha = row.map.alphas();
    const double top = max_alpha(alpha);
    out << "<div style=\"margin-bottom:1.5em\">\n<div style=\"font-size:0.8em;color:#555\">"
        << html_escape(e.id) << " | gold " << to_string(e.polarity) << " | predicted "
        << to_string(row.map.target_class) << "</div>\n<div>";
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      if (i == e.aspect.start) out << "<b>[</b>";
      const int b = heat_bucket(alpha[i], top);
      out << "<span data-bucket=\"" << b << "\" title=\"alpha=" << fmt(alpha[i])
          << "\" style=\"padding:2px 3px;border-radius:3px;background-color:rgba(220,38,38,"
          << fmt(kOpacity[b]) << ")" << (is_gold(e, i) ? ";text-decoration:underline" : "")
          << "\">" << html_escape(e.tokens[i]) << "</span>";
      if (i + 1 == e.aspect.end) out << "<b>]</b>";
    }
    out << "</div>\n</div>\n";
  }
  out << "</body>\n</html>\n";
  return out.str();
}

std::string render_jsonl(const std::vector<ExplainedExample>& rows) {
  std::string out;
  for (const ExplainedExample& row : rows) {
    const Example& e = row.example;
    json j;
    j["id"] = e.id;
    j["tokens"] = e.tokens;
    j["aspect_span"] = {e.aspect.start, e.aspect.end};
    json alpha = json::array(), score = json::array(), norm = json::array();
    for (const TokenSaliency& t : row.map.entries) {
      alpha.push_back(t.alpha);
      score.push_back(t.score);
      norm.push_back(t.gradient_norm);
    }
    j["alpha"] = alpha;
    j["score"] = score;
    j["gradient_norm"] = norm;
    j["predicted"] = to_string(row.map.target_class);
    j["gold"] = to_string(e.polarity);
    j["gold_opinions"] = e.opinion_indices();
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<AblationRow> run_sweep(const Corpus& corpus, const RunConfig& config,
                                   SweepKind kind, const std::vector<double>& values,
                                   const std::vector<std::uint64_t>& seeds) {
  config.validate();
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  const std::vector<EncodedExample> test = encode_all(corpus.split("test"), corpus.vocabulary);
  std::vector<AblationRow> rows;
  for (double value : values) {
    for (std::uint64_t seed : seeds) {
      RunConfig c = config;
      (kind == SweepKind::kFraction ? c.train.annotated_fraction : c.train.lambda) = value;
      c.train.seed = seed;
      c.model.init_seed = seed;
      const TrainResult r = train(corpus, c.train, c.model);
      rows.push_back({value, seed, evaluate(r.final_params, test, c.policy), r.final_params});
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows, SweepKind kind) {
  std::string out = kind == SweepKind::kFraction ? "fraction" : "lambda";
  out += ",seed,acc,f1,mrr,hr,aopc,ph_acc\n";
  for (const AblationRow& r : rows) {
    const EvalReport& e = r.report;
    out += fmt(r.value) + "," + std::to_string(r.seed) + "," + fmt(e.accuracy) + "," +
           fmt(e.macro_f1) + "," + fmt(e.mrr) + "," + fmt(e.hit_rate) + "," + fmt(e.aopc) +
           "," + fmt(e.post_hoc_accuracy) + "\n";
  }
  return out;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config, SweepKind kind,
                                    const std::vector<double>& values,
                                    const std::vector<std::uint64_t>& seeds) {
  config.validate();
  return run_sweep(load_corpus(config.data_dir), config, kind, values, seeds);
}

std::string RobustnessReport::to_json() const {
  json j;
  j["transform"] = transform;
  j["parameters"] = {{"seed", seed}, {"lexicon", "standard"}};
  j["applied"] = applied;
  j["unchanged"] = unchanged;
  j["original"] = scores_json(original);
  j["transformed"] = scores_json(transformed);
  j["delta"] = {{"accuracy", delta_accuracy()}, {"macro_f1", delta_macro_f1()}};
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

std::string RobustnessReport::to_table() const {
  char buf[256];
  std::string out = "transform " + transform + " (seed " + std::to_string(seed) + "), " +
                    std::to_string(applied) + " changed, " + std::to_string(unchanged) +
                    " unchanged\n";
  std::snprintf(buf, sizeof buf, "%-10s %10s %12s %8s\n", "metric", "original", "transformed",
                "delta");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %10.4f %12.4f %+8.4f\n", "accuracy", original.accuracy,
                transformed.accuracy, delta_accuracy());
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %10.4f %12.4f %+8.4f\n", "macro_f1", original.macro_f1,
                transformed.macro_f1, delta_macro_f1());
  out += buf;
  return out;
}

RobustnessReport robustness(const Parameters& params, const Vocabulary& vocabulary,
                            const std::vector<Example>& examples, const std::string& transform,
                            std::uint64_t seed, const Lexicon& lexicon) {
  RobustnessReport report;
  report.transform = transform;
  report.seed = seed;
  std::vector<Example> before, after;
  const auto keep = [&](const Example& original, const TransformResult& t) {
    if (!t.applied) {
      ++report.unchanged;
      return;
    }
    before.push_back(original);
    after.push_back(t.example);
    if (!t.note.empty()) report.notes.push_back(original.id + ": " + t.note);
  };
  if (transform == "identity") {
    for (const Example& e : examples) keep(e, {e, true, ""});
  } else if (transform == "adddiff") {
    std::mt19937_64 rng(seed);
    for (const Example& e : examples) {
      try {
        keep(e, add_diff(e, lexicon, rng));
      } catch (const TransformError& err) {
        keep(e, {e, false, err.what()});
      }
    }
  } else if (transform == "revnon") {
    for (const std::vector<std::size_t>& group : group_by_sentence(examples)) {
      std::vector<Example> members;
      for (std::size_t i : group) members.push_back(examples[i]);
      for (std::size_t t = 0; t < members.size(); ++t) {
        keep(members[t], rev_non(members, t, lexicon));
      }
    }
  } else {
    throw ConfigError("unknown transform '" + transform + "' (adddiff, revnon, identity)");
  }
  report.applied = before.size();
  if (before.empty()) {
    throw TransformError("transform '" + transform + "' applies to no example of the split");
  }
  report.original = score(params, vocabulary, before);
  report.transformed = score(params, vocabulary, after);
  return report;
}

RobustnessReport cmd_robustness(const fs::path& checkpoint, const fs::path& split_file,
                                const std::string& transform, std::uint64_t seed) {
  const LoadedSplit loaded = load_for_checkpoint(checkpoint, split_file);
  return robustness(loaded.checkpoint.params, loaded.vocabulary, loaded.examples, transform,
                    seed);
}

namespace {

// Config keys exposed as --dashed-flags on the commands that take a config.
struct ConfigFlags {
  std::optional<std::string> file;
  std::vector<std::string> sets;
  std::map<std::string, std::optional<std::string>> values;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", file, "Flat JSON run config");
    cmd.add_option("--set", sets, "Override any config key: key=value")->allow_extra_args(false);
    const json keys = config_json(RunConfig{});
    for (const auto& [key, unused] : keys.items()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      cmd.add_option("--" + flag, values[key], "Override config key " + key);
    }
  }

  RunConfig resolve() const {
    RunConfig c = file ? load_run_config(*file) : RunConfig{};
    json overrides = json::object();
    const auto put = [&](const std::string& key, const std::string& raw) {
      json v;
      try {
        v = json::parse(raw);
      } catch (const json::parse_error&) {
        v = raw;
      }
      if ((key == "data_dir" || key == "run_dir" || key == "correction_mode")) v = raw;
      overrides[key] = v;
    };
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      put(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [key, value] : values) {
      if (value) put(key, *value);
    }
    c = apply_object(overrides, std::move(c));
    c.validate();
    return c;
  }
};

struct SplitFlags {
  std::string checkpoint;
  std::string data_dir = "data";
  std::string split = "test";
  std::optional<std::string> input;

  void attach(CLI::App& cmd) {
    cmd.add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    cmd.add_option("--data-dir", data_dir, "Directory holding <split>.jsonl");
    cmd.add_option("--split", split, "Split name");
    cmd.add_option("--input", input, "JSONL file, overrides --data-dir/--split");
  }
  fs::path file() const { return split_path(input, data_dir, split); }
};

void write_or_print(const std::optional<std::string>& path, const std::string& content,
                    std::ostream& out) {
  if (path) {
    write_file_atomic(*path, content);
  } else {
    out << content;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Aspect sentiment classification with saliency supervision"};
  app.require_subcommand(1);
  std::function<void()> action;

  // gen-data
  ConfigFlags gen_flags;
  std::optional<std::string> gen_out;
  bool gen_json = false;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen_flags.attach(*gen);
  gen->add_option("--out", gen_out, "Output directory (default: data_dir)");
  gen->add_flag("--json", gen_json, "Print the manifest counts as JSON");
  gen->callback([&] {
    action = [&] {
      const RunConfig c = gen_flags.resolve();
      const fs::path dir = gen_out ? fs::path(*gen_out) : c.data_dir;
      const GenDataResult r = cmd_gen_data(c.synthetic, dir);
      if (gen_json) {
        out << json(r.counts).dump() << "\n";
      } else {
        for (const auto& [name, n] : r.counts) out << name << ": " << n << " examples\n";
        out << "written to " << dir.string() << "\n";
      }
    };
  });

  // import-towe
  std::string towe_in, towe_out;
  CLI::App* towe = app.add_subcommand("import-towe", "Convert TOWE-style TSV to JSONL");
  towe->add_option("--input", towe_in, "TSV file")->required();
  towe->add_option("--out", towe_out, "JSONL output")->required();
  towe->callback([&] {
    action = [&] {
      const ImportResult r = import_towe(towe_in);
      save_jsonl(r.examples, towe_out);
      for (const std::string& s : r.skipped) err << "skipped " << s << "\n";
      out << r.examples.size() << " examples written, " << r.skipped.size() << " skipped\n";
    };
  });

  // train
  ConfigFlags train_flags;
  bool train_json = false;
  CLI::App* tr = app.add_subcommand("train", "Train a model into a run directory");
  train_flags.attach(*tr);
  tr->add_flag("--json", train_json, "Print the final validation report as JSON");
  tr->callback([&] {
    action = [&] {
      const TrainOutcome o = cmd_train(train_flags.resolve());
      for (const std::string& w : o.result.warnings) err << "warning: " << w << "\n";
      if (train_json) {
        out << (o.valid_report ? o.valid_report->to_json() : std::string("{}\n"));
        return;
      }
      out << "run directory: " << o.run_dir.string() << "\n";
      out << "best epoch: " << o.result.best_epoch << "\n";
      if (o.valid_report) out << "final validation metrics\n" << o.valid_report->to_table();
    };
  });

  // eval
  SplitFlags eval_split;
  RankingPolicy eval_policy;
  bool eval_include_aspect = false, eval_json = false;
  std::optional<std::string> eval_details;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_split.attach(*ev);
  ev->add_option("--k", eval_policy.k, "Cut-off for HR, AOPC and post-hoc accuracy");
  ev->add_flag("--include-aspect-tokens", eval_include_aspect, "Rank aspect tokens too");
  ev->add_flag("--json", eval_json, "Print the report as JSON");
  ev->add_option("--details", eval_details, "Write per-example JSONL here");
  ev->callback([&] {
    action = [&] {
      eval_policy.exclude_aspect_tokens = !eval_include_aspect;
      const EvalReport report = cmd_eval(eval_split.checkpoint, eval_split.file(), eval_policy);
      out << (eval_json ? report.to_json() : report.to_table());
      if (eval_details) {
        const LoadedSplit loaded = load_for_checkpoint(eval_split.checkpoint, eval_split.file());
        std::string lines;
        for (const std::string& l :
             example_details(loaded.checkpoint.params,
                             encode_all(loaded.examples, loaded.vocabulary), eval_policy)) {
          lines += l + "\n";
        }
        write_file_atomic(*eval_details, lines);
      }
    };
  });

  // explain
  SplitFlags explain_split_flags;
  std::optional<std::string> explain_id, explain_out;
  std::string explain_format = "text";
  std::size_t explain_limit = 0;
  CLI::App* ex = app.add_subcommand("explain", "Render token saliency");
  explain_split_flags.attach(*ex);
  ex->add_option("--id", explain_id, "Only this example id");
  ex->add_option("--format", explain_format, "text, html or jsonl")
      ->check(CLI::IsMember({"text", "html", "jsonl"}));
  ex->add_option("--limit", explain_limit, "At most this many examples (0: all)");
  ex->add_option("--out", explain_out, "Output file (default: standard output)");
  ex->callback([&] {
    action = [&] {
      const LoadedSplit loaded =
          load_for_checkpoint(explain_split_flags.checkpoint, explain_split_flags.file());
      std::vector<ExplainedExample> rows = explain_split(loaded, explain_id);
      if (explain_limit > 0 && rows.size() > explain_limit) rows.resize(explain_limit);
      const std::string content = explain_format == "html"    ? render_html(rows)
                                  : explain_format == "jsonl" ? render_jsonl(rows)
                                                              : render_text(rows);
      write_or_print(explain_out, content, out);
    };
  });

  // ablate
  ConfigFlags ablate_flags;
  std::vector<double> fractions, lambdas;
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::string> ablate_out;
  CLI::App* ab = app.add_subcommand("ablate", "Sweep annotation fractions or lambdas");
  ablate_flags.attach(*ab);
  CLI::Option* fr = ab->add_option("--fractions", fractions, "e.g. 0.1,0.2,0.5,1.0")
                        ->delimiter(',');
  CLI::Option* la = ab->add_option("--lambdas", lambdas, "e.g. 0,0.01,0.1")->delimiter(',');
  fr->excludes(la);
  ab->add_option("--seeds", seeds, "Paired seeds, e.g. 0,1,2,3,4")->delimiter(',');
  ab->add_option("--out", ablate_out, "CSV output (default: standard output)");
  ab->callback([&] {
    action = [&] {
      const bool by_lambda = !lambdas.empty();
      const SweepKind kind = by_lambda ? SweepKind::kLambda : SweepKind::kFraction;
      std::vector<double> values = by_lambda ? lambdas : fractions;
      if (values.empty()) values = {0.1, 0.2, 0.5, 1.0};
      const auto rows = cmd_ablate(ablate_flags.resolve(), kind, values, seeds);
      write_or_print(ablate_out, ablation_csv(rows, kind), out);
    };
  });

  // robustness
  SplitFlags rob_split;
  std::string rob_transform;
  std::uint64_t rob_seed = 0;
  bool rob_json = false;
  CLI::App* rb = app.add_subcommand("robustness", "Accuracy before and after a transform");
  rob_split.attach(*rb);
  rb->add_option("--transform", rob_transform, "adddiff, revnon or identity")->required();
  rb->add_option("--seed", rob_seed, "Seed for randomised transforms");
  rb->add_flag("--json", rob_json, "Print the report as JSON");
  rb->callback([&] {
    action = [&] {
      const RobustnessReport r =
          cmd_robustness(rob_split.checkpoint, rob_split.file(), rob_transform, rob_seed);
      out << (rob_json ? r.to_json() : r.to_table());
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kConfigFailure;
  }
  try {
    if (action) action();
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace iega::cli

#include "iega/cli.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "iega/error.hpp"
#include "iega/io.hpp"

namespace iega::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "iega");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("iega_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    const Outcome gen = invoke({"gen-data", "--out", data().string(), "--n-train", "120",
                                "--n-valid", "30", "--n-test", "30", "--data-seed", "5"});
    ASSERT_EQ(gen.code, 0) << gen.err;
    const Outcome tr = invoke({"train", "--data-dir", data().string(), "--run-dir",
                               run_dir().string(), "--epochs", "2", "--embed-dim", "8",
                               "--hidden-dim", "8", "--annotated-fraction", "0.5"});
    ASSERT_EQ(tr.code, 0) << tr.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path data() { return root_ / "data"; }
  static fs::path run_dir() { return root_ / "run"; }
  static std::string checkpoint() { return (run_dir() / "checkpoint_final.json").string(); }

  static fs::path root_;
};

fs::path CliTest::root_;

TEST(ExitCodes, EachErrorCategoryHasItsOwnCode) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), 2);
  EXPECT_EQ(exit_code_for(IoError("x")), 3);
  EXPECT_EQ(exit_code_for(DataError("x")), 4);
  EXPECT_EQ(exit_code_for(CheckpointError("x")), 5);
  EXPECT_EQ(exit_code_for(TransformError("x")), 6);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), 1);
}

TEST(RunConfigTest, DefaultsMatchTheMethodSettings) {
  const RunConfig c;
  EXPECT_DOUBLE_EQ(c.train.lambda, 0.01);
  EXPECT_EQ(c.policy.k, 5u);
  EXPECT_EQ(c.train.correction_mode, GradientFlow::kSecondOrder);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfigTest, JsonRoundTripIsExact) {
  RunConfig c;
  c.train.lambda = 0.1 + 0.2;
  c.train.correction_mode = GradientFlow::kDetached;
  c.synthetic.seed = 77;
  c.policy.exclude_aspect_tokens = false;
  c.run_dir = "some/where";
  const RunConfig back = apply_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.train.lambda, 0.1 + 0.2);
  EXPECT_EQ(back.train.correction_mode, GradientFlow::kDetached);
}

TEST(RunConfigTest, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(apply_json(R"({"lamda": 0.1})"), ConfigError);
  EXPECT_THROW(apply_json(R"({"epochs": -3})"), ConfigError);
  EXPECT_THROW(apply_json(R"({"epochs": "ten"})"), ConfigError);
  EXPECT_THROW(apply_json(R"({"correction_mode": "third_order"})"), ConfigError);
  EXPECT_THROW(apply_json("[1, 2]"), ConfigError);
  EXPECT_THROW(apply_json("{not json"), ConfigError);
}

TEST(RunConfigTest, PartialFileKeepsDefaults) {
  const RunConfig c = apply_json(R"({"lambda": 0.5})");
  EXPECT_DOUBLE_EQ(c.train.lambda, 0.5);
  EXPECT_EQ(c.train.epochs, RunConfig{}.train.epochs);
}

TEST(RunConfigTest, RunRootComesFromEnvironment) {
  ::setenv("IEGA_RUN_ROOT", "/tmp/iega-root", 1);
  RunConfig c;
  c.train.seed = 3;
  EXPECT_EQ(resolved_run_dir(c), fs::path("/tmp/iega-root/seed3"));
  ::unsetenv("IEGA_RUN_ROOT");
  EXPECT_EQ(resolved_run_dir(c), fs::path("runs/seed3"));
  c.run_dir = "explicit";
  EXPECT_EQ(resolved_run_dir(c), fs::path("explicit"));
}

TEST(HeatBucket, MonotoneWithMaximumDarkest) {
  EXPECT_EQ(heat_bucket(0.4, 0.4), kHeatBuckets - 1);
  EXPECT_EQ(heat_bucket(0.0, 0.4), 0);
  int last = 0;
  for (int i = 0; i <= 100; ++i) {
    const int b = heat_bucket(i / 100.0, 1.0);
    EXPECT_GE(b, last);
    EXPECT_GE(b, 0);
    EXPECT_LT(b, kHeatBuckets);
    last = b;
  }
}

TEST_F(CliTest, GenDataWritesSplitsAndManifest) {
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(data() / f)) << f;
  }
  const json m = json::parse(read_file(data() / "manifest.json"));
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["counts"]["train"], 120);
  EXPECT_EQ(load_jsonl(data() / "test.jsonl").size(), 30u);
}

TEST_F(CliTest, GenDataIsByteIdenticalForOneSeed) {
  const fs::path again = root_ / "data_again";
  ASSERT_EQ(invoke({"gen-data", "--out", again.string(), "--n-train", "120", "--n-valid", "30",
                    "--n-test", "30", "--data-seed", "5"})
                .code,
            0);
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "manifest.json"}) {
    EXPECT_EQ(read_file(data() / f), read_file(again / f)) << f;
  }
}

TEST_F(CliTest, GenDataIntoUnwritablePathIsIoError) {
  const fs::path blocker = root_ / "a_file";
  write_file_atomic(blocker, "x");
  const Outcome o = invoke({"gen-data", "--out", (blocker / "sub").string(), "--n-train", "10"});
  EXPECT_EQ(o.code, 3);
  EXPECT_FALSE(o.err.empty());
}

TEST_F(CliTest, InvalidConfigIsExitTwo) {
  EXPECT_EQ(
      invoke({"gen-data", "--out", (root_ / "x").string(), "--distractor-prob", "2"}).code, 2);
  EXPECT_EQ(invoke({"train", "--data-dir", data().string(), "--run-dir",
                    (root_ / "bad").string(), "--learning-rate", "-1"})
                .code,
            2);
  EXPECT_EQ(invoke({"train", "--set", "nonsense=1"}).code, 2);
  EXPECT_EQ(invoke({"no-such-command"}).code, 2);
}

TEST_F(CliTest, TrainWithoutDataIsExitFour) {
  const Outcome o = invoke({"train", "--data-dir", (root_ / "missing").string(), "--run-dir",
                            (root_ / "r_missing").string()});
  EXPECT_EQ(o.code, 4);
}

TEST_F(CliTest, TrainWritesTheRunDirectory) {
  for (const char* f : {"config.json", "history.csv", "checkpoint_last.json",
                        "checkpoint_best.json", "checkpoint_final.json", "run.json"}) {
    EXPECT_TRUE(fs::exists(run_dir() / f)) << f;
  }
  for (const auto& entry : fs::directory_iterator(run_dir())) {
    EXPECT_NE(entry.path().extension(), ".tmp");
    EXPECT_NE(entry.path().filename(), ".lock");
  }
  const json rec = json::parse(read_file(run_dir() / "run.json"));
  EXPECT_EQ(rec["epochs"], 2);
  EXPECT_TRUE(rec.contains("seed"));
  EXPECT_TRUE(rec.contains("init_seed"));
  EXPECT_TRUE(rec.contains("valid"));
  const RunConfig snap = load_run_config(run_dir() / "config.json");
  EXPECT_EQ(snap.train.epochs, 2u);
  EXPECT_DOUBLE_EQ(snap.train.annotated_fraction, 0.5);
  EXPECT_EQ(snap.run_dir, run_dir());
}

TEST_F(CliTest, LastCheckpointMatchesFinalEpoch) {
  const Checkpoint last = load_checkpoint(run_dir() / "checkpoint_last.json");
  const Checkpoint final_ = load_checkpoint(run_dir() / "checkpoint_final.json");
  EXPECT_EQ(last.params, final_.params);
  EXPECT_EQ(last.vocabulary, final_.vocabulary);
}

TEST_F(CliTest, SnapshotReproducesHistoryExactly) {
  const fs::path other = root_ / "rerun";
  const Outcome o = invoke({"train", "--config", (run_dir() / "config.json").string(),
                            "--run-dir", other.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(read_file(other / "history.csv"), read_file(run_dir() / "history.csv"));
  EXPECT_EQ(read_file(other / "checkpoint_final.json"),
            read_file(run_dir() / "checkpoint_final.json"));
}

TEST_F(CliTest, LambdaZeroFlagIsThePlainClassifier) {
  RunConfig c;
  c.data_dir = data();
  c.run_dir = root_ / "plain";
  c.train.epochs = 1;
  c.model.embed_dim = 8;
  c.model.hidden_dim = 8;
  c.train.lambda = 0.0;
  const TrainOutcome flagged = cmd_train(c);
  const Corpus corpus = load_corpus(data());
  TrainConfig tc = c.train;
  tc.annotated_fraction = 0.0;
  const TrainResult plain = train(corpus, tc, c.model);
  EXPECT_EQ(flagged.result.final_params, plain.final_params);
  EXPECT_EQ(flagged.result.history.to_csv(), plain.history.to_csv());
}

TEST_F(CliTest, LockedRunDirectoryIsRefused) {
  const fs::path locked = root_ / "locked";
  fs::create_directories(locked);
  write_file_atomic(locked / ".lock", "");
  const Outcome o = invoke({"train", "--data-dir", data().string(), "--run-dir", locked.string(),
                            "--epochs", "1"});
  EXPECT_EQ(o.code, 3);
  EXPECT_FALSE(fs::exists(locked / "history.csv"));
}

TEST_F(CliTest, EvalIsReproducibleAndReportsDefaultK) {
  const Outcome a = invoke({"eval", "--checkpoint", checkpoint(), "--data-dir", data().string(),
                            "--json"});
  const Outcome b = invoke({"eval", "--checkpoint", checkpoint(), "--data-dir", data().string(),
                            "--json"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const json j = json::parse(a.out);
  EXPECT_EQ(j["policy"]["k"], 5);
  for (const char* key : {"accuracy", "macro_f1", "mrr", "hit_rate", "aopc",
                          "post_hoc_accuracy", "n_examples", "aopc_variant"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["n_examples"], 30);
}

TEST_F(CliTest, EvalTableAndDetails) {
  const fs::path details = root_ / "details.jsonl";
  const Outcome o = invoke({"eval", "--checkpoint", checkpoint(), "--data-dir", data().string(),
                            "--k", "3", "--details", details.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("hr@3"), std::string::npos);
  std::istringstream lines(read_file(details));
  std::size_t n = 0;
  for (std::string line; std::getline(lines, line);) {
    EXPECT_TRUE(json::parse(line).contains("alpha"));
    ++n;
  }
  EXPECT_EQ(n, 30u);
}

TEST_F(CliTest, MismatchedCheckpointIsExitFive) {
  json j = json::parse(read_file(checkpoint()));
  j["vocabulary"].push_back("an-extra-word");
  const fs::path bad = root_ / "bad_checkpoint.json";
  write_file_atomic(bad, j.dump());
  EXPECT_EQ(invoke({"eval", "--checkpoint", bad.string(), "--data-dir", data().string()}).code, 5);
  write_file_atomic(bad, "{\"format\": \"something else\"}");
  EXPECT_EQ(invoke({"eval", "--checkpoint", bad.string(), "--data-dir", data().string()}).code, 5);
}

TEST_F(CliTest, ExplainTextMarksAspectAndGoldOpinion) {
  const Example first = load_jsonl(data() / "test.jsonl").front();
  const Outcome o = invoke({"explain", "--checkpoint", checkpoint(), "--data-dir",
                            data().string(), "--id", first.id});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("[" + first.tokens[first.aspect.start] + ":"), std::string::npos);
  const std::size_t gold = first.opinion_indices().front();
  EXPECT_NE(o.out.find("_" + first.tokens[gold] + "_:"), std::string::npos);
  EXPECT_NE(o.out.find(":" + std::to_string(kHeatBuckets - 1)), std::string::npos);
}

TEST_F(CliTest, UniformSaliencyPutsEveryTokenInOneBucket) {
  Example e;
  e.id = "u";
  e.tokens = {"a", "b", "c"};
  e.aspect = {0, 1};
  SaliencyMap m;
  m.entries.resize(3);
  for (auto& t : m.entries) t.alpha = 1.0 / 3.0;
  const std::string text = render_text({{e, m}});
  EXPECT_NE(text.find("[a:4] b:4 c:4"), std::string::npos);
}

TEST_F(CliTest, ExplainUnknownIdIsDataError) {
  const Outcome o = invoke({"explain", "--checkpoint", checkpoint(), "--data-dir",
                            data().string(), "--id", "does-not-exist"});
  EXPECT_EQ(o.code, 4);
}

TEST_F(CliTest, HtmlIsSelfContained) {
  const fs::path page = root_ / "page.html";
  const Outcome o = invoke({"explain", "--checkpoint", checkpoint(), "--data-dir",
                            data().string(), "--format", "html", "--out", page.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string html = read_file(page);
  EXPECT_EQ(html.rfind("<!DOCTYPE html>", 0), 0u);
  for (const char* banned : {"http://", "https://", "<script", "<link", "src=", "url("}) {
    EXPECT_EQ(html.find(banned), std::string::npos) << banned;
  }
  EXPECT_NE(html.find("text-decoration:underline"), std::string::npos);
  EXPECT_NE(html.find("data-bucket=\"4\""), std::string::npos);
}

TEST_F(CliTest, SaliencyExportHasOneRecordPerExample) {
  const Outcome o = invoke({"explain", "--checkpoint", checkpoint(), "--data-dir",
                            data().string(), "--format", "jsonl"});
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream lines(o.out);
  std::size_t n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    const json j = json::parse(line);
    const std::size_t len = j["tokens"].size();
    EXPECT_EQ(j["alpha"].size(), len);
    EXPECT_EQ(j["score"].size(), len);
    EXPECT_EQ(j["gradient_norm"].size(), len);
    double sum = 0.0;
    for (double a : j["alpha"]) sum += a;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_TRUE(j.contains("predicted"));
    EXPECT_TRUE(j.contains("gold"));
  }
  EXPECT_EQ(n, 30u);
}

TEST_F(CliTest, AblateEmitsOneRowPerFractionAndSeed) {
  const Outcome o = invoke({"ablate", "--data-dir", data().string(), "--epochs", "1",
                            "--embed-dim", "4", "--hidden-dim", "4", "--fractions",
                            "0.1,0.2,0.5,1.0", "--seeds", "0,1"});
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream lines(o.out);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "fraction,seed,acc,f1,mrr,hr,aopc,ph_acc");
  std::size_t rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  EXPECT_EQ(rows, 8u);
}

TEST_F(CliTest, AblateLambdaSweepHeader) {
  const Outcome o = invoke({"ablate", "--data-dir", data().string(), "--epochs", "1",
                            "--embed-dim", "4", "--hidden-dim", "4", "--lambdas", "0,0.01"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out.rfind("lambda,seed,acc,f1,mrr,hr,aopc,ph_acc\n", 0), 0u);
}

TEST_F(CliTest, FullFractionUsesEveryAnnotation) {
  const Corpus corpus = load_corpus(data());
  std::size_t with_opinions = 0;
  for (const Example& e : corpus.split("train")) with_opinions += e.has_opinions() ? 1 : 0;
  RunConfig c;
  c.train.epochs = 1;
  c.train.annotated_fraction = 1.0;
  c.model.embed_dim = 4;
  c.model.hidden_dim = 4;
  EXPECT_EQ(train(corpus, c.train, c.model).annotated_examples, with_opinions);
}

TEST_F(CliTest, IdentityTransformHasZeroDelta) {
  const Outcome o = invoke({"robustness", "--checkpoint", checkpoint(), "--data-dir",
                            data().string(), "--transform", "identity", "--json"});
  ASSERT_EQ(o.code, 0) << o.err;
  const json j = json::parse(o.out);
  EXPECT_EQ(j["delta"]["accuracy"], 0.0);
  EXPECT_EQ(j["delta"]["macro_f1"], 0.0);
  EXPECT_EQ(j["applied"], 30);
}

TEST_F(CliTest, AddDiffReportRecordsProvenance) {
  const Outcome o = invoke({"robustness", "--checkpoint", checkpoint(), "--data-dir",
                            data().string(), "--transform", "adddiff", "--seed", "4", "--json"});
  ASSERT_EQ(o.code, 0) << o.err;
  const json j = json::parse(o.out);
  EXPECT_EQ(j["transform"], "adddiff");
  EXPECT_EQ(j["parameters"]["seed"], 4);
  EXPECT_EQ(j["applied"], 30);
  EXPECT_NEAR(j["delta"]["accuracy"].get<double>(),
              j["transformed"]["accuracy"].get<double>() - j["original"]["accuracy"].get<double>(),
              1e-15);
}

TEST_F(CliTest, AddDiffLengthensEverySentence) {
  std::mt19937_64 rng(0);
  for (const Example& e : load_jsonl(data() / "test.jsonl")) {
    EXPECT_GT(add_diff(e, Lexicon::standard(), rng).example.tokens.size(), e.tokens.size());
  }
}

TEST_F(CliTest, InapplicableTransformIsExitSix) {
  std::vector<Example> singles;
  for (const std::vector<std::size_t>& g : group_by_sentence(load_jsonl(data() / "test.jsonl"))) {
    if (g.size() == 1) singles.push_back(load_jsonl(data() / "test.jsonl")[g.front()]);
  }
  ASSERT_FALSE(singles.empty());
  const fs::path file = root_ / "singles.jsonl";
  save_jsonl(singles, file);
  const Outcome o = invoke({"robustness", "--checkpoint", checkpoint(), "--input", file.string(),
                            "--transform", "revnon"});
  EXPECT_EQ(o.code, 6);
  EXPECT_EQ(invoke({"robustness", "--checkpoint", checkpoint(), "--input", file.string(),
                    "--transform", "shuffle"})
                .code,
            2);
}

TEST_F(CliTest, ImportToweMissingFileIsIoError) {
  EXPECT_EQ(invoke({"import-towe", "--input", (root_ / "nope.tsv").string(), "--out",
                    (root_ / "out.jsonl").string()})
                .code,
            3);
}

}  // namespace
}  // namespace iega::cli

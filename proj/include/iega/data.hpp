#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "iega/types.hpp"

namespace iega {

// One (sentence, aspect) pair.
struct Example {
  std::string id;
  std::vector<std::string> tokens;
  AspectSpan aspect;
  Polarity polarity = Polarity::kPositive;
  // y^o per token. Kept for evaluation even when `annotated` is false; only
  // annotated examples expose it to the training loss.
  std::optional<std::vector<int>> opinion_mask;
  bool annotated = false;

  std::vector<std::size_t> opinion_indices() const;
  bool has_opinions() const;

  // Throws DataError naming the broken invariant.
  void validate() const;
  bool operator==(const Example&) const = default;
};

class Vocabulary {
 public:
  static constexpr std::size_t kUnknownId = 0;
  static constexpr const char* kUnknownToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  // Tokens in first-occurrence order after the reserved unknown entry.
  static Vocabulary build(const std::vector<Example>& examples);

  std::size_t id_of(const std::string& token) const;
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

struct Corpus {
  std::map<std::string, std::vector<Example>> splits;
  Vocabulary vocabulary;

  const std::vector<Example>& split(const std::string& name) const;
};

// Example in model-ready form.
struct EncodedExample {
  std::vector<std::size_t> ids;
  AspectSpan aspect;
  Polarity gold = Polarity::kPositive;
  std::vector<std::size_t> gold_opinions;  // from the (possibly hidden) mask
  std::optional<std::vector<int>> training_mask;  // annotated examples only
};

EncodedExample encode(const Example& example, const Vocabulary& vocabulary);
std::vector<EncodedExample> encode_all(const std::vector<Example>& examples,
                                       const Vocabulary& vocabulary);

// JSONL with fields id, tokens, aspect_span, polarity, opinion_indices
// (optional) and annotated. Malformed lines raise DataError with the line
// number.
std::vector<Example> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::vector<Example>& examples, const std::filesystem::path& path);
std::string example_to_json_line(const Example& example);
Example example_from_json_line(const std::string& line);

struct ImportResult {
  std::vector<Example> examples;
  std::vector<std::string> skipped;  // "line N: reason"
};

// TOWE-style TSV: [id] sentence, target tags, opinion tags, polarity.
// Tag columns hold one tag per whitespace token, either bare (B/I/O) or
// attached as word\TAG.
ImportResult import_towe(const std::filesystem::path& path);

// Keeps annotations on a seeded uniform ceil(p * n) subset of the examples
// that have opinion words. Nested in p for a fixed seed.
std::vector<Example> subsample_annotations(const std::vector<Example>& split, double fraction,
                                           std::uint64_t seed);

// Word lists for one aspect category. positive[i] and negative[i] are
// antonyms.
struct AspectCategory {
  std::string name;
  std::vector<std::string> aspects;  // may contain multi-word terms
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::string> neutral;

  const std::vector<std::string>& opinions(Polarity p) const;
};

struct Lexicon {
  std::vector<AspectCategory> categories;
  std::vector<std::string> filler_clauses;

  static Lexicon standard();

  // Throws ConfigError when opinion, aspect and filler vocabularies overlap.
  void validate() const;
  std::optional<Polarity> polarity_of(const std::string& word) const;
  std::optional<std::size_t> category_of_opinion(const std::string& word) const;
  std::optional<std::string> antonym(const std::string& word) const;
};

struct SyntheticSpec {
  std::size_t n_train = 2000;
  std::size_t n_valid = 500;
  std::size_t n_test = 500;
  std::size_t aspects_per_sentence = 3;  // upper bound, 1..3
  double distractor_prob = 0.5;
  double filler_prob = 1.0;
  // Probability that the filler clause is drawn from the clauses tied to the
  // first aspect's polarity (clause i belongs to polarity i % 3). The words
  // carry no sentiment, so this plants a label-correlated shortcut.
  double filler_cue_prob = 0.8;
  std::uint64_t seed = 1;
  Lexicon lexicon = Lexicon::standard();

  void validate() const;
};

// Corpus of templated review sentences, one Example per (sentence, aspect)
// with the governing opinion word marked. Every example is annotated.
Corpus generate_synthetic(const SyntheticSpec& spec);
Corpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Indices of examples sharing one sentence, in first-occurrence order.
std::vector<std::vector<std::size_t>> group_by_sentence(const std::vector<Example>& examples);

struct TransformResult {
  Example example;
  bool applied = false;
  std::string note;
};

// Appends "but the <aspect> is <opinion>" with a fresh aspect from an unused
// category and an opinion opposite to the target polarity. Target span,
// label and mask content are unchanged. Throws TransformError when no
// opposite opinion exists.
TransformResult add_diff(const Example& example, const Lexicon& lexicon, std::mt19937_64& rng);

// Swaps the opinion words of non-target aspects that share the target's
// polarity for their antonyms. `group` holds every example of one sentence;
// `target` indexes into it. Single-aspect sentences come back unchanged
// with applied = false.
TransformResult rev_non(const std::vector<Example>& group, std::size_t target,
                        const Lexicon& lexicon);

}  // namespace iega

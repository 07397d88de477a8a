#include "iega/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iega/error.hpp"
#include "iega/io.hpp"

namespace iega {

using json = nlohmann::json;

namespace {

std::vector<std::string> split_whitespace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& items) {
  std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

bool bernoulli(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

template <class T>
void fisher_yates(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> dist(0, i - 1);
    std::swap(items[i - 1], items[dist(rng)]);
  }
}

Polarity opposite_of(Polarity p, std::mt19937_64& rng) {
  switch (p) {
    case Polarity::kPositive:
      return Polarity::kNegative;
    case Polarity::kNegative:
      return Polarity::kPositive;
    case Polarity::kNeutral:
      return bernoulli(rng, 0.5) ? Polarity::kPositive : Polarity::kNegative;
  }
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Example / Vocabulary / Corpus

std::vector<std::size_t> Example::opinion_indices() const {
  std::vector<std::size_t> out;
  if (!opinion_mask) return out;
  for (std::size_t i = 0; i < opinion_mask->size(); ++i) {
    if ((*opinion_mask)[i] != 0) out.push_back(i);
  }
  return out;
}

bool Example::has_opinions() const { return !opinion_indices().empty(); }

void Example::validate() const {
  const std::string where = id.empty() ? "example" : "example '" + id + "'";
  if (tokens.empty()) throw DataError(where + ": no tokens");
  if (aspect.start >= aspect.end) throw DataError(where + ": aspect span end <= start");
  if (aspect.end > tokens.size()) throw DataError(where + ": aspect span past end of tokens");
  if (opinion_mask) {
    if (opinion_mask->size() != tokens.size()) {
      throw DataError(where + ": opinion mask length differs from token count");
    }
    for (int v : *opinion_mask) {
      if (v != 0 && v != 1) throw DataError(where + ": opinion mask entries must be 0/1");
    }
  }
  if (annotated && !has_opinions()) {
    throw DataError(where + ": annotated example without opinion words");
  }
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens.front() != kUnknownToken) {
    tokens.insert(tokens.begin(), kUnknownToken);
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!ids_.emplace(tokens[i], i).second) {
      throw DataError("duplicate vocabulary entry '" + tokens[i] + "'");
    }
  }
  tokens_ = std::move(tokens);
}

Vocabulary Vocabulary::build(const std::vector<Example>& examples) {
  std::vector<std::string> tokens{kUnknownToken};
  std::set<std::string> seen{kUnknownToken};
  for (const Example& e : examples) {
    for (const std::string& t : e.tokens) {
      if (seen.insert(t).second) tokens.push_back(t);
    }
  }
  return Vocabulary(std::move(tokens));
}

std::size_t Vocabulary::id_of(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnknownId : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(id_of(t));
  return out;
}

const std::vector<Example>& Corpus::split(const std::string& name) const {
  const auto it = splits.find(name);
  if (it == splits.end()) throw DataError("corpus has no split '" + name + "'");
  return it->second;
}

EncodedExample encode(const Example& example, const Vocabulary& vocabulary) {
  EncodedExample e;
  e.ids = vocabulary.encode(example.tokens);
  e.aspect = example.aspect;
  e.gold = example.polarity;
  e.gold_opinions = example.opinion_indices();
  if (example.annotated) e.training_mask = example.opinion_mask;
  return e;
}

std::vector<EncodedExample> encode_all(const std::vector<Example>& examples,
                                       const Vocabulary& vocabulary) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const Example& e : examples) out.push_back(encode(e, vocabulary));
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

std::string example_to_json_line(const Example& e) {
  json j;
  j["id"] = e.id;
  j["tokens"] = e.tokens;
  j["aspect_span"] = {e.aspect.start, e.aspect.end};
  j["polarity"] = std::string(to_string(e.polarity));
  if (e.opinion_mask) j["opinion_indices"] = e.opinion_indices();
  j["annotated"] = e.annotated;
  return j.dump();
}

Example example_from_json_line(const std::string& line) {
  Example e;
  try {
    const json j = json::parse(line);
    e.id = j.at("id").get<std::string>();
    e.tokens = j.at("tokens").get<std::vector<std::string>>();
    const auto span = j.at("aspect_span").get<std::vector<std::size_t>>();
    if (span.size() != 2) throw DataError("aspect_span must have two entries");
    e.aspect = {span[0], span[1]};
    const auto pol = polarity_from_string(j.at("polarity").get<std::string>());
    if (!pol) throw DataError("polarity must be POS, NEG or NEU");
    e.polarity = *pol;
    if (j.contains("opinion_indices")) {
      std::vector<int> mask(e.tokens.size(), 0);
      for (std::size_t i : j.at("opinion_indices").get<std::vector<std::size_t>>()) {
        if (i >= mask.size()) throw DataError("opinion index out of range");
        mask[i] = 1;
      }
      e.opinion_mask = std::move(mask);
    }
    e.annotated = j.at("annotated").get<bool>();
  } catch (const json::exception& ex) {
    throw DataError(ex.what());
  }
  e.validate();
  return e;
}

std::vector<Example> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(example_from_json_line(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_jsonl(const std::vector<Example>& examples, const std::filesystem::path& path) {
  std::string content;
  for (const Example& e : examples) {
    e.validate();
    content += example_to_json_line(e);
    content += '\n';
  }
  write_file_atomic(path, content);
}

// ---------------------------------------------------------------------------
// TOWE import

namespace {

std::optional<Polarity> parse_polarity_field(std::string s) {
  s = lowercase(s);
  if (s == "pos" || s == "positive" || s == "1") return Polarity::kPositive;
  if (s == "neg" || s == "negative" || s == "-1") return Polarity::kNegative;
  if (s == "neu" || s == "neutral" || s == "0") return Polarity::kNeutral;
  return std::nullopt;
}

// "word\B" -> "B"; bare tags pass through.
std::vector<std::string> parse_tags(const std::string& column) {
  std::vector<std::string> tags;
  for (const std::string& item : split_whitespace(column)) {
    const auto cut = item.rfind('\\');
    std::string tag = cut == std::string::npos ? item : item.substr(cut + 1);
    const auto dash = tag.find('-');
    if (dash != std::string::npos) tag = tag.substr(0, dash);  // B-ASP -> B
    tags.push_back(tag);
  }
  return tags;
}

}  // namespace

ImportResult import_towe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  ImportResult result;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto skip = [&](const std::string& why) {
      result.skipped.push_back("line " + std::to_string(lineno) + ": " + why);
    };
    std::vector<std::string> cols;
    std::istringstream fields(line);
    for (std::string c; std::getline(fields, c, '\t');) cols.push_back(c);
    std::string id = path.stem().string() + "-" + std::to_string(lineno);
    if (cols.size() == 5) {
      id = cols.front();
      cols.erase(cols.begin());
    }
    if (cols.size() != 4) {
      skip("expected 4 or 5 tab-separated columns, got " + std::to_string(cols.size()));
      continue;
    }
    std::vector<std::string> tokens;
    for (std::string& t : split_whitespace(cols[0])) tokens.push_back(lowercase(std::move(t)));
    const auto target = parse_tags(cols[1]);
    const auto opinion = parse_tags(cols[2]);
    if (target.size() != tokens.size() || opinion.size() != tokens.size()) {
      skip("token count mismatch between columns");
      continue;
    }
    const auto polarity = parse_polarity_field(cols[3]);
    if (!polarity) {
      skip("unknown polarity '" + cols[3] + "'");
      continue;
    }
    std::optional<AspectSpan> span;
    bool bad_target = false;
    for (std::size_t i = 0; i < target.size() && !bad_target; ++i) {
      if (target[i] == "B" || (target[i] == "I" && (i == 0 || target[i - 1] == "O"))) {
        if (span) bad_target = true;
        span = AspectSpan{i, i + 1};
      } else if (target[i] == "I") {
        span->end = i + 1;
      } else if (target[i] != "O") {
        bad_target = true;
      }
    }
    if (bad_target || !span) {
      skip(bad_target ? "target tags do not form one span" : "no target tagged");
      continue;
    }
    Example e;
    e.id = id;
    e.tokens = std::move(tokens);
    e.aspect = *span;
    e.polarity = *polarity;
    std::vector<int> mask(opinion.size(), 0);
    for (std::size_t i = 0; i < opinion.size(); ++i) mask[i] = opinion[i] == "O" ? 0 : 1;
    e.opinion_mask = std::move(mask);
    e.annotated = e.has_opinions();
    try {
      e.validate();
    } catch (const DataError& err) {
      skip(err.what());
      continue;
    }
    result.examples.push_back(std::move(e));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Annotation subsampling

std::vector<Example> subsample_annotations(const std::vector<Example>& split, double fraction,
                                           std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("annotated fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i].has_opinions()) eligible.push_back(i);
  }
  std::mt19937_64 rng(seed);
  fisher_yates(eligible, rng);
  // Guard against products like 0.1 * 150 landing just above an integer.
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(eligible.size()) - 1e-9));
  std::vector<Example> out = split;
  for (Example& e : out) e.annotated = false;
  for (std::size_t k = 0; k < std::min(keep, eligible.size()); ++k) {
    out[eligible[k]].annotated = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lexicon and synthetic corpus

const std::vector<std::string>& AspectCategory::opinions(Polarity p) const {
  switch (p) {
    case Polarity::kPositive:
      return positive;
    case Polarity::kNegative:
      return negative;
    case Polarity::kNeutral:
      return neutral;
  }
  return neutral;
}

Lexicon Lexicon::standard() {
  Lexicon lx;
  lx.categories = {
      {"food",
       {"food", "pizza", "pasta", "sushi", "dessert", "steak", "soup", "bread"},
       {"delicious", "tasty", "flavorful", "fresh", "juicy"},
       {"bland", "stale", "soggy", "greasy", "undercooked"},
       {"ordinary", "typical", "plain", "traditional", "simple"}},
      {"service",
       {"service", "waiter", "staff", "waitress", "hostess", "manager"},
       {"friendly", "attentive", "helpful", "courteous", "welcoming"},
       {"rude", "slow", "careless", "dismissive", "unhelpful"},
       {"formal", "routine", "usual", "scripted", "professional"}},
      {"ambience",
       {"ambience", "decor", "music", "atmosphere", "patio", "lighting"},
       {"cozy", "charming", "elegant", "lovely", "relaxing"},
       {"noisy", "cramped", "dingy", "gloomy", "loud"},
       {"modern", "minimal", "casual", "quiet", "understated"}},
      {"price",
       {"price", "prices", "bill", "wine list", "menu"},
       {"reasonable", "affordable", "fair", "cheap", "generous"},
       {"overpriced", "steep", "outrageous", "pricey", "excessive"},
       {"moderate", "expected", "normal", "listed", "fixed"}},
      {"hardware",
       {"battery life", "screen", "keyboard", "hard drive", "processor"},
       {"durable", "sharp", "responsive", "fast", "reliable"},
       {"flimsy", "blurry", "sluggish", "unreliable", "glitchy"},
       {"adequate", "basic", "standard", "sufficient", "conventional"}},
  };
  lx.filler_clauses = {
      "we went there last night",        "i came here with my friends",
      "it was our first visit",          "my sister picked this place",
      "we ordered right away",           "they opened last year",
      "i bought it last month",          "we sat near the window",
      "my colleague recommended it",     "i use it every day at work",
      "we had a reservation for four",   "it arrived on a rainy monday",
  };
  return lx;
}

void Lexicon::validate() const {
  if (categories.empty()) throw ConfigError("lexicon has no aspect categories");
  std::map<std::string, std::string> owner;
  std::set<std::string> opinions;
  auto claim = [&](const std::string& phrase, const std::string& role) {
    for (const std::string& w : split_whitespace(phrase)) {
      const auto [it, fresh] = owner.emplace(w, role);
      if (!fresh && it->second != role) {
        throw ConfigError("lexicon word '" + w + "' is both " + it->second + " and " + role);
      }
    }
  };
  for (const AspectCategory& c : categories) {
    if (c.positive.size() != c.negative.size()) {
      throw ConfigError("category '" + c.name + "' needs paired positive/negative words");
    }
    for (const auto& w : c.aspects) claim(w, "aspect");
    for (Polarity p : kAllPolarities) {
      for (const auto& w : c.opinions(p)) {
        claim(w, "opinion");
        if (!opinions.insert(w).second) {
          throw ConfigError("opinion word '" + w + "' is listed more than once");
        }
      }
    }
  }
  for (const auto& clause : filler_clauses) claim(clause, "filler");
}

std::optional<Polarity> Lexicon::polarity_of(const std::string& word) const {
  for (const AspectCategory& c : categories) {
    for (Polarity p : kAllPolarities) {
      const auto& words = c.opinions(p);
      if (std::find(words.begin(), words.end(), word) != words.end()) return p;
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> Lexicon::category_of_opinion(const std::string& word) const {
  for (std::size_t k = 0; k < categories.size(); ++k) {
    for (Polarity p : kAllPolarities) {
      const auto& words = categories[k].opinions(p);
      if (std::find(words.begin(), words.end(), word) != words.end()) return k;
    }
  }
  return std::nullopt;
}

std::optional<std::string> Lexicon::antonym(const std::string& word) const {
  for (const AspectCategory& c : categories) {
    for (std::size_t i = 0; i < c.positive.size(); ++i) {
      if (c.positive[i] == word) return c.negative[i];
      if (c.negative[i] == word) return c.positive[i];
    }
  }
  return std::nullopt;
}

void SyntheticSpec::validate() const {
  if (aspects_per_sentence < 1 || aspects_per_sentence > 3) {
    throw ConfigError("aspects_per_sentence must be 1, 2 or 3");
  }
  if (!(distractor_prob >= 0.0 && distractor_prob <= 1.0)) {
    throw ConfigError("distractor_prob must lie in [0, 1]");
  }
  if (!(filler_prob >= 0.0 && filler_prob <= 1.0)) {
    throw ConfigError("filler_prob must lie in [0, 1]");
  }
  if (!(filler_cue_prob >= 0.0 && filler_cue_prob <= 1.0)) {
    throw ConfigError("filler_cue_prob must lie in [0, 1]");
  }
  if (filler_cue_prob > 0.0 && lexicon.filler_clauses.size() < kNumClasses) {
    throw ConfigError("filler_cue_prob needs at least one filler clause per polarity");
  }
  lexicon.validate();
  if (lexicon.categories.size() < aspects_per_sentence) {
    throw ConfigError("lexicon has fewer categories than aspects_per_sentence");
  }
  for (const AspectCategory& c : lexicon.categories) {
    if (c.aspects.empty()) throw ConfigError("category '" + c.name + "' has no aspects");
    for (Polarity p : kAllPolarities) {
      if (c.opinions(p).empty()) {
        throw ConfigError("category '" + c.name + "' has no " + std::string(to_string(p)) +
                          " opinion words");
      }
    }
  }
}

namespace {

// Clause templates; '@' marks the aspect, '#' the opinion word.
const std::vector<std::vector<std::string>>& clause_templates() {
  static const std::vector<std::vector<std::string>> templates = {
      {"the", "@", "is", "#"},
      {"the", "@", "was", "#"},
      {"the", "@", "was", "really", "#"},
      {"the", "@", "seemed", "#"},
      {"#", "@"},
  };
  return templates;
}

const std::vector<std::string>& connectors() {
  static const std::vector<std::string> words = {"and", "but", "while"};
  return words;
}

struct Clause {
  std::vector<std::string> tokens;
  std::optional<AspectSpan> aspect;  // within the clause
  std::optional<std::size_t> opinion;
  Polarity polarity = Polarity::kPositive;
};

Clause make_clause(const std::string& aspect, const std::string& opinion, Polarity polarity,
                   std::mt19937_64& rng) {
  Clause c;
  c.polarity = polarity;
  for (const std::string& slot : pick(rng, clause_templates())) {
    if (slot == "@") {
      const auto words = split_whitespace(aspect);
      c.aspect = AspectSpan{c.tokens.size(), c.tokens.size() + words.size()};
      c.tokens.insert(c.tokens.end(), words.begin(), words.end());
    } else if (slot == "#") {
      c.opinion = c.tokens.size();
      c.tokens.push_back(opinion);
    } else {
      c.tokens.push_back(slot);
    }
  }
  return c;
}

Polarity random_polarity(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, kNumClasses - 1);
  return kAllPolarities[dist(rng)];
}

void emit_sentence(const SyntheticSpec& spec, std::size_t aspect_count,
                   const std::string& id_prefix, std::mt19937_64& rng,
                   std::vector<Example>& out) {
  const Lexicon& lx = spec.lexicon;
  std::vector<std::size_t> cats(lx.categories.size());
  std::iota(cats.begin(), cats.end(), 0);
  fisher_yates(cats, rng);
  cats.resize(aspect_count);

  const Polarity first = random_polarity(rng);
  std::vector<Clause> clauses;
  for (std::size_t k = 0; k < aspect_count; ++k) {
    Polarity p = first;
    if (k > 0 && bernoulli(rng, spec.distractor_prob)) p = opposite_of(first, rng);
    const AspectCategory& cat = lx.categories[cats[k]];
    clauses.push_back(make_clause(pick(rng, cat.aspects), pick(rng, cat.opinions(p)), p, rng));
  }
  if (bernoulli(rng, spec.filler_prob)) {
    Clause filler;
    if (bernoulli(rng, spec.filler_cue_prob)) {
      std::vector<std::string> pool;
      for (std::size_t i = index_of(first); i < lx.filler_clauses.size(); i += kNumClasses) {
        pool.push_back(lx.filler_clauses[i]);
      }
      filler.tokens = split_whitespace(pick(rng, pool));
    } else {
      filler.tokens = split_whitespace(pick(rng, lx.filler_clauses));
    }
    std::uniform_int_distribution<std::size_t> where(0, clauses.size());
    clauses.insert(clauses.begin() + static_cast<std::ptrdiff_t>(where(rng)), filler);
  }

  std::vector<std::string> tokens;
  std::vector<std::pair<AspectSpan, std::size_t>> anchors;  // aspect span, opinion idx
  std::vector<Polarity> polarities;
  for (std::size_t c = 0; c < clauses.size(); ++c) {
    if (c > 0) tokens.push_back(pick(rng, connectors()));
    const std::size_t offset = tokens.size();
    tokens.insert(tokens.end(), clauses[c].tokens.begin(), clauses[c].tokens.end());
    if (clauses[c].aspect) {
      anchors.push_back({AspectSpan{offset + clauses[c].aspect->start,
                                    offset + clauses[c].aspect->end},
                         offset + *clauses[c].opinion});
      polarities.push_back(clauses[c].polarity);
    }
  }
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    Example e;
    e.id = id_prefix + "#" + std::to_string(k);
    e.tokens = tokens;
    e.aspect = anchors[k].first;
    e.polarity = polarities[k];
    std::vector<int> mask(tokens.size(), 0);
    mask[anchors[k].second] = 1;
    e.opinion_mask = std::move(mask);
    e.annotated = true;
    out.push_back(std::move(e));
  }
}

std::vector<Example> generate_split(const SyntheticSpec& spec, const std::string& name,
                                    std::size_t count, std::mt19937_64& rng) {
  std::vector<Example> out;
  std::uniform_int_distribution<std::size_t> aspects(1, spec.aspects_per_sentence);
  for (std::size_t s = 0; out.size() < count; ++s) {
    const std::size_t k = std::min(aspects(rng), count - out.size());
    char prefix[64];
    std::snprintf(prefix, sizeof(prefix), "%s-%05zu", name.c_str(), s);
    emit_sentence(spec, k, prefix, rng, out);
  }
  return out;
}

}  // namespace

Corpus generate_synthetic(const SyntheticSpec& spec) { return generate_synthetic(spec, spec.seed); }

Corpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.splits["train"] = generate_split(spec, "train", spec.n_train, rng);
  corpus.splits["valid"] = generate_split(spec, "valid", spec.n_valid, rng);
  corpus.splits["test"] = generate_split(spec, "test", spec.n_test, rng);
  corpus.vocabulary = Vocabulary::build(corpus.splits["train"]);
  return corpus;
}

// ---------------------------------------------------------------------------
// Robustness transforms

std::vector<std::vector<std::size_t>> group_by_sentence(const std::vector<Example>& examples) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::vector<std::string>, std::size_t> index;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto [it, fresh] = index.emplace(examples[i].tokens, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

TransformResult add_diff(const Example& example, const Lexicon& lexicon, std::mt19937_64& rng) {
  example.validate();
  // Categories whose aspect words already occur are not "fresh".
  const std::set<std::string> present(example.tokens.begin(), example.tokens.end());
  std::vector<std::size_t> fresh;
  for (std::size_t k = 0; k < lexicon.categories.size(); ++k) {
    bool used = false;
    for (const std::string& a : lexicon.categories[k].aspects) {
      for (const std::string& w : split_whitespace(a)) used = used || present.count(w) > 0;
    }
    if (!used) fresh.push_back(k);
  }
  if (fresh.empty()) {
    for (std::size_t k = 0; k < lexicon.categories.size(); ++k) fresh.push_back(k);
  }
  if (fresh.empty()) throw TransformError("add_diff: lexicon has no categories");
  const AspectCategory& cat = lexicon.categories[pick(rng, fresh)];
  const Polarity target = opposite_of(example.polarity, rng);
  if (cat.opinions(target).empty() || cat.aspects.empty()) {
    throw TransformError("add_diff: no " + std::string(to_string(target)) +
                         " opinion words in category '" + cat.name + "'");
  }
  const std::string& aspect = pick(rng, cat.aspects);
  const std::string& opinion = pick(rng, cat.opinions(target));

  TransformResult r;
  r.example = example;
  r.example.id = example.id + "+adddiff";
  std::vector<std::string>& t = r.example.tokens;
  t.push_back("but");
  t.push_back("the");
  for (const std::string& w : split_whitespace(aspect)) t.push_back(w);
  t.push_back("is");
  t.push_back(opinion);
  if (r.example.opinion_mask) r.example.opinion_mask->resize(t.size(), 0);
  r.applied = true;
  r.note = "appended '" + aspect + "' with " + std::string(to_string(target)) + " opinion '" +
           opinion + "'";
  return r;
}

TransformResult rev_non(const std::vector<Example>& group, std::size_t target,
                        const Lexicon& lexicon) {
  if (target >= group.size()) throw TransformError("rev_non: target index out of range");
  const Example& tgt = group[target];
  TransformResult r;
  r.example = tgt;
  if (group.size() < 2) {
    r.note = "single-aspect sentence";
    return r;
  }
  const auto keep = tgt.opinion_indices();
  std::vector<std::string> swapped;
  for (std::size_t j = 0; j < group.size(); ++j) {
    if (j == target) continue;
    const Example& other = group[j];
    if (other.tokens != tgt.tokens) throw TransformError("rev_non: group mixes sentences");
    if (other.polarity != tgt.polarity || other.polarity == Polarity::kNeutral) continue;
    for (std::size_t i : other.opinion_indices()) {
      if (std::find(keep.begin(), keep.end(), i) != keep.end()) continue;
      if (tgt.aspect.contains(i)) continue;
      const auto flipped = lexicon.antonym(r.example.tokens[i]);
      if (!flipped) continue;
      swapped.push_back(r.example.tokens[i] + "->" + *flipped);
      r.example.tokens[i] = *flipped;
    }
  }
  if (swapped.empty()) {
    r.note = "no same-polarity non-target aspect";
    return r;
  }
  r.example.id = tgt.id + "+revnon";
  r.applied = true;
  for (const auto& s : swapped) r.note += (r.note.empty() ? "" : ", ") + s;
  return r;
}

}  // namespace iega

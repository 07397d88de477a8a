#include "iega/metrics.hpp"

#include <array>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iega/attribution.hpp"

namespace iega {

using json = nlohmann::json;

std::vector<std::size_t> rank_tokens(std::span<const double> alpha, AspectSpan aspect,
                                     const RankingPolicy& policy) {
  std::vector<std::size_t> order;
  order.reserve(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (policy.exclude_aspect_tokens && aspect.contains(i)) continue;
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });
  return order;
}

ClassificationScores accuracy_and_macro_f1(std::span<const Polarity> predictions,
                                           std::span<const Polarity> golds) {
  if (predictions.empty()) throw DataError("accuracy: no predictions");
  if (predictions.size() != golds.size()) {
    throw DataError("accuracy: prediction and gold counts differ");
  }
  std::array<std::size_t, kNumClasses> tp{}, fp{}, fn{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::size_t p = index_of(predictions[i]), g = index_of(golds[i]);
    if (p == g) {
      ++correct;
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  ClassificationScores s;
  s.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  s.macro_f1 = f1_sum / static_cast<double>(kNumClasses);
  return s;
}

namespace {

// 1-based rank of the first gold token in the ranking, 0 when absent.
std::size_t best_gold_rank(const std::vector<std::size_t>& ranking,
                           const std::vector<std::size_t>& gold) {
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (std::find(gold.begin(), gold.end(), ranking[r]) != gold.end()) return r + 1;
  }
  return 0;
}

template <class F>
RankingScore score_rankings(const std::vector<std::vector<std::size_t>>& rankings,
                            const std::vector<std::vector<std::size_t>>& gold, F per_example) {
  if (rankings.size() != gold.size()) throw DataError("ranking and gold counts differ");
  RankingScore s;
  double total = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const std::size_t rank = best_gold_rank(rankings[i], gold[i]);
    if (rank == 0) {
      ++s.skipped;
      continue;
    }
    ++s.scored;
    total += per_example(rank);
  }
  if (s.scored > 0) s.value = total / static_cast<double>(s.scored);
  return s;
}

}  // namespace

RankingScore mrr(const std::vector<std::vector<std::size_t>>& rankings,
                 const std::vector<std::vector<std::size_t>>& gold_opinions) {
  const RankingScore s = score_rankings(rankings, gold_opinions, [](std::size_t rank) {
    return 1.0 / static_cast<double>(rank);
  });
  if (s.scored == 0) throw DataError("mrr: no example has a rankable gold opinion token");
  return s;
}

RankingScore hit_rate_or_empty(const std::vector<std::vector<std::size_t>>& rankings,
                               const std::vector<std::vector<std::size_t>>& gold_opinions,
                               std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  return score_rankings(rankings, gold_opinions,
                        [k](std::size_t rank) { return rank <= k ? 1.0 : 0.0; });
}

RankingScore hit_rate(const std::vector<std::vector<std::size_t>>& rankings,
                      const std::vector<std::vector<std::size_t>>& gold_opinions,
                      std::size_t k) {
  const RankingScore s = hit_rate_or_empty(rankings, gold_opinions, k);
  if (s.scored == 0) throw DataError("hit_rate: no example has a rankable gold opinion token");
  return s;
}

Polarity ReferenceClassifier::predict(std::span<const std::size_t> ids, AspectSpan span) const {
  return iega::predict(ids, span, *params_).label;
}

std::vector<double> ReferenceClassifier::alphas(std::span<const std::size_t> ids,
                                                AspectSpan span) const {
  return explain(ids, span, *params_).alphas();
}

ReducedInput remove_tokens(std::span<const std::size_t> ids, AspectSpan aspect,
                           std::vector<std::size_t> removed) {
  const std::set<std::size_t> drop(removed.begin(), removed.end());
  ReducedInput out;
  std::size_t before = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (drop.count(i)) {
      if (aspect.contains(i)) throw DataError("remove_tokens: cannot delete aspect tokens");
      if (i < aspect.start) ++before;
      continue;
    }
    out.ids.push_back(ids[i]);
  }
  out.aspect = {aspect.start - before, aspect.end - before};
  return out;
}

EvalReport evaluate(const Parameters& params, const std::vector<EncodedExample>& data,
                    const RankingPolicy& policy) {
  policy.validate();
  if (data.empty()) throw DataError("evaluate: no examples");
  EvalReport report;
  report.policy = policy;
  report.n_examples = data.size();

  std::vector<Polarity> predictions, golds;
  std::vector<std::vector<std::size_t>> rankings, gold_opinions;
  for (const EncodedExample& e : data) {
    const SaliencyMap map = explain(e.ids, e.aspect, params);
    predictions.push_back(map.target_class);
    golds.push_back(e.gold);
    rankings.push_back(rank_tokens(map.alphas(), e.aspect, policy));
    gold_opinions.push_back(e.gold_opinions);
  }
  const ClassificationScores cls = accuracy_and_macro_f1(predictions, golds);
  report.accuracy = cls.accuracy;
  report.macro_f1 = cls.macro_f1;

  const RankingScore hr = hit_rate_or_empty(rankings, gold_opinions, policy.k);
  report.hit_rate = hr.value;
  report.ranking_scored = hr.scored;
  report.ranking_skipped = hr.skipped;
  if (hr.scored > 0) report.mrr = mrr(rankings, gold_opinions).value;

  const ReferenceClassifier model(params);
  try {
    const AopcResult a = aopc(model, data, policy.k);
    report.aopc = a.aopc;
    report.aopc_scored = a.scored;
    report.aopc_skipped = a.skipped;
  } catch (const DataError&) {
    report.aopc_skipped = data.size();
  }
  report.post_hoc_accuracy = post_hoc_accuracy(model, data, policy.k);
  return report;
}

std::string EvalReport::to_json() const {
  json j;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["mrr"] = mrr;
  j["hit_rate"] = hit_rate;
  j["aopc"] = aopc;
  j["post_hoc_accuracy"] = post_hoc_accuracy;
  j["n_examples"] = n_examples;
  j["policy"] = {{"exclude_aspect_tokens", policy.exclude_aspect_tokens},
                 {"k", policy.k},
                 {"tie_break", "earlier position"}};
  j["ranking_scored"] = ranking_scored;
  j["ranking_skipped"] = ranking_skipped;
  j["aopc_scored"] = aopc_scored;
  j["aopc_skipped"] = aopc_skipped;
  j["aopc_variant"] = aopc_variant;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char line[128];
  auto row = [&](const char* name, double value) {
    std::snprintf(line, sizeof(line), "%-20s %10.4f\n", name, value);
    out << line;
  };
  row("accuracy", accuracy);
  row("macro_f1", macro_f1);
  row("mrr", mrr);
  std::snprintf(line, sizeof(line), "hr@%-17zu %10.4f\n", policy.k, hit_rate);
  out << line;
  std::snprintf(line, sizeof(line), "aopc@%-15zu %10.4f\n", policy.k, aopc);
  out << line;
  std::snprintf(line, sizeof(line), "post_hoc_acc@%-7zu %10.4f\n", policy.k, post_hoc_accuracy);
  out << line;
  std::snprintf(line, sizeof(line), "%-20s %10zu\n", "examples", n_examples);
  out << line;
  out << "policy: exclude_aspect_tokens=" << (policy.exclude_aspect_tokens ? "true" : "false")
      << " k=" << policy.k << "\n";
  out << "aopc variant: " << aopc_variant << "\n";
  return out.str();
}

std::vector<std::string> example_details(const Parameters& params,
                                         const std::vector<EncodedExample>& data,
                                         const RankingPolicy& policy) {
  policy.validate();
  RankingPolicy deletion = policy;
  deletion.exclude_aspect_tokens = true;
  std::vector<std::string> lines;
  for (std::size_t idx = 0; idx < data.size(); ++idx) {
    const EncodedExample& e = data[idx];
    const SaliencyMap map = explain(e.ids, e.aspect, params);
    const auto alpha = map.alphas();
    const auto ranking = rank_tokens(alpha, e.aspect, policy);
    const std::size_t rank = best_gold_rank(ranking, e.gold_opinions);
    json j;
    j["index"] = idx;
    j["gold"] = std::string(to_string(e.gold));
    j["predicted"] = std::string(to_string(map.target_class));
    j["alpha"] = alpha;
    j["ranking"] = ranking;
    j["gold_opinions"] = e.gold_opinions;
    j["best_gold_rank"] = rank;
    j["hit"] = rank > 0 && rank <= policy.k;
    json deletions = json::array();
    const auto del_rank = rank_tokens(alpha, e.aspect, deletion);
    for (std::size_t m = 1; m <= policy.k && m < del_rank.size(); ++m) {
      const ReducedInput r = remove_tokens(
          e.ids, e.aspect, std::vector<std::size_t>(del_rank.begin(), del_rank.begin() + m));
      deletions.push_back(std::string(to_string(iega::predict(r.ids, r.aspect, params).label)));
    }
    j["deletion_predictions"] = deletions;
    lines.push_back(j.dump());
  }
  return lines;
}

}  // namespace iega

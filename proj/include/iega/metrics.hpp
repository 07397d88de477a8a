#pragma once

#include <algorithm>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "iega/data.hpp"
#include "iega/error.hpp"
#include "iega/model.hpp"
#include "iega/types.hpp"

namespace iega {

struct RankingPolicy {
  bool exclude_aspect_tokens = true;
  std::size_t k = 5;

  void validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
  }
};

// Token indices by alpha descending; ties go to the earlier position.
// Aspect tokens are dropped first when the policy says so.
std::vector<std::size_t> rank_tokens(std::span<const double> alpha, AspectSpan aspect,
                                     const RankingPolicy& policy);

struct ClassificationScores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

// Macro-F1 is the unweighted mean over all three classes; a class absent
// from both predictions and golds contributes 0. Throws DataError on empty
// or mismatched input.
ClassificationScores accuracy_and_macro_f1(std::span<const Polarity> predictions,
                                           std::span<const Polarity> golds);

struct RankingScore {
  double value = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;  // no gold token left in the ranking
};

// Mean over examples of 1 / (1-based rank of the best-ranked gold token).
// Throws DataError when no example is scorable.
RankingScore mrr(const std::vector<std::vector<std::size_t>>& rankings,
                 const std::vector<std::vector<std::size_t>>& gold_opinions);

// Fraction of examples with a gold token among the first k. Throws
// DataError when no example is scorable.
RankingScore hit_rate(const std::vector<std::vector<std::size_t>>& rankings,
                      const std::vector<std::vector<std::size_t>>& gold_opinions,
                      std::size_t k);

// As hit_rate, but returns value 0 instead of throwing when nothing is
// scorable.
RankingScore hit_rate_or_empty(const std::vector<std::vector<std::size_t>>& rankings,
                               const std::vector<std::vector<std::size_t>>& gold_opinions,
                               std::size_t k);

// A classifier that can explain itself: predict() gives the label, alphas()
// the saliency distribution used for ranking.
template <class M>
concept SaliencyClassifier = requires(const M& m, std::span<const std::size_t> ids,
                                      AspectSpan span) {
  { m.predict(ids, span) } -> std::convertible_to<Polarity>;
  { m.alphas(ids, span) } -> std::convertible_to<std::vector<double>>;
};

// The reference model with saliency at its own prediction.
class ReferenceClassifier {
 public:
  explicit ReferenceClassifier(const Parameters& params) : params_(&params) {}

  Polarity predict(std::span<const std::size_t> ids, AspectSpan span) const;
  std::vector<double> alphas(std::span<const std::size_t> ids, AspectSpan span) const;

 private:
  const Parameters* params_;
};

// Sequence with `removed` positions deleted and the aspect span remapped.
// Aspect positions must not be in `removed`.
struct ReducedInput {
  std::vector<std::size_t> ids;
  AspectSpan aspect;
};
ReducedInput remove_tokens(std::span<const std::size_t> ids, AspectSpan aspect,
                           std::vector<std::size_t> removed);

struct AopcResult {
  double aopc = 0.0;
  // accuracy[m] after deleting the top-m tokens, m = 0..k.
  std::vector<double> accuracy;
  std::size_t scored = 0;
  std::size_t skipped = 0;  // fewer than k + 1 non-aspect tokens
};

// AOPC = (1/k) sum_{m=1..k} [acc(full) - acc(top-m deleted)]. Saliency is
// computed once per example on the full input; deletion removes tokens and
// never touches the aspect.
template <SaliencyClassifier M>
AopcResult aopc(const M& model, const std::vector<EncodedExample>& data, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  RankingPolicy deletion;
  deletion.exclude_aspect_tokens = true;
  deletion.k = k;
  std::vector<std::size_t> correct(k + 1, 0);
  AopcResult r;
  for (const EncodedExample& e : data) {
    if (e.ids.size() - e.aspect.length() <= k) {
      ++r.skipped;
      continue;
    }
    ++r.scored;
    const std::vector<double> alpha = model.alphas(e.ids, e.aspect);
    const std::vector<std::size_t> ranking = rank_tokens(alpha, e.aspect, deletion);
    correct[0] += model.predict(e.ids, e.aspect) == e.gold ? 1 : 0;
    for (std::size_t m = 1; m <= k; ++m) {
      const ReducedInput reduced = remove_tokens(
          e.ids, e.aspect, std::vector<std::size_t>(ranking.begin(), ranking.begin() + m));
      correct[m] += model.predict(reduced.ids, reduced.aspect) == e.gold ? 1 : 0;
    }
  }
  if (r.scored == 0) throw DataError("aopc: no example has more than k context tokens");
  for (std::size_t m = 0; m <= k; ++m) {
    r.accuracy.push_back(static_cast<double>(correct[m]) / static_cast<double>(r.scored));
  }
  double total = 0.0;
  for (std::size_t m = 1; m <= k; ++m) total += r.accuracy[0] - r.accuracy[m];
  r.aopc = total / static_cast<double>(k);
  return r;
}

// Accuracy when only the top-k non-aspect tokens plus the aspect are kept,
// in original order.
template <SaliencyClassifier M>
double post_hoc_accuracy(const M& model, const std::vector<EncodedExample>& data,
                         std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (data.empty()) throw DataError("post_hoc_accuracy: no examples");
  RankingPolicy keep_policy;
  keep_policy.exclude_aspect_tokens = true;
  keep_policy.k = k;
  std::size_t correct = 0;
  for (const EncodedExample& e : data) {
    const std::vector<double> alpha = model.alphas(e.ids, e.aspect);
    const std::vector<std::size_t> ranking = rank_tokens(alpha, e.aspect, keep_policy);
    std::vector<std::size_t> removed;
    if (ranking.size() > k) removed.assign(ranking.begin() + static_cast<std::ptrdiff_t>(k),
                                           ranking.end());
    const ReducedInput reduced = remove_tokens(e.ids, e.aspect, std::move(removed));
    correct += model.predict(reduced.ids, reduced.aspect) == e.gold ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

inline constexpr const char* kAopcVariant =
    "accuracy-drop, mean over m=1..k, token removal, aspect kept";

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mrr = 0.0;
  double hit_rate = 0.0;
  double aopc = 0.0;
  double post_hoc_accuracy = 0.0;
  std::size_t n_examples = 0;
  RankingPolicy policy;
  std::size_t ranking_scored = 0;
  std::size_t ranking_skipped = 0;
  std::size_t aopc_scored = 0;
  std::size_t aopc_skipped = 0;
  std::string aopc_variant = kAopcVariant;

  std::string to_json() const;
  std::string to_table() const;
};

EvalReport evaluate(const Parameters& params, const std::vector<EncodedExample>& data,
                    const RankingPolicy& policy);

// One JSON object per example: prediction, alpha, ranking, hit, reciprocal
// rank, and the predictions after each deletion step.
std::vector<std::string> example_details(const Parameters& params,
                                         const std::vector<EncodedExample>& data,
                                         const RankingPolicy& policy);

}  // namespace iega

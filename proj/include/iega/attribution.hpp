#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "iega/autodiff.hpp"
#include "iega/losses.hpp"
#include "iega/model.hpp"
#include "iega/types.hpp"

namespace iega {

// Word-level saliency from input gradients.
//
//   g_i     = d L_c(label) / d x_i
//   score_i = |g_i . x_i|
//   alpha_i = score_i / sum_j score_j      (uniform when every score is 0)

struct TokenSaliency {
  Tensor gradient;  // 1 x embed_dim
  double gradient_norm = 0.0;
  double score = 0.0;
  double alpha = 0.0;
};

struct SaliencyMap {
  std::vector<std::size_t> tokens;
  Polarity target_class = Polarity::kPositive;
  std::vector<TokenSaliency> entries;
  bool uniform_fallback = false;
  // 1 x n node of alpha on the caller's tape, present when the map was built
  // with create_graph.
  std::optional<ad::Var> alpha_node;

  std::vector<double> alphas() const;
};

// How the correction loss sees g_i: differentiated through (second order)
// or frozen as a constant (detached).
enum class GradientFlow { kSecondOrder, kDetached };

// g_i for every token, aligned with token order.
std::vector<Tensor> input_gradients(std::span<const std::size_t> tokens, AspectSpan span,
                                    const Parameters& params, Polarity label);

SaliencyMap saliency(std::span<const std::size_t> tokens, AspectSpan span,
                     const Parameters& params, Polarity label);

// Builds the map on `tape`. With create_graph the returned alpha_node is a
// differentiable function of the parameters; otherwise it is a constant.
SaliencyMap saliency(std::span<const std::size_t> tokens, AspectSpan span,
                     const Parameters& params, Polarity label, ad::Tape& tape,
                     bool create_graph);

// Saliency on an existing forward trace and loss. `flow` selects whether
// alpha depends on the parameters through g_i.
SaliencyMap saliency_on_trace(const ForwardTrace& trace, ad::Var loss,
                              std::span<const std::size_t> tokens, Polarity label,
                              GradientFlow flow);

// Saliency at the model's own prediction, as used when no gold label is
// available.
SaliencyMap explain(std::span<const std::size_t> tokens, AspectSpan span,
                    const Parameters& params);

// alpha from raw scores, with the uniform fallback.
std::vector<double> normalize_scores(std::span<const double> scores);

struct TaylorCheckConfig {
  double epsilon = 1e-3;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  // Remainder constant C in |dL| <= eps ||g|| + C eps^2. Estimated from
  // second differences along independent probe directions when unset.
  std::optional<double> curvature;
};

struct TaylorReport {
  double max_residual = 0.0;    // max |dL - g.delta|
  double max_change = 0.0;      // max |dL|
  double max_bound = 0.0;       // max eps ||g_i|| over the perturbed tokens
  double curvature = 0.0;       // C used for violations
  std::size_t violations = 0;   // |dL| > eps ||g_i|| + C eps^2
  std::size_t trials = 0;
};

// Loss as a function of per-token embedding rows.
using EmbeddingLoss = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

// Perturbs one random token embedding per trial by a random delta with
// ||delta|| = epsilon and compares the loss change to its first-order
// prediction.
TaylorReport taylor_check(const EmbeddingLoss& loss, const std::vector<Tensor>& embeddings,
                          const TaylorCheckConfig& config);

// Same for L_c of the reference model at `label`.
TaylorReport taylor_check(std::span<const std::size_t> tokens, AspectSpan span,
                          const Parameters& params, Polarity label,
                          const TaylorCheckConfig& config);

}  // namespace iega

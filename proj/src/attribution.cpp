#include "iega/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "iega/error.hpp"

namespace iega {

std::vector<double> SaliencyMap::alphas() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const TokenSaliency& e : entries) out.push_back(e.alpha);
  return out;
}

std::vector<double> normalize_scores(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n == 0) return {};
  // Same kernels as the graph path so both give identical bits.
  const Tensor row({1, n}, std::vector<double>(scores.begin(), scores.end()));
  const Tensor total = sum(row);
  if (total.item() == 0.0) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  const Tensor alpha = div(row, total);
  return {alpha.values().begin(), alpha.values().end()};
}

std::vector<Tensor> input_gradients(std::span<const std::size_t> tokens, AspectSpan span,
                                    const Parameters& params, Polarity label) {
  ad::Tape tape;
  const ForwardTrace trace = forward(tokens, span, params, tape);
  const ad::Var loss = classification_loss(trace, label);
  return tape.grad(loss, trace.inputs);
}

SaliencyMap saliency_on_trace(const ForwardTrace& trace, ad::Var loss,
                              std::span<const std::size_t> tokens, Polarity label,
                              GradientFlow flow) {
  ad::Tape& tape = *loss.tape();
  const std::size_t n = trace.inputs.size();

  std::vector<ad::Var> grads;
  if (flow == GradientFlow::kSecondOrder) {
    grads = tape.grad_graph(loss, trace.inputs);
  } else {
    for (Tensor& g : tape.grad(loss, trace.inputs)) grads.push_back(tape.constant(std::move(g)));
  }

  std::vector<ad::Var> cells;
  cells.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ad::Var s = ad::abs(ad::dot(grads[i], trace.inputs[i]));
    cells.push_back(ad::reshape(s, {1, 1}));
  }
  const ad::Var row = ad::reshape(ad::concat(cells), {1, n});
  const ad::Var total = ad::sum(row);

  SaliencyMap map;
  map.tokens.assign(tokens.begin(), tokens.end());
  map.target_class = label;
  if (total.value().item() == 0.0) {
    map.uniform_fallback = true;
    map.alpha_node = tape.constant(Tensor::full({1, n}, 1.0 / static_cast<double>(n)));
  } else {
    map.alpha_node = ad::div(row, total);
  }
  const Tensor& alpha = map.alpha_node->value();
  map.entries.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    TokenSaliency& e = map.entries[i];
    e.gradient = grads[i].value();
    e.gradient_norm = l2_norm(e.gradient);
    e.score = row.value()[i];
    e.alpha = alpha[i];
  }
  return map;
}

SaliencyMap saliency(std::span<const std::size_t> tokens, AspectSpan span,
                     const Parameters& params, Polarity label, ad::Tape& tape,
                     bool create_graph) {
  const ForwardTrace trace = forward(tokens, span, params, tape);
  const ad::Var loss = classification_loss(trace, label);
  SaliencyMap map = saliency_on_trace(
      trace, loss, tokens, label,
      create_graph ? GradientFlow::kSecondOrder : GradientFlow::kDetached);
  if (!create_graph) map.alpha_node = tape.constant(map.alpha_node->value());
  return map;
}

SaliencyMap saliency(std::span<const std::size_t> tokens, AspectSpan span,
                     const Parameters& params, Polarity label) {
  ad::Tape tape;
  SaliencyMap map = saliency(tokens, span, params, label, tape, false);
  map.alpha_node.reset();
  return map;
}

SaliencyMap explain(std::span<const std::size_t> tokens, AspectSpan span,
                    const Parameters& params) {
  ad::Tape tape;
  const ForwardTrace trace = forward(tokens, span, params, tape);
  const Polarity predicted = prediction_from_logits(trace.logits.value()).label;
  const ad::Var loss = classification_loss(trace, predicted);
  SaliencyMap map = saliency_on_trace(trace, loss, tokens, predicted, GradientFlow::kDetached);
  map.alpha_node.reset();
  return map;
}

namespace {

double evaluate_loss(const EmbeddingLoss& loss, const std::vector<Tensor>& embeddings) {
  ad::Tape tape;
  std::vector<ad::Var> x;
  x.reserve(embeddings.size());
  for (const Tensor& e : embeddings) x.push_back(tape.leaf(e));
  return loss(tape, x).value().item();
}

Tensor random_unit(std::mt19937_64& rng, const Shape& shape) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(numel_of(shape));
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return Tensor(shape, std::move(v));
}

// Largest |u^T H u| seen over random unit directions u, from second
// differences with a fixed probe step.
double estimate_curvature(const EmbeddingLoss& loss, const std::vector<Tensor>& embeddings,
                          std::size_t probes, std::uint64_t seed) {
  constexpr double kProbeStep = 1e-3;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, embeddings.size() - 1);
  const double base = evaluate_loss(loss, embeddings);
  double worst = 0.0;
  for (std::size_t t = 0; t < probes; ++t) {
    const std::size_t i = pick(rng);
    const Tensor u = random_unit(rng, embeddings[i].shape());
    std::vector<Tensor> plus = embeddings, minus = embeddings;
    plus[i] = add(embeddings[i], scale(u, kProbeStep));
    minus[i] = sub(embeddings[i], scale(u, kProbeStep));
    const double second =
        (evaluate_loss(loss, plus) + evaluate_loss(loss, minus) - 2.0 * base) /
        (kProbeStep * kProbeStep);
    worst = std::max(worst, std::fabs(second));
  }
  return worst;
}

}  // namespace

TaylorReport taylor_check(const EmbeddingLoss& loss, const std::vector<Tensor>& embeddings,
                          const TaylorCheckConfig& config) {
  if (!(config.epsilon >= 0.0)) throw ConfigError("taylor_check: epsilon must be >= 0");
  if (config.trials == 0) throw ConfigError("taylor_check: trials must be >= 1");
  if (embeddings.empty()) throw DataError("taylor_check: no embeddings");

  ad::Tape tape;
  std::vector<ad::Var> x;
  for (const Tensor& e : embeddings) x.push_back(tape.leaf(e));
  const ad::Var base = loss(tape, x);
  const std::vector<Tensor> grads = tape.grad(base, x);
  const double base_value = base.value().item();

  TaylorReport report;
  report.trials = config.trials;
  // Remainder of a second-order expansion is (1/2) eps^2 u^T H u; taking
  // the full |u^T H u| leaves a factor-2 margin over the probes.
  report.curvature = config.curvature
                         ? *config.curvature
                         : estimate_curvature(loss, embeddings, config.trials, config.seed);
  const double eps = config.epsilon;

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, embeddings.size() - 1);
  for (std::size_t t = 0; t < config.trials; ++t) {
    const std::size_t i = pick(rng);
    const Tensor delta = scale(random_unit(rng, embeddings[i].shape()), eps);
    std::vector<Tensor> moved = embeddings;
    moved[i] = add(embeddings[i], delta);
    const double change = evaluate_loss(loss, moved) - base_value;
    const double predicted = dot(grads[i], delta).item();
    const double bound = eps * l2_norm(grads[i]);
    report.max_residual = std::max(report.max_residual, std::fabs(change - predicted));
    report.max_change = std::max(report.max_change, std::fabs(change));
    report.max_bound = std::max(report.max_bound, bound);
    if (std::fabs(change) > bound + report.curvature * eps * eps) ++report.violations;
  }
  return report;
}

TaylorReport taylor_check(std::span<const std::size_t> tokens, AspectSpan span,
                          const Parameters& params, Polarity label,
                          const TaylorCheckConfig& config) {
  validate_input(tokens, span, params.config);
  std::vector<Tensor> embeddings;
  for (std::size_t t : tokens) {
    const std::size_t row[] = {t};
    embeddings.push_back(gather(params.embedding, row));
  }
  const EmbeddingLoss loss = [&](ad::Tape& tape, std::span<const ad::Var> x) {
    const ParameterNodes nodes = bind(params, tape);
    return classification_loss(forward_embedded(x, span, nodes), label);
  };
  return taylor_check(loss, embeddings, config);
}

}  // namespace iega

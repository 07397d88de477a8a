#include "iega/training.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "iega/error.hpp"
#include "iega/metrics.hpp"

namespace iega {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(annotated_fraction >= 0.0 && annotated_fraction <= 1.0)) {
    throw ConfigError("annotated_fraction must lie in [0, 1]");
  }
}

namespace {

ParameterGrads zero_grads(const Parameters& params) {
  ParameterGrads g;
  const auto t = params.tensors();
  for (std::size_t i = 0; i < t.size(); ++i) g[i] = Tensor::zeros(t[i]->shape());
  return g;
}

void accumulate(ParameterGrads& into, const ParameterGrads& g) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] = add(into[i], g[i]);
}

bool uses_correction(const EncodedExample& e) {
  if (!e.training_mask) return false;
  for (int v : *e.training_mask) {
    if (v != 0) return true;
  }
  return false;
}

}  // namespace

ExampleResult example_gradient(const EncodedExample& example, const Parameters& params,
                               double weight_c, double weight_g, GradientFlow flow) {
  ad::Tape tape;
  const ForwardTrace trace = forward(example.ids, example.aspect, params, tape);
  const ad::Var l_c = classification_loss(trace, example.gold);

  ExampleResult r;
  r.l_c = l_c.value().item();
  r.predicted = prediction_from_logits(trace.logits.value()).label;
  ad::Var objective = ad::scale(l_c, weight_c);
  if (weight_g != 0.0 && uses_correction(example)) {
    const SaliencyMap map = saliency_on_trace(trace, l_c, example.ids, example.gold, flow);
    const ad::Var l_g = correction_loss(*map.alpha_node, *example.training_mask);
    r.l_g = l_g.value().item();
    r.annotated = true;
    objective = ad::add(objective, ad::scale(l_g, weight_g));
  }
  const auto nodes = trace.params.all();
  auto grads = tape.grad(objective, nodes);
  for (std::size_t i = 0; i < grads.size(); ++i) r.grads[i] = std::move(grads[i]);
  return r;
}

BatchResult batch_gradient(std::span<const EncodedExample> batch, const Parameters& params,
                           double lambda, GradientFlow flow) {
  if (batch.empty()) throw DataError("empty batch");
  std::size_t annotated = 0;
  if (lambda > 0.0) {
    for (const EncodedExample& e : batch) annotated += uses_correction(e) ? 1 : 0;
  }
  const double weight_c = 1.0 / static_cast<double>(batch.size());
  const double weight_g = annotated > 0 ? lambda / static_cast<double>(annotated) : 0.0;

  BatchResult out;
  out.grads = zero_grads(params);
  double sum_c = 0.0, sum_g = 0.0;
  for (const EncodedExample& e : batch) {
    const ExampleResult r = example_gradient(e, params, weight_c, weight_g, flow);
    accumulate(out.grads, r.grads);
    sum_c += r.l_c;
    sum_g += r.l_g;
    out.loss.annotated.push_back(r.annotated);
    out.predictions.push_back(r.predicted);
  }
  out.loss.l_c = sum_c / static_cast<double>(batch.size());
  out.loss.l_g = annotated > 0 ? sum_g / static_cast<double>(annotated) : 0.0;
  out.loss.total = out.loss.l_c + lambda * out.loss.l_g;
  return out;
}

LossBreakdown batch_loss(std::span<const EncodedExample> batch, const Parameters& params,
                         double lambda) {
  if (batch.empty()) throw DataError("empty batch");
  LossBreakdown out;
  double sum_c = 0.0, sum_g = 0.0;
  std::size_t annotated = 0;
  for (const EncodedExample& e : batch) {
    ad::Tape tape;
    const ForwardTrace trace = forward(e.ids, e.aspect, params, tape);
    sum_c += classification_loss(trace, e.gold).value().item();
    const bool counted = lambda > 0.0 && uses_correction(e);
    out.annotated.push_back(counted);
    if (!counted) continue;
    const SaliencyMap map = saliency(e.ids, e.aspect, params, e.gold);
    double l_g = 0.0;
    for (std::size_t i = 0; i < map.entries.size(); ++i) {
      l_g -= (*e.training_mask)[i] * map.entries[i].alpha;
    }
    sum_g += l_g;
    ++annotated;
  }
  out.l_c = sum_c / static_cast<double>(batch.size());
  out.l_g = annotated > 0 ? sum_g / static_cast<double>(annotated) : 0.0;
  out.total = out.l_c + lambda * out.l_g;
  return out;
}

AdamOptimizer::AdamOptimizer(const Parameters& params, double learning_rate, double beta1,
                             double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  const auto t = params.tensors();
  for (std::size_t i = 0; i < t.size(); ++i) {
    m_[i].assign(t[i]->numel(), 0.0);
    v_[i].assign(t[i]->numel(), 0.0);
  }
}

void AdamOptimizer::step(Parameters& params, const ParameterGrads& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto t = params.tensors();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Tensor& g = grads[i];
    if (g.shape() != t[i]->shape()) throw ShapeError("gradient shape mismatch");
    std::vector<double> w(t[i]->values().begin(), t[i]->values().end());
    for (std::size_t k = 0; k < w.size(); ++k) {
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
      const double m_hat = m_[i][k] / c1;
      const double v_hat = v_[i][k] / c2;
      w[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
    *t[i] = Tensor(t[i]->shape(), std::move(w));
  }
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,mean_l_c,mean_l_g,train_accuracy,valid_accuracy,valid_hr5\n";
  char line[256];
  for (const EpochRecord& r : epochs) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  r.mean_l_c, r.mean_l_g, r.train_accuracy, r.valid_accuracy,
                  r.valid_hit_rate);
    out << line;
  }
  return out.str();
}

namespace {

struct ValidationScores {
  double accuracy = 0.0;
  double hit_rate = 0.0;
};

ValidationScores validate_epoch(const std::vector<EncodedExample>& valid,
                                const Parameters& params) {
  ValidationScores s;
  if (valid.empty()) return s;
  const RankingPolicy policy;
  std::size_t correct = 0;
  std::vector<std::vector<std::size_t>> rankings, golds;
  for (const EncodedExample& e : valid) {
    const SaliencyMap map = explain(e.ids, e.aspect, params);
    correct += map.target_class == e.gold ? 1 : 0;
    rankings.push_back(rank_tokens(map.alphas(), e.aspect, policy));
    golds.push_back(e.gold_opinions);
  }
  s.accuracy = static_cast<double>(correct) / static_cast<double>(valid.size());
  const RankingScore hr = hit_rate_or_empty(rankings, golds, policy.k);
  s.hit_rate = hr.value;
  return s;
}

}  // namespace

TrainResult train(const Corpus& corpus, const TrainConfig& config, ModelConfig model_config,
                  const EpochCallback& on_epoch) {
  config.validate();
  model_config.vocab_size = corpus.vocabulary.size();
  model_config.validate();

  const std::vector<Example> train_split =
      subsample_annotations(corpus.split("train"), config.annotated_fraction, config.seed);
  if (train_split.empty()) throw DataError("training split is empty");
  const std::vector<EncodedExample> train_set = encode_all(train_split, corpus.vocabulary);
  std::vector<EncodedExample> valid_set;
  if (corpus.splits.count("valid")) {
    valid_set = encode_all(corpus.split("valid"), corpus.vocabulary);
  }

  TrainResult result;
  for (const EncodedExample& e : train_set) result.annotated_examples += uses_correction(e);
  if (config.lambda > 0.0 && result.annotated_examples == 0) {
    result.warnings.push_back(
        "no annotated training examples: the correction loss is inactive and training "
        "reduces to the plain classifier");
  }

  Parameters params = init_params(model_config);
  AdamOptimizer optimizer(params, config.learning_rate);
  result.best_params = params;
  double best_accuracy = -1.0;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> dist(0, i - 1);
      std::swap(order[i - 1], order[dist(rng)]);
    }
    double sum_c = 0.0, sum_g = 0.0;
    std::size_t annotated_seen = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<EncodedExample> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) batch.push_back(train_set[order[k]]);
      const BatchResult br =
          batch_gradient(batch, params, config.lambda, config.correction_mode);
      optimizer.step(params, br.grads);
      sum_c += br.loss.l_c * static_cast<double>(batch.size());
      std::size_t batch_annotated = 0;
      for (bool a : br.loss.annotated) batch_annotated += a ? 1 : 0;
      sum_g += br.loss.l_g * static_cast<double>(batch_annotated);
      annotated_seen += batch_annotated;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        correct += br.predictions[k] == batch[k].gold ? 1 : 0;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_l_c = sum_c / static_cast<double>(train_set.size());
    rec.mean_l_g = annotated_seen > 0 ? sum_g / static_cast<double>(annotated_seen) : 0.0;
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    const ValidationScores vs = validate_epoch(valid_set, params);
    rec.valid_accuracy = vs.accuracy;
    rec.valid_hit_rate = vs.hit_rate;
    result.history.epochs.push_back(rec);
    if (rec.valid_accuracy > best_accuracy) {
      best_accuracy = rec.valid_accuracy;
      result.best_params = params;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec, params, result.best_params);
  }
  result.final_params = std::move(params);
  return result;
}

}  // namespace iega

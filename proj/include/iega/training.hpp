#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iega/attribution.hpp"
#include "iega/data.hpp"
#include "iega/losses.hpp"
#include "iega/model.hpp"

namespace iega {

struct TrainConfig {
  double lambda = 0.01;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  GradientFlow correction_mode = GradientFlow::kSecondOrder;
  double annotated_fraction = 1.0;

  // Throws ConfigError.
  void validate() const;
};

using ParameterGrads = std::array<Tensor, 6>;  // Parameters::kNames order

struct LossBreakdown {
  double l_c = 0.0;    // mean over the batch
  double l_g = 0.0;    // mean over annotated examples, 0 when none
  double total = 0.0;  // l_c + lambda * l_g
  std::vector<bool> annotated;
};

struct ExampleResult {
  double l_c = 0.0;
  double l_g = 0.0;
  bool annotated = false;
  Polarity predicted = Polarity::kPositive;
  ParameterGrads grads;
};

// Gradient of weight_c * L_c + weight_g * L_g for one example. L_g is only
// built when the example carries a training mask and weight_g != 0.
ExampleResult example_gradient(const EncodedExample& example, const Parameters& params,
                               double weight_c, double weight_g, GradientFlow flow);

struct BatchResult {
  LossBreakdown loss;
  ParameterGrads grads;
  std::vector<Polarity> predictions;
};

// Batch objective: mean_batch L_c + lambda * mean_annotated L_g.
BatchResult batch_gradient(std::span<const EncodedExample> batch, const Parameters& params,
                           double lambda, GradientFlow flow);

// Scalar recomputation of the batch objective, one fresh tape per example.
LossBreakdown batch_loss(std::span<const EncodedExample> batch, const Parameters& params,
                         double lambda);

class AdamOptimizer {
 public:
  AdamOptimizer(const Parameters& params, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  void step(Parameters& params, const ParameterGrads& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::array<std::vector<double>, 6> m_, v_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_l_c = 0.0;
  double mean_l_g = 0.0;
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
  double valid_hit_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // epoch,mean_l_c,mean_l_g,train_accuracy,valid_accuracy,valid_hr5
  std::string to_csv() const;
};

struct TrainResult {
  Parameters final_params;
  Parameters best_params;  // highest validation accuracy, earliest on ties
  std::size_t best_epoch = 0;
  TrainHistory history;
  std::size_t annotated_examples = 0;
  std::vector<std::string> warnings;
};

// Called after each epoch with the record and the current parameters.
using EpochCallback = std::function<void(const EpochRecord&, const Parameters& current,
                                         const Parameters& best)>;

// Mini-batch Adam on L = L_c + lambda L_g over corpus "train", validated on
// "valid" when present. model_config.vocab_size is taken from the corpus
// vocabulary. Deterministic for a fixed config.
TrainResult train(const Corpus& corpus, const TrainConfig& config, ModelConfig model_config,
                  const EpochCallback& on_epoch = {});

}  // namespace iega

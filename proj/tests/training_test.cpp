#include "iega/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "iega/error.hpp"
#include "support/micro_models.hpp"

namespace iega {
namespace {

Parameters random_params(std::uint64_t seed, std::size_t vocab, std::size_t dim) {
  return micro::random_params(seed, vocab, dim, 77);
}

ForwardTrace trace_with_logits(ad::Tape& tape, std::vector<double> logits) {
  ForwardTrace t;
  t.logits = tape.leaf(Tensor::row(std::move(logits)));
  return t;
}

// Objective with g_i frozen at `frozen`: L_c(theta) + lambda L_g where the
// scores use the fixed g and the live embedding rows.
double detached_objective(const Parameters& p, const EncodedExample& e, double lambda,
                          const std::vector<Tensor>& frozen) {
  ad::Tape tape;
  const ForwardTrace t = forward(e.ids, e.aspect, p, tape);
  const double l_c = classification_loss(t, e.gold).value().item();
  std::vector<double> scores;
  for (std::size_t i = 0; i < e.ids.size(); ++i) {
    scores.push_back(std::abs(dot(frozen[i], t.inputs[i].value()).item()));
  }
  const auto alpha = normalize_scores(scores);
  double l_g = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) l_g -= (*e.training_mask)[i] * alpha[i];
  return l_c + lambda * l_g;
}

TEST(ClassificationLossTest, WorkedExamples) {
  ad::Tape tape;
  EXPECT_NEAR(classification_loss(trace_with_logits(tape, {0.3, 0.3, 0.3}), Polarity::kNeutral)
                  .value()
                  .item(),
              std::log(3.0), 1e-15);
  EXPECT_LT(classification_loss(trace_with_logits(tape, {20, -20, -20}), Polarity::kPositive)
                .value()
                .item(),
            1e-8);
  EXPECT_NEAR(classification_loss(trace_with_logits(tape, {20, -20, -20}), Polarity::kNegative)
                  .value()
                  .item(),
              40.0, 1e-8);
  // No overflow for large logits.
  EXPECT_NEAR(classification_loss(trace_with_logits(tape, {800, 0, 0}), Polarity::kNegative)
                  .value()
                  .item(),
              800.0, 1e-9);
}

TEST(CorrectionLossTest, WorkedExamples) {
  ad::Tape tape;
  const ad::Var alpha = tape.leaf(Tensor::row({0.75, 0.25}));
  EXPECT_EQ(correction_loss(alpha, std::vector<int>{0, 1}).value().item(), -0.25);
  EXPECT_EQ(correction_loss(alpha, std::vector<int>{1, 1}).value().item(), -1.0);
  EXPECT_EQ(correction_loss(alpha, std::vector<int>{0, 0}).value().item(), 0.0);
  EXPECT_THROW(correction_loss(alpha, std::vector<int>{1}), DataError);
}

TEST(TotalLossTest, WorkedExamples) {
  ad::Tape tape;
  const ad::Var l_c = tape.leaf(Tensor::scalar(1.0));
  const ad::Var l_g = tape.leaf(Tensor::scalar(-0.5));
  EXPECT_NEAR(total_loss(l_c, l_g, 0.01).value().item(), 0.995, 1e-15);
  EXPECT_EQ(total_loss(l_c, l_g, 0.0).value().item(), 1.0);
  EXPECT_THROW(total_loss(l_c, l_g, -0.1), ConfigError);
  EXPECT_EQ(TrainConfig{}.lambda, 0.01);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.annotated_fraction = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(GradientFlowTest, SecondOrderMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Parameters p = random_params(seed, 4, 3);
    const EncodedExample e = micro::two_token_example(kAllPolarities[seed % 3]);
    for (double lambda : {0.01, 1.0}) {
      const std::vector<EncodedExample> batch = {e};
      const BatchResult r = batch_gradient(batch, p, lambda, GradientFlow::kSecondOrder);
      const double err = micro::parameter_fd_error(p, r.grads, [&](const Parameters& q) {
        return batch_loss(batch, q, lambda).total;
      });
      EXPECT_LT(err, 1e-4) << "seed " << seed << " lambda " << lambda;
    }
  }
}

TEST(GradientFlowTest, DetachedMatchesFrozenGradientObjective) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Parameters p = random_params(seed, 4, 3);
    const EncodedExample e = micro::two_token_example(kAllPolarities[seed % 3]);
    const std::vector<Tensor> frozen = input_gradients(e.ids, e.aspect, p, e.gold);
    const double lambda = 1.0;
    const std::vector<EncodedExample> batch = {e};
    const BatchResult r = batch_gradient(batch, p, lambda, GradientFlow::kDetached);
    const double err = micro::parameter_fd_error(p, r.grads, [&](const Parameters& q) {
      return detached_objective(q, e, lambda, frozen);
    });
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(GradientFlowTest, SecondOrderDiffersFromDetached) {
  const Parameters p = random_params(3, 4, 3);
  const EncodedExample e = micro::two_token_example(Polarity::kNegative);
  const ExampleResult second = example_gradient(e, p, 0.0, 1.0, GradientFlow::kSecondOrder);
  const ExampleResult detached = example_gradient(e, p, 0.0, 1.0, GradientFlow::kDetached);
  const double ratio = micro::grad_norm(second.grads) / micro::grad_norm(detached.grads);
  EXPECT_TRUE(ratio < 0.99 || ratio > 1.01) << ratio;
}

TEST(CorrectionLossTest, AllOnesMaskHasZeroGradient) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Parameters p = random_params(seed, 6, 4);
    EncodedExample e;
    e.ids = {1, 2, 3, 4, 5};
    e.aspect = {1, 3};
    e.gold = kAllPolarities[seed % 3];
    e.training_mask = std::vector<int>(5, 1);
    const ExampleResult r = example_gradient(e, p, 0.0, 1.0, GradientFlow::kSecondOrder);
    EXPECT_NEAR(r.l_g, -1.0, 1e-12);
    EXPECT_LT(micro::grad_norm(r.grads), 1e-8);
  }
}

TEST(CorrectionLossTest, StaysWithinUnitInterval) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> bit(0, 1);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Parameters p = random_params(seed % 20, 6, 3);
    EncodedExample e;
    e.ids = {1, 2, 3, 4};
    e.aspect = {0, 1};
    e.gold = kAllPolarities[seed % 3];
    std::vector<int> mask(4);
    for (int& m : mask) m = bit(rng);
    mask[2] = 1;
    e.training_mask = mask;
    const ExampleResult r = example_gradient(e, p, 1.0, 1.0, GradientFlow::kSecondOrder);
    EXPECT_GE(r.l_g, -1.0 - 1e-12);
    EXPECT_LE(r.l_g, 0.0);
  }
}

TEST(BatchTest, TotalMatchesScalarRecomputation) {
  std::vector<EncodedExample> batch;
  for (std::size_t i = 0; i < 7; ++i) {
    EncodedExample e;
    e.ids = {1 + i % 3, 2, 3 + i % 2, 1};
    e.aspect = {1, 2};
    e.gold = kAllPolarities[i % 3];
    e.gold_opinions = {2};
    if (i % 3 != 1) e.training_mask = std::vector<int>{0, 0, 1, 0};
    batch.push_back(e);
  }
  const Parameters p = random_params(5, 6, 4);
  const double lambda = 0.3;
  const BatchResult r = batch_gradient(batch, p, lambda, GradientFlow::kSecondOrder);
  const LossBreakdown scalar = batch_loss(batch, p, lambda);
  EXPECT_NEAR(r.loss.total, scalar.total, 1e-12);
  EXPECT_NEAR(r.loss.l_c, scalar.l_c, 1e-12);
  EXPECT_NEAR(r.loss.l_g, scalar.l_g, 1e-12);
  EXPECT_NEAR(r.loss.total, r.loss.l_c + lambda * r.loss.l_g, 1e-12);
  EXPECT_EQ(r.loss.annotated, scalar.annotated);

  // Averages computed independently from per-example values.
  double sum_c = 0.0, sum_g = 0.0;
  std::size_t annotated = 0;
  for (const EncodedExample& e : batch) {
    const ExampleResult er = example_gradient(e, p, 1.0, 1.0, GradientFlow::kSecondOrder);
    sum_c += er.l_c;
    if (er.annotated) {
      sum_g += er.l_g;
      ++annotated;
    }
  }
  EXPECT_EQ(annotated, 5u);
  EXPECT_NEAR(r.loss.l_c, sum_c / 7.0, 1e-12);
  EXPECT_NEAR(r.loss.l_g, sum_g / 5.0, 1e-12);

  const double err = micro::parameter_fd_error(
      p, r.grads, [&](const Parameters& q) { return batch_loss(batch, q, lambda).total; });
  EXPECT_LT(err, 1e-4);
}

TEST(AdamTest, ZeroGradientLeavesParametersUnchanged) {
  Parameters p = random_params(1, 5, 3);
  const Parameters before = p;
  AdamOptimizer opt(p, 1e-3);
  ParameterGrads zero;
  const auto t = p.tensors();
  for (std::size_t i = 0; i < 6; ++i) zero[i] = Tensor::zeros(t[i]->shape());
  opt.step(p, zero);
  opt.step(p, zero);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.steps(), 2u);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  Parameters p = random_params(2, 5, 3);
  const Parameters before = p;
  AdamOptimizer opt(p, 1e-3);
  ParameterGrads g;
  const auto t = p.tensors();
  for (std::size_t i = 0; i < 6; ++i) g[i] = Tensor::full(t[i]->shape(), (i % 2) ? 2.5 : -0.1);
  opt.step(p, g);
  // With bias correction the first step is lr * g / (|g| + eps').
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < t[i]->numel(); ++k) {
      const double expected = (i % 2) ? -1e-3 : 1e-3;
      EXPECT_NEAR((*p.tensors()[i])[k] - (*before.tensors()[i])[k], expected, 1e-9);
    }
  }
}

Corpus tiny_corpus() {
  SyntheticSpec spec;
  spec.n_train = 60;
  spec.n_valid = 20;
  spec.n_test = 20;
  spec.seed = 3;
  return generate_synthetic(spec);
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.embed_dim = 6;
  m.hidden_dim = 6;
  m.init_seed = 2;
  return m;
}

TEST(TrainTest, ZeroLambdaEqualsPlainClassifier) {
  const Corpus c = tiny_corpus();
  TrainConfig with_masks;
  with_masks.lambda = 0.0;
  with_masks.epochs = 2;
  with_masks.batch_size = 8;
  TrainConfig plain = with_masks;
  plain.annotated_fraction = 0.0;
  const TrainResult a = train(c, with_masks, tiny_model());
  const TrainResult b = train(c, plain, tiny_model());
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
}

TEST(TrainTest, DeterministicAndOneRecordPerEpoch) {
  const Corpus c = tiny_corpus();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.annotated_fraction = 0.5;
  std::size_t callbacks = 0;
  const TrainResult a = train(c, cfg, tiny_model(), [&](const EpochRecord& r, const Parameters&,
                                                        const Parameters&) {
    ++callbacks;
    EXPECT_EQ(r.epoch, callbacks);
  });
  const TrainResult b = train(c, cfg, tiny_model());
  EXPECT_EQ(callbacks, 3u);
  EXPECT_EQ(a.history.epochs.size(), 3u);
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  EXPECT_EQ(a.annotated_examples, 30u);
  EXPECT_GE(a.best_epoch, 1u);
  for (const EpochRecord& r : a.history.epochs) {
    EXPECT_GE(r.mean_l_g, -1.0);
    EXPECT_LE(r.mean_l_g, 0.0);
  }
  const std::string csv = a.history.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,mean_l_c,mean_l_g,train_accuracy,valid_accuracy,valid_hr5");
}

TEST(TrainTest, NoAnnotationsWithPositiveLambdaWarns) {
  const Corpus c = tiny_corpus();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.annotated_fraction = 0.0;
  const TrainResult r = train(c, cfg, tiny_model());
  EXPECT_EQ(r.annotated_examples, 0u);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(TrainTest, EmptyTrainingSplitFails) {
  Corpus c = tiny_corpus();
  c.splits["train"].clear();
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(c, cfg, tiny_model()), DataError);
}

}  // namespace
}  // namespace iega

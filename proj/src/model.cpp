#include "iega/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "iega/error.hpp"
#include "iega/io.hpp"

namespace iega {

using json = nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "iega-checkpoint";
constexpr int kCheckpointVersion = 1;

Tensor uniform_tensor(std::mt19937_64& rng, Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("vocab_size must be at least 1");
  if (embed_dim == 0) throw ConfigError("embed_dim must be at least 1");
  if (hidden_dim == 0) throw ConfigError("hidden_dim must be at least 1");
  if (num_classes != kNumClasses) throw ConfigError("num_classes must be 3");
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
}

std::array<const Tensor*, 6> Parameters::tensors() const {
  return {&embedding, &w_context, &w_aspect, &v_attention, &w_out, &b_out};
}

std::array<Tensor*, 6> Parameters::tensors() {
  return {&embedding, &w_context, &w_aspect, &v_attention, &w_out, &b_out};
}

void Parameters::validate_shapes() const {
  const std::size_t d = config.embed_dim, h = config.hidden_dim;
  const std::array<Shape, 6> expected = {Shape{config.vocab_size, d}, Shape{d, h},
                                         Shape{d, h},  Shape{1, h},
                                         Shape{d, kNumClasses}, Shape{1, kNumClasses}};
  const auto t = tensors();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i]->shape() != expected[i]) {
      throw CheckpointError(std::string(kNames[i]) + " has shape " +
                            shape_to_string(t[i]->shape()) + ", config expects " +
                            shape_to_string(expected[i]));
    }
  }
}

Parameters init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.init_seed);
  const std::size_t d = config.embed_dim, h = config.hidden_dim;
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double inv_h = 1.0 / std::sqrt(static_cast<double>(h));
  Parameters p;
  p.config = config;
  p.embedding = uniform_tensor(rng, {config.vocab_size, d}, 0.1);
  p.w_context = uniform_tensor(rng, {d, h}, inv_d);
  p.w_aspect = uniform_tensor(rng, {d, h}, inv_d);
  p.v_attention = uniform_tensor(rng, {1, h}, inv_h);
  p.w_out = uniform_tensor(rng, {d, kNumClasses}, inv_d);
  p.b_out = Tensor::zeros({1, kNumClasses});
  return p;
}

ParameterNodes bind(const Parameters& params, ad::Tape& tape) {
  return {tape.leaf(params.embedding), tape.leaf(params.w_context),
          tape.leaf(params.w_aspect),  tape.leaf(params.v_attention),
          tape.leaf(params.w_out),     tape.leaf(params.b_out)};
}

void validate_input(std::span<const std::size_t> tokens, AspectSpan span,
                    const ModelConfig& config) {
  if (tokens.empty()) throw DataError("empty sentence");
  if (tokens.size() > config.max_len) {
    throw DataError("sentence of " + std::to_string(tokens.size()) +
                    " tokens exceeds max_len " + std::to_string(config.max_len));
  }
  if (span.start >= span.end) throw DataError("empty aspect span");
  if (span.end > tokens.size()) throw DataError("aspect span past end of sentence");
  for (std::size_t t : tokens) {
    if (t >= config.vocab_size) {
      throw DataError("token id " + std::to_string(t) + " outside vocabulary of " +
                      std::to_string(config.vocab_size));
    }
  }
}

ForwardTrace forward(std::span<const std::size_t> tokens, AspectSpan span,
                     const Parameters& params, ad::Tape& tape) {
  validate_input(tokens, span, params.config);
  const ParameterNodes nodes = bind(params, tape);
  std::vector<ad::Var> inputs;
  inputs.reserve(tokens.size());
  for (std::size_t t : tokens) inputs.push_back(ad::gather(nodes.embedding, {t}));
  return forward_embedded(inputs, span, nodes);
}

ForwardTrace forward_embedded(std::span<const ad::Var> inputs, AspectSpan span,
                              const ParameterNodes& params) {
  const std::size_t n = inputs.size();
  if (n == 0) throw DataError("empty sentence");
  if (span.start >= span.end || span.end > n) throw DataError("invalid aspect span");
  ad::Tape& tape = *params.embedding.tape();

  const ad::Var x = ad::concat(inputs);  // n x d

  std::vector<double> pool(n, 0.0);
  for (std::size_t i = span.start; i < span.end; ++i) {
    pool[i] = 1.0 / static_cast<double>(span.length());
  }
  const ad::Var aspect = ad::matmul(tape.constant(Tensor::row(std::move(pool))), x);
  const ad::Var ones = tape.constant(Tensor::full({n, 1}, 1.0));
  const ad::Var aspect_term = ad::matmul(ones, ad::matmul(aspect, params.w_aspect));
  const ad::Var hidden =
      ad::tanh(ad::add(ad::matmul(x, params.w_context), aspect_term));  // n x h
  const ad::Var scores = ad::matmul(params.v_attention, ad::transpose(hidden));  // 1 x n
  const ad::Var attention = ad::softmax(scores);
  const ad::Var context = ad::matmul(attention, x);  // 1 x d
  const ad::Var logits = ad::add(ad::matmul(context, params.w_out), params.b_out);

  ForwardTrace trace;
  trace.logits = logits;
  trace.inputs.assign(inputs.begin(), inputs.end());
  trace.attention.assign(attention.value().values().begin(),
                         attention.value().values().end());
  trace.params = params;
  return trace;
}

Prediction prediction_from_logits(const Tensor& logits) {
  if (logits.numel() != kNumClasses) {
    throw ShapeError("expected 3 logits, got shape " + shape_to_string(logits.shape()));
  }
  const Tensor probs = softmax(logits);
  Prediction p;
  std::size_t best = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    p.probabilities[k] = probs[k];
    if (logits[k] > logits[best]) best = k;
  }
  p.label = static_cast<Polarity>(best);
  return p;
}

Prediction predict(std::span<const std::size_t> tokens, AspectSpan span,
                   const Parameters& params) {
  ad::Tape tape;
  return prediction_from_logits(forward(tokens, span, params, tape).logits.value());
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const Parameters& p = checkpoint.params;
  p.validate_shapes();
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"vocab_size", p.config.vocab_size},
                 {"embed_dim", p.config.embed_dim},
                 {"hidden_dim", p.config.hidden_dim},
                 {"num_classes", p.config.num_classes},
                 {"max_len", p.config.max_len},
                 {"init_seed", p.config.init_seed}};
  j["vocabulary"] = checkpoint.vocabulary;
  json tensors = json::object();
  const auto t = p.tensors();
  for (std::size_t i = 0; i < t.size(); ++i) {
    tensors[std::string(Parameters::kNames[i])] = {
        {"shape", t[i]->shape()},
        {"values", std::vector<double>(t[i]->values().begin(), t[i]->values().end())}};
  }
  j["tensors"] = std::move(tensors);
  write_file_atomic(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Checkpoint c;
  try {
    const json j = json::parse(text);
    if (j.at("format") != kCheckpointFormat) throw CheckpointError("not a checkpoint file");
    if (j.at("version") != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
    }
    const json& cfg = j.at("config");
    ModelConfig& mc = c.params.config;
    mc.vocab_size = cfg.at("vocab_size").get<std::size_t>();
    mc.embed_dim = cfg.at("embed_dim").get<std::size_t>();
    mc.hidden_dim = cfg.at("hidden_dim").get<std::size_t>();
    mc.num_classes = cfg.at("num_classes").get<std::size_t>();
    mc.max_len = cfg.at("max_len").get<std::size_t>();
    mc.init_seed = cfg.at("init_seed").get<std::uint64_t>();
    mc.validate();
    c.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    const auto t = c.params.tensors();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const json& tj = j.at("tensors").at(std::string(Parameters::kNames[i]));
      *t[i] = Tensor(tj.at("shape").get<Shape>(), tj.at("values").get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const NumericError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  c.params.validate_shapes();
  if (!c.vocabulary.empty() && c.vocabulary.size() != c.params.config.vocab_size) {
    throw CheckpointError("vocabulary has " + std::to_string(c.vocabulary.size()) +
                          " entries but the model expects " +
                          std::to_string(c.params.config.vocab_size));
  }
  return c;
}

}  // namespace iega

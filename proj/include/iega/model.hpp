#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iega/autodiff.hpp"
#include "iega/tensor.hpp"
#include "iega/types.hpp"

namespace iega {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t num_classes = kNumClasses;
  std::size_t max_len = 64;
  std::uint64_t init_seed = 0;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Learnable weights of the aspect-attention classifier.
//
//   x_i      = embedding[token_i]                          (1 x d)
//   a        = mean of x_i over the aspect span            (1 x d)
//   e_i      = v_attention . tanh(x_i W_context + a W_aspect)
//   attn     = softmax(e)
//   c        = sum_i attn_i x_i
//   logits   = c W_out + b_out                             (1 x 3)
struct Parameters {
  ModelConfig config;
  Tensor embedding;    // vocab_size x embed_dim
  Tensor w_context;    // embed_dim x hidden_dim
  Tensor w_aspect;     // embed_dim x hidden_dim
  Tensor v_attention;  // 1 x hidden_dim
  Tensor w_out;        // embed_dim x 3
  Tensor b_out;        // 1 x 3

  static constexpr std::array<std::string_view, 6> kNames = {
      "embedding", "w_context", "w_aspect", "v_attention", "w_out", "b_out"};

  std::array<const Tensor*, 6> tensors() const;
  std::array<Tensor*, 6> tensors();

  // Throws CheckpointError when a tensor disagrees with `config`.
  void validate_shapes() const;
  bool operator==(const Parameters&) const = default;
};

Parameters init_params(const ModelConfig& config);

// Parameters as leaves of one tape, in Parameters::kNames order.
struct ParameterNodes {
  ad::Var embedding, w_context, w_aspect, v_attention, w_out, b_out;

  std::array<ad::Var, 6> all() const {
    return {embedding, w_context, w_aspect, v_attention, w_out, b_out};
  }
};

ParameterNodes bind(const Parameters& params, ad::Tape& tape);

struct ForwardTrace {
  ad::Var logits;                     // 1 x 3
  std::vector<ad::Var> inputs;        // x_i, each 1 x embed_dim
  std::vector<double> attention;      // per token, sums to 1
  ParameterNodes params;
};

// Checks sentence length and span bounds; throws DataError.
void validate_input(std::span<const std::size_t> tokens, AspectSpan span,
                    const ModelConfig& config);

ForwardTrace forward(std::span<const std::size_t> tokens, AspectSpan span,
                     const Parameters& params, ad::Tape& tape);

// Forward pass from already-materialised embedding rows; used when the
// embeddings themselves are perturbed.
ForwardTrace forward_embedded(std::span<const ad::Var> inputs, AspectSpan span,
                              const ParameterNodes& params);

struct Prediction {
  Polarity label = Polarity::kPositive;
  std::array<double, kNumClasses> probabilities{};
};

// Argmax with ties toward the lower class index.
Prediction prediction_from_logits(const Tensor& logits);

Prediction predict(std::span<const std::size_t> tokens, AspectSpan span,
                   const Parameters& params);

// Model weights plus the vocabulary they were trained with.
struct Checkpoint {
  Parameters params;
  std::vector<std::string> vocabulary;
};

// Versioned JSON. Doubles are written in shortest round-trip form, so
// load(save(x)) is bit-exact. Writes go to a temporary file that is renamed
// into place. Throws IoError / CheckpointError.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace iega

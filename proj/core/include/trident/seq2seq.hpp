#pragma once

// Transformer encoder-decoder with teacher-forced scoring, a dense-embedding
// encoder input path, and single-step next-token distributions.
//
// Layers are pre-norm; inputs are scaled by sqrt(d_model) and summed with
// fixed sinusoidal positions. Every model owns its embedding table (shared by
// its encoder and decoder inputs) and an untied, bias-free output projection.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trident/autograd.hpp"

namespace trident::model {

// Floor applied to probabilities before taking logs.
inline constexpr double kProbFloor = 1e-12;

struct ModelConfig {
  int vocab_size = 0;
  int layers = 2;
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int max_len = 64;

  int d_k() const { return d_model / heads; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct AttentionParams {
  ad::Parameter wq, wk, wv, wo;  // d_model x d_model; head i uses columns [i*d_k, (i+1)*d_k)
};

struct FeedForwardParams {
  ad::Parameter w1, b1, w2, b2;
};

struct LayerNormParams {
  ad::Parameter gain, bias;
};

struct EncoderLayer {
  LayerNormParams norm1;
  AttentionParams self_attn;
  LayerNormParams norm2;
  FeedForwardParams ffn;
};

struct DecoderLayer {
  LayerNormParams norm1;
  AttentionParams self_attn;
  LayerNormParams norm2;
  AttentionParams cross_attn;
  LayerNormParams norm3;
  FeedForwardParams ffn;
};

struct ModelParams {
  ModelConfig config;
  ad::Parameter embedding;  // vocab_size x d_model
  std::vector<EncoderLayer> encoder;
  LayerNormParams encoder_norm;
  std::vector<DecoderLayer> decoder;
  LayerNormParams decoder_norm;
  ad::Parameter output;  // d_model x vocab_size

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  void set_trainable(bool trainable);
};

// Weight matrices uniform(-0.08, 0.08); layer-norm gains 1, biases 0.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

// ---- attention --------------------------------------------------------------

// softmax(q k^T / sqrt(d_k) + mask) v. `mask` is added to the scores.
ad::Var scaled_dot_attention(ad::Var q, ad::Var k, ad::Var v, double d_k,
                             const ad::Matrix* mask = nullptr);
ad::Var multi_head_attention(ad::Var q, ad::Var k, ad::Var v,
                             const AttentionParams& params, int heads,
                             const ad::Matrix* mask = nullptr);

ad::Matrix scaled_dot_attention(const ad::Matrix& q, const ad::Matrix& k,
                                const ad::Matrix& v, double d_k);
ad::Matrix multi_head_attention(const ad::Matrix& q, const ad::Matrix& k,
                                const ad::Matrix& v, const AttentionParams& params,
                                int heads);

ad::Matrix sinusoidal_positions(int rows, int d_model);
ad::Matrix causal_mask(int n);

// ---- forward ------------------------------------------------------------------

ad::Var embed(ad::Tape& tape, const ModelParams& params, std::span<const int> ids);
// Encoder over embedding-space rows (one per source position).
ad::Var encode(ad::Tape& tape, const ModelParams& params, ad::Var input_rows);
// Log-probabilities (one row per decoder input row) over the vocabulary.
ad::Var decode_logprobs(ad::Tape& tape, const ModelParams& params, ad::Var memory,
                        ad::Var decoder_rows);

// Sum of log P(y_j | y_<j, x) over `target` followed by EOS.
ad::Var sequence_logprob(ad::Tape& tape, const ModelParams& params,
                         std::span<const int> source, std::span<const int> target);
// Same as sequence_logprob but scores exactly `prefix` (no EOS appended).
ad::Var prefix_logprob(ad::Tape& tape, const ModelParams& params,
                       std::span<const int> source, std::span<const int> prefix);
// Teacher-forced scoring of `target` + EOS from an encoder memory.
ad::Var score_from_memory(ad::Tape& tape, const ModelParams& params, ad::Var memory,
                          std::span<const int> target, bool append_eos);
// sequence_logprob with the encoder's embedding lookup replaced by `rows`.
ad::Var forward_from_embeddings(ad::Tape& tape, const ModelParams& params,
                                ad::Var rows, std::span<const int> target);

double sequence_logprob(const ModelParams& params, std::span<const int> source,
                        std::span<const int> target);
double prefix_logprob(const ModelParams& params, std::span<const int> source,
                      std::span<const int> prefix);
double forward_from_embeddings(const ModelParams& params, const ad::Matrix& rows,
                               std::span<const int> target);

// P(. | prefix, source) for the position after `prefix` (BOS is implicit).
ad::RowVector next_token_dist(const ModelParams& params, std::span<const int> source,
                              std::span<const int> prefix);

// Inference helpers for decoders that query many prefixes of one source.
ad::Matrix encode_source(const ModelParams& params, std::span<const int> source);
ad::RowVector next_token_logprobs(const ModelParams& params, const ad::Matrix& memory,
                                  std::span<const int> prefix);

// ---- the six directional models ----------------------------------------------

enum class Direction : std::uint8_t { kAQ, kQA, kAB, kBA, kQB, kBQ };
inline constexpr std::array<Direction, 6> kAllDirections = {
    Direction::kAQ, Direction::kQA, Direction::kAB,
    Direction::kBA, Direction::kQB, Direction::kBQ};

const char* to_string(Direction d);
Direction direction_from_string(std::string_view name);

struct ModelBundle {
  ModelConfig config;
  std::array<ModelParams, 6> models;

  ModelParams& operator[](Direction d) { return models[static_cast<int>(d)]; }
  const ModelParams& operator[](Direction d) const { return models[static_cast<int>(d)]; }
};

// Model d is initialised from the "init/<d>" substream of `seed`.
ModelBundle init_bundle(const ModelConfig& config, std::uint64_t seed);

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle,
                     std::span<const Direction> directions,
                     const nlohmann::json& extra = nlohmann::json::object());
// Loads every direction present in the file into `bundle` (whose config is
// replaced by the checkpoint's) and returns the directions read.
std::vector<Direction> load_checkpoint(const std::filesystem::path& path,
                                       ModelBundle& bundle);

// Rounds all parameters to float32, the precision checkpoints store.
void round_to_checkpoint_precision(ModelParams& params);

}  // namespace trident::model

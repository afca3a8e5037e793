#pragma once

// Two-phase triangular training.
//
// Phase 1 fits the ad->query and query->ad models on the clean <ad, query>
// pairs with the mutual-information lower bound. Phase 2 freezes them and
// trains the four bidword-adjacent models on
//
//   L = lambda * L_MLE + (1 - lambda) * L_TRI,
//
// where L_TRI is the cross-entropy between the frozen direct probability and
// the indirect probability through a latent bidword bridge. The bridge is
// estimated either with expected embeddings (A) or with Gumbel-Softmax
// sampled candidates (S).
//
// Sequence probabilities used as cross-entropy weights are length-normalised,
// exp(log P / |y|), and carry no gradient.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trident/autograd.hpp"
#include "trident/rng.hpp"
#include "trident/seq2seq.hpp"

namespace trident::train {

enum class Estimator : std::uint8_t { kExpectedEmbedding, kSampling };

const char* to_string(Estimator e);
Estimator estimator_from_string(std::string_view name);  // "A" or "S"

// How a sampled bridge token enters the downstream computations.
enum class GumbelMode : std::uint8_t {
  kStraightThrough,  // one-hot forward value, relaxed-sample gradient
  kRelaxed,          // the relaxed sample itself
};

struct TrainConfig {
  double lambda = 0.6;
  double learning_rate = 1e-3;
  int warmup_steps = 100;
  int batch_size = 32;
  int bridge_length = 4;
  int sample_size = 5;
  double gumbel_temperature = 1.0;
  double temperature_decay = 0.9;  // multiplied in every temperature_decay_every steps
  int temperature_decay_every = 100;
  double temperature_floor = 0.1;
  int max_steps_phase1 = 1000;
  int max_steps_phase2 = 1000;
  int eval_every = 50;
  int patience = 5;
  int valid_subset = 128;  // validation pairs used for the convergence test
  double clip_norm = 5.0;  // global gradient norm clip; 0 disables
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  std::uint64_t seed = 1;
  Estimator estimator = Estimator::kExpectedEmbedding;

  void validate() const;
  double temperature_at(int step) const;
  // Linear warm-up to learning_rate, then linear decay to zero at max_steps.
  double learning_rate_at(int step, int max_steps) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Token-id pair; `source` and `target` carry no BOS/EOS.
struct IdPair {
  std::vector<int> source;
  std::vector<int> target;
  int topic = 0;
  bool noisy = false;
};

// exp(log P / (|target| + 1)): the per-token geometric mean probability.
double normalized_weight(double logprob, std::size_t target_len);

// ---- losses ----------------------------------------------------------------

// -sum over <a,q> of [w_q * log P(q|a; aq) + w_a * log P(a|q; qa)] with
// detached length-normalised weights.
ad::Var mi_bound_loss(ad::Tape& tape, const model::ModelParams& aq,
                      const model::ModelParams& qa, std::span<const IdPair> batch);
double mi_bound_loss(const model::ModelParams& aq, const model::ModelParams& qa,
                     std::span<const IdPair> batch);

// -sum of the four bidword-direction log-likelihoods: b|a, a|b over batch_ab
// and b|q, q|b over batch_qb.
ad::Var mle_loss(ad::Tape& tape, const model::ModelBundle& bundle,
                 std::span<const IdPair> batch_ab, std::span<const IdPair> batch_qb);
double mle_loss(const model::ModelBundle& bundle, std::span<const IdPair> batch_ab,
                std::span<const IdPair> batch_qb);

struct GumbelSample {
  ad::RowVector soft;  // relaxed one-hot on the simplex
  int hard = 0;        // argmax of the perturbed logits
};

// Plain sampler: softmax((logits + g) / tau), g ~ Gumbel(0, 1).
GumbelSample gumbel_softmax_sample(std::span<const double> logits, double tau, Rng& rng);
GumbelSample gumbel_softmax_sample(std::span<const double> logits, double tau,
                                   std::uint64_t seed);

struct GumbelVar {
  ad::Var soft;  // 1 x V relaxed sample
  ad::Var used;  // straight-through one-hot or `soft`, per mode
  int hard = 0;
};

// Differentiable sampler over a 1 x V row of logits.
GumbelVar gumbel_softmax_sample(ad::Var logits, double tau, Rng& rng, GumbelMode mode);

// T_b rows of expected embeddings: row j = sum_w P(w | w_<j, source) Emb(w)
// with Emb the downstream table. Each step feeds the source model's own
// expected embedding back as the next decoder input.
ad::Var expected_embedding_bridge(ad::Tape& tape, const model::ModelParams& src,
                                  const ad::Parameter& downstream_embedding,
                                  std::span<const int> source, int bridge_length);

// log P~(target | source) = log P(target | bridge rows; dst).
ad::Var bridge_logprob_A(ad::Tape& tape, const model::ModelParams& src,
                         const model::ModelParams& dst, std::span<const int> source,
                         std::span<const int> target, int bridge_length);

// log sum_{b in C} P(target | b; dst) P(b | source; src) for an explicit set
// of bridge sequences. P(b | source) is truncated at |b| (no EOS). Duplicate
// candidates are counted once.
ad::Var bridge_logprob_S(ad::Tape& tape, const model::ModelParams& src,
                         const model::ModelParams& dst, std::span<const int> source,
                         std::span<const int> target,
                         std::span<const std::vector<int>> candidates);

// Same, with `sample_size` bridges of length `bridge_length` drawn
// autoregressively from src with Gumbel-Softmax.
ad::Var bridge_logprob_S(ad::Tape& tape, const model::ModelParams& src,
                         const model::ModelParams& dst, std::span<const int> source,
                         std::span<const int> target, int bridge_length, int sample_size,
                         double tau, Rng& rng,
                         GumbelMode mode = GumbelMode::kStraightThrough);

struct TriOptions {
  Estimator estimator = Estimator::kExpectedEmbedding;
  int bridge_length = 4;
  int sample_size = 5;
  double tau = 1.0;
  GumbelMode mode = GumbelMode::kStraightThrough;
};

// -sum over <a,q> of [w_aq log P~(q|a; ab, bq) + w_qa log P~(a|q; qb, ba)],
// weights from the frozen aq/qa models. aq and qa never receive gradient.
ad::Var tri_loss(ad::Tape& tape, const model::ModelBundle& bundle,
                 std::span<const IdPair> batch_aq, const TriOptions& options, Rng& rng);

// Weights precomputed by the caller (one pair of weights per batch entry).
struct DirectWeights {
  double q_given_a = 0.0;
  double a_given_q = 0.0;
};
std::vector<DirectWeights> direct_weights(const model::ModelBundle& bundle,
                                          std::span<const IdPair> batch_aq);
ad::Var tri_loss(ad::Tape& tape, const model::ModelBundle& bundle,
                 std::span<const IdPair> batch_aq, std::span<const DirectWeights> weights,
                 const TriOptions& options, Rng& rng);

ad::Var total_loss(ad::Var mle, ad::Var tri, double lambda);
double total_loss(double mle, double tri, double lambda);

// ---- mutual information on enumerable worlds -------------------------------

// Joint table P(a, q) over a finite grid (rows a, cols q), entries sum to 1.
double exact_mutual_information(const ad::Matrix& joint);
// 1/2 [sum P(a,q) log Pm(q|a) + sum P(a,q) log Pm(a|q)] for model
// conditionals given as tables of the same shape.
double mi_lower_bound(const ad::Matrix& joint, const ad::Matrix& q_given_a,
                      const ad::Matrix& a_given_q);

// ---- optimisation ------------------------------------------------------------

class Adam {
 public:
  explicit Adam(std::vector<ad::Parameter*> params, double beta1 = 0.9, double beta2 = 0.98,
                double eps = 1e-9);

  // Applies one update from the gradients recorded on `tape`. Parameters
  // without a gradient are left untouched. Returns the pre-clip global norm.
  double step(const ad::Tape& tape, double learning_rate, double clip_norm);

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<ad::Matrix> m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

// ---- driver ------------------------------------------------------------------

struct TrainingData {
  std::vector<IdPair> aq_train, aq_valid;
  std::vector<IdPair> ab_train, ab_valid;
  std::vector<IdPair> qb_train, qb_valid;
};

struct LossRecord {
  int step = 0;
  int phase = 1;
  std::optional<double> mle;
  std::optional<double> tri;
  double total = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainingResult {
  std::vector<LossRecord> history;
  int phase1_steps = 0;
  int phase2_steps = 0;
};

// Phase 1: optimises aq/qa on the bound until the validation loss stops
// improving for `patience` evaluations or max_steps_phase1 is reached.
void run_phase1(const TrainingData& data, model::ModelBundle& bundle,
                const TrainConfig& config, TrainingResult& result);
// Phase 2: aq/qa frozen; optimises ab, ba, qb, bq on the composite loss.
void run_phase2(const TrainingData& data, model::ModelBundle& bundle,
                const TrainConfig& config, TrainingResult& result);

// Both phases. With lambda == 1 the triangular term vanishes and phase 1 is
// skipped, which yields the direct sequence-to-sequence baseline.
TrainingResult run_training(const TrainingData& data, model::ModelBundle& bundle,
                            const TrainConfig& config);

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history);

}  // namespace trident::train

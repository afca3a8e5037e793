#include "trident/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace trident::train {
namespace {

using model::Direction;
using model::ModelBundle;
using model::ModelParams;

constexpr int kBos = 1;

// Epoch-shuffled batch sampler over indices [0, n).
class BatchSampler {
 public:
  BatchSampler(std::size_t n, Rng rng) : rng_(rng), order_(n), pos_(n) {
    std::iota(order_.begin(), order_.end(), 0);
  }

  std::vector<std::size_t> next(int n) {
    std::vector<std::size_t> batch;
    if (order_.empty()) return batch;
    batch.reserve(n);
    for (int i = 0; i < n; ++i) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      batch.push_back(order_[pos_++]);
    }
    return batch;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

std::vector<IdPair> gather(const std::vector<IdPair>& pairs, const std::vector<std::size_t>& idx) {
  std::vector<IdPair> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pairs[i]);
  return out;
}

std::vector<IdPair> head(const std::vector<IdPair>& pairs, int n) {
  const auto k = std::min<std::size_t>(pairs.size(), static_cast<std::size_t>(std::max(n, 0)));
  return {pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(k)};
}

std::vector<ad::Parameter*> params_of(ModelBundle& bundle, std::initializer_list<Direction> ds) {
  std::vector<ad::Parameter*> out;
  for (Direction d : ds) {
    auto ps = bundle[d].parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

void set_trainable(ModelBundle& bundle, std::initializer_list<Direction> ds, bool on) {
  for (Direction d : ds) bundle[d].set_trainable(on);
}

void require_valid_bridge(int bridge_length, const ModelParams& src) {
  if (bridge_length < 1) throw std::invalid_argument("bridge length must be >= 1");
  if (bridge_length + 1 > src.config.max_len) {
    throw std::invalid_argument("bridge length exceeds the model's max_len");
  }
}

}  // namespace

const char* to_string(Estimator e) {
  return e == Estimator::kExpectedEmbedding ? "A" : "S";
}

Estimator estimator_from_string(std::string_view name) {
  if (name == "A" || name == "a") return Estimator::kExpectedEmbedding;
  if (name == "S" || name == "s") return Estimator::kSampling;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "' (expected A or S)");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("TrainConfig: lambda must lie in [0, 1]");
  }
  if (bridge_length < 1) throw std::invalid_argument("TrainConfig: bridge_length must be >= 1");
  if (sample_size < 1) throw std::invalid_argument("TrainConfig: sample_size must be >= 1");
  if (!(gumbel_temperature > 0.0) || !(temperature_floor > 0.0)) {
    throw std::invalid_argument("TrainConfig: Gumbel temperatures must be > 0");
  }
  if (!(learning_rate > 0.0) || batch_size < 1 || warmup_steps < 0 || max_steps_phase1 < 0 ||
      max_steps_phase2 < 0 || eval_every < 1 || patience < 1) {
    throw std::invalid_argument("TrainConfig: invalid optimisation schedule");
  }
}

double TrainConfig::temperature_at(int step) const {
  const int k = temperature_decay_every > 0 ? step / temperature_decay_every : 0;
  return std::max(temperature_floor, gumbel_temperature * std::pow(temperature_decay, k));
}

double TrainConfig::learning_rate_at(int step, int max_steps) const {
  if (warmup_steps > 0 && step <= warmup_steps) {
    return learning_rate * static_cast<double>(step) / warmup_steps;
  }
  if (max_steps <= warmup_steps) return learning_rate;
  const double remaining = static_cast<double>(max_steps - step + 1) / (max_steps - warmup_steps);
  return learning_rate * std::clamp(remaining, 0.0, 1.0);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lambda", c.lambda},
                     {"learning_rate", c.learning_rate},
                     {"warmup_steps", c.warmup_steps},
                     {"batch_size", c.batch_size},
                     {"bridge_length", c.bridge_length},
                     {"sample_size", c.sample_size},
                     {"gumbel_temperature", c.gumbel_temperature},
                     {"temperature_decay", c.temperature_decay},
                     {"temperature_decay_every", c.temperature_decay_every},
                     {"temperature_floor", c.temperature_floor},
                     {"max_steps_phase1", c.max_steps_phase1},
                     {"max_steps_phase2", c.max_steps_phase2},
                     {"eval_every", c.eval_every},
                     {"patience", c.patience},
                     {"valid_subset", c.valid_subset},
                     {"clip_norm", c.clip_norm},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"seed", c.seed},
                     {"estimator", to_string(c.estimator)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lambda = j.value("lambda", d.lambda);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.bridge_length = j.value("bridge_length", d.bridge_length);
  c.sample_size = j.value("sample_size", d.sample_size);
  c.gumbel_temperature = j.value("gumbel_temperature", d.gumbel_temperature);
  c.temperature_decay = j.value("temperature_decay", d.temperature_decay);
  c.temperature_decay_every = j.value("temperature_decay_every", d.temperature_decay_every);
  c.temperature_floor = j.value("temperature_floor", d.temperature_floor);
  c.max_steps_phase1 = j.value("max_steps_phase1", d.max_steps_phase1);
  c.max_steps_phase2 = j.value("max_steps_phase2", d.max_steps_phase2);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.patience = j.value("patience", d.patience);
  c.valid_subset = j.value("valid_subset", d.valid_subset);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.seed = j.value("seed", d.seed);
  c.estimator = estimator_from_string(j.value("estimator", std::string("A")));
}

double normalized_weight(double logprob, std::size_t target_len) {
  return std::exp(logprob / static_cast<double>(target_len + 1));
}

// ---- losses ----------------------------------------------------------------

ad::Var mi_bound_loss(ad::Tape& tape, const ModelParams& aq, const ModelParams& qa,
                      std::span<const IdPair> batch) {
  if (batch.empty()) throw std::invalid_argument("mi_bound_loss: empty batch");
  std::vector<ad::Var> terms;
  terms.reserve(batch.size() * 2);
  for (const auto& p : batch) {
    auto lq = model::sequence_logprob(tape, aq, p.source, p.target);
    auto la = model::sequence_logprob(tape, qa, p.target, p.source);
    terms.push_back(ad::scale(lq, -normalized_weight(lq.scalar(), p.target.size())));
    terms.push_back(ad::scale(la, -normalized_weight(la.scalar(), p.source.size())));
  }
  return ad::sum_scalars(terms);
}

double mi_bound_loss(const ModelParams& aq, const ModelParams& qa,
                     std::span<const IdPair> batch) {
  ad::Tape t(false);
  return mi_bound_loss(t, aq, qa, batch).scalar();
}

ad::Var mle_loss(ad::Tape& tape, const ModelBundle& bundle, std::span<const IdPair> batch_ab,
                 std::span<const IdPair> batch_qb) {
  if (batch_ab.empty() && batch_qb.empty()) throw std::invalid_argument("mle_loss: empty batches");
  std::vector<ad::Var> terms;
  terms.reserve(2 * (batch_ab.size() + batch_qb.size()));
  for (const auto& p : batch_ab) {
    terms.push_back(model::sequence_logprob(tape, bundle[Direction::kAB], p.source, p.target));
    terms.push_back(model::sequence_logprob(tape, bundle[Direction::kBA], p.target, p.source));
  }
  for (const auto& p : batch_qb) {
    terms.push_back(model::sequence_logprob(tape, bundle[Direction::kQB], p.source, p.target));
    terms.push_back(model::sequence_logprob(tape, bundle[Direction::kBQ], p.target, p.source));
  }
  return ad::scale(ad::sum_scalars(terms), -1.0);
}

double mle_loss(const ModelBundle& bundle, std::span<const IdPair> batch_ab,
                std::span<const IdPair> batch_qb) {
  ad::Tape t(false);
  return mle_loss(t, bundle, batch_ab, batch_qb).scalar();
}

namespace {

std::vector<double> gumbel_noise(std::size_t n, Rng& rng) {
  std::vector<double> g(n);
  for (auto& x : g) x = -std::log(-std::log(open_uniform(rng)));
  return g;
}

}  // namespace

GumbelSample gumbel_softmax_sample(std::span<const double> logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_sample: tau must be > 0");
  if (logits.empty()) throw std::invalid_argument("gumbel_softmax_sample: empty logits");
  for (double l : logits) {
    if (!std::isfinite(l)) throw std::invalid_argument("gumbel_softmax_sample: non-finite logit");
  }
  const auto g = gumbel_noise(logits.size(), rng);
  GumbelSample s;
  s.soft.resize(static_cast<Eigen::Index>(logits.size()));
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = (logits[i] + g[i]) / tau;
    s.soft(static_cast<Eigen::Index>(i)) = z;
    if (z > best) {
      best = z;
      s.hard = static_cast<int>(i);
    }
  }
  s.soft = (s.soft.array() - best).exp().matrix();
  s.soft /= s.soft.sum();
  return s;
}

GumbelSample gumbel_softmax_sample(std::span<const double> logits, double tau,
                                   std::uint64_t seed) {
  Rng rng(seed);
  return gumbel_softmax_sample(logits, tau, rng);
}

GumbelVar gumbel_softmax_sample(ad::Var logits, double tau, Rng& rng, GumbelMode mode) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_sample: tau must be > 0");
  if (logits.rows() != 1) throw std::invalid_argument("gumbel_softmax_sample: expects a row");
  if (!logits.value().allFinite()) {
    throw std::invalid_argument("gumbel_softmax_sample: non-finite logit");
  }
  const auto g = gumbel_noise(static_cast<std::size_t>(logits.cols()), rng);
  ad::Matrix noise(1, logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) noise(0, i) = g[static_cast<std::size_t>(i)];
  GumbelVar out;
  const ad::Matrix perturbed = logits.value() + noise;
  Eigen::Index hard = 0;
  perturbed.row(0).maxCoeff(&hard);
  out.hard = static_cast<int>(hard);
  out.soft = ad::softmax_rows(ad::scale(ad::add_const(logits, noise), 1.0 / tau));
  out.used = mode == GumbelMode::kStraightThrough ? ad::straight_through(out.soft, hard) : out.soft;
  return out;
}

ad::Var expected_embedding_bridge(ad::Tape& tape, const ModelParams& src,
                                  const ad::Parameter& downstream_embedding,
                                  std::span<const int> source, int bridge_length) {
  require_valid_bridge(bridge_length, src);
  if (downstream_embedding.value.rows() != src.config.vocab_size) {
    throw std::invalid_argument("expected_embedding_bridge: vocabulary sizes differ");
  }
  auto memory = model::encode(tape, src, model::embed(tape, src, source));
  auto src_table = tape.bind(src.embedding);
  auto dst_table = tape.bind(downstream_embedding);
  const int bos[] = {kBos};
  std::vector<ad::Var> inputs{model::embed(tape, src, bos)};
  std::vector<ad::Var> bridge;
  for (int j = 0; j < bridge_length; ++j) {
    auto logp = model::decode_logprobs(tape, src, memory, ad::concat_rows(inputs));
    auto probs = ad::exp(ad::slice_rows(logp, j, 1));
    bridge.push_back(ad::matmul(probs, dst_table));
    if (j + 1 < bridge_length) inputs.push_back(ad::matmul(probs, src_table));
  }
  return ad::concat_rows(bridge);
}

ad::Var bridge_logprob_A(ad::Tape& tape, const ModelParams& src, const ModelParams& dst,
                         std::span<const int> source, std::span<const int> target,
                         int bridge_length) {
  auto rows = expected_embedding_bridge(tape, src, dst.embedding, source, bridge_length);
  return model::forward_from_embeddings(tape, dst, rows, target);
}

ad::Var bridge_logprob_S(ad::Tape& tape, const ModelParams& src, const ModelParams& dst,
                         std::span<const int> source, std::span<const int> target,
                         std::span<const std::vector<int>> candidates) {
  if (candidates.empty()) throw std::invalid_argument("bridge_logprob_S: empty candidate set");
  auto memory = model::encode(tape, src, model::embed(tape, src, source));
  std::set<std::vector<int>> seen;
  std::vector<ad::Var> terms;
  for (const auto& b : candidates) {
    if (b.empty()) throw std::invalid_argument("bridge_logprob_S: empty bridge candidate");
    if (!seen.insert(b).second) continue;
    auto log_pb = model::score_from_memory(tape, src, memory, b, false);
    auto log_pt = model::sequence_logprob(tape, dst, b, target);
    terms.push_back(ad::add(log_pb, log_pt));
  }
  return ad::logsumexp(terms);
}

ad::Var bridge_logprob_S(ad::Tape& tape, const ModelParams& src, const ModelParams& dst,
                         std::span<const int> source, std::span<const int> target,
                         int bridge_length, int sample_size, double tau, Rng& rng,
                         GumbelMode mode) {
  require_valid_bridge(bridge_length, src);
  if (sample_size < 1) throw std::invalid_argument("bridge_logprob_S: sample size must be >= 1");
  if (dst.config.vocab_size != src.config.vocab_size) {
    throw std::invalid_argument("bridge_logprob_S: vocabulary sizes differ");
  }
  auto memory = model::encode(tape, src, model::embed(tape, src, source));
  auto src_table = tape.bind(src.embedding);
  auto dst_table = tape.bind(dst.embedding);
  const int bos[] = {kBos};
  auto bos_row = model::embed(tape, src, bos);
  std::set<std::vector<int>> seen;
  std::vector<ad::Var> terms;
  for (int c = 0; c < sample_size; ++c) {
    std::vector<ad::Var> inputs{bos_row};
    std::vector<ad::Var> dst_rows;
    std::vector<ad::Var> step_logps;
    std::vector<int> tokens;
    for (int j = 0; j < bridge_length; ++j) {
      auto logp = model::decode_logprobs(tape, src, memory, ad::concat_rows(inputs));
      auto row = ad::slice_rows(logp, j, 1);
      auto sample = gumbel_softmax_sample(row, tau, rng, mode);
      tokens.push_back(sample.hard);
      step_logps.push_back(ad::dot_rows(sample.used, row));
      dst_rows.push_back(ad::matmul(sample.used, dst_table));
      if (j + 1 < bridge_length) inputs.push_back(ad::matmul(sample.used, src_table));
    }
    if (mode == GumbelMode::kStraightThrough && !seen.insert(tokens).second) continue;
    auto log_pb = ad::sum_scalars(step_logps);
    auto log_pt = model::forward_from_embeddings(tape, dst, ad::concat_rows(dst_rows), target);
    terms.push_back(ad::add(log_pb, log_pt));
  }
  return ad::logsumexp(terms);
}

std::vector<DirectWeights> direct_weights(const ModelBundle& bundle,
                                          std::span<const IdPair> batch_aq) {
  std::vector<DirectWeights> w;
  w.reserve(batch_aq.size());
  for (const auto& p : batch_aq) {
    const double lq = model::sequence_logprob(bundle[Direction::kAQ], p.source, p.target);
    const double la = model::sequence_logprob(bundle[Direction::kQA], p.target, p.source);
    w.push_back({normalized_weight(lq, p.target.size()), normalized_weight(la, p.source.size())});
  }
  return w;
}

ad::Var tri_loss(ad::Tape& tape, const ModelBundle& bundle, std::span<const IdPair> batch_aq,
                 std::span<const DirectWeights> weights, const TriOptions& options, Rng& rng) {
  if (batch_aq.empty()) throw std::invalid_argument("tri_loss: empty batch");
  if (weights.size() != batch_aq.size()) {
    throw std::invalid_argument("tri_loss: one weight pair per batch entry required");
  }
  auto bridge = [&](Direction src, Direction dst, const std::vector<int>& x,
                    const std::vector<int>& y) {
    switch (options.estimator) {
      case Estimator::kExpectedEmbedding:
        return bridge_logprob_A(tape, bundle[src], bundle[dst], x, y, options.bridge_length);
      case Estimator::kSampling:
        return bridge_logprob_S(tape, bundle[src], bundle[dst], x, y, options.bridge_length,
                                options.sample_size, options.tau, rng, options.mode);
    }
    throw std::invalid_argument("tri_loss: unknown estimator");
  };
  std::vector<ad::Var> terms;
  terms.reserve(2 * batch_aq.size());
  for (std::size_t i = 0; i < batch_aq.size(); ++i) {
    const auto& p = batch_aq[i];
    terms.push_back(ad::scale(bridge(Direction::kAB, Direction::kBQ, p.source, p.target),
                              -weights[i].q_given_a));
    terms.push_back(ad::scale(bridge(Direction::kQB, Direction::kBA, p.target, p.source),
                              -weights[i].a_given_q));
  }
  return ad::sum_scalars(terms);
}

ad::Var tri_loss(ad::Tape& tape, const ModelBundle& bundle, std::span<const IdPair> batch_aq,
                 const TriOptions& options, Rng& rng) {
  const auto w = direct_weights(bundle, batch_aq);
  return tri_loss(tape, bundle, batch_aq, w, options, rng);
}

ad::Var total_loss(ad::Var mle, ad::Var tri, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  return ad::add(ad::scale(mle, lambda), ad::scale(tri, 1.0 - lambda));
}

double total_loss(double mle, double tri, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  return lambda * mle + (1.0 - lambda) * tri;
}

// ---- mutual information -------------------------------------------------------

double exact_mutual_information(const ad::Matrix& joint) {
  const Eigen::VectorXd pa = joint.rowwise().sum();
  const Eigen::RowVectorXd pq = joint.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index a = 0; a < joint.rows(); ++a) {
    for (Eigen::Index q = 0; q < joint.cols(); ++q) {
      const double p = joint(a, q);
      if (p > 0.0) mi += p * std::log(p / (pa(a) * pq(q)));
    }
  }
  return mi;
}

double mi_lower_bound(const ad::Matrix& joint, const ad::Matrix& q_given_a,
                      const ad::Matrix& a_given_q) {
  if (q_given_a.rows() != joint.rows() || q_given_a.cols() != joint.cols() ||
      a_given_q.rows() != joint.rows() || a_given_q.cols() != joint.cols()) {
    throw std::invalid_argument("mi_lower_bound: table shapes differ");
  }
  double s = 0.0;
  for (Eigen::Index a = 0; a < joint.rows(); ++a) {
    for (Eigen::Index q = 0; q < joint.cols(); ++q) {
      const double p = joint(a, q);
      if (p <= 0.0) continue;
      s += p * (std::log(std::max(q_given_a(a, q), model::kProbFloor)) +
                std::log(std::max(a_given_q(a, q), model::kProbFloor)));
    }
  }
  return 0.5 * s;
}

// ---- optimisation ------------------------------------------------------------

Adam::Adam(std::vector<ad::Parameter*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

double Adam::step(const ad::Tape& tape, double learning_rate, double clip_norm) {
  ++t_;
  double sq = 0.0;
  for (auto* p : params_) {
    if (const auto* g = tape.grad(*p)) sq += g->squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double factor = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* p = params_[i];
    const auto* g = tape.grad(*p);
    if (!g || !p->trainable) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * factor * *g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * (factor * *g).cwiseAbs2();
    p->value.array() -= learning_rate * (m_[i].array() / c1) /
                        ((v_[i].array() / c2).sqrt() + eps_);
  }
  return norm;
}

// ---- driver ------------------------------------------------------------------

void run_phase1(const TrainingData& data, ModelBundle& bundle, const TrainConfig& config,
                TrainingResult& result) {
  config.validate();
  if (data.aq_train.empty()) throw std::invalid_argument("phase 1: empty aq train split");
  set_trainable(bundle, {Direction::kAQ, Direction::kQA}, true);
  Adam adam(params_of(bundle, {Direction::kAQ, Direction::kQA}), config.adam_beta1,
            config.adam_beta2, config.adam_eps);
  BatchSampler sampler(data.aq_train.size(), make_rng(config.seed, "batch/phase1/aq"));
  const auto valid = head(data.aq_valid, config.valid_subset);
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int step = 1; step <= config.max_steps_phase1; ++step) {
    const auto batch = gather(data.aq_train, sampler.next(config.batch_size));
    ad::Tape tape;
    auto loss = mi_bound_loss(tape, bundle[Direction::kAQ], bundle[Direction::kQA], batch);
    tape.backward(loss);
    adam.step(tape, config.learning_rate_at(step, config.max_steps_phase1), config.clip_norm);
    result.history.push_back({step, 1, std::nullopt, std::nullopt, loss.scalar()});
    result.phase1_steps = step;
    if (!valid.empty() && step % config.eval_every == 0) {
      // The weighted bound grows as the weights grow, so convergence is judged
      // on the unweighted likelihood of the same pairs.
      double v = 0.0;
      for (const auto& p : valid) {
        v -= model::sequence_logprob(bundle[Direction::kAQ], p.source, p.target) +
             model::sequence_logprob(bundle[Direction::kQA], p.target, p.source);
      }
      if (v < best) {
        best = v;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
}

void run_phase2(const TrainingData& data, ModelBundle& bundle, const TrainConfig& config,
                TrainingResult& result) {
  config.validate();
  if (data.ab_train.empty() || data.qb_train.empty()) {
    throw std::invalid_argument("phase 2: empty ab or qb train split");
  }
  const bool triangular = config.lambda < 1.0;
  if (triangular && data.aq_train.empty()) {
    throw std::invalid_argument("phase 2: empty aq train split");
  }
  const std::initializer_list<Direction> trained = {Direction::kAB, Direction::kBA,
                                                    Direction::kQB, Direction::kBQ};
  set_trainable(bundle, {Direction::kAQ, Direction::kQA}, false);
  set_trainable(bundle, trained, true);
  Adam adam(params_of(bundle, trained), config.adam_beta1, config.adam_beta2, config.adam_eps);

  // The direct models are frozen, so their weights are fixed per pair.
  const auto aq_weights =
      triangular ? direct_weights(bundle, data.aq_train) : std::vector<DirectWeights>{};

  BatchSampler aq_sampler(data.aq_train.size(), make_rng(config.seed, "batch/phase2/aq"));
  BatchSampler ab_sampler(data.ab_train.size(), make_rng(config.seed, "batch/phase2/ab"));
  BatchSampler qb_sampler(data.qb_train.size(), make_rng(config.seed, "batch/phase2/qb"));
  Rng gumbel = make_rng(config.seed, "gumbel/phase2");

  const auto valid_ab = head(data.ab_valid, config.valid_subset);
  const auto valid_qb = head(data.qb_valid, config.valid_subset);
  const auto valid_aq = triangular ? head(data.aq_valid, config.valid_subset) : std::vector<IdPair>{};
  const auto valid_weights = triangular ? direct_weights(bundle, valid_aq) : std::vector<DirectWeights>{};
  const bool can_validate = !valid_ab.empty() || !valid_qb.empty();

  auto options_at = [&](int step) {
    TriOptions o;
    o.estimator = config.estimator;
    o.bridge_length = config.bridge_length;
    o.sample_size = config.sample_size;
    o.tau = config.temperature_at(step);
    return o;
  };

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int step = 1; step <= config.max_steps_phase2; ++step) {
    const auto batch_ab = gather(data.ab_train, ab_sampler.next(config.batch_size));
    const auto batch_qb = gather(data.qb_train, qb_sampler.next(config.batch_size));
    ad::Tape tape;
    auto mle = mle_loss(tape, bundle, batch_ab, batch_qb);
    LossRecord rec{step, 2, mle.scalar(), std::nullopt, 0.0};
    ad::Var loss = mle;
    if (triangular) {
      const auto idx = aq_sampler.next(config.batch_size);
      const auto batch = gather(data.aq_train, idx);
      std::vector<DirectWeights> w;
      for (auto i : idx) w.push_back(aq_weights[i]);
      auto tri = tri_loss(tape, bundle, batch, w, options_at(step), gumbel);
      rec.tri = tri.scalar();
      loss = total_loss(mle, tri, config.lambda);
    } else {
      loss = ad::scale(mle, config.lambda);
    }
    rec.total = loss.scalar();
    tape.backward(loss);
    adam.step(tape, config.learning_rate_at(step, config.max_steps_phase2), config.clip_norm);
    result.history.push_back(rec);
    result.phase2_steps = step;

    if (can_validate && step % config.eval_every == 0) {
      double v = config.lambda * mle_loss(bundle, valid_ab, valid_qb);
      if (triangular && !valid_aq.empty()) {
        Rng valid_rng = make_rng(config.seed, "gumbel/valid");
        ad::Tape vt(false);
        v += (1.0 - config.lambda) *
             tri_loss(vt, bundle, valid_aq, valid_weights, options_at(step), valid_rng).scalar();
      }
      if (v < best) {
        best = v;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
}

TrainingResult run_training(const TrainingData& data, ModelBundle& bundle,
                            const TrainConfig& config) {
  config.validate();
  TrainingResult result;
  if (config.lambda < 1.0) run_phase1(data, bundle, config, result);
  run_phase2(data, bundle, config, result);
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,phase,L_MLE,L_TRI,L\n";
  out << std::setprecision(10);
  for (const auto& r : history) {
    out << r.step << ',' << r.phase << ',';
    if (r.mle) out << *r.mle;
    out << ',';
    if (r.tri) out << *r.tri;
    out << ',' << r.total << '\n';
  }
}

}  // namespace trident::train

#include "trident/seq2seq.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "trident/container.hpp"
#include "trident/rng.hpp"

namespace trident::model {
namespace {

constexpr double kInitRange = 0.08;
constexpr double kMaskValue = -1e9;
constexpr int kBos = 1;
constexpr int kEos = 2;

ad::Parameter uniform_param(std::string name, int rows, int cols, Rng& rng) {
  std::uniform_real_distribution<double> u(-kInitRange, kInitRange);
  ad::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return {std::move(name), std::move(m), true};
}

ad::Parameter const_param(std::string name, int rows, int cols, double value) {
  return {std::move(name), ad::Matrix::Constant(rows, cols, value), true};
}

AttentionParams init_attention(const std::string& prefix, int d, Rng& rng) {
  return {uniform_param(prefix + ".wq", d, d, rng), uniform_param(prefix + ".wk", d, d, rng),
          uniform_param(prefix + ".wv", d, d, rng), uniform_param(prefix + ".wo", d, d, rng)};
}

FeedForwardParams init_ffn(const std::string& prefix, int d, int d_ff, Rng& rng) {
  return {uniform_param(prefix + ".w1", d, d_ff, rng), const_param(prefix + ".b1", 1, d_ff, 0.0),
          uniform_param(prefix + ".w2", d_ff, d, rng), const_param(prefix + ".b2", 1, d, 0.0)};
}

LayerNormParams init_norm(const std::string& prefix, int d) {
  return {const_param(prefix + ".gain", 1, d, 1.0), const_param(prefix + ".bias", 1, d, 0.0)};
}

void collect(AttentionParams& a, std::vector<ad::Parameter*>& out) {
  out.insert(out.end(), {&a.wq, &a.wk, &a.wv, &a.wo});
}
void collect(FeedForwardParams& f, std::vector<ad::Parameter*>& out) {
  out.insert(out.end(), {&f.w1, &f.b1, &f.w2, &f.b2});
}
void collect(LayerNormParams& n, std::vector<ad::Parameter*>& out) {
  out.insert(out.end(), {&n.gain, &n.bias});
}

ad::Var layer_norm(ad::Tape& t, ad::Var x, const LayerNormParams& p) {
  return ad::layer_norm_rows(x, t.bind(p.gain), t.bind(p.bias));
}

ad::Var feed_forward(ad::Tape& t, ad::Var x, const FeedForwardParams& p) {
  auto h = ad::relu(ad::add_row(ad::matmul(x, t.bind(p.w1)), t.bind(p.b1)));
  return ad::add_row(ad::matmul(h, t.bind(p.w2)), t.bind(p.b2));
}

ad::Var input_layer(const ModelParams& params, ad::Var rows) {
  const auto& c = params.config;
  if (rows.cols() != c.d_model) {
    throw std::invalid_argument("input rows must have width d_model");
  }
  if (rows.rows() < 1 || rows.rows() > c.max_len) {
    throw std::invalid_argument("sequence length must lie in [1, max_len]");
  }
  return ad::add_const(ad::scale(rows, std::sqrt(static_cast<double>(c.d_model))),
                       sinusoidal_positions(static_cast<int>(rows.rows()), c.d_model));
}

void check_ids(const ModelParams& params, std::span<const int> ids, const char* what) {
  for (int id : ids) {
    if (id < 0 || id >= params.config.vocab_size) {
      throw std::invalid_argument(std::string(what) + ": token id out of range");
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1 || layers < 1 || d_model < 1 || heads < 1 || d_ff < 1 || max_len < 2) {
    throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
  }
  if (d_model % heads != 0) {
    throw std::invalid_argument("ModelConfig: d_model must be divisible by heads");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"layers", c.layers},
                     {"d_model", c.d_model},       {"heads", c.heads},
                     {"d_ff", c.d_ff},             {"max_len", c.max_len}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.layers = j.value("layers", d.layers);
  c.d_model = j.value("d_model", d.d_model);
  c.heads = j.value("heads", d.heads);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.max_len = j.value("max_len", d.max_len);
}

std::vector<ad::Parameter*> ModelParams::parameters() {
  std::vector<ad::Parameter*> out{&embedding};
  for (auto& l : encoder) {
    collect(l.norm1, out);
    collect(l.self_attn, out);
    collect(l.norm2, out);
    collect(l.ffn, out);
  }
  collect(encoder_norm, out);
  for (auto& l : decoder) {
    collect(l.norm1, out);
    collect(l.self_attn, out);
    collect(l.norm2, out);
    collect(l.cross_attn, out);
    collect(l.norm3, out);
    collect(l.ffn, out);
  }
  collect(decoder_norm, out);
  out.push_back(&output);
  return out;
}

std::vector<const ad::Parameter*> ModelParams::parameters() const {
  auto mut = const_cast<ModelParams*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void ModelParams::set_trainable(bool trainable) {
  for (auto* p : parameters()) p->trainable = trainable;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int d = config.d_model;
  ModelParams m;
  m.config = config;
  m.embedding = uniform_param("embedding", config.vocab_size, d, rng);
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncoderLayer layer;
    layer.norm1 = init_norm(p + ".norm1", d);
    layer.self_attn = init_attention(p + ".self_attn", d, rng);
    layer.norm2 = init_norm(p + ".norm2", d);
    layer.ffn = init_ffn(p + ".ffn", d, config.d_ff, rng);
    m.encoder.push_back(std::move(layer));
  }
  m.encoder_norm = init_norm("encoder.norm", d);
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecoderLayer layer;
    layer.norm1 = init_norm(p + ".norm1", d);
    layer.self_attn = init_attention(p + ".self_attn", d, rng);
    layer.norm2 = init_norm(p + ".norm2", d);
    layer.cross_attn = init_attention(p + ".cross_attn", d, rng);
    layer.norm3 = init_norm(p + ".norm3", d);
    layer.ffn = init_ffn(p + ".ffn", d, config.d_ff, rng);
    m.decoder.push_back(std::move(layer));
  }
  m.decoder_norm = init_norm("decoder.norm", d);
  m.output = uniform_param("output", d, config.vocab_size, rng);
  return m;
}

// ---- attention --------------------------------------------------------------

ad::Var scaled_dot_attention(ad::Var q, ad::Var k, ad::Var v, double d_k,
                             const ad::Matrix* mask) {
  if (q.cols() != k.cols()) {
    throw std::invalid_argument("scaled_dot_attention: query/key widths differ");
  }
  if (k.rows() != v.rows()) {
    throw std::invalid_argument("scaled_dot_attention: key/value row counts differ");
  }
  if (!(d_k > 0.0)) throw std::invalid_argument("scaled_dot_attention: d_k must be > 0");
  auto scores = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(d_k));
  if (mask) scores = ad::add_const(scores, *mask);
  return ad::matmul(ad::softmax_rows(scores), v);
}

ad::Var multi_head_attention(ad::Var q, ad::Var k, ad::Var v, const AttentionParams& params,
                             int heads, const ad::Matrix* mask) {
  ad::Tape& t = *q.tape();
  const auto d = params.wq.value.rows();
  if (q.cols() != d || k.cols() != d || v.cols() != d || heads < 1 || d % heads != 0) {
    throw std::invalid_argument("multi_head_attention: shape mismatch");
  }
  if (k.rows() != v.rows()) {
    throw std::invalid_argument("multi_head_attention: key/value row counts differ");
  }
  const auto dk = d / heads;
  auto qp = ad::matmul(q, t.bind(params.wq));
  auto kp = ad::matmul(k, t.bind(params.wk));
  auto vp = ad::matmul(v, t.bind(params.wv));
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    outs.push_back(scaled_dot_attention(ad::slice_cols(qp, h * dk, dk),
                                        ad::slice_cols(kp, h * dk, dk),
                                        ad::slice_cols(vp, h * dk, dk),
                                        static_cast<double>(dk), mask));
  }
  auto concat = heads == 1 ? outs[0] : ad::concat_cols(outs);
  return ad::matmul(concat, t.bind(params.wo));
}

ad::Matrix scaled_dot_attention(const ad::Matrix& q, const ad::Matrix& k,
                                const ad::Matrix& v, double d_k) {
  ad::Tape t(false);
  return scaled_dot_attention(t.constant(q), t.constant(k), t.constant(v), d_k).value();
}

ad::Matrix multi_head_attention(const ad::Matrix& q, const ad::Matrix& k, const ad::Matrix& v,
                                const AttentionParams& params, int heads) {
  ad::Tape t(false);
  return multi_head_attention(t.constant(q), t.constant(k), t.constant(v), params, heads).value();
}

ad::Matrix sinusoidal_positions(int rows, int d_model) {
  thread_local std::unordered_map<int, ad::Matrix> cache;
  auto& full = cache[d_model];
  if (full.rows() < rows) {
    const int n = std::max(rows, 64);
    full.resize(n, d_model);
    for (int pos = 0; pos < n; ++pos) {
      for (int i = 0; i < d_model; ++i) {
        const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d_model);
        full(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
      }
    }
  }
  return full.topRows(rows);
}

ad::Matrix causal_mask(int n) {
  ad::Matrix m = ad::Matrix::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = r + 1; c < n; ++c) m(r, c) = kMaskValue;
  }
  return m;
}

// ---- forward ------------------------------------------------------------------

ad::Var embed(ad::Tape& tape, const ModelParams& params, std::span<const int> ids) {
  check_ids(params, ids, "embed");
  return ad::gather_rows(tape.bind(params.embedding), ids);
}

ad::Var encode(ad::Tape& tape, const ModelParams& params, ad::Var input_rows) {
  const int heads = params.config.heads;
  auto x = input_layer(params, input_rows);
  for (const auto& layer : params.encoder) {
    auto h = layer_norm(tape, x, layer.norm1);
    x = ad::add(x, multi_head_attention(h, h, h, layer.self_attn, heads));
    x = ad::add(x, feed_forward(tape, layer_norm(tape, x, layer.norm2), layer.ffn));
  }
  return layer_norm(tape, x, params.encoder_norm);
}

ad::Var decode_logprobs(ad::Tape& tape, const ModelParams& params, ad::Var memory,
                        ad::Var decoder_rows) {
  const int heads = params.config.heads;
  auto y = input_layer(params, decoder_rows);
  const ad::Matrix mask = causal_mask(static_cast<int>(decoder_rows.rows()));
  for (const auto& layer : params.decoder) {
    auto h = layer_norm(tape, y, layer.norm1);
    y = ad::add(y, multi_head_attention(h, h, h, layer.self_attn, heads, &mask));
    h = layer_norm(tape, y, layer.norm2);
    y = ad::add(y, multi_head_attention(h, memory, memory, layer.cross_attn, heads));
    y = ad::add(y, feed_forward(tape, layer_norm(tape, y, layer.norm3), layer.ffn));
  }
  y = layer_norm(tape, y, params.decoder_norm);
  return ad::log_softmax_rows(ad::matmul(y, tape.bind(params.output)));
}

ad::Var score_from_memory(ad::Tape& tape, const ModelParams& params, ad::Var memory,
                          std::span<const int> target, bool append_eos) {
  check_ids(params, target, "score");
  std::vector<int> inputs{kBos};
  inputs.insert(inputs.end(), target.begin(), target.end());
  std::vector<int> outputs(target.begin(), target.end());
  if (append_eos) {
    outputs.push_back(kEos);
  } else {
    inputs.pop_back();
  }
  if (outputs.empty()) throw std::invalid_argument("score: empty target");
  auto logp = decode_logprobs(tape, params, memory, embed(tape, params, inputs));
  return ad::sum_picked(logp, outputs, std::log(kProbFloor));
}

ad::Var sequence_logprob(ad::Tape& tape, const ModelParams& params,
                         std::span<const int> source, std::span<const int> target) {
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("sequence_logprob: empty source or target");
  }
  auto memory = encode(tape, params, embed(tape, params, source));
  return score_from_memory(tape, params, memory, target, true);
}

ad::Var prefix_logprob(ad::Tape& tape, const ModelParams& params,
                       std::span<const int> source, std::span<const int> prefix) {
  if (source.empty() || prefix.empty()) {
    throw std::invalid_argument("prefix_logprob: empty source or prefix");
  }
  auto memory = encode(tape, params, embed(tape, params, source));
  return score_from_memory(tape, params, memory, prefix, false);
}

ad::Var forward_from_embeddings(ad::Tape& tape, const ModelParams& params, ad::Var rows,
                                std::span<const int> target) {
  if (target.empty()) throw std::invalid_argument("forward_from_embeddings: empty target");
  auto memory = encode(tape, params, rows);
  return score_from_memory(tape, params, memory, target, true);
}

double sequence_logprob(const ModelParams& params, std::span<const int> source,
                        std::span<const int> target) {
  ad::Tape t(false);
  return sequence_logprob(t, params, source, target).scalar();
}

double prefix_logprob(const ModelParams& params, std::span<const int> source,
                      std::span<const int> prefix) {
  ad::Tape t(false);
  return prefix_logprob(t, params, source, prefix).scalar();
}

double forward_from_embeddings(const ModelParams& params, const ad::Matrix& rows,
                               std::span<const int> target) {
  ad::Tape t(false);
  return forward_from_embeddings(t, params, t.constant(rows), target).scalar();
}

ad::Matrix encode_source(const ModelParams& params, std::span<const int> source) {
  if (source.empty()) throw std::invalid_argument("encode_source: empty source");
  ad::Tape t(false);
  return encode(t, params, embed(t, params, source)).value();
}

ad::RowVector next_token_logprobs(const ModelParams& params, const ad::Matrix& memory,
                                  std::span<const int> prefix) {
  ad::Tape t(false);
  std::vector<int> inputs{kBos};
  inputs.insert(inputs.end(), prefix.begin(), prefix.end());
  auto logp = decode_logprobs(t, params, t.constant(memory), embed(t, params, inputs));
  return logp.value().row(logp.rows() - 1);
}

ad::RowVector next_token_dist(const ModelParams& params, std::span<const int> source,
                              std::span<const int> prefix) {
  const ad::Matrix memory = encode_source(params, source);
  return next_token_logprobs(params, memory, prefix).array().exp().matrix();
}

// ---- bundle ---------------------------------------------------------------------

const char* to_string(Direction d) {
  switch (d) {
    case Direction::kAQ: return "aq";
    case Direction::kQA: return "qa";
    case Direction::kAB: return "ab";
    case Direction::kBA: return "ba";
    case Direction::kQB: return "qb";
    case Direction::kBQ: return "bq";
  }
  return "?";
}

Direction direction_from_string(std::string_view name) {
  for (Direction d : kAllDirections) {
    if (name == to_string(d)) return d;
  }
  throw std::invalid_argument("unknown direction '" + std::string(name) + "'");
}

ModelBundle init_bundle(const ModelConfig& config, std::uint64_t seed) {
  ModelBundle b;
  b.config = config;
  for (Direction d : kAllDirections) {
    b[d] = init_model(config, derive_seed(seed, std::string("init/") + to_string(d)));
  }
  return b;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle,
                     std::span<const Direction> directions, const nlohmann::json& extra) {
  Container c;
  c.header = extra;
  c.header["kind"] = "trident_checkpoint";
  c.header["config"] = bundle.config;
  auto& names = c.header["directions"] = nlohmann::json::array();
  for (Direction d : directions) {
    names.push_back(to_string(d));
    for (const auto* p : bundle[d].parameters()) {
      c.tensors.push_back({std::string(to_string(d)) + "." + p->name, p->value});
    }
  }
  write_container(path, c);
}

std::vector<Direction> load_checkpoint(const std::filesystem::path& path, ModelBundle& bundle) {
  const Container c = read_container(path);
  if (c.header.value("kind", "") != "trident_checkpoint") {
    throw std::runtime_error(path.string() + ": not a model checkpoint");
  }
  const ModelConfig config = c.header.at("config").get<ModelConfig>();
  config.validate();
  bundle.config = config;
  std::vector<Direction> loaded;
  for (const auto& name : c.header.at("directions")) {
    const Direction d = direction_from_string(name.get<std::string>());
    ModelParams m = init_model(config, 0);
    for (auto* p : m.parameters()) {
      const auto& value = c.tensor(std::string(to_string(d)) + "." + p->name);
      if (value.rows() != p->value.rows() || value.cols() != p->value.cols()) {
        throw std::runtime_error(path.string() + ": shape mismatch for " + p->name);
      }
      p->value = value;
    }
    bundle[d] = std::move(m);
    loaded.push_back(d);
  }
  return loaded;
}

void round_to_checkpoint_precision(ModelParams& params) {
  for (auto* p : params.parameters()) p->value = round_to_float(p->value);
}

}  // namespace trident::model

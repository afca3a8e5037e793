#include "trident/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "trident/baselines.hpp"
#include "trident/container.hpp"
#include "trident/rng.hpp"

namespace trident::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config --------------------------------------------------------------------

void to_json(json& j, const RunConfig& c) {
  j = json{{"seed", c.seed},
           {"output_dir", c.output_dir},
           {"data",
            {{"spec", c.data.spec},
             {"valid_per_kind", c.data.valid_per_kind},
             {"test_per_kind", c.data.test_per_kind},
             {"min_freq", c.data.min_freq},
             {"merges", c.data.merges}}},
           {"model", c.model},
           {"train", c.train},
           {"decode",
            {{"beam", c.decode.beam},
             {"max_len", c.decode.max_len},
             {"constrained", c.decode.constrained},
             {"length_normalize", c.decode.length_normalize},
             {"directions", c.decode.directions},
             {"input", c.decode.input}}},
           {"eval",
            {{"max_sources", c.eval.max_sources},
             {"baselines", c.eval.baselines},
             {"embedding_dim", c.eval.embedding_dim}}},
           {"sweep", {{"fractions", c.sweep.fractions}, {"seeds", c.sweep.seeds}}}};
}

void from_json(const json& j, RunConfig& c) {
  const RunConfig d;
  c.seed = j.value("seed", d.seed);
  c.output_dir = j.value("output_dir", d.output_dir);
  const json data = j.value("data", json::object());
  c.data.spec = data.value("spec", d.data.spec);
  c.data.valid_per_kind = data.value("valid_per_kind", d.data.valid_per_kind);
  c.data.test_per_kind = data.value("test_per_kind", d.data.test_per_kind);
  c.data.min_freq = data.value("min_freq", d.data.min_freq);
  c.data.merges = data.value("merges", d.data.merges);
  c.model = j.value("model", d.model);
  c.train = j.value("train", d.train);
  const json dec = j.value("decode", json::object());
  c.decode.beam = dec.value("beam", d.decode.beam);
  c.decode.max_len = dec.value("max_len", d.decode.max_len);
  c.decode.constrained = dec.value("constrained", d.decode.constrained);
  c.decode.length_normalize = dec.value("length_normalize", d.decode.length_normalize);
  c.decode.directions = dec.value("directions", d.decode.directions);
  c.decode.input = dec.value("input", d.decode.input);
  const json ev = j.value("eval", json::object());
  c.eval.max_sources = ev.value("max_sources", d.eval.max_sources);
  c.eval.baselines = ev.value("baselines", d.eval.baselines);
  c.eval.embedding_dim = ev.value("embedding_dim", d.eval.embedding_dim);
  const json sw = j.value("sweep", json::object());
  c.sweep.fractions = sw.value("fractions", d.sweep.fractions);
  c.sweep.seeds = sw.value("seeds", d.sweep.seeds);
}

void RunConfig::validate() const {
  try {
    corpus_spec().validate();
    model::ModelConfig m = model;
    m.vocab_size = std::max(m.vocab_size, 1);
    m.validate();
    train_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (data.min_freq < 1) throw ConfigError("data.min_freq must be >= 1");
  if (data.merges < 0) throw ConfigError("data.merges must be >= 0");
  if (decode.beam < 1) throw ConfigError("decode.beam must be >= 1");
  if (decode.max_len < 1) throw ConfigError("decode.max_len must be >= 1");
  if (decode.directions.empty()) throw ConfigError("decode.directions must not be empty");
  for (const auto& d : decode.directions) {
    if (d != "ab" && d != "qb") throw ConfigError("decode.directions: expected ab or qb, got " + d);
  }
  if (eval.embedding_dim < 1) throw ConfigError("eval.embedding_dim must be >= 1");
  if (sweep.fractions.empty() || sweep.seeds.empty()) {
    throw ConfigError("sweep.fractions and sweep.seeds must not be empty");
  }
  for (double f : sweep.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep.fractions must lie in (0, 1]");
  }
}

fs::path RunConfig::output_path() const {
  const fs::path out(output_dir);
  if (out.is_absolute()) return out;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return fs::path(root) / out;
  }
  return out;
}

corpus::GenSpec RunConfig::corpus_spec() const {
  corpus::GenSpec s = data.spec;
  s.seed = derive_seed(seed, "corpus");
  return s;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t = train;
  t.seed = seed;
  return t;
}

namespace {

void reject_unknown(const json& given, const json& known, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!known.contains(key)) throw ConfigError("unknown config key: " + path);
    if (value.is_object() && known.at(key).is_object()) reject_unknown(value, known.at(key), path);
  }
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("bad override path: " + path);
    if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig config_from_json(json j, const std::vector<std::string>& overrides) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& o : overrides) apply_override(j, o);
  reject_unknown(j, json(RunConfig{}), "");
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  return config_from_json(std::move(j), overrides);
}

// ---- data ------------------------------------------------------------------------

namespace {

std::vector<corpus::Tokens> train_sentences(const corpus::TriCorpus& c) {
  std::vector<corpus::Tokens> out;
  for (auto kind : {corpus::PairKind::kAQ, corpus::PairKind::kAB, corpus::PairKind::kQB}) {
    for (const auto& p : c.pairs(kind)) {
      if (p.split != corpus::Split::kTrain) continue;
      out.push_back(p.source);
      out.push_back(p.target);
    }
  }
  return out;
}

corpus::PairKind kind_of(const std::string& direction) {
  if (direction == "ab") return corpus::PairKind::kAB;
  if (direction == "qb") return corpus::PairKind::kQB;
  throw std::invalid_argument("unknown direction: " + direction);
}

model::Direction model_of(const std::string& direction) {
  return direction == "ab" ? model::Direction::kAB : model::Direction::kQB;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

}  // namespace

Dataset make_dataset(const RunConfig& config) {
  Dataset d;
  const auto spec = config.corpus_spec();
  d.grammar = corpus::build_grammar(spec);
  d.corpus = corpus::split_corpus(corpus::generate_corpus(spec), config.data.valid_per_kind,
                                  config.data.test_per_kind, config.seed);
  d.merges = tok::SubwordMerges::learn(train_sentences(d.corpus), config.data.merges);
  d.vocab = tok::build_vocab(d.corpus, config.data.min_freq, d.merges);
  return d;
}

void save_dataset(const Dataset& data, const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  corpus::save_corpus(data.corpus, dir);
  data.vocab.save(dir / "vocab.txt");
  json merges = json::array();
  for (const auto& [a, b] : data.merges.merges()) merges.push_back({a, b});
  write_json(dir / "genspec.json", {{"spec", config.corpus_spec()}, {"merges", merges}});
}

Dataset load_dataset(const RunConfig& config, const fs::path& dir) {
  (void)config;
  if (!fs::exists(dir / "vocab.txt") || !fs::exists(dir / "genspec.json")) {
    throw MissingCheckpoint("no generated data in " + dir.string() + " (run gen-data)");
  }
  Dataset d;
  const json meta = read_json(dir / "genspec.json");
  d.grammar = corpus::build_grammar(meta.at("spec").get<corpus::GenSpec>());
  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& m : meta.at("merges")) merges.emplace_back(m.at(0), m.at(1));
  d.merges = tok::SubwordMerges(std::move(merges));
  d.corpus = corpus::load_corpus(dir);
  d.vocab = tok::Vocab::load(dir / "vocab.txt");
  return d;
}

std::vector<int> encode_tokens(const Dataset& data, const corpus::Tokens& words,
                               std::size_t max_tokens) {
  auto ids = tok::encode(data.vocab, data.merges.empty() ? words : data.merges.segment(words));
  if (ids.size() > max_tokens) ids.resize(max_tokens);
  return ids;
}

corpus::Tokens decode_ids(const Dataset& data, std::span<const int> ids) {
  return tok::join_subwords(tok::decode(data.vocab, ids));
}

model::ModelConfig model_config(const RunConfig& config, const Dataset& data) {
  model::ModelConfig m = config.model;
  m.vocab_size = data.vocab.size();
  return m;
}

train::TrainingData training_data(const Dataset& data, const RunConfig& config,
                                  double aq_fraction) {
  if (!(aq_fraction > 0.0 && aq_fraction <= 1.0)) {
    throw std::invalid_argument("training_data: aq_fraction must lie in (0, 1]");
  }
  const auto max_tokens = static_cast<std::size_t>(config.model.max_len - 1);
  const auto convert = [&](const std::vector<corpus::Pair>& pairs) {
    std::vector<train::IdPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
      train::IdPair id{encode_tokens(data, p.source, max_tokens),
                       encode_tokens(data, p.target, max_tokens), p.topic, p.noisy};
      if (!id.source.empty() && !id.target.empty()) out.push_back(std::move(id));
    }
    return out;
  };
  using corpus::PairKind;
  using corpus::Split;
  train::TrainingData t;
  t.aq_train = convert(data.corpus.select(PairKind::kAQ, Split::kTrain));
  t.aq_valid = convert(data.corpus.select(PairKind::kAQ, Split::kValid));
  t.ab_train = convert(data.corpus.select(PairKind::kAB, Split::kTrain));
  t.ab_valid = convert(data.corpus.select(PairKind::kAB, Split::kValid));
  t.qb_train = convert(data.corpus.select(PairKind::kQB, Split::kTrain));
  t.qb_valid = convert(data.corpus.select(PairKind::kQB, Split::kValid));
  if (aq_fraction < 1.0) {
    std::vector<std::size_t> order(t.aq_train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(config.seed, "aq_fraction");
    std::shuffle(order.begin(), order.end(), rng);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(aq_fraction * static_cast<double>(order.size()))));
    order.resize(std::min(keep, order.size()));
    std::sort(order.begin(), order.end());
    std::vector<train::IdPair> subset;
    for (auto i : order) subset.push_back(t.aq_train[i]);
    t.aq_train = std::move(subset);
  }
  return t;
}

std::string system_name(const RunConfig& config) {
  if (config.train.lambda >= 1.0) return "direct";
  return std::string("TRIDENT-") + train::to_string(config.train.estimator);
}

std::vector<Source> test_sources(const Dataset& data, const std::string& direction,
                                 std::size_t max_sources) {
  std::vector<Source> out;
  std::map<corpus::Tokens, std::size_t> where;
  for (const auto& p : data.corpus.select(kind_of(direction), corpus::Split::kTest)) {
    auto [it, fresh] = where.emplace(p.source, out.size());
    if (fresh) out.push_back({p.source, p.topic, {}});
    auto& s = out[it->second];
    if (!p.noisy && std::find(s.gold.begin(), s.gold.end(), p.target) == s.gold.end()) {
      s.gold.push_back(p.target);
    }
  }
  if (max_sources > 0 && out.size() > max_sources) out.resize(max_sources);
  return out;
}

std::vector<Candidate> generate_candidates(const model::ModelBundle& bundle,
                                           const Dataset& data, const std::string& direction,
                                           const corpus::Tokens& source,
                                           const DecodeConfig& decode) {
  const auto& params = bundle[model_of(direction)];
  const auto ids =
      encode_tokens(data, source, static_cast<std::size_t>(params.config.max_len - 1));
  if (ids.empty()) return {};
  const decode::DecodeOptions opts{decode.beam, decode.max_len, decode.length_normalize};
  const auto result = decode.constrained ? decode::constrained_beam_search(params, ids, opts)
                                         : decode::beam_search(params, ids, opts);
  std::vector<Candidate> out;
  for (const auto& h : result.hypotheses) {
    out.push_back({corpus::join(decode_ids(data, h.tokens)), h.score});
  }
  return out;
}

eval::MetricsReport evaluate_bundle(const model::ModelBundle& bundle, const Dataset& data,
                                    const std::string& direction, const DecodeConfig& decode,
                                    const EvalConfig& eval, const std::string& system) {
  std::vector<eval::EvalItem> items;
  for (const auto& s : test_sources(data, direction, eval.max_sources)) {
    eval::EvalItem item{s.tokens, s.topic, {}, s.gold};
    for (const auto& c : generate_candidates(bundle, data, direction, s.tokens, decode)) {
      item.candidates.push_back(corpus::split_whitespace(c.text));
    }
    items.push_back(std::move(item));
  }
  return eval::evaluate(system, items, data.grammar);
}

std::vector<eval::MetricsReport> evaluate_baselines(const Dataset& data,
                                                    const std::string& direction,
                                                    const DecodeConfig& decode,
                                                    const EvalConfig& eval) {
  const auto pairs = data.corpus.select(kind_of(direction), corpus::Split::kTrain);
  const auto emb = baseline::ppmi_embeddings(train_sentences(data.corpus), eval.embedding_dim);
  const auto sources = test_sources(data, direction, eval.max_sources);
  std::vector<eval::MetricsReport> reports;
  for (auto mode : {baseline::Mode::kTfIdf, baseline::Mode::kMeanPool, baseline::Mode::kMaxPool}) {
    const auto index = baseline::build_index(pairs, mode, emb);
    std::vector<eval::EvalItem> items;
    for (const auto& s : sources) {
      const auto m = baseline::match(index, s.tokens, decode.beam, true);
      items.push_back({s.tokens, s.topic, m.bidwords, s.gold});
    }
    reports.push_back(eval::evaluate(baseline::to_string(mode), items, data.grammar));
  }
  return reports;
}

// ---- manifest ------------------------------------------------------------------------

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 init failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

Manifest::Manifest(std::string command, const RunConfig& config, fs::path root)
    : command_(std::move(command)), config_(config), seed_(config.seed), root_(std::move(root)) {}

void Manifest::add(const fs::path& artifact) { artifacts_.push_back(artifact); }

fs::path Manifest::write() {
  json files = json::array();
  for (const auto& a : artifacts_) {
    if (!fs::exists(a) || fs::file_size(a) == 0) {
      throw std::runtime_error("artifact missing or empty: " + a.string());
    }
    files.push_back({{"path", fs::relative(a, root_).generic_string()},
                     {"sha256", sha256_file(a)},
                     {"bytes", fs::file_size(a)}});
  }
  const fs::path path = root_ / "manifests" / (command_ + ".json");
  fs::create_directories(path.parent_path());
  write_json(path, {{"command", command_}, {"seed", seed_}, {"config", config_},
                    {"artifacts", files}});
  return path;
}

// ---- subcommands -----------------------------------------------------------------------

namespace {

fs::path data_dir(const RunConfig& c) { return c.output_path() / "data"; }
fs::path checkpoint_dir(const RunConfig& c) { return c.output_path() / "checkpoints"; }

struct Trained {
  model::ModelBundle bundle;
  std::string system;  // as recorded at training time
};

Trained load_trained(const RunConfig& config) {
  const fs::path ckpt = checkpoint_dir(config) / "phase2.ckpt";
  if (!fs::exists(ckpt)) throw MissingCheckpoint("missing checkpoint: " + ckpt.string());
  Trained t;
  const auto dirs = model::load_checkpoint(ckpt, t.bundle);
  for (auto d : {model::Direction::kAB, model::Direction::kQB}) {
    if (std::find(dirs.begin(), dirs.end(), d) == dirs.end()) {
      throw MissingCheckpoint(std::string("checkpoint lacks model ") + model::to_string(d));
    }
  }
  t.system = read_container(ckpt).header.value("system", system_name(config));
  return t;
}

std::vector<corpus::Tokens> read_sources(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read sources: " + path.string());
  std::vector<corpus::Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = corpus::split_whitespace(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const char* kind : {"aq", "ab", "qb"}) {
    for (const char* split : {"train", "valid", "test"}) {
      out.push_back(dir / (std::string(kind) + "." + split + ".tsv"));
    }
  }
  out.push_back(dir / "vocab.txt");
  out.push_back(dir / "genspec.json");
  return out;
}

void train_bundle(const Dataset& data, const RunConfig& config, double aq_fraction,
                  model::ModelBundle& bundle, train::TrainingResult& result,
                  const fs::path* ckpt_dir) {
  const auto tcfg = config.train_config();
  const auto tdata = training_data(data, config, aq_fraction);
  bundle = model::init_bundle(model_config(config, data), config.seed);
  const json extra = {{"system", system_name(config)}};
  if (tcfg.lambda < 1.0) train::run_phase1(tdata, bundle, tcfg, result);
  if (ckpt_dir != nullptr) {
    const model::Direction p1[] = {model::Direction::kAQ, model::Direction::kQA};
    model::save_checkpoint(*ckpt_dir / "phase1.ckpt", bundle, p1, extra);
  }
  train::run_phase2(tdata, bundle, tcfg, result);
  if (ckpt_dir != nullptr) {
    model::save_checkpoint(*ckpt_dir / "phase2.ckpt", bundle, model::kAllDirections, extra);
  }
}

}  // namespace

void cmd_gen_data(const RunConfig& config, std::ostream& log) {
  const fs::path dir = data_dir(config);
  const Dataset data = make_dataset(config);
  save_dataset(data, config, dir);
  Manifest manifest("gen-data", config, config.output_path());
  for (const auto& f : dataset_files(dir)) manifest.add(f);
  manifest.write();
  log << "gen-data: " << data.corpus.aq.size() << " aq, " << data.corpus.ab.size() << " ab, "
      << data.corpus.qb.size() << " qb pairs; vocabulary " << data.vocab.size() << " -> "
      << dir.string() << '\n';
}

void cmd_train(const RunConfig& config, std::ostream& log) {
  if (!fs::exists(data_dir(config) / "genspec.json")) cmd_gen_data(config, log);
  const Dataset data = load_dataset(config, data_dir(config));
  const fs::path ckpt = checkpoint_dir(config);
  fs::create_directories(ckpt);
  model::ModelBundle bundle;
  train::TrainingResult result;
  train_bundle(data, config, 1.0, bundle, result, &ckpt);
  const fs::path losses = config.output_path() / "losses.csv";
  train::write_loss_csv(losses, result.history);
  Manifest manifest("train", config, config.output_path());
  manifest.add(ckpt / "phase1.ckpt");
  manifest.add(ckpt / "phase2.ckpt");
  manifest.add(losses);
  manifest.write();
  log << "train: " << system_name(config) << ", phase 1 " << result.phase1_steps
      << " steps, phase 2 " << result.phase2_steps << " steps -> " << ckpt.string() << '\n';
}

void cmd_generate(const RunConfig& config, std::ostream& log) {
  const model::ModelBundle bundle = load_trained(config).bundle;
  const Dataset data = load_dataset(config, data_dir(config));
  Manifest manifest("generate", config, config.output_path());
  for (const auto& direction : config.decode.directions) {
    std::vector<corpus::Tokens> sources;
    if (!config.decode.input.empty()) {
      sources = read_sources(config.decode.input);
    } else {
      for (auto& s : test_sources(data, direction, config.eval.max_sources)) {
        sources.push_back(std::move(s.tokens));
      }
    }
    const fs::path path = config.output_path() / ("candidates." + direction + ".tsv");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& s : sources) {
      const auto cands = generate_candidates(bundle, data, direction, s, config.decode);
      for (std::size_t r = 0; r < cands.size(); ++r) {
        out << corpus::join(s) << '\t' << r + 1 << '\t' << format_score(cands[r].score) << '\t'
            << cands[r].text << '\n';
      }
    }
    out.close();
    manifest.add(path);
    log << "generate: " << direction << ", " << sources.size() << " sources -> " << path.string()
        << '\n';
  }
  manifest.write();
}

void cmd_evaluate(const RunConfig& config, std::ostream& log) {
  const auto [bundle, system] = load_trained(config);
  const Dataset data = load_dataset(config, data_dir(config));
  json all = json::object();
  std::string text;
  for (const auto& direction : config.decode.directions) {
    std::vector<eval::MetricsReport> reports{
        evaluate_bundle(bundle, data, direction, config.decode, config.eval, system)};
    if (config.eval.baselines) {
      for (auto& r : evaluate_baselines(data, direction, config.decode, config.eval)) {
        reports.push_back(std::move(r));
      }
    }
    all[direction] = reports;
    text += direction + "\n" + eval::format_table(reports) + "\n";
  }
  const fs::path json_path = config.output_path() / "metrics.json";
  const fs::path text_path = config.output_path() / "metrics.txt";
  write_json(json_path, all);
  std::ofstream(text_path) << text;
  Manifest manifest("evaluate", config, config.output_path());
  manifest.add(json_path);
  manifest.add(text_path);
  manifest.write();
  log << text;
}

void cmd_sweep_aq_size(const RunConfig& config, std::ostream& log) {
  const fs::path csv_path = config.output_path() / "sweep.csv";
  fs::create_directories(config.output_path());
  std::ofstream csv(csv_path);
  csv << "seed,fraction,direction,topic_relevance,bleu,f1\n";
  std::map<double, std::vector<double>> relevance;
  for (auto seed : config.sweep.seeds) {
    RunConfig run = config;
    run.seed = seed;
    const Dataset data = make_dataset(run);
    for (double fraction : config.sweep.fractions) {
      model::ModelBundle bundle;
      train::TrainingResult result;
      train_bundle(data, run, fraction, bundle, result, nullptr);
      double rel = 0.0;
      for (const auto& direction : config.decode.directions) {
        const auto r = evaluate_bundle(bundle, data, direction, config.decode, config.eval,
                                       system_name(config));
        csv << seed << ',' << fraction << ',' << direction << ',' << format_score(r.topic_relevance)
            << ',' << format_score(r.bleu) << ',' << format_score(r.f1) << '\n';
        rel += r.topic_relevance;
      }
      rel /= static_cast<double>(config.decode.directions.size());
      relevance[fraction].push_back(rel);
      log << "sweep: seed " << seed << ", fraction " << fraction << ", relevance "
          << format_score(rel) << '\n';
    }
  }
  csv.close();
  json summary = json::array();
  for (const auto& [fraction, values] : relevance) {
    summary.push_back({{"fraction", fraction}, {"median_topic_relevance", median(values)},
                       {"topic_relevance", values}});
  }
  const fs::path json_path = config.output_path() / "sweep.json";
  write_json(json_path, summary);
  Manifest manifest("sweep-aq-size", config, config.output_path());
  manifest.add(csv_path);
  manifest.add(json_path);
  manifest.write();
}

void cmd_ablate_beam(const RunConfig& config, std::ostream& log) {
  const auto [bundle, system] = load_trained(config);
  const Dataset data = load_dataset(config, data_dir(config));
  json all = json::object();
  std::string text;
  for (const auto& direction : config.decode.directions) {
    std::vector<eval::MetricsReport> reports;
    for (bool constrained : {true, false}) {
      DecodeConfig d = config.decode;
      d.constrained = constrained;
      reports.push_back(evaluate_bundle(bundle, data, direction, d, config.eval,
                                        system + (constrained ? " constrained" : " beam")));
    }
    all[direction] = reports;
    text += direction + "\n" + eval::format_table(reports) + "\n";
  }
  const fs::path json_path = config.output_path() / "ablate_beam.json";
  const fs::path text_path = config.output_path() / "ablate_beam.txt";
  write_json(json_path, all);
  std::ofstream(text_path) << text;
  Manifest manifest("ablate-beam", config, config.output_path());
  manifest.add(json_path);
  manifest.add(text_path);
  manifest.write();
  log << text;
}

int run_command(const std::string& command, const fs::path& config_path,
                const std::vector<std::string>& overrides, std::ostream& log) {
  static const std::map<std::string, void (*)(const RunConfig&, std::ostream&)> table = {
      {"gen-data", cmd_gen_data},           {"train", cmd_train},
      {"generate", cmd_generate},           {"evaluate", cmd_evaluate},
      {"sweep-aq-size", cmd_sweep_aq_size}, {"ablate-beam", cmd_ablate_beam}};
  const auto it = table.find(command);
  if (it == table.end()) {
    log << "error: unknown subcommand '" << command << "'\n";
    return kExitUsage;
  }
  RunConfig config;
  try {
    config = load_config(config_path, overrides);
  } catch (const ConfigError& e) {
    log << "error: invalid config: " << e.what() << '\n';
    return kExitInvalidConfig;
  }
  try {
    fs::create_directories(config.output_path());
    it->second(config, log);
  } catch (const MissingCheckpoint& e) {
    log << "error: " << e.what() << '\n';
    return kExitMissingCheckpoint;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace trident::pipeline

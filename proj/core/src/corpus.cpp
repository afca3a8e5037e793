#include "trident/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace trident::corpus {
namespace {

// Category mix of content vs function tokens per side.
constexpr double kAdConceptShare = 0.40;
constexpr double kAdTopicShare = 0.35;
constexpr double kQueryConceptShare = 0.60;
constexpr double kQueryTopicShare = 0.30;
constexpr double kBidwordConceptShare = 0.70;

int poisson_length(Rng& rng, double mean, int min_len) {
  std::poisson_distribution<int> dist(std::max(mean - min_len, 1e-9));
  return min_len + dist(rng);
}

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

Tokens sample_sentence(const Grammar::Topic& topic,
                       const Grammar::Concept& concept_words,
                       const Tokens& function_words, int length,
                       double concept_share, double topic_share, Rng& rng) {
  Tokens out;
  out.reserve(length);
  out.push_back(pick(concept_words.words, rng));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 1; i < length; ++i) {
    const double r = u(rng);
    if (r < concept_share) {
      out.push_back(pick(concept_words.words, rng));
    } else if (r < concept_share + topic_share) {
      out.push_back(pick(topic.words, rng));
    } else {
      out.push_back(pick(function_words, rng));
    }
  }
  return out;
}

std::vector<Pair> make_pairs(const GenSpec& spec, const Grammar& grammar,
                             PairKind kind, Rng& rng) {
  const int per_topic = kind == PairKind::kAQ   ? spec.aq_pairs_per_topic
                        : kind == PairKind::kAB ? spec.ab_pairs_per_topic
                                                : spec.qb_pairs_per_topic;
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(per_topic) * grammar.topics.size());
  std::uniform_int_distribution<int> concept_dist(0, spec.concepts_per_topic - 1);
  for (int t = 0; t < static_cast<int>(grammar.topics.size()); ++t) {
    const auto& topic = grammar.topics[t];
    for (int i = 0; i < per_topic; ++i) {
      const auto& cpt = topic.concepts[concept_dist(rng)];
      auto ad = [&] {
        return sample_sentence(topic, cpt, grammar.function_words,
                               poisson_length(rng, spec.ad_mean_len, 1),
                               kAdConceptShare, kAdTopicShare, rng);
      };
      auto query = [&] {
        return sample_sentence(topic, cpt, grammar.function_words,
                               poisson_length(rng, spec.query_mean_len, 1),
                               kQueryConceptShare, kQueryTopicShare, rng);
      };
      Pair p;
      p.topic = t;
      switch (kind) {
        case PairKind::kAQ:
          p.source = ad();
          p.target = query();
          break;
        case PairKind::kAB:
          p.source = ad();
          p.target = pick(cpt.bidwords, rng);
          break;
        case PairKind::kQB:
          p.source = query();
          p.target = pick(cpt.bidwords, rng);
          break;
      }
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

}  // namespace

void GenSpec::validate() const {
  if (n_topics < 2) {
    throw std::invalid_argument("GenSpec: n_topics must be >= 2");
  }
  if (concepts_per_topic < 1 || concept_vocab < 1 || topic_vocab < 1 ||
      function_vocab < 1 || bidwords_per_concept < 1 ||
      aq_pairs_per_topic < 1 || ab_pairs_per_topic < 1 ||
      qb_pairs_per_topic < 1) {
    throw std::invalid_argument("GenSpec: all counts must be >= 1");
  }
  if (!(ad_mean_len >= 1.0) || !(query_mean_len >= 1.0) ||
      !(bidword_mean_len >= 1.0)) {
    throw std::invalid_argument("GenSpec: mean lengths must be >= 1");
  }
  if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) {
    throw std::invalid_argument("GenSpec: noise_prob must lie in [0, 1]");
  }
  if (!(popularity_skew >= 0.0)) {
    throw std::invalid_argument("GenSpec: popularity_skew must be >= 0");
  }
}

void to_json(nlohmann::json& j, const GenSpec& s) {
  j = nlohmann::json{{"n_topics", s.n_topics},
                     {"concepts_per_topic", s.concepts_per_topic},
                     {"concept_vocab", s.concept_vocab},
                     {"topic_vocab", s.topic_vocab},
                     {"function_vocab", s.function_vocab},
                     {"bidwords_per_concept", s.bidwords_per_concept},
                     {"aq_pairs_per_topic", s.aq_pairs_per_topic},
                     {"ab_pairs_per_topic", s.ab_pairs_per_topic},
                     {"qb_pairs_per_topic", s.qb_pairs_per_topic},
                     {"ad_mean_len", s.ad_mean_len},
                     {"query_mean_len", s.query_mean_len},
                     {"bidword_mean_len", s.bidword_mean_len},
                     {"noise_prob", s.noise_prob},
                     {"popularity_skew", s.popularity_skew},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, GenSpec& s) {
  GenSpec d;
  s.n_topics = j.value("n_topics", d.n_topics);
  s.concepts_per_topic = j.value("concepts_per_topic", d.concepts_per_topic);
  s.concept_vocab = j.value("concept_vocab", d.concept_vocab);
  s.topic_vocab = j.value("topic_vocab", d.topic_vocab);
  s.function_vocab = j.value("function_vocab", d.function_vocab);
  s.bidwords_per_concept = j.value("bidwords_per_concept", d.bidwords_per_concept);
  s.aq_pairs_per_topic = j.value("aq_pairs_per_topic", d.aq_pairs_per_topic);
  s.ab_pairs_per_topic = j.value("ab_pairs_per_topic", d.ab_pairs_per_topic);
  s.qb_pairs_per_topic = j.value("qb_pairs_per_topic", d.qb_pairs_per_topic);
  s.ad_mean_len = j.value("ad_mean_len", d.ad_mean_len);
  s.query_mean_len = j.value("query_mean_len", d.query_mean_len);
  s.bidword_mean_len = j.value("bidword_mean_len", d.bidword_mean_len);
  s.noise_prob = j.value("noise_prob", d.noise_prob);
  s.popularity_skew = j.value("popularity_skew", d.popularity_skew);
  s.seed = j.value("seed", d.seed);
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

const char* to_string(PairKind kind) {
  switch (kind) {
    case PairKind::kAQ: return "aq";
    case PairKind::kAB: return "ab";
    case PairKind::kQB: return "qb";
  }
  return "?";
}

std::vector<Pair>& TriCorpus::pairs(PairKind kind) {
  return kind == PairKind::kAQ ? aq : kind == PairKind::kAB ? ab : qb;
}

const std::vector<Pair>& TriCorpus::pairs(PairKind kind) const {
  return kind == PairKind::kAQ ? aq : kind == PairKind::kAB ? ab : qb;
}

std::vector<Pair> TriCorpus::select(PairKind kind, Split split) const {
  std::vector<Pair> out;
  for (const auto& p : pairs(kind)) {
    if (p.split == split) out.push_back(p);
  }
  return out;
}

int Grammar::topic_of(const std::string& token) const {
  auto it = token_topic.find(token);
  return it == token_topic.end() ? -1 : it->second;
}

Grammar build_grammar(const GenSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, "corpus/grammar");
  Grammar g;
  for (int f = 0; f < spec.function_vocab; ++f) {
    g.function_words.push_back("fw" + std::to_string(f));
  }
  for (int t = 0; t < spec.n_topics; ++t) {
    Grammar::Topic topic;
    const std::string tp = "t" + std::to_string(t);
    for (int k = 0; k < spec.topic_vocab; ++k) {
      topic.words.push_back(tp + "x" + std::to_string(k));
      g.token_topic[topic.words.back()] = t;
    }
    for (int c = 0; c < spec.concepts_per_topic; ++c) {
      Grammar::Concept cpt;
      const std::string cp = tp + "c" + std::to_string(c) + "w";
      for (int k = 0; k < spec.concept_vocab; ++k) {
        cpt.words.push_back(cp + std::to_string(k));
        g.token_topic[cpt.words.back()] = t;
      }
      std::set<Tokens> seen;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int b = 0; b < spec.bidwords_per_concept; ++b) {
        Tokens phrase;
        for (int attempt = 0; attempt < 64; ++attempt) {
          const int len = poisson_length(rng, spec.bidword_mean_len, 1);
          phrase.clear();
          phrase.push_back(pick(cpt.words, rng));
          for (int i = 1; i < len; ++i) {
            phrase.push_back(u(rng) < kBidwordConceptShare ? pick(cpt.words, rng)
                                                           : pick(topic.words, rng));
          }
          if (!seen.contains(phrase)) break;
        }
        seen.insert(phrase);
        cpt.bidwords.push_back(phrase);
      }
      topic.concepts.push_back(std::move(cpt));
    }
    g.topics.push_back(std::move(topic));
  }
  return g;
}

std::vector<RankedBidword> popularity_ranking(const Grammar& grammar,
                                              std::uint64_t seed) {
  std::vector<RankedBidword> all;
  std::set<Tokens> seen;
  for (int t = 0; t < static_cast<int>(grammar.topics.size()); ++t) {
    for (const auto& cpt : grammar.topics[t].concepts) {
      for (const auto& b : cpt.bidwords) {
        if (seen.insert(b).second) all.push_back({b, t});
      }
    }
  }
  Rng rng = make_rng(seed, "corpus/popularity");
  std::shuffle(all.begin(), all.end(), rng);
  return all;
}

std::vector<Pair> inject_noise(std::vector<Pair> pairs, double noise_prob,
                               double popularity_skew,
                               const std::vector<RankedBidword>& ranking,
                               Rng& rng) {
  if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) {
    throw std::invalid_argument("inject_noise: noise_prob must lie in [0, 1]");
  }
  if (noise_prob == 0.0 || pairs.empty()) return pairs;

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> weights(ranking.size());
  for (auto& p : pairs) {
    if (!(u(rng) < noise_prob)) continue;
    // Off-topic candidates with weights relative to the best off-topic rank,
    // which keeps large skews from underflowing to an all-zero vector.
    std::size_t best = ranking.size();
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      if (ranking[r].topic != p.topic) {
        best = r;
        break;
      }
    }
    if (best == ranking.size()) continue;  // no off-topic bidword exists
    std::size_t chosen = best;
    if (std::isfinite(popularity_skew)) {
      for (std::size_t r = 0; r < ranking.size(); ++r) {
        weights[r] = ranking[r].topic == p.topic
                         ? 0.0
                         : std::exp(-popularity_skew *
                                    (std::log(r + 1.0) - std::log(best + 1.0)));
      }
      std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
      chosen = dist(rng);
    }
    p.target = ranking[chosen].tokens;
    p.noisy = true;
  }
  return pairs;
}

TriCorpus generate_corpus(const GenSpec& spec) {
  spec.validate();
  const Grammar grammar = build_grammar(spec);
  const auto ranking = popularity_ranking(grammar, spec.seed);
  TriCorpus c;
  Rng aq_rng = make_rng(spec.seed, "corpus/aq");
  Rng ab_rng = make_rng(spec.seed, "corpus/ab");
  Rng qb_rng = make_rng(spec.seed, "corpus/qb");
  Rng ab_noise = make_rng(spec.seed, "corpus/noise/ab");
  Rng qb_noise = make_rng(spec.seed, "corpus/noise/qb");
  c.aq = make_pairs(spec, grammar, PairKind::kAQ, aq_rng);
  c.ab = inject_noise(make_pairs(spec, grammar, PairKind::kAB, ab_rng),
                      spec.noise_prob, spec.popularity_skew, ranking, ab_noise);
  c.qb = inject_noise(make_pairs(spec, grammar, PairKind::kQB, qb_rng),
                      spec.noise_prob, spec.popularity_skew, ranking, qb_noise);
  return c;
}

TriCorpus split_corpus(TriCorpus corpus, std::size_t valid_n,
                       std::size_t test_n, std::uint64_t seed) {
  for (PairKind kind : {PairKind::kAQ, PairKind::kAB, PairKind::kQB}) {
    auto& pairs = corpus.pairs(kind);
    if (valid_n + test_n > 0 && valid_n + test_n >= pairs.size()) {
      throw std::invalid_argument(
          std::string("split_corpus: valid_n + test_n must be smaller than the ") +
          to_string(kind) + " dataset (" + std::to_string(pairs.size()) + " pairs)");
    }
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, std::string("split/") + to_string(kind));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
      pairs[order[i]].split = i < valid_n            ? Split::kValid
                              : i < valid_n + test_n ? Split::kTest
                                                     : Split::kTrain;
    }
  }
  return corpus;
}

std::string join(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens split_whitespace(const std::string& text) {
  Tokens out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

void save_corpus(const TriCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (PairKind kind : {PairKind::kAQ, PairKind::kAB, PairKind::kQB}) {
    for (Split split : {Split::kTrain, Split::kValid, Split::kTest}) {
      const auto path = dir / (std::string(to_string(kind)) + "." +
                               to_string(split) + ".tsv");
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + path.string());
      for (const auto& p : corpus.pairs(kind)) {
        if (p.split != split) continue;
        out << join(p.source) << '\t' << join(p.target) << '\t' << p.topic
            << '\t' << (p.noisy ? 1 : 0) << '\n';
      }
    }
  }
}

TriCorpus load_corpus(const std::filesystem::path& dir) {
  TriCorpus corpus;
  for (PairKind kind : {PairKind::kAQ, PairKind::kAB, PairKind::kQB}) {
    for (Split split : {Split::kTrain, Split::kValid, Split::kTest}) {
      const auto path = dir / (std::string(to_string(kind)) + "." +
                               to_string(split) + ".tsv");
      std::ifstream in(path, std::ios::binary);
      if (!in) throw std::runtime_error("missing corpus file " + path.string());
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
          const auto tab = line.find('\t', start);
          fields.push_back(line.substr(start, tab - start));
          if (tab == std::string::npos) break;
          start = tab + 1;
        }
        if (fields.size() != 4) {
          throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                   ": expected 4 tab-separated fields");
        }
        Pair p;
        p.source = split_whitespace(fields[0]);
        p.target = split_whitespace(fields[1]);
        p.topic = std::stoi(fields[2]);
        p.noisy = fields[3] == "1";
        p.split = split;
        corpus.pairs(kind).push_back(std::move(p));
      }
    }
  }
  return corpus;
}

}  // namespace trident::corpus

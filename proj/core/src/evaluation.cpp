#include "trident/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace trident::eval {
namespace {

using NgramCounts = std::map<Tokens, int>;

NgramCounts ngrams(const Tokens& tokens, int n) {
  NgramCounts counts;
  const auto len = static_cast<int>(tokens.size());
  for (int i = 0; i + n <= len; ++i) {
    ++counts[Tokens(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

}  // namespace

double bleu(const Tokens& hypothesis, const std::vector<Tokens>& references, int max_order) {
  if (hypothesis.empty()) throw std::invalid_argument("bleu: empty hypothesis");
  if (references.empty()) throw std::invalid_argument("bleu: no references");
  for (const auto& r : references) {
    if (r.empty()) throw std::invalid_argument("bleu: empty reference");
  }
  if (max_order < 1) throw std::invalid_argument("bleu: max_order must be >= 1");

  double log_sum = 0.0;
  for (int n = 1; n <= max_order; ++n) {
    const auto hyp = ngrams(hypothesis, n);
    NgramCounts max_ref;
    for (const auto& r : references) {
      for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    int total = 0;
    int matched = 0;
    for (const auto& [g, c] : hyp) {
      total += c;
      const auto it = max_ref.find(g);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    double p;
    if (total == 0) {
      p = 1.0;
    } else if (matched > 0) {
      p = static_cast<double>(matched) / total;
    } else if (n == 1) {
      return 0.0;
    } else {
      p = 1.0 / (total + 1.0);
    }
    log_sum += std::log(p);
  }

  const auto c = static_cast<double>(hypothesis.size());
  double r = 0.0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& ref : references) {
    const auto len = static_cast<double>(ref.size());
    const double gap = std::abs(len - c);
    if (gap < best_gap || (gap == best_gap && len < r)) {
      best_gap = gap;
      r = len;
    }
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return std::clamp(bp * std::exp(log_sum / max_order), 0.0, 1.0);
}

double bleu(const Tokens& hypothesis, const Tokens& reference, int max_order) {
  return bleu(hypothesis, std::vector<Tokens>{reference}, max_order);
}

double self_bleu(const std::vector<Tokens>& candidates, int max_order) {
  if (candidates.size() < 2) throw std::invalid_argument("self_bleu: need >= 2 candidates");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::vector<Tokens> others;
    others.reserve(candidates.size() - 1);
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (j != i) others.push_back(candidates[j]);
    }
    sum += bleu(candidates[i], others, max_order);
  }
  return sum / static_cast<double>(candidates.size());
}

double distinct_n(const std::vector<Tokens>& candidates, int n) {
  if (n < 1) throw std::invalid_argument("distinct_n: n must be >= 1");
  std::size_t pooled = 0;
  for (const auto& c : candidates) pooled += c.size();
  if (pooled < static_cast<std::size_t>(n)) {
    throw std::invalid_argument("distinct_n: fewer tokens than n");
  }
  std::set<Tokens> unique;
  std::size_t total = 0;
  for (const auto& c : candidates) {
    for (const auto& [g, count] : ngrams(c, n)) {
      unique.insert(g);
      total += static_cast<std::size_t>(count);
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double harmonic_mean(double a, double b) {
  return a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
}

PRF prf1(const std::vector<std::string>& generated, const std::vector<std::string>& gold) {
  const std::set<std::string> gold_set(gold.begin(), gold.end());
  if (gold_set.empty()) throw std::invalid_argument("prf1: empty gold set");
  const std::set<std::string> gen_set(generated.begin(), generated.end());
  std::size_t hits = 0;
  for (const auto& g : gen_set) hits += gold_set.contains(g) ? 1 : 0;
  PRF out;
  out.precision = gen_set.empty() ? 0.0 : static_cast<double>(hits) / gen_set.size();
  out.recall = static_cast<double>(hits) / gold_set.size();
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

double topic_relevance(const std::vector<Tokens>& candidates, int source_topic,
                       const corpus::Grammar& grammar) {
  if (candidates.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& c : candidates) {
    std::map<int, int> votes;
    for (const auto& t : c) {
      const int topic = grammar.topic_of(t);
      if (topic >= 0) ++votes[topic];
    }
    int best = -1;
    int best_votes = 0;
    bool tie = false;
    for (const auto& [topic, v] : votes) {
      if (v > best_votes) {
        best = topic;
        best_votes = v;
        tie = false;
      } else if (v == best_votes) {
        tie = true;
      }
    }
    if (best >= 0 && !tie && best == source_topic) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(candidates.size());
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"system", r.system},
                     {"topic_relevance", r.topic_relevance},
                     {"bleu", r.bleu},
                     {"self_bleu", r.self_bleu},
                     {"distinct_3", r.distinct_3},
                     {"distinct_4", r.distinct_4},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"f1", r.f1},
                     {"sources", r.sources},
                     {"candidates", r.candidates}};
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  j.at("system").get_to(r.system);
  j.at("topic_relevance").get_to(r.topic_relevance);
  j.at("bleu").get_to(r.bleu);
  j.at("self_bleu").get_to(r.self_bleu);
  j.at("distinct_3").get_to(r.distinct_3);
  j.at("distinct_4").get_to(r.distinct_4);
  j.at("precision").get_to(r.precision);
  j.at("recall").get_to(r.recall);
  j.at("f1").get_to(r.f1);
  j.at("sources").get_to(r.sources);
  j.at("candidates").get_to(r.candidates);
}

std::string format_table(const std::vector<MetricsReport>& reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.system.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %9s %9s %9s %9s %9s\n",
                static_cast<int>(width), "system", "relevance", "bleu", "self_bleu", "dist-3",
                "dist-4", "P", "R", "F1");
  out << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n",
                  static_cast<int>(width), r.system.c_str(), r.topic_relevance, r.bleu,
                  r.self_bleu, r.distinct_3, r.distinct_4, r.precision, r.recall, r.f1);
    out << buf;
  }
  return out.str();
}

MetricsReport evaluate(const std::string& system, const std::vector<EvalItem>& items,
                       const corpus::Grammar& grammar) {
  MetricsReport r;
  r.system = system;
  std::size_t gold_items = 0;
  std::size_t self_items = 0;
  std::size_t d3_items = 0;
  std::size_t d4_items = 0;
  std::size_t rel_items = 0;
  for (const auto& item : items) {
    ++r.sources;
    r.candidates += item.candidates.size();
    std::vector<Tokens> cands;
    for (const auto& c : item.candidates) {
      if (!c.empty()) cands.push_back(c);
    }
    r.topic_relevance += topic_relevance(item.candidates, item.topic, grammar);
    ++rel_items;
    if (cands.size() >= 2) {
      r.self_bleu += self_bleu(cands);
      ++self_items;
    }
    std::size_t pooled = 0;
    for (const auto& c : cands) pooled += c.size();
    if (pooled >= 3) {
      r.distinct_3 += distinct_n(cands, 3);
      ++d3_items;
    }
    if (pooled >= 4) {
      r.distinct_4 += distinct_n(cands, 4);
      ++d4_items;
    }
    std::vector<Tokens> gold;
    for (const auto& g : item.gold) {
      if (!g.empty()) gold.push_back(g);
    }
    if (!gold.empty()) {
      ++gold_items;
      double b = 0.0;
      for (const auto& c : cands) b += bleu(c, gold);
      if (!cands.empty()) r.bleu += b / static_cast<double>(cands.size());
      std::vector<std::string> gen_s;
      std::vector<std::string> gold_s;
      for (const auto& c : cands) gen_s.push_back(corpus::join(c));
      for (const auto& g : gold) gold_s.push_back(corpus::join(g));
      const auto prf = prf1(gen_s, gold_s);
      r.precision += prf.precision;
      r.recall += prf.recall;
    }
  }
  const auto avg = [](double& v, std::size_t n) { v = n > 0 ? v / static_cast<double>(n) : 0.0; };
  avg(r.topic_relevance, rel_items);
  avg(r.self_bleu, self_items);
  avg(r.distinct_3, d3_items);
  avg(r.distinct_4, d4_items);
  avg(r.bleu, gold_items);
  avg(r.precision, gold_items);
  avg(r.recall, gold_items);
  r.f1 = harmonic_mean(r.precision, r.recall);
  return r;
}

}  // namespace trident::eval

#pragma once

// Automatic metrics for generated bidwords. All functions work on
// whitespace-level token strings.

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trident/corpus.hpp"

namespace trident::eval {

using corpus::Tokens;

// Sentence-level BLEU with brevity penalty against the closest reference
// length. Unigram precision is unsmoothed; a higher order with zero matches
// uses 1 / (candidate n-grams + 1), and an order the hypothesis is too short
// to have counts as 1.
double bleu(const Tokens& hypothesis, const Tokens& reference, int max_order = 4);
double bleu(const Tokens& hypothesis, const std::vector<Tokens>& references, int max_order = 4);

// Mean BLEU of each candidate against all the others as references.
double self_bleu(const std::vector<Tokens>& candidates, int max_order = 4);

// Unique n-grams over total n-grams, pooled over candidates. N-grams never
// cross candidate boundaries.
double distinct_n(const std::vector<Tokens>& candidates, int n);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

double harmonic_mean(double a, double b);
PRF prf1(const std::vector<std::string>& generated, const std::vector<std::string>& gold);

// Fraction of candidates whose content tokens have a unique majority topic
// equal to `source_topic`.
double topic_relevance(const std::vector<Tokens>& candidates, int source_topic,
                       const corpus::Grammar& grammar);

struct MetricsReport {
  std::string system;
  double bleu = 0.0;
  double self_bleu = 0.0;
  double distinct_3 = 0.0;
  double distinct_4 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double topic_relevance = 0.0;
  std::size_t sources = 0;
  std::size_t candidates = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

// Aligned table, one row per report.
std::string format_table(const std::vector<MetricsReport>& reports);

// One evaluation item: a source, its candidates and the gold bidwords.
struct EvalItem {
  Tokens source;
  int topic = 0;
  std::vector<Tokens> candidates;
  std::vector<Tokens> gold;  // may be empty; then skipped for BLEU and P/R/F1
};

// Averages per-source scores. F1 is the harmonic mean of the averaged
// precision and recall.
MetricsReport evaluate(const std::string& system, const std::vector<EvalItem>& items,
                       const corpus::Grammar& grammar);

}  // namespace trident::eval

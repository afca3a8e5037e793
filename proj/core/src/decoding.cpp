#include "trident/decoding.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "trident/tokenizer.hpp"

namespace trident::decode {
namespace {

double rank_key(const Hypothesis& h, bool length_normalize) {
  if (!length_normalize || h.tokens.empty()) return h.score;
  return h.score / static_cast<double>(h.tokens.size());
}

void sort_hypotheses(std::vector<Hypothesis>& hyps, bool length_normalize) {
  std::stable_sort(hyps.begin(), hyps.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    const double ka = rank_key(a, length_normalize);
    const double kb = rank_key(b, length_normalize);
    if (ka != kb) return ka > kb;
    return a.tokens < b.tokens;
  });
}

void check_options(const DecodeOptions& o) {
  if (o.beam < 1) throw std::invalid_argument("decode: beam must be >= 1");
  if (o.max_len < 1) throw std::invalid_argument("decode: max_len must be >= 1");
}

int best_allowed(const ad::RowVector& logp, int position) {
  int best = -1;
  for (Eigen::Index w = 0; w < logp.size(); ++w) {
    if (!allowed_token(static_cast<int>(w), position)) continue;
    if (best < 0 || logp(w) > logp(best)) best = static_cast<int>(w);
  }
  return best;
}

}  // namespace

bool allowed_token(int id, int position) {
  if (id == tok::kPad || id == tok::kBos || id == tok::kUnk) return false;
  return !(id == tok::kEos && position == 0);
}

int usable_vocab(int vocab_size) {
  int n = 0;
  for (int w = 0; w < vocab_size; ++w) n += allowed_token(w, 0) ? 1 : 0;
  return n;
}

Hypothesis greedy_continue(const model::ModelParams& params, const ad::Matrix& memory,
                           std::vector<int> prefix, double prefix_score, int max_len) {
  Hypothesis h{std::move(prefix), prefix_score, false};
  while (static_cast<int>(h.tokens.size()) < max_len &&
         (h.tokens.empty() || h.tokens.back() != tok::kEos)) {
    const auto logp = model::next_token_logprobs(params, memory, h.tokens);
    const int w = best_allowed(logp, static_cast<int>(h.tokens.size()));
    if (w < 0) break;
    h.tokens.push_back(w);
    h.score += logp(w);
  }
  h.finished = true;
  return h;
}

Hypothesis greedy_decode(const model::ModelParams& params, std::span<const int> source,
                         int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  return greedy_continue(params, model::encode_source(params, source), {}, 0.0, max_len);
}

DecodeResult beam_search(const model::ModelParams& params, std::span<const int> source,
                         const DecodeOptions& options) {
  check_options(options);
  DecodeResult result;
  const int usable = usable_vocab(params.config.vocab_size);
  int beam = options.beam;
  if (beam > usable) {
    beam = usable;
    result.clamped = true;
  }
  if (beam < 1) return result;

  const ad::Matrix memory = model::encode_source(params, source);
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (int pos = 0; pos < options.max_len && !live.empty(); ++pos) {
    // (score, token, beam index): higher score first, then lower token id.
    std::vector<std::tuple<double, int, std::size_t>> cand;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const auto logp = model::next_token_logprobs(params, memory, live[b].tokens);
      for (Eigen::Index w = 0; w < logp.size(); ++w) {
        if (!allowed_token(static_cast<int>(w), pos)) continue;
        cand.emplace_back(live[b].score + logp(w), static_cast<int>(w), b);
      }
    }
    const auto keep = std::min<std::size_t>(cand.size(), static_cast<std::size_t>(beam));
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(),
                      [](const auto& a, const auto& b) {
                        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
                        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
                        return std::get<2>(a) < std::get<2>(b);
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& [score, w, b] = cand[i];
      Hypothesis h{live[b].tokens, score, false};
      h.tokens.push_back(w);
      if (w == tok::kEos || pos + 1 == options.max_len) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (static_cast<int>(finished.size()) >= beam) break;
  }
  sort_hypotheses(finished, options.length_normalize);
  if (static_cast<int>(finished.size()) > beam) finished.resize(beam);
  result.hypotheses = std::move(finished);
  return result;
}

DecodeResult constrained_beam_search(const model::ModelParams& params,
                                     std::span<const int> source, const DecodeOptions& options) {
  check_options(options);
  DecodeResult result;
  const ad::Matrix memory = model::encode_source(params, source);
  const auto first = model::next_token_logprobs(params, memory, {});
  std::vector<int> heads;
  for (Eigen::Index w = 0; w < first.size(); ++w) {
    if (allowed_token(static_cast<int>(w), 0)) heads.push_back(static_cast<int>(w));
  }
  std::stable_sort(heads.begin(), heads.end(),
                   [&](int a, int b) { return first(a) > first(b); });
  int n = options.beam;
  if (n > static_cast<int>(heads.size())) {
    n = static_cast<int>(heads.size());
    result.clamped = true;
  }
  for (int i = 0; i < n; ++i) {
    result.hypotheses.push_back(
        greedy_continue(params, memory, {heads[i]}, first(heads[i]), options.max_len));
  }
  sort_hypotheses(result.hypotheses, options.length_normalize);
  return result;
}

}  // namespace trident::decode

#pragma once

// Plain beam search and head-constrained beam search.
//
// Both decoders never emit PAD, BOS or UNK, and never emit EOS as the first
// token: a bidword is at least one regular token long.

#include <span>
#include <vector>

#include "trident/seq2seq.hpp"

namespace trident::decode {

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens; ends with EOS when finished by it
  double score = 0.0;       // cumulative log-probability
  bool finished = false;    // ended with EOS or reached max_len
};

struct DecodeOptions {
  int beam = 32;
  int max_len = 8;                // generated tokens, EOS included
  bool length_normalize = false;  // rank by score / |tokens|
};

struct DecodeResult {
  std::vector<Hypothesis> hypotheses;  // best first
  bool clamped = false;                // beam exceeded the usable vocabulary
};

// Tokens a decoder may emit at `position` (0-based).
bool allowed_token(int id, int position);
// Number of tokens eligible as the first generated token.
int usable_vocab(int vocab_size);

DecodeResult beam_search(const model::ModelParams& params, std::span<const int> source,
                         const DecodeOptions& options);

// Forces the N best distinct first tokens, completes each greedily, and ranks
// the candidates by total log-probability (ties by head id).
DecodeResult constrained_beam_search(const model::ModelParams& params,
                                     std::span<const int> source, const DecodeOptions& options);

Hypothesis greedy_decode(const model::ModelParams& params, std::span<const int> source,
                         int max_len);

// Greedy continuation of `prefix` from a cached encoder memory.
Hypothesis greedy_continue(const model::ModelParams& params, const ad::Matrix& memory,
                           std::vector<int> prefix, double prefix_score, int max_len);

}  // namespace trident::decode

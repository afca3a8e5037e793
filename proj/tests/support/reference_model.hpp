#pragma once

// Loop-level transformer forward pass used as an oracle for the library
// model. Shares nothing with it except the parameter values.

#include <vector>

#include "trident/seq2seq.hpp"

namespace ref {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const trident::ad::Matrix& m);

// Encoder input rows for token ids (embedding lookup, before scaling).
Mat lookup(const trident::model::ModelParams& p, const std::vector<int>& ids);

// Log-probabilities of every decoder position given encoder input rows and
// decoder input ids (BOS-prefixed).
Mat decoder_logprobs(const trident::model::ModelParams& p, const Mat& source_rows,
                     const std::vector<int>& decoder_ids);

// Same with the decoder input given as dense rows (BOS row first).
Mat decoder_logprobs_rows(const trident::model::ModelParams& p, const Mat& source_rows,
                          const Mat& decoder_rows);

// sum_t log P(target_t | ...) with EOS appended when `append_eos`.
double logprob_from_rows(const trident::model::ModelParams& p, const Mat& source_rows,
                         const std::vector<int>& target, bool append_eos);

double sequence_logprob(const trident::model::ModelParams& p, const std::vector<int>& source,
                        const std::vector<int>& target);
double prefix_logprob(const trident::model::ModelParams& p, const std::vector<int>& source,
                      const std::vector<int>& prefix);

}  // namespace ref

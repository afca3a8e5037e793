#pragma once

// Retrieval baselines: embed the input, find the most similar training
// source, return its bidword.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trident/autograd.hpp"
#include "trident/corpus.hpp"

namespace trident::baseline {

using corpus::Tokens;

enum class Mode { kTfIdf, kMeanPool, kMaxPool };
const char* to_string(Mode m);
Mode mode_from_string(std::string_view name);

struct WordEmbeddings {
  std::vector<std::string> words;
  ad::Matrix vectors;  // one row per word

  int index(const std::string& word) const;  // -1 when absent
  int dim() const { return static_cast<int>(vectors.cols()); }

 private:
  friend WordEmbeddings make_embeddings(std::vector<std::string>, ad::Matrix);
  std::unordered_map<std::string, int> index_;
};

WordEmbeddings make_embeddings(std::vector<std::string> words, ad::Matrix vectors);

// Positive PMI over within-sentence co-occurrence, truncated to the `dim`
// leading eigenpairs. Rows are U * sqrt(max(lambda, 0)) with each eigenvector
// signed so that its largest-magnitude entry is positive.
WordEmbeddings ppmi_embeddings(const std::vector<Tokens>& sentences, int dim = 32);

struct MatchIndex {
  Mode mode = Mode::kTfIdf;
  std::vector<Tokens> bidwords;  // one per entry
  ad::Matrix vectors;            // one row per entry
  // tf-idf mode
  std::vector<std::string> terms;
  std::unordered_map<std::string, int> term_index;
  ad::RowVector idf;
  // pooling modes
  std::optional<WordEmbeddings> embeddings;

  std::size_t size() const { return bidwords.size(); }
};

// Entries are (source, bidword) pairs; idf comes from these entries only.
MatchIndex build_index(const std::vector<corpus::Pair>& pairs, Mode mode,
                       std::optional<WordEmbeddings> embeddings = std::nullopt);

ad::RowVector vectorize(const MatchIndex& index, const Tokens& tokens);

struct MatchResult {
  std::vector<Tokens> bidwords;
  std::vector<double> scores;
  std::vector<std::size_t> entries;
  bool zero_query = false;  // input had no usable term; nothing returned
};

// Entries ranked by cosine similarity, ties by insertion order. With
// `distinct`, repeated bidwords are skipped so k different ones come back.
MatchResult match(const MatchIndex& index, const Tokens& input, int top_k,
                  bool distinct = false);

double cosine(const ad::RowVector& a, const ad::RowVector& b);

void save_index(const std::filesystem::path& path, const MatchIndex& index);
MatchIndex load_index(const std::filesystem::path& path);

}  // namespace trident::baseline

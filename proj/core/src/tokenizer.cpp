#include "trident/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace trident::tok {
namespace {

const std::string kSpecialNames[kNumSpecials] = {"<pad>", "<s>", "</s>", "<unk>"};
const std::string kContinuation = "@@";

std::vector<std::string> characters(const std::string& word) {
  std::vector<std::string> out;
  for (char c : word) out.emplace_back(1, c);
  return out;
}

void apply_merge(std::vector<std::string>& symbols, const std::string& left,
                 const std::string& right) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      out.push_back(left + right);
      ++i;
    } else {
      out.push_back(symbols[i]);
    }
  }
  symbols = std::move(out);
}

}  // namespace

bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto [it, inserted] =
        index_.emplace(tokens_[i], kNumSpecials + static_cast<int>(i));
    if (!inserted) throw std::invalid_argument("Vocab: duplicate token " + tokens_[i]);
  }
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("Vocab: id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(size()));
  }
  return id < kNumSpecials ? kSpecialNames[id] : tokens_[id - kNumSpecials];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

SubwordMerges SubwordMerges::learn(const std::vector<corpus::Tokens>& sentences,
                                   int merge_count) {
  if (merge_count <= 0) return {};
  std::map<std::string, long> word_freq;
  for (const auto& s : sentences) {
    for (const auto& w : s) ++word_freq[w];
  }
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [w, f] : word_freq) words.emplace_back(characters(w), f);

  std::vector<std::pair<std::string, std::string>> merges;
  for (int m = 0; m < merge_count; ++m) {
    std::map<std::pair<std::string, std::string>, long> pair_freq;
    for (const auto& [symbols, f] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_freq[{symbols[i], symbols[i + 1]}] += f;
      }
    }
    if (pair_freq.empty()) break;
    // Highest count wins; std::map order makes ties lexicographic.
    auto best = pair_freq.begin();
    for (auto it = pair_freq.begin(); it != pair_freq.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    merges.push_back(best->first);
    for (auto& [symbols, f] : words) {
      apply_merge(symbols, best->first.first, best->first.second);
    }
  }
  return SubwordMerges(std::move(merges));
}

corpus::Tokens SubwordMerges::segment(const corpus::Tokens& words) const {
  if (merges_.empty()) return words;
  corpus::Tokens out;
  for (const auto& w : words) {
    auto symbols = characters(w);
    for (const auto& [l, r] : merges_) apply_merge(symbols, l, r);
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      out.push_back(i + 1 < symbols.size() ? symbols[i] + kContinuation : symbols[i]);
    }
  }
  return out;
}

corpus::Tokens join_subwords(const corpus::Tokens& units) {
  corpus::Tokens out;
  std::string pending;
  for (const auto& u : units) {
    if (u.size() >= kContinuation.size() && u.ends_with(kContinuation)) {
      pending += u.substr(0, u.size() - kContinuation.size());
    } else {
      out.push_back(pending + u);
      pending.clear();
    }
  }
  if (!pending.empty()) out.push_back(pending);
  return out;
}

Vocab build_vocab(const corpus::TriCorpus& corpus, int min_freq,
                  const SubwordMerges& merges) {
  std::map<std::string, long> freq;
  bool any = false;
  for (auto kind : {corpus::PairKind::kAQ, corpus::PairKind::kAB, corpus::PairKind::kQB}) {
    for (const auto& p : corpus.pairs(kind)) {
      any = true;
      for (const auto& t : merges.segment(p.source)) ++freq[t];
      for (const auto& t : merges.segment(p.target)) ++freq[t];
    }
  }
  if (!any) throw std::invalid_argument("build_vocab: empty corpus");
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [t, f] : freq) {
    if (f >= min_freq) kept.emplace_back(t, f);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [t, f] : kept) tokens.push_back(std::move(t));
  return Vocab(std::move(tokens));
}

std::vector<int> encode(const Vocab& vocab, const corpus::Tokens& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

corpus::Tokens decode(const Vocab& vocab, std::span<const int> ids) {
  corpus::Tokens out;
  out.reserve(ids.size());
  for (int id : ids) {
    const auto& t = vocab.token(id);
    if (!is_special(id)) out.push_back(t);
  }
  return out;
}

}  // namespace trident::tok

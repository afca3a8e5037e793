#include "trident/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "trident/container.hpp"

namespace trident::baseline {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::kTfIdf: return "tfidf";
    case Mode::kMeanPool: return "mean_pool";
    case Mode::kMaxPool: return "max_pool";
  }
  return "?";
}

Mode mode_from_string(std::string_view name) {
  if (name == "tfidf") return Mode::kTfIdf;
  if (name == "mean_pool") return Mode::kMeanPool;
  if (name == "max_pool") return Mode::kMaxPool;
  throw std::invalid_argument("unknown baseline mode: " + std::string(name));
}

int WordEmbeddings::index(const std::string& word) const {
  const auto it = index_.find(word);
  return it == index_.end() ? -1 : it->second;
}

WordEmbeddings make_embeddings(std::vector<std::string> words, ad::Matrix vectors) {
  if (static_cast<Eigen::Index>(words.size()) != vectors.rows()) {
    throw std::invalid_argument("make_embeddings: row count mismatch");
  }
  WordEmbeddings e;
  e.words = std::move(words);
  e.vectors = std::move(vectors);
  for (std::size_t i = 0; i < e.words.size(); ++i) {
    e.index_.emplace(e.words[i], static_cast<int>(i));
  }
  return e;
}

WordEmbeddings ppmi_embeddings(const std::vector<Tokens>& sentences, int dim) {
  if (dim < 1) throw std::invalid_argument("ppmi_embeddings: dim must be >= 1");
  std::set<std::string> vocab_set;
  for (const auto& s : sentences) vocab_set.insert(s.begin(), s.end());
  if (vocab_set.empty()) throw std::invalid_argument("ppmi_embeddings: empty corpus");
  std::vector<std::string> words(vocab_set.begin(), vocab_set.end());
  std::map<std::string, int> id;
  for (std::size_t i = 0; i < words.size(); ++i) id.emplace(words[i], static_cast<int>(i));

  const auto v = static_cast<Eigen::Index>(words.size());
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(v, v);
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (i != j) counts(id[s[i]], id[s[j]]) += 1.0;
      }
    }
  }
  const double total = counts.sum();
  Eigen::MatrixXd ppmi = Eigen::MatrixXd::Zero(v, v);
  if (total > 0.0) {
    const Eigen::VectorXd marg = counts.rowwise().sum();
    for (Eigen::Index i = 0; i < v; ++i) {
      for (Eigen::Index j = 0; j < v; ++j) {
        if (counts(i, j) <= 0.0) continue;
        const double pmi = std::log(counts(i, j) * total / (marg(i) * marg(j)));
        ppmi(i, j) = std::max(pmi, 0.0);
      }
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(ppmi);
  const auto k = std::min<Eigen::Index>(dim, v);
  ad::Matrix out = ad::Matrix::Zero(v, dim);
  // Eigenvalues come in ascending order.
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index src = v - 1 - c;
    Eigen::VectorXd u = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0.0) u = -u;
    out.col(c) = u * std::sqrt(std::max(solver.eigenvalues()(src), 0.0));
  }
  return make_embeddings(std::move(words), std::move(out));
}

namespace {

ad::RowVector tf_vector(const MatchIndex& index, const Tokens& tokens) {
  ad::RowVector tf = ad::RowVector::Zero(static_cast<Eigen::Index>(index.terms.size()));
  for (const auto& t : tokens) {
    const auto it = index.term_index.find(t);
    if (it != index.term_index.end()) tf(it->second) += 1.0;
  }
  return tf;
}

}  // namespace

ad::RowVector vectorize(const MatchIndex& index, const Tokens& tokens) {
  if (index.mode == Mode::kTfIdf) {
    return tf_vector(index, tokens).cwiseProduct(index.idf);
  }
  const auto& emb = *index.embeddings;
  ad::RowVector out = ad::RowVector::Zero(emb.dim());
  int used = 0;
  for (const auto& t : tokens) {
    const int i = emb.index(t);
    if (i < 0) continue;
    if (index.mode == Mode::kMeanPool) {
      out += emb.vectors.row(i);
    } else {
      out = used == 0 ? ad::RowVector(emb.vectors.row(i)) : out.cwiseMax(emb.vectors.row(i));
    }
    ++used;
  }
  if (index.mode == Mode::kMeanPool && used > 0) out /= static_cast<double>(used);
  return out;
}

MatchIndex build_index(const std::vector<corpus::Pair>& pairs, Mode mode,
                       std::optional<WordEmbeddings> embeddings) {
  if (pairs.empty()) throw std::invalid_argument("build_index: no pairs");
  if (mode != Mode::kTfIdf && !embeddings) {
    throw std::invalid_argument("build_index: pooling modes need embeddings");
  }
  MatchIndex index;
  index.mode = mode;
  if (mode != Mode::kTfIdf) index.embeddings = std::move(embeddings);
  for (const auto& p : pairs) index.bidwords.push_back(p.target);

  if (mode == Mode::kTfIdf) {
    std::map<std::string, int> df;
    for (const auto& p : pairs) {
      for (const auto& t : std::set<std::string>(p.source.begin(), p.source.end())) ++df[t];
    }
    index.idf.resize(static_cast<Eigen::Index>(df.size()));
    const auto n = static_cast<double>(pairs.size());
    for (const auto& [term, count] : df) {
      const auto i = static_cast<int>(index.terms.size());
      index.terms.push_back(term);
      index.term_index.emplace(term, i);
      index.idf(i) = std::log(n / count);
    }
  }

  const Eigen::Index dim = mode == Mode::kTfIdf ? static_cast<Eigen::Index>(index.terms.size())
                                                : index.embeddings->dim();
  index.vectors.resize(static_cast<Eigen::Index>(pairs.size()), dim);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    index.vectors.row(static_cast<Eigen::Index>(i)) = vectorize(index, pairs[i].source);
  }
  return index;
}

double cosine(const ad::RowVector& a, const ad::RowVector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

MatchResult match(const MatchIndex& index, const Tokens& input, int top_k, bool distinct) {
  if (top_k < 1) throw std::invalid_argument("match: top_k must be >= 1");
  MatchResult result;
  const ad::RowVector q = vectorize(index, input);
  if (q.norm() == 0.0) {
    result.zero_query = true;
    return result;
  }
  std::vector<double> sims(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    sims[i] = cosine(q, index.vectors.row(static_cast<Eigen::Index>(i)));
  }
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  std::set<Tokens> seen;
  for (const auto i : order) {
    if (static_cast<int>(result.entries.size()) >= top_k) break;
    if (distinct && !seen.insert(index.bidwords[i]).second) continue;
    result.entries.push_back(i);
    result.bidwords.push_back(index.bidwords[i]);
    result.scores.push_back(sims[i]);
  }
  return result;
}

void save_index(const std::filesystem::path& path, const MatchIndex& index) {
  Container c;
  nlohmann::json bidwords = nlohmann::json::array();
  for (const auto& b : index.bidwords) bidwords.push_back(corpus::join(b));
  c.header = {{"kind", "match_index"}, {"mode", to_string(index.mode)}, {"bidwords", bidwords}};
  c.tensors.push_back({"vectors", index.vectors});
  if (index.mode == Mode::kTfIdf) {
    c.header["terms"] = index.terms;
    c.tensors.push_back({"idf", index.idf});
  } else {
    c.header["words"] = index.embeddings->words;
    c.tensors.push_back({"embeddings", index.embeddings->vectors});
  }
  write_container(path, c);
}

MatchIndex load_index(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.header.value("kind", "") != "match_index") {
    throw std::runtime_error("load_index: not a match index: " + path.string());
  }
  MatchIndex index;
  index.mode = mode_from_string(c.header.at("mode").get<std::string>());
  for (const auto& b : c.header.at("bidwords")) {
    index.bidwords.push_back(corpus::split_whitespace(b.get<std::string>()));
  }
  index.vectors = c.tensor("vectors");
  if (index.mode == Mode::kTfIdf) {
    index.terms = c.header.at("terms").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < index.terms.size(); ++i) {
      index.term_index.emplace(index.terms[i], static_cast<int>(i));
    }
    index.idf = c.tensor("idf");
  } else {
    index.embeddings = make_embeddings(c.header.at("words").get<std::vector<std::string>>(),
                                       c.tensor("embeddings"));
  }
  return index;
}

}  // namespace trident::baseline

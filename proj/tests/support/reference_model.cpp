#include "reference_model.hpp"

#include <algorithm>
#include <cmath>

#include "trident/tokenizer.hpp"

namespace ref {
namespace {

using trident::model::ModelParams;

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

void add_in_place(Mat& a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
}

Mat layer_norm(const Mat& x, const trident::model::LayerNormParams& p) {
  const auto g = to_mat(p.gain.value)[0];
  const auto b = to_mat(p.bias.value)[0];
  Mat out = x;
  for (auto& row : out) {
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= row.size();
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= row.size();
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = (row[j] - mu) / std::sqrt(var + 1e-5) * g[j] + b[j];
    }
  }
  return out;
}

Mat attention(const Mat& q_in, const Mat& kv_in, const trident::model::AttentionParams& p,
              int heads, bool causal) {
  const Mat q = matmul(q_in, to_mat(p.wq.value));
  const Mat k = matmul(kv_in, to_mat(p.wk.value));
  const Mat v = matmul(kv_in, to_mat(p.wv.value));
  const std::size_t d = q[0].size();
  const std::size_t dk = d / heads;
  Mat concat(q.size(), std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      const std::size_t visible = causal ? i + 1 : k.size();
      std::vector<double> s(visible);
      for (std::size_t j = 0; j < visible; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += q[i][h * dk + c] * k[j][h * dk + c];
        s[j] = dot / std::sqrt(static_cast<double>(dk));
      }
      const double m = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - m));
      for (std::size_t j = 0; j < visible; ++j)
        for (std::size_t c = 0; c < dk; ++c) concat[i][h * dk + c] += s[j] / z * v[j][h * dk + c];
    }
  }
  return matmul(concat, to_mat(p.wo.value));
}

Mat ffn(const Mat& x, const trident::model::FeedForwardParams& p) {
  Mat h = matmul(x, to_mat(p.w1.value));
  const auto b1 = to_mat(p.b1.value)[0];
  for (auto& row : h)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::max(0.0, row[j] + b1[j]);
  Mat out = matmul(h, to_mat(p.w2.value));
  const auto b2 = to_mat(p.b2.value)[0];
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b2[j];
  return out;
}

Mat inputs(const ModelParams& p, const Mat& rows) {
  const int d = p.config.d_model;
  Mat x = rows;
  for (std::size_t pos = 0; pos < x.size(); ++pos) {
    for (int i = 0; i < d; ++i) {
      const double angle = pos / std::pow(10000.0, (2.0 * (i / 2)) / d);
      x[pos][i] = x[pos][i] * std::sqrt(static_cast<double>(d)) +
                  (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return x;
}

}  // namespace

Mat to_mat(const trident::ad::Matrix& m) {
  Mat out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

Mat lookup(const ModelParams& p, const std::vector<int>& ids) {
  const Mat table = to_mat(p.embedding.value);
  Mat out;
  for (int id : ids) out.push_back(table.at(id));
  return out;
}

Mat decoder_logprobs(const ModelParams& p, const Mat& source_rows,
                     const std::vector<int>& decoder_ids) {
  return decoder_logprobs_rows(p, source_rows, lookup(p, decoder_ids));
}

Mat decoder_logprobs_rows(const ModelParams& p, const Mat& source_rows, const Mat& decoder_rows) {
  const int heads = p.config.heads;
  Mat x = inputs(p, source_rows);
  for (const auto& layer : p.encoder) {
    add_in_place(x, attention(layer_norm(x, layer.norm1), layer_norm(x, layer.norm1),
                              layer.self_attn, heads, false));
    add_in_place(x, ffn(layer_norm(x, layer.norm2), layer.ffn));
  }
  const Mat memory = layer_norm(x, p.encoder_norm);

  Mat y = inputs(p, decoder_rows);
  for (const auto& layer : p.decoder) {
    const Mat h = layer_norm(y, layer.norm1);
    add_in_place(y, attention(h, h, layer.self_attn, heads, true));
    add_in_place(y, attention(layer_norm(y, layer.norm2), memory, layer.cross_attn, heads, false));
    add_in_place(y, ffn(layer_norm(y, layer.norm3), layer.ffn));
  }
  Mat logits = matmul(layer_norm(y, p.decoder_norm), to_mat(p.output.value));
  for (auto& row : logits) {
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - m);
    for (double& v : row) v = v - m - std::log(z);
  }
  return logits;
}

double logprob_from_rows(const ModelParams& p, const Mat& source_rows,
                         const std::vector<int>& target, bool append_eos) {
  std::vector<int> dec{trident::tok::kBos};
  std::vector<int> out = target;
  dec.insert(dec.end(), target.begin(), target.end());
  if (append_eos) {
    out.push_back(trident::tok::kEos);
  } else {
    dec.pop_back();
  }
  const Mat lp = decoder_logprobs(p, source_rows, dec);
  double s = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) s += std::max(lp[t][out[t]], std::log(1e-12));
  return s;
}

double sequence_logprob(const ModelParams& p, const std::vector<int>& source,
                        const std::vector<int>& target) {
  return logprob_from_rows(p, lookup(p, source), target, true);
}

double prefix_logprob(const ModelParams& p, const std::vector<int>& source,
                      const std::vector<int>& prefix) {
  return logprob_from_rows(p, lookup(p, source), prefix, false);
}

}  // namespace ref

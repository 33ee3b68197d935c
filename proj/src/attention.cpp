#include <cmath>
#include <vector>

#include "basis/layers.hpp"

namespace basis {

namespace {

void check_projection(const char* name, const Matrix& m, std::size_t rows, std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ContractError(std::string("causal_attention: ") + name + " has shape " + shape_string(m) +
                        ", expected (" + std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
}

}  // namespace

ForwardResult<AttentionCache> causal_attention_forward(const Matrix& q, const Matrix& k,
                                                       const Matrix& v, std::size_t batch,
                                                       std::size_t seq_len, std::size_t n_heads) {
  const std::size_t d_model = q.cols();
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ContractError("causal_attention: d_model " + std::to_string(d_model) +
                        " is not divisible by " + std::to_string(n_heads) + " heads");
  }
  check_projection("q", q, batch * seq_len, d_model);
  check_projection("k", k, batch * seq_len, d_model);
  check_projection("v", v, batch * seq_len, d_model);

  const std::size_t head_dim = d_model / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(double(head_dim));

  ForwardResult<AttentionCache> out;
  out.y = Matrix(batch * seq_len, d_model);
  out.cache.batch = batch;
  out.cache.seq_len = seq_len;
  out.cache.n_heads = n_heads;
  out.cache.probs.reserve(batch * n_heads);

  std::vector<double> scores(seq_len);
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t base = s * seq_len;
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t c0 = h * head_dim;
      Matrix probs(seq_len, seq_len);
      for (std::size_t i = 0; i < seq_len; ++i) {
        double peak = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0;
          for (std::size_t c = 0; c < head_dim; ++c) dot += q(base + i, c0 + c) * k(base + j, c0 + c);
          scores[j] = dot * inv_sqrt;
          peak = std::max(peak, scores[j]);
        }
        double denom = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - peak);
          denom += scores[j];
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const Real p = static_cast<Real>(scores[j] / denom);
          probs(i, j) = p;
          for (std::size_t c = 0; c < head_dim; ++c) out.y(base + i, c0 + c) += p * v(base + j, c0 + c);
        }
      }
      out.cache.probs.push_back(std::move(probs));
    }
  }
  out.cache.q = q;
  out.cache.k = k;
  out.cache.v = v;
  return out;
}

AttentionGradients causal_attention_backward(const Matrix& dout, const AttentionCache& cache) {
  const Matrix& q = cache.q;
  const Matrix& k = cache.k;
  const Matrix& v = cache.v;
  check_projection("dout", dout, q.rows(), q.cols());
  const std::size_t seq_len = cache.seq_len;
  const std::size_t head_dim = q.cols() / cache.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(double(head_dim));

  AttentionGradients g{Matrix(q.rows(), q.cols()), Matrix(k.rows(), k.cols()),
                       Matrix(v.rows(), v.cols())};
  std::vector<double> dprobs(seq_len);
  for (std::size_t s = 0; s < cache.batch; ++s) {
    const std::size_t base = s * seq_len;
    for (std::size_t h = 0; h < cache.n_heads; ++h) {
      const std::size_t c0 = h * head_dim;
      const Matrix& probs = cache.probs[s * cache.n_heads + h];
      for (std::size_t i = 0; i < seq_len; ++i) {
        double weighted = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          double dp = 0;
          for (std::size_t c = 0; c < head_dim; ++c) dp += dout(base + i, c0 + c) * v(base + j, c0 + c);
          dprobs[j] = dp;
          weighted += dp * probs(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const Real p = probs(i, j);
          for (std::size_t c = 0; c < head_dim; ++c) g.dv(base + j, c0 + c) += p * dout(base + i, c0 + c);
          const Real dscore = static_cast<Real>(p * (dprobs[j] - weighted) * inv_sqrt);
          for (std::size_t c = 0; c < head_dim; ++c) {
            g.dq(base + i, c0 + c) += dscore * k(base + j, c0 + c);
            g.dk(base + j, c0 + c) += dscore * q(base + i, c0 + c);
          }
        }
      }
    }
  }
  return g;
}

}  // namespace basis

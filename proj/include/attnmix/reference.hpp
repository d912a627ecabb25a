#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "attnmix/encoder.hpp"

// Serial reference implementations, loop-for-loop transliterations of the
// defining formulas. They are kept independent of the production kernels so
// tests can use them as oracles and the benchmark can compare against them.
namespace attnmix::ref {

// Naive triple-loop product.
Matrix matmul(const Matrix& a, const Matrix& b);

// Direct exp/sum per row, no max subtraction.
Matrix softmax_rows(const Matrix& m);

// Per-pair attention: alpha_ij = exp(q_i.k_j/sqrt(hd)) / sum_l exp(q_i.k_l/sqrt(hd))
// over unmasked keys, computed one (i, j) pair at a time in doubles.
// q_i, k_j, v_j are derived from x and the head parameters with plain loops.
std::pair<Matrix, Matrix> attention_head(const Matrix& x,
                                         const std::vector<std::uint8_t>& mask,
                                         const HeadParams& params);

// Double-loop token relevance: column sum over unmasked queries divided by
// the unmasked count.
std::vector<double> head_relevance(const Matrix& aw, const std::vector<std::uint8_t>& mask);

// Mean of per-head relevance oracles.
std::vector<double> layer_relevance(const std::vector<Matrix>& aws,
                                    const std::vector<std::uint8_t>& mask);

// Elementwise convex mix of two token-embedding blocks.
Matrix mix_tokens(const Matrix& emb1, const Matrix& emb2, const std::vector<real>& lambda);

// Per-token received attention (plain column sum over unmasked queries).
std::vector<double> received_attention(const Matrix& aw,
                                       const std::vector<std::uint8_t>& mask);

}  // namespace attnmix::ref

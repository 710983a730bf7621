#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "moe2pc/share.hpp"

namespace moe2pc {

// Boolean shares are ShareTensors with semantic range {0,1} at scale 0.

// Elementwise indicator of x == c against a public constant; x at scale 0.
ShareTensor equal_public(PartyCtx& ctx, const ShareTensor& x, ring_t constant);

// b * x for a boolean share b; x's scale is preserved.
ShareTensor mux(PartyCtx& ctx, const ShareTensor& bits, const ShareTensor& x);

// Elementwise share * share product; result scale is the sum of input scales.
ShareTensor mul_elementwise(PartyCtx& ctx, const ShareTensor& a, const ShareTensor& b);

// matrix (r x c) with each column l scaled by vec[l].
ShareTensor mul_broadcast_col(PartyCtx& ctx, const ShareTensor& matrix, const ShareTensor& vec);

struct TopKShares {
    ShareTensor values;  // t largest scores, non-increasing, scale f
    ShareTensor indices; // original positions of the values, scale 0
};

// Data-oblivious top-t selection over a length-L score vector: a full
// odd-even-merge sorting network over (score, index) pairs, then take t.
// Ties rank the smaller input index first. The network shape depends only on
// L, never on the data.
TopKShares top_k(PartyCtx& ctx, const ShareTensor& scores, std::size_t t);

// Row i of the result is the one-hot encoding of idx[i] over [0, width);
// out-of-range indices produce an all-zero row.
ShareTensor one_hot(PartyCtx& ctx, const ShareTensor& idx, std::size_t width);

// Sealed-oracle row softmax over an m x n logit matrix.
ShareTensor softmax_rows(PartyCtx& ctx, const ShareTensor& logits);

// Sealed-oracle floor division by a public positive integer; x at scale 0.
ShareTensor floor_div_public(PartyCtx& ctx, const ShareTensor& x, std::uint64_t divisor);

// Sealed-oracle SiLU, x / (1 + exp(-x)), at scale f.
ShareTensor silu_shares(PartyCtx& ctx, const ShareTensor& x);

// The comparator network behind top_k, exposed for the count/shape tests.
struct CompareLayer {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};
std::vector<CompareLayer> oem_sort_network(std::size_t padded_length);

std::size_t next_pow2(std::size_t n);

// Reference softmax row used by the sealed oracle; the plaintext oracles
// replicate the same expression so scores agree bit for bit.
std::vector<double> softmax_row_reference(const std::vector<double>& row);

} // namespace moe2pc

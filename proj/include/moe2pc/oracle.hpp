#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "moe2pc/slots.hpp"

namespace moe2pc::oracle {

using Mat = std::vector<std::vector<double>>;

struct PlainExpert {
    Mat w_gate, w_up, w_down;
};

// Real-valued mirror of the secure model; weights are the decoded fixed-point
// values, so both paths see bit-identical parameters.
struct PlainModel {
    Mat gate; // n x d
    std::vector<PlainExpert> experts;
    int frac_bits = 12;
};

// Gate replication. The routing decision (logits -> softmax -> quantize ->
// rank) follows the fixed-point pipeline exactly so selections never diverge
// from the secure path; only the expert arithmetic stays in doubles.
struct PlainRouting {
    Mat scores;                                 // m x n quantized softmax scores
    std::vector<std::vector<std::int64_t>> enc; // m x n encoded scores
    std::vector<std::vector<std::size_t>> topk; // m x k expert ids, rank order
};
PlainRouting plain_gate(const Mat& x, const PlainModel& model, std::size_t k);

// Exact top-k MoE forward: sum of score-weighted SwiGLU expert outputs over
// each token's selected experts.
Mat plain_moe(const Mat& x, const PlainModel& model, std::size_t k);

// Balanced-routing reference: per expert, rank the routed tokens by score
// (ties toward the smaller flattened index), keep the top t, drop the rest.
Mat plain_balanced_moe(const Mat& x, const PlainModel& model, std::size_t k, std::size_t t);

// Kept (expert, token) pairs with positive score, for set-equality checks.
struct KeptToken {
    std::size_t token;
    std::int64_t score_enc;
    bool operator==(const KeptToken&) const = default;
};
std::vector<std::vector<KeptToken>> balanced_kept_sets(const Mat& x, const PlainModel& model,
                                                       std::size_t k, std::size_t t);

// Closed-form rotation counts mirroring the packed-matmul padding rules.
std::uint64_t rotation_count(PackingScheme scheme, std::size_t n, std::size_t t, std::size_t d1,
                             std::size_t d2, std::size_t slot_count);

// Comparator count of the odd-even-merge sorting network on a length padded
// to the next power of two: (p^2 - p + 4) * 2^(p-2) - 1 for 2^p elements.
std::uint64_t oem_compare_count(std::size_t length);

// Swap count of the record-binding dispatch baseline: t selection passes of
// (km-1-p) compare-and-swaps each.
std::uint64_t swap_pass_count(std::size_t candidates, std::size_t t);

} // namespace moe2pc::oracle

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "moe2pc/tensor.hpp"

namespace moe2pc {

// Exact operation counts for the simulated SIMD layer. Rotations dominate the
// cost model; the baby/giant split is tracked separately so either reading of
// the BSGS totals can be checked.
struct RotationCounter {
    std::uint64_t rotations = 0;
    std::uint64_t baby_rotations = 0;
    std::uint64_t giant_rotations = 0;
    std::uint64_t pt_multiplies = 0;
    std::uint64_t ct_adds = 0;

    void reset() { *this = RotationCounter{}; }
    RotationCounter& operator+=(const RotationCounter& o) {
        rotations += o.rotations;
        baby_rotations += o.baby_rotations;
        giant_rotations += o.giant_rotations;
        pt_multiplies += o.pt_multiplies;
        ct_adds += o.ct_adds;
        return *this;
    }
};

// N-slot simulated SIMD ciphertext: slots hold ring values directly, no
// encryption or noise. rot(v, 0) is the identity and is never counted; every
// other rotation counts one regardless of step size.
class SlotVector {
public:
    SlotVector(std::size_t n, RotationCounter* counter) : slots_(n, 0), counter_(counter) {}

    std::size_t size() const { return slots_.size(); }
    ring_t& operator[](std::size_t i) { return slots_[i]; }
    ring_t operator[](std::size_t i) const { return slots_[i]; }

    // Exact cyclic left shift by k positions.
    SlotVector rotated_left(std::size_t k) const;
    void add_inplace(const SlotVector& o);
    void mul_plain_inplace(std::span<const ring_t> plain);

private:
    std::vector<ring_t> slots_;
    RotationCounter* counter_;
};

enum class PackingScheme { bolt, batch, batch_bsgs };

const char* packing_name(PackingScheme s);
PackingScheme packing_from_name(const std::string& name);

struct PackedMatmulResult {
    std::vector<RingTensor> products; // one t x d2 matrix per expert, scale sA + sB
    RotationCounter counters;
    std::size_t input_cts = 0;
    std::size_t output_cts = 0;
    std::size_t baby_steps = 1;
    std::size_t giant_steps = 1;
};

// Per-expert column packing: each expert's t x d1 matrix packs alone,
// N/pad(t) columns per ciphertext, pad(t) the next power of two.
PackedMatmulResult matmul_bolt(std::span<const RingTensor> a, std::span<const RingTensor> b,
                               std::size_t slot_count);

// Batched packing: column j of every expert stacks into one length-n*t
// batched column, so each ciphertext needs only N/pad(n*t) accumulation
// rotations. Weights are re-laid-out in plaintext for free.
PackedMatmulResult matmul_batch(std::span<const RingTensor> a, std::span<const RingTensor> b,
                                std::size_t slot_count);

// Batched packing with a baby-step/giant-step split of the accumulation
// rotations; baby_override forces the baby-step count (0 = balanced choice).
PackedMatmulResult matmul_batch_bsgs(std::span<const RingTensor> a, std::span<const RingTensor> b,
                                     std::size_t slot_count, std::size_t baby_override = 0);

// Ciphertext footprint of a packed matmul, computable from public shapes
// alone (the transcript meters ciphertext traffic with it).
struct PackingFootprint {
    std::size_t input_cts = 0;
    std::size_t output_cts = 0;
    std::size_t stride = 0;
    std::size_t cols_per_ct = 0;
};
PackingFootprint packing_footprint(PackingScheme scheme, std::size_t n, std::size_t t,
                                   std::size_t d1, std::size_t d2, std::size_t slot_count);

PackedMatmulResult packed_matmul_scheme(PackingScheme scheme, std::span<const RingTensor> a,
                                        std::span<const RingTensor> b, std::size_t slot_count);

} // namespace moe2pc

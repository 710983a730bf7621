#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "moe2pc/tensor.hpp"
#include "moe2pc/transcript.hpp"

namespace moe2pc {

// Trusted dealer for correlated randomness and sealed-oracle primitives.
// Everything it hands out is a pure function of (seed, step), so the two
// party tasks can ask independently and still receive matching material.
class TrustedDealer {
public:
    TrustedDealer(std::uint64_t seed, std::uint64_t triple_budget_elements)
        : seed_(seed), triple_budget_(triple_budget_elements) {}

    struct MatmulTripleHalf {
        RingTensor u, v, w; // this party's additive halves of (U, V, UV)
    };

    // Beaver matrix triple for an (m x p) * (p x q) product.
    MatmulTripleHalf matmul_triple(PartyId party, std::uint64_t step, std::size_t m, std::size_t p,
                                   std::size_t q);

    // Sealed oracle: both parties deposit their halves, the functionality is
    // evaluated on the reconstruction, and fresh halves come back. The mask is
    // derived from (seed, step), so sessions replay byte-identically.
    std::vector<ring_t> ideal_eval(PartyId party, std::uint64_t step,
                                   const std::vector<ring_t>& half,
                                   const std::function<std::vector<ring_t>(std::vector<ring_t>)>& f);

    // Uniform tensors from the dealer stream (he-matmul response masks).
    RingTensor uniform_tensor(std::uint64_t step, std::vector<std::size_t> shape, int scale) const;
    std::vector<RingTensor> uniform_tensor_set(std::uint64_t step,
                                               const std::vector<std::vector<std::size_t>>& shapes,
                                               int scale) const;

    std::uint64_t seed() const { return seed_; }

    // Unblocks any task waiting in a rendezvous after the peer died.
    void poison();

private:
    struct Pending {
        std::vector<ring_t> halves[2];
        bool arrived[2] = {false, false};
        std::vector<ring_t> out[2];
        bool computed = false;
        int consumed = 0;
    };

    std::uint64_t seed_;
    std::uint64_t triple_budget_;
    std::atomic<std::uint64_t> issued_[2] = {0, 0};

    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::uint64_t, std::shared_ptr<Pending>> pending_;
    bool poisoned_ = false;
};

} // namespace moe2pc

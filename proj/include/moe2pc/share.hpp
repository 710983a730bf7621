#pragma once

#include <utility>

#include "moe2pc/session.hpp"
#include "moe2pc/tensor.hpp"

namespace moe2pc {

// One party's additive half of a secret tensor. Reconstruction needs both
// halves from the same session; the payload alone is uniform.
struct ShareTensor {
    PartyId owner = PartyId::p0;
    RingTensor payload;
    std::uint64_t session_tag = 0;

    const std::vector<std::size_t>& shape() const { return payload.shape(); }
    int scale() const { return payload.scale(); }
    std::size_t numel() const { return payload.numel(); }
};

// Dealer-seeded input sharing: P1's half is uniform, P0's half is the secret
// minus it. Harness-side; input loading is not protocol traffic.
std::pair<ShareTensor, ShareTensor> make_shares(Session& session, const RingTensor& secret);

ShareTensor make_zero_share(PartyCtx& ctx, std::vector<std::size_t> shape, int scale);

// Test/harness-side opening of both halves.
RingTensor reconstruct(const ShareTensor& a, const ShareTensor& b);

// Linear ops: local, zero communication, ring-exact under reconstruction.
ShareTensor add_shares(const ShareTensor& a, const ShareTensor& b);
ShareTensor sub_shares(const ShareTensor& a, const ShareTensor& b);
ShareTensor add_public(PartyCtx& ctx, const ShareTensor& a, const RingTensor& pub);
ShareTensor mul_public(const ShareTensor& a, const RingTensor& pub); // scale adds; caller truncates
ShareTensor neg_share(const ShareTensor& a);

// Rescale from 2f to f, exact on the reconstructed value (dealer-assisted).
ShareTensor truncate_shares(PartyCtx& ctx, const ShareTensor& a, int frac_bits);

// Beaver-triple matrix product; result at the summed scale, caller truncates.
ShareTensor beaver_matmul(PartyCtx& ctx, const ShareTensor& a, const ShareTensor& b);

// Public reveal at both parties; only sessions flagged insecure may call it.
RingTensor declassify(PartyCtx& ctx, const ShareTensor& a);

namespace detail {
ShareTensor wrap(PartyCtx& ctx, RingTensor payload);
std::vector<ring_t> ideal_unary(PartyCtx& ctx, const ShareTensor& x,
                                const std::function<std::vector<ring_t>(std::vector<ring_t>)>& f);
std::vector<ring_t> ideal_binary(PartyCtx& ctx, const ShareTensor& a, const ShareTensor& b,
                                 const std::function<std::vector<ring_t>(std::vector<ring_t>)>& f);
} // namespace detail

} // namespace moe2pc

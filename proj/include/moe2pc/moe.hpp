#pragma once

#include <vector>

#include "moe2pc/model.hpp"
#include "moe2pc/protocols.hpp"

namespace moe2pc {

// Flattened routing decision, token-major: token j's k entries sit at
// positions j*k .. j*k+k-1. w_flat holds the selected scores at scale f,
// k_flat the selected expert indices at scale 0.
struct RoutingShares {
    ShareTensor w_flat;
    ShareTensor k_flat;
};

// Per-expert dispatch outputs: exactly t token rows each, whatever the
// routing says. Zero-score slots are dummies that combine nullifies.
struct DispatchShares {
    std::vector<ShareTensor> x;       // t x d
    std::vector<ShareTensor> one_hot; // t x m
    std::vector<ShareTensor> scores;  // t
};

// Softmax-over-linear gate followed by per-token top-k.
RoutingShares gate_route(PartyCtx& ctx, const ShareTensor& x, const MoeModel& model);

// Confidence-aware balanced dispatch: per expert, mask + mux the flattened
// scores, select the top t by oblivious sorting, recover token ids by integer
// division, one-hot them and retrieve the rows with a share-share matmul.
DispatchShares dispatch(PartyCtx& ctx, const ShareTensor& x, const RoutingShares& routing,
                        const MoeDims& dims, std::size_t t);

// Record-binding baseline: the same selection computed by bubbling full
// (score, index, embedding) records through metered compare-and-swap passes.
DispatchShares dispatch_cipherprune(PartyCtx& ctx, const ShareTensor& x,
                                    const RoutingShares& routing, const MoeDims& dims,
                                    std::size_t t);

// SwiGLU expert stack; the client share of every linear layer goes through
// the packed-slot product under the chosen scheme, the server share locally.
std::vector<ShareTensor> expert_forward(PartyCtx& ctx, const DispatchShares& dispatched,
                                        const MoeModel& model, PackingScheme scheme);

// One-hot-based reordering plus score weighting, summed over experts.
ShareTensor combine(PartyCtx& ctx, const DispatchShares& dispatched,
                    const std::vector<ShareTensor>& expert_out, std::size_t m_tokens);

// Share x plaintext-weight products routed through the slot simulator. One
// call covers a batch of experts; all inputs must share one row count.
std::vector<ShareTensor> matmul_plain_weights_batched(PartyCtx& ctx,
                                                      const std::vector<ShareTensor>& xs,
                                                      const std::vector<const RingTensor*>& ws,
                                                      PackingScheme scheme,
                                                      std::size_t slot_count);
ShareTensor matmul_plain_weights(PartyCtx& ctx, const ShareTensor& x, const RingTensor& w,
                                 PackingScheme scheme, std::size_t slot_count);

struct MoeForwardResult {
    ShareTensor y_p0;
    ShareTensor y_p1;
};

// The four-step pipeline under the requested mode. The session transcript and
// rotation counters accumulate the run's costs.
MoeForwardResult moe_forward(Session& session, Mode mode, const RingTensor& x_encoded,
                             const MoeModel& model);

} // namespace moe2pc

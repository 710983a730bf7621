#include "moe2pc/share.hpp"

#include "moe2pc/errors.hpp"

namespace moe2pc {

namespace {

void check_pair(const ShareTensor& a, const ShareTensor& b) {
    if (a.session_tag != b.session_tag) throw ShapeError("shares from different sessions");
    if (a.owner == b.owner) throw ShapeError("reconstruct needs one half per party");
    if (!a.payload.same_shape(b.payload)) {
        throw ShapeError(a.payload.shape_str() + " vs " + b.payload.shape_str());
    }
    if (a.scale() != b.scale()) {
        throw ScaleError(std::to_string(a.scale()) + " vs " + std::to_string(b.scale()));
    }
}

void check_same_party(const ShareTensor& a, const ShareTensor& b) {
    if (a.owner != b.owner || a.session_tag != b.session_tag) {
        throw ShapeError("share operands must belong to one party and one session");
    }
}

} // namespace

std::pair<ShareTensor, ShareTensor> make_shares(Session& session, const RingTensor& secret) {
    if (!session.is_open()) throw SessionClosedError("make_shares");
    const std::uint64_t step = session.take_harness_step();
    RingTensor mask = session.dealer().uniform_tensor(step, secret.shape(), secret.scale());
    ShareTensor h0{PartyId::p0, secret - mask, session.tag()};
    ShareTensor h1{PartyId::p1, mask, session.tag()};
    return {std::move(h0), std::move(h1)};
}

ShareTensor make_zero_share(PartyCtx& ctx, std::vector<std::size_t> shape, int scale) {
    return {ctx.party, RingTensor(std::move(shape), scale), ctx.session.tag()};
}

RingTensor reconstruct(const ShareTensor& a, const ShareTensor& b) {
    check_pair(a, b);
    return a.payload + b.payload;
}

ShareTensor add_shares(const ShareTensor& a, const ShareTensor& b) {
    check_same_party(a, b);
    return {a.owner, a.payload + b.payload, a.session_tag};
}

ShareTensor sub_shares(const ShareTensor& a, const ShareTensor& b) {
    check_same_party(a, b);
    return {a.owner, a.payload - b.payload, a.session_tag};
}

ShareTensor add_public(PartyCtx& ctx, const ShareTensor& a, const RingTensor& pub) {
    if (a.scale() != pub.scale()) {
        throw ScaleError("add_public scale mismatch");
    }
    if (ctx.party == PartyId::p1) return a; // P0 absorbs the public summand
    return {a.owner, a.payload + pub, a.session_tag};
}

ShareTensor mul_public(const ShareTensor& a, const RingTensor& pub) {
    if (!a.payload.same_shape(pub)) {
        throw ShapeError("mul_public shape mismatch");
    }
    RingTensor out = a.payload;
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = ring_mul(out.at(i), pub.at(i));
    out.set_scale(a.scale() + pub.scale());
    return {a.owner, std::move(out), a.session_tag};
}

ShareTensor neg_share(const ShareTensor& a) {
    RingTensor out = a.payload;
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = ring_neg(out.at(i));
    return {a.owner, std::move(out), a.session_tag};
}

namespace detail {

ShareTensor wrap(PartyCtx& ctx, RingTensor payload) {
    return {ctx.party, std::move(payload), ctx.session.tag()};
}

std::vector<ring_t> ideal_unary(PartyCtx& ctx, const ShareTensor& x,
                                const std::function<std::vector<ring_t>(std::vector<ring_t>)>& f) {
    const std::uint64_t step = ctx.next_step();
    return ctx.session.dealer().ideal_eval(ctx.party, step, x.payload.data(), f);
}

std::vector<ring_t> ideal_binary(PartyCtx& ctx, const ShareTensor& a, const ShareTensor& b,
                                 const std::function<std::vector<ring_t>(std::vector<ring_t>)>& f) {
    const std::uint64_t step = ctx.next_step();
    std::vector<ring_t> both;
    both.reserve(a.numel() + b.numel());
    both.insert(both.end(), a.payload.data().begin(), a.payload.data().end());
    both.insert(both.end(), b.payload.data().begin(), b.payload.data().end());
    return ctx.session.dealer().ideal_eval(ctx.party, step, both, f);
}

} // namespace detail

// Truncation is exact on the reconstructed semantics: the dealer reconstructs,
// applies the arithmetic shift, and re-shares. The share-local alternative
// (each party shifts its own half) is cheaper but off by one ulp and, with
// probability ~2^(l+1-64) for l-bit values, off by a wrapped 2^(64-f); that
// would break byte-reproducible runs, so it is not used here.
ShareTensor truncate_shares(PartyCtx& ctx, const ShareTensor& a, int frac_bits) {
    if (a.scale() != 2 * frac_bits) {
        throw ScaleError("truncate_shares expects scale " + std::to_string(2 * frac_bits) +
                         ", got " + std::to_string(a.scale()));
    }
    auto out = detail::ideal_unary(ctx, a, [frac_bits](std::vector<ring_t> x) {
        for (auto& v : x) v = arith_shift_right(v, frac_bits);
        return x;
    });
    ctx.meter_ideal(labels::trunc, 0);
    RingTensor payload(a.payload.shape(), std::move(out), frac_bits);
    return detail::wrap(ctx, std::move(payload));
}

ShareTensor beaver_matmul(PartyCtx& ctx, const ShareTensor& a, const ShareTensor& b) {
    check_same_party(a, b);
    const std::size_t m = a.payload.rows(), p = a.payload.cols(), q = b.payload.cols();
    if (b.payload.rows() != p) {
        throw ShapeError("beaver_matmul inner dims: " + a.payload.shape_str() + " x " +
                         b.payload.shape_str());
    }

    const std::uint64_t step = ctx.next_step();
    TrustedDealer::MatmulTripleHalf triple =
        ctx.session.dealer().matmul_triple(ctx.party, step, m, p, q);
    triple.u.set_scale(a.scale());
    triple.v.set_scale(b.scale());
    triple.w.set_scale(a.scale() + b.scale());

    // Open E = A - U and F = B - V (one simultaneous exchange).
    RingTensor e_half = a.payload - triple.u;
    RingTensor f_half = b.payload - triple.v;
    std::vector<ring_t> msg;
    msg.reserve(m * p + p * q);
    msg.insert(msg.end(), e_half.data().begin(), e_half.data().end());
    msg.insert(msg.end(), f_half.data().begin(), f_half.data().end());
    ctx.chan.send_u64s(msg);
    std::vector<ring_t> peer = ctx.chan.recv_u64s();
    if (peer.size() != msg.size()) throw ShapeError("beaver opening size mismatch");
    ctx.meter_exchange(labels::open, msg.size() * 8, msg.size() * 8);

    RingTensor e({m, p}, a.scale()), f({p, q}, b.scale());
    for (std::size_t i = 0; i < m * p; ++i) e.at(i) = e_half.at(i) + peer[i];
    for (std::size_t i = 0; i < p * q; ++i) f.at(i) = f_half.at(i) + peer[m * p + i];

    // Z_i = W_i + E * V_i + U_i * F, with P0 adding the public E * F term.
    RingTensor z = triple.w + plain_matmul(e, triple.v) + plain_matmul(triple.u, f);
    if (ctx.is_p0()) z.add_inplace(plain_matmul(e, f));
    return detail::wrap(ctx, std::move(z));
}

RingTensor declassify(PartyCtx& ctx, const ShareTensor& a) {
    if (!ctx.session.config().insecure_allowed) {
        throw PolicyError("declassify outside an insecure-mode session");
    }
    ctx.chan.send_u64s(a.payload.data());
    std::vector<ring_t> peer = ctx.chan.recv_u64s();
    if (peer.size() != a.numel()) throw ShapeError("declassify size mismatch");
    ctx.meter_exchange(labels::declassify, a.numel() * 8, a.numel() * 8);

    RingTensor out = a.payload;
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) += peer[i];
    return out;
}

} // namespace moe2pc

#include "moe2pc/moe.hpp"

#include <algorithm>

#include "moe2pc/errors.hpp"

namespace moe2pc {

namespace {

ShareTensor share_row(const ShareTensor& m, std::size_t r) {
    const std::size_t c = m.payload.cols();
    std::vector<ring_t> row(m.payload.data().begin() + r * c,
                            m.payload.data().begin() + (r + 1) * c);
    return {m.owner, RingTensor({c}, std::move(row), m.scale()), m.session_tag};
}

ShareTensor transpose_share(const ShareTensor& m) {
    return {m.owner, m.payload.transposed(), m.session_tag};
}

// Row r of the matrix scaled by vec[r]; the share-share analogue of a
// diagonal weighting.
ShareTensor mul_broadcast_row(PartyCtx& ctx, const ShareTensor& matrix, const ShareTensor& vec) {
    const std::size_t r = matrix.payload.rows(), c = matrix.payload.cols();
    if (vec.numel() != r) throw ShapeError("mul_broadcast_row: vector length != rows");
    RingTensor rep({r, c}, vec.scale());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) rep.at2(i, j) = vec.payload.at(i);
    ShareTensor replicated{matrix.owner, std::move(rep), matrix.session_tag};
    return mul_elementwise(ctx, matrix, replicated);
}

// SwiGLU over a batch of per-expert inputs (all with the same row count).
std::vector<ShareTensor> swiglu_forward(PartyCtx& ctx, const std::vector<ShareTensor>& xs,
                                        const MoeModel& model, std::size_t first_expert,
                                        PackingScheme scheme) {
    const int f = model.dims.frac_bits;
    const std::size_t n = xs.size();
    std::vector<const RingTensor*> wg(n), wu(n), wd(n);
    for (std::size_t e = 0; e < n; ++e) {
        wg[e] = &model.experts[first_expert + e].w_gate;
        wu[e] = &model.experts[first_expert + e].w_up;
        wd[e] = &model.experts[first_expert + e].w_down;
    }

    auto h1 = matmul_plain_weights_batched(ctx, xs, wg, scheme, model.dims.slot_count);
    auto h2 = matmul_plain_weights_batched(ctx, xs, wu, scheme, model.dims.slot_count);

    std::vector<ShareTensor> gated;
    gated.reserve(n);
    for (std::size_t e = 0; e < n; ++e) {
        ShareTensor a = truncate_shares(ctx, h1[e], f);
        ShareTensor b = truncate_shares(ctx, h2[e], f);
        ShareTensor s = silu_shares(ctx, a);
        ShareTensor g = mul_elementwise(ctx, s, b);
        gated.push_back(truncate_shares(ctx, g, f));
    }

    auto y = matmul_plain_weights_batched(ctx, gated, wd, scheme, model.dims.slot_count);
    std::vector<ShareTensor> out;
    out.reserve(n);
    for (std::size_t e = 0; e < n; ++e) out.push_back(truncate_shares(ctx, y[e], f));
    return out;
}

ShareTensor forward_cryptomoe(PartyCtx& ctx, const ShareTensor& x, const MoeModel& model,
                              bool swap_dispatch) {
    const MoeDims& dims = model.dims;
    const std::size_t t = dims.tokens_per_expert();
    RoutingShares routing = gate_route(ctx, x, model);
    DispatchShares dispatched = swap_dispatch
                                    ? dispatch_cipherprune(ctx, x, routing, dims, t)
                                    : dispatch(ctx, x, routing, dims, t);
    std::vector<ShareTensor> outputs = expert_forward(ctx, dispatched, model, PackingScheme::batch);
    return combine(ctx, dispatched, outputs, dims.m_tokens);
}

ShareTensor forward_dense(PartyCtx& ctx, const ShareTensor& x, const MoeModel& model) {
    const MoeDims& dims = model.dims;
    const int f = dims.frac_bits;
    const std::size_t m = dims.m_tokens, k = dims.k_active;
    RoutingShares routing = gate_route(ctx, x, model);

    // Every expert runs on all m tokens; per-expert packing, the scheme dense
    // frameworks already use.
    std::vector<ShareTensor> all(dims.n_experts, x);
    std::vector<ShareTensor> outputs = swiglu_forward(ctx, all, model, 0, PackingScheme::bolt);

    ShareTensor acc = make_zero_share(ctx, {m, dims.d_model}, f);
    for (std::size_t e = 0; e < dims.n_experts; ++e) {
        ShareTensor mask = equal_public(ctx, routing.k_flat, e);
        ShareTensor scored = mux(ctx, mask, routing.w_flat);
        // Fold each token's k slots: selected experts keep their score, the
        // rest contribute zero weight.
        RingTensor wcol({m}, f);
        for (std::size_t j = 0; j < m; ++j) {
            ring_t sum = 0;
            for (std::size_t l = 0; l < k; ++l) sum += scored.payload.at(j * k + l);
            wcol.at(j) = sum;
        }
        ShareTensor weights{ctx.party, std::move(wcol), ctx.session.tag()};
        ShareTensor part = mul_broadcast_row(ctx, outputs[e], weights);
        acc = add_shares(acc, truncate_shares(ctx, part, f));
    }
    return acc;
}

ShareTensor forward_insecure(PartyCtx& ctx, const ShareTensor& x, const MoeModel& model) {
    const MoeDims& dims = model.dims;
    const int f = dims.frac_bits;
    const std::size_t m = dims.m_tokens, k = dims.k_active, d = dims.d_model;
    RoutingShares routing = gate_route(ctx, x, model);

    RingTensor w_pub = declassify(ctx, routing.w_flat);
    RingTensor k_pub = declassify(ctx, routing.k_flat);

    ShareTensor acc = make_zero_share(ctx, {m, d}, f);
    for (std::size_t e = 0; e < dims.n_experts; ++e) {
        std::vector<std::size_t> tokens;
        std::vector<ring_t> scores;
        for (std::size_t flat = 0; flat < k * m; ++flat) {
            if (k_pub.at(flat) == e) {
                tokens.push_back(flat / k);
                scores.push_back(w_pub.at(flat));
            }
        }
        if (tokens.empty()) continue; // plaintext knowledge lets idle experts skip entirely

        RingTensor rows({tokens.size(), d}, f);
        for (std::size_t r = 0; r < tokens.size(); ++r)
            for (std::size_t c = 0; c < d; ++c) rows.at2(r, c) = x.payload.at2(tokens[r], c);
        ShareTensor xe{ctx.party, std::move(rows), ctx.session.tag()};

        std::vector<ShareTensor> ye =
            swiglu_forward(ctx, {xe}, model, e, PackingScheme::bolt);

        // Combination weights are public here, so the weighting is local.
        RingTensor score_mat({tokens.size(), d}, f);
        for (std::size_t r = 0; r < tokens.size(); ++r)
            for (std::size_t c = 0; c < d; ++c) score_mat.at2(r, c) = scores[r];
        ShareTensor part = truncate_shares(ctx, mul_public(ye[0], score_mat), f);
        for (std::size_t r = 0; r < tokens.size(); ++r)
            for (std::size_t c = 0; c < d; ++c)
                acc.payload.at2(tokens[r], c) += part.payload.at2(r, c);
    }
    return acc;
}

} // namespace

std::vector<ShareTensor> matmul_plain_weights_batched(PartyCtx& ctx,
                                                      const std::vector<ShareTensor>& xs,
                                                      const std::vector<const RingTensor*>& ws,
                                                      PackingScheme scheme,
                                                      std::size_t slot_count) {
    const std::size_t n = xs.size();
    if (n == 0 || ws.size() != n) throw ShapeError("matmul batch needs matching input lists");
    const std::size_t t = xs[0].payload.rows();
    const std::size_t d1 = xs[0].payload.cols();
    const std::size_t d2 = ws[0]->cols();
    for (std::size_t e = 0; e < n; ++e) {
        if (xs[e].payload.rows() != t || xs[e].payload.cols() != d1 || ws[e]->rows() != d1 ||
            ws[e]->cols() != d2) {
            throw ShapeError("matmul batch: expert " + std::to_string(e) + " shape differs");
        }
    }
    const PackingFootprint fp = packing_footprint(scheme, n, t, d1, d2, slot_count);
    const int out_scale = xs[0].scale() + ws[0]->scale();
    const std::uint64_t mask_step = ctx.next_step();

    std::vector<ShareTensor> out;
    out.reserve(n);
    if (ctx.is_p0()) {
        // Ship the client share as packed ciphertexts; get masked products back.
        std::vector<ring_t> payload;
        payload.reserve(n * t * d1);
        for (const auto& xe : xs) {
            payload.insert(payload.end(), xe.payload.data().begin(), xe.payload.data().end());
        }
        ctx.chan.send_u64s(payload);
        ctx.meter_he(fp.input_cts, fp.output_cts, slot_count);
        std::vector<ring_t> masked = ctx.chan.recv_u64s();
        if (masked.size() != n * t * d2) throw ShapeError("he response size mismatch");
        for (std::size_t e = 0; e < n; ++e) {
            std::vector<ring_t> part(masked.begin() + e * t * d2,
                                     masked.begin() + (e + 1) * t * d2);
            out.push_back(detail::wrap(ctx, RingTensor({t, d2}, std::move(part), out_scale)));
        }
    } else {
        std::vector<ring_t> x0 = ctx.chan.recv_u64s();
        if (x0.size() != n * t * d1) throw ShapeError("he request size mismatch");
        std::vector<RingTensor> a;
        std::vector<RingTensor> b;
        a.reserve(n);
        b.reserve(n);
        for (std::size_t e = 0; e < n; ++e) {
            a.emplace_back(std::vector<std::size_t>{t, d1},
                           std::vector<ring_t>(x0.begin() + e * t * d1,
                                               x0.begin() + (e + 1) * t * d1),
                           xs[0].scale());
            b.push_back(*ws[e]);
        }
        PackedMatmulResult result = packed_matmul_scheme(scheme, a, b, slot_count);
        ctx.session.counters() += result.counters;

        std::vector<std::vector<std::size_t>> shapes(n, {t, d2});
        std::vector<RingTensor> masks =
            ctx.session.dealer().uniform_tensor_set(mask_step, shapes, out_scale);

        std::vector<ring_t> masked;
        masked.reserve(n * t * d2);
        for (std::size_t e = 0; e < n; ++e) {
            RingTensor away = result.products[e] - masks[e];
            masked.insert(masked.end(), away.data().begin(), away.data().end());
            RingTensor mine = plain_matmul(xs[e].payload, *ws[e]) + masks[e];
            out.push_back(detail::wrap(ctx, std::move(mine)));
        }
        ctx.chan.send_u64s(masked);
    }
    return out;
}

ShareTensor matmul_plain_weights(PartyCtx& ctx, const ShareTensor& x, const RingTensor& w,
                                 PackingScheme scheme, std::size_t slot_count) {
    return matmul_plain_weights_batched(ctx, {x}, {&w}, scheme, slot_count)[0];
}

RoutingShares gate_route(PartyCtx& ctx, const ShareTensor& x, const MoeModel& model) {
    const MoeDims& dims = model.dims;
    const int f = dims.frac_bits;
    ShareTensor logits2 =
        matmul_plain_weights(ctx, x, model.gate_t, PackingScheme::bolt, dims.slot_count);
    ShareTensor logits = truncate_shares(ctx, logits2, f);
    ShareTensor scores = softmax_rows(ctx, logits);

    const std::size_t m = dims.m_tokens, k = dims.k_active;
    RingTensor wf({m * k}, f), kf({m * k}, 0);
    for (std::size_t j = 0; j < m; ++j) {
        TopKShares sel = top_k(ctx, share_row(scores, j), k);
        for (std::size_t l = 0; l < k; ++l) {
            wf.at(j * k + l) = sel.values.payload.at(l);
            kf.at(j * k + l) = sel.indices.payload.at(l);
        }
    }
    return {detail::wrap(ctx, std::move(wf)), detail::wrap(ctx, std::move(kf))};
}

DispatchShares dispatch(PartyCtx& ctx, const ShareTensor& x, const RoutingShares& routing,
                        const MoeDims& dims, std::size_t t) {
    const std::size_t km = routing.w_flat.numel();
    if (t > km) throw BoundsError("dispatch: t exceeds the k*m candidate count");

    DispatchShares out;
    for (std::size_t e = 0; e < dims.n_experts; ++e) {
        ShareTensor mask = equal_public(ctx, routing.k_flat, e);
        ShareTensor scored = mux(ctx, mask, routing.w_flat);
        TopKShares sel = top_k(ctx, scored, t);
        ShareTensor tokens = floor_div_public(ctx, sel.indices, dims.k_active);
        ShareTensor oh = one_hot(ctx, tokens, dims.m_tokens);
        ShareTensor xe = beaver_matmul(ctx, oh, x); // scale 0 + f, no rescale needed
        out.x.push_back(std::move(xe));
        out.one_hot.push_back(std::move(oh));
        out.scores.push_back(std::move(sel.values));
    }
    return out;
}

DispatchShares dispatch_cipherprune(PartyCtx& ctx, const ShareTensor& x,
                                    const RoutingShares& routing, const MoeDims& dims,
                                    std::size_t t) {
    const std::size_t km = routing.w_flat.numel();
    if (t > km) throw BoundsError("dispatch: t exceeds the k*m candidate count");
    const std::size_t d = dims.d_model, k = dims.k_active;
    const std::size_t rec = d + 2; // score, index, embedding

    DispatchShares out;
    for (std::size_t e = 0; e < dims.n_experts; ++e) {
        ShareTensor mask = equal_public(ctx, routing.k_flat, e);
        ShareTensor scored = mux(ctx, mask, routing.w_flat);

        // Bind each candidate's full record: priority score, flat index and the
        // referenced token embedding. Every comparison swaps whole records.
        std::vector<ring_t> sc(scored.payload.data());
        std::vector<ring_t> idx(km, 0);
        std::vector<std::vector<ring_t>> emb(km);
        for (std::size_t r = 0; r < km; ++r) {
            if (ctx.is_p0()) idx[r] = r;
            const std::size_t tok = r / k;
            emb[r].assign(x.payload.data().begin() + tok * d,
                          x.payload.data().begin() + (tok + 1) * d);
        }

        const std::size_t passes = std::min(t, km);
        for (std::size_t pass = 0; pass < passes; ++pass) {
            for (std::size_t j = km - 1; j > pass; --j) {
                std::vector<ring_t> buf;
                buf.reserve(2 * rec);
                buf.push_back(sc[j - 1]);
                buf.push_back(idx[j - 1]);
                buf.insert(buf.end(), emb[j - 1].begin(), emb[j - 1].end());
                buf.push_back(sc[j]);
                buf.push_back(idx[j]);
                buf.insert(buf.end(), emb[j].begin(), emb[j].end());

                const std::uint64_t step = ctx.next_step();
                auto swapped = ctx.session.dealer().ideal_eval(
                    ctx.party, step, buf, [rec](std::vector<ring_t> v) {
                        const bool lift = ranks_before(to_signed(v[rec]), v[rec + 1],
                                                       to_signed(v[0]), v[1]);
                        if (lift) {
                            for (std::size_t i = 0; i < rec; ++i) std::swap(v[i], v[rec + i]);
                        }
                        return v;
                    });
                ctx.meter_ideal(labels::topk_compareswap, rec);
                sc[j - 1] = swapped[0];
                idx[j - 1] = swapped[1];
                emb[j - 1].assign(swapped.begin() + 2, swapped.begin() + rec);
                sc[j] = swapped[rec];
                idx[j] = swapped[rec + 1];
                emb[j].assign(swapped.begin() + rec + 2, swapped.end());
            }
        }

        RingTensor scores_t({t}, std::vector<ring_t>(sc.begin(), sc.begin() + t),
                            routing.w_flat.scale());
        RingTensor idx_t({t}, std::vector<ring_t>(idx.begin(), idx.begin() + t), 0);
        RingTensor xe({t, d}, dims.frac_bits);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < d; ++c) xe.at2(r, c) = emb[r][c];

        ShareTensor sel_idx = detail::wrap(ctx, std::move(idx_t));
        ShareTensor tokens = floor_div_public(ctx, sel_idx, k);
        ShareTensor oh = one_hot(ctx, tokens, dims.m_tokens);

        out.x.push_back(detail::wrap(ctx, std::move(xe)));
        out.one_hot.push_back(std::move(oh));
        out.scores.push_back(detail::wrap(ctx, std::move(scores_t)));
    }
    return out;
}

std::vector<ShareTensor> expert_forward(PartyCtx& ctx, const DispatchShares& dispatched,
                                        const MoeModel& model, PackingScheme scheme) {
    return swiglu_forward(ctx, dispatched.x, model, 0, scheme);
}

ShareTensor combine(PartyCtx& ctx, const DispatchShares& dispatched,
                    const std::vector<ShareTensor>& expert_out, std::size_t m_tokens) {
    if (expert_out.size() != dispatched.one_hot.size()) {
        throw ShapeError("combine: expert output count mismatch");
    }
    const int f = expert_out[0].scale();
    const std::size_t d = expert_out[0].payload.cols();

    ShareTensor acc = make_zero_share(ctx, {m_tokens, d}, f);
    for (std::size_t e = 0; e < expert_out.size(); ++e) {
        ShareTensor oh_t = transpose_share(dispatched.one_hot[e]); // m x t
        ShareTensor scored = mul_broadcast_col(ctx, oh_t, dispatched.scores[e]);
        ShareTensor part = beaver_matmul(ctx, scored, expert_out[e]); // m x d at 2f
        acc = add_shares(acc, truncate_shares(ctx, part, f));
    }
    return acc;
}

MoeForwardResult moe_forward(Session& session, Mode mode, const RingTensor& x_encoded,
                             const MoeModel& model) {
    model.dims.validate();
    if (x_encoded.rows() != model.dims.m_tokens || x_encoded.cols() != model.dims.d_model) {
        throw ShapeError("input is " + x_encoded.shape_str() + ", model expects tokens x d_model");
    }
    if (x_encoded.scale() != model.dims.frac_bits) {
        throw ScaleError("input scale differs from the model's frac_bits");
    }

    auto halves = make_shares(session, x_encoded);
    MoeForwardResult result;
    session.run([&](PartyCtx& ctx) {
        const ShareTensor& mine = ctx.is_p0() ? halves.first : halves.second;
        ShareTensor y;
        switch (mode) {
            case Mode::cryptomoe: y = forward_cryptomoe(ctx, mine, model, false); break;
            case Mode::cipherprune: y = forward_cryptomoe(ctx, mine, model, true); break;
            case Mode::dense: y = forward_dense(ctx, mine, model); break;
            case Mode::insecure: y = forward_insecure(ctx, mine, model); break;
        }
        (ctx.is_p0() ? result.y_p0 : result.y_p1) = std::move(y);
    });
    return result;
}

} // namespace moe2pc

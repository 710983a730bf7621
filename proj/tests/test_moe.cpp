#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "moe2pc/moe.hpp"
#include "moe2pc/oracle.hpp"

using namespace moe2pc;

namespace {

Session make_session(std::uint64_t seed, bool insecure = false) {
    SessionConfig cfg;
    cfg.seed = seed;
    cfg.insecure_allowed = insecure;
    return Session(cfg);
}

// Model with hand-picked gate rows; experts stay seeded-random.
MoeModel gated_model(MoeDims dims, std::uint64_t seed,
                     const std::vector<std::vector<double>>& gate_rows) {
    MoeModel model = MoeModel::random(dims, seed);
    model.gate = encode_tensor(gate_rows, dims.frac_bits);
    model.gate_t = model.gate.transposed();
    return model;
}

double max_abs_diff(const std::vector<std::vector<double>>& a,
                    const std::vector<std::vector<double>>& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j)
            mx = std::max(mx, std::fabs(a[i][j] - b[i][j]));
    return mx;
}

struct OpenedRouting {
    std::vector<ring_t> k_flat;
    std::vector<double> w_flat;
};

OpenedRouting open_routing(const RoutingShares& r0, const RoutingShares& r1) {
    OpenedRouting out;
    out.k_flat = reconstruct(r0.k_flat, r1.k_flat).data();
    out.w_flat = decode_flat(reconstruct(r0.w_flat, r1.w_flat));
    return out;
}

struct OpenedDispatch {
    // per expert: (token, score_enc) pairs for the kept (positive-score) slots
    std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> kept;
    std::vector<RingTensor> x_rows;  // t x d per expert
    std::vector<RingTensor> one_hot; // t x m per expert
};

OpenedDispatch open_dispatch(const DispatchShares& d0, const DispatchShares& d1) {
    OpenedDispatch out;
    const std::size_t n = d0.x.size();
    out.kept.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
        RingTensor oh = reconstruct(d0.one_hot[e], d1.one_hot[e]);
        RingTensor sc = reconstruct(d0.scores[e], d1.scores[e]);
        out.x_rows.push_back(reconstruct(d0.x[e], d1.x[e]));
        for (std::size_t r = 0; r < oh.rows(); ++r) {
            const std::int64_t score = to_signed(sc.at(r));
            if (score <= 0) continue;
            for (std::size_t c = 0; c < oh.cols(); ++c) {
                if (oh.at2(r, c) == 1) out.kept[e].push_back({c, score});
            }
        }
        out.one_hot.push_back(std::move(oh));
    }
    return out;
}

struct PipelineCapture {
    OpenedRouting routing;
    OpenedDispatch dispatched;
    Transcript transcript;
};

PipelineCapture run_gate_and_dispatch(Session& s, const RingTensor& x, const MoeModel& model,
                                      std::size_t t, bool swap_based = false) {
    auto halves = make_shares(s, x);
    RoutingShares routing[2];
    DispatchShares dispatched[2];
    s.run([&](PartyCtx& ctx) {
        const ShareTensor& mine = ctx.is_p0() ? halves.first : halves.second;
        RoutingShares r = gate_route(ctx, mine, model);
        DispatchShares d = swap_based ? dispatch_cipherprune(ctx, mine, r, model.dims, t)
                                      : dispatch(ctx, mine, r, model.dims, t);
        routing[static_cast<int>(ctx.party)] = r;
        dispatched[static_cast<int>(ctx.party)] = std::move(d);
    });
    PipelineCapture cap;
    cap.routing = open_routing(routing[0], routing[1]);
    cap.dispatched = open_dispatch(dispatched[0], dispatched[1]);
    cap.transcript = s.transcript();
    return cap;
}

RingTensor run_forward(std::uint64_t seed, Mode mode, const RingTensor& x, const MoeModel& model) {
    Session s = make_session(seed, mode == Mode::insecure);
    MoeForwardResult out = moe_forward(s, mode, x, model);
    return reconstruct(out.y_p0, out.y_p1);
}

} // namespace

TEST_CASE("matmul_plain_weights routes the client share through the slot layer") {
    MoeDims dims;
    dims.n_experts = 2;
    dims.k_active = 1;
    dims.m_tokens = 4;
    dims.d_model = 8;
    dims.d_ffn = 8;
    const std::size_t slots = 64;

    Session s = make_session(77);
    CounterRng g(200);
    std::vector<double> xv(4 * 8), wv0(8 * 8), wv1(8 * 8);
    for (auto& v : xv) v = g.next_double() - 0.5;
    for (auto& v : wv0) v = g.next_double() - 0.5;
    for (auto& v : wv1) v = g.next_double() - 0.5;
    RingTensor x = encode_flat(xv, {4, 8}, 12);
    RingTensor w0 = encode_flat(wv0, {8, 8}, 12);
    RingTensor w1 = encode_flat(wv1, {8, 8}, 12);
    auto ha = make_shares(s, x);
    auto hb = make_shares(s, x);

    ShareTensor out[2][2];
    s.run([&](PartyCtx& ctx) {
        const bool p0 = ctx.is_p0();
        std::vector<ShareTensor> xs = {p0 ? ha.first : ha.second, p0 ? hb.first : hb.second};
        auto prods =
            matmul_plain_weights_batched(ctx, xs, {&w0, &w1}, PackingScheme::batch, slots);
        for (int e = 0; e < 2; ++e) out[static_cast<int>(ctx.party)][e] = prods[e];
    });

    // Ring-exact against the plain product at doubled scale.
    CHECK(reconstruct(out[0][0], out[1][0]).data() == plain_matmul(x, w0).data());
    CHECK(reconstruct(out[0][1], out[1][1]).data() == plain_matmul(x, w1).data());

    // Ciphertext traffic metered from the public footprint; rotations land in
    // the session counters.
    const PackingFootprint fp = packing_footprint(PackingScheme::batch, 2, 4, 8, 8, slots);
    const std::uint64_t bpe = s.config().cost.at(labels::he_matmul_ct).bytes_per_element;
    CHECK(s.transcript().bytes_for_label(labels::he_matmul_ct) ==
          (fp.input_cts + fp.output_cts) * slots * bpe);
    CHECK(s.counters().rotations ==
          oracle::rotation_count(PackingScheme::batch, 2, 4, 8, 8, slots));
}

TEST_CASE("gate_route") {
    SUBCASE("saturated gate picks the forced expert") {
        MoeDims dims;
        dims.n_experts = 4;
        dims.k_active = 1;
        dims.m_tokens = 1;
        dims.d_model = 4;
        dims.d_ffn = 4;
        // logits = 8 * x[0] for expert 2 only
        MoeModel model = gated_model(dims, 1,
                                     {{0, 0, 0, 0}, {0, 0, 0, 0}, {8, 0, 0, 0}, {0, 0, 0, 0}});
        RingTensor x = encode_tensor({{1.0, 0.0, 0.0, 0.0}}, 12);

        Session s = make_session(2);
        auto halves = make_shares(s, x);
        RoutingShares r[2];
        s.run([&](PartyCtx& ctx) {
            r[static_cast<int>(ctx.party)] =
                gate_route(ctx, ctx.is_p0() ? halves.first : halves.second, model);
        });
        OpenedRouting opened = open_routing(r[0], r[1]);
        CHECK(opened.k_flat == std::vector<ring_t>{2});
        CHECK(opened.w_flat[0] > 0.99);
    }

    SUBCASE("uniform logits tie-break to experts 0 and 1") {
        MoeDims dims;
        dims.n_experts = 4;
        dims.k_active = 2;
        dims.m_tokens = 1;
        dims.d_model = 4;
        dims.d_ffn = 4;
        MoeModel model = gated_model(
            dims, 3, {{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}});
        RingTensor x = encode_tensor({{0.25, 0.25, 0.25, 0.25}}, 12);

        Session s = make_session(4);
        auto halves = make_shares(s, x);
        RoutingShares r[2];
        s.run([&](PartyCtx& ctx) {
            r[static_cast<int>(ctx.party)] =
                gate_route(ctx, ctx.is_p0() ? halves.first : halves.second, model);
        });
        OpenedRouting opened = open_routing(r[0], r[1]);
        CHECK(opened.k_flat == std::vector<ring_t>{0, 1});
        for (double w : opened.w_flat) CHECK(std::fabs(w - 0.25) <= std::ldexp(1.0, -12));
    }

    SUBCASE("declassified routing equals the plaintext gate") {
        MoeDims dims;
        dims.n_experts = 4;
        dims.k_active = 2;
        dims.m_tokens = 4;
        dims.d_model = 8;
        dims.d_ffn = 8;
        dims.slot_count = 128;
        MoeModel model = MoeModel::random(dims, 99);
        RingTensor x = random_input(dims, 98);

        Session s = make_session(97, true);
        auto halves = make_shares(s, x);
        RingTensor opened_w, opened_k;
        s.run([&](PartyCtx& ctx) {
            RoutingShares r = gate_route(ctx, ctx.is_p0() ? halves.first : halves.second, model);
            RingTensor w = declassify(ctx, r.w_flat);
            RingTensor kk = declassify(ctx, r.k_flat);
            if (ctx.is_p0()) {
                opened_w = w;
                opened_k = kk;
            }
        });

        oracle::PlainRouting expect =
            oracle::plain_gate(decode_tensor(x), model.to_plain(), dims.k_active);
        for (std::size_t j = 0; j < dims.m_tokens; ++j) {
            for (std::size_t l = 0; l < dims.k_active; ++l) {
                const std::size_t flat = j * dims.k_active + l;
                const std::size_t e = expect.topk[j][l];
                CHECK(opened_k.at(flat) == e);
                CHECK(to_signed(opened_w.at(flat)) == expect.enc[j][e]);
            }
        }
    }

    SUBCASE("random toy gate matches the plaintext gate") {
        MoeDims dims;
        dims.n_experts = 8;
        dims.k_active = 2;
        dims.m_tokens = 16;
        dims.d_model = 32;
        dims.d_ffn = 8;
        MoeModel model = MoeModel::random(dims, 5);
        RingTensor x = random_input(dims, 6);

        Session s = make_session(7);
        auto halves = make_shares(s, x);
        RoutingShares r[2];
        s.run([&](PartyCtx& ctx) {
            r[static_cast<int>(ctx.party)] =
                gate_route(ctx, ctx.is_p0() ? halves.first : halves.second, model);
        });
        OpenedRouting opened = open_routing(r[0], r[1]);

        oracle::PlainRouting expect =
            oracle::plain_gate(decode_tensor(x), model.to_plain(), dims.k_active);
        const double tol = std::ldexp(1.0, -11);
        for (std::size_t j = 0; j < dims.m_tokens; ++j) {
            for (std::size_t l = 0; l < dims.k_active; ++l) {
                const std::size_t flat = j * dims.k_active + l;
                CHECK(opened.k_flat[flat] == expect.topk[j][l]);
                CHECK(std::fabs(opened.w_flat[flat] -
                                expect.scores[j][expect.topk[j][l]]) <= tol);
            }
        }
    }
}

TEST_CASE("dispatch") {
    SUBCASE("two tokens to two distinct experts; others get zero-score dummies") {
        MoeDims dims;
        dims.n_experts = 4;
        dims.k_active = 1;
        dims.m_tokens = 2;
        dims.d_model = 4;
        dims.d_ffn = 4;
        dims.t_factor = 1.0; // t = ceil(2*1/4) = 1
        MoeModel model = gated_model(dims, 8,
                                     {{0, 0, 0, 0}, {6, 0, 0, 0}, {0, 0, 0, 0}, {0, 6, 0, 0}});
        // token 0 -> expert 1, token 1 -> expert 3
        RingTensor x = encode_tensor({{1.0, 0.0, 0.5, 0.5}, {0.0, 1.0, -0.5, 0.25}}, 12);

        Session s = make_session(9);
        PipelineCapture cap = run_gate_and_dispatch(s, x, model, dims.tokens_per_expert());

        REQUIRE(cap.dispatched.kept.size() == 4);
        REQUIRE(cap.dispatched.kept[1].size() == 1);
        REQUIRE(cap.dispatched.kept[3].size() == 1);
        CHECK(cap.dispatched.kept[0].empty());
        CHECK(cap.dispatched.kept[2].empty());
        CHECK(cap.dispatched.kept[1][0].first == 0);
        CHECK(cap.dispatched.kept[3][0].first == 1);

        // The routed experts hold the exact token rows.
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(cap.dispatched.x_rows[1].at2(0, c) == x.at2(0, c));
            CHECK(cap.dispatched.x_rows[3].at2(0, c) == x.at2(1, c));
        }
    }

    SUBCASE("overloaded expert keeps the higher-confidence token") {
        MoeDims dims;
        dims.n_experts = 4;
        dims.k_active = 1;
        dims.m_tokens = 2;
        dims.d_model = 4;
        dims.d_ffn = 4;
        dims.t_factor = 1.0;
        MoeModel model = gated_model(dims, 10,
                                     {{3, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});
        // Both tokens pick expert 0; token 0 carries the larger logit.
        RingTensor x = encode_tensor({{2.0, 0, 0, 0}, {1.0, 0, 0, 0}}, 12);

        Session s = make_session(11);
        PipelineCapture cap = run_gate_and_dispatch(s, x, model, 1);
        REQUIRE(cap.dispatched.kept[0].size() == 1);
        CHECK(cap.dispatched.kept[0][0].first == 0); // the confident token survives
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(cap.dispatched.x_rows[0].at2(0, c) == x.at2(0, c));
        }
    }

    SUBCASE("100 random instances match the brute-force dispatcher") {
        CounterRng g(123);
        for (int trial = 0; trial < 100; ++trial) {
            MoeDims dims;
            dims.n_experts = 2 + g.next() % 7;
            dims.k_active = 1 + g.next() % std::min<std::size_t>(dims.n_experts, 4);
            dims.m_tokens = 2 + g.next() % 15;
            dims.d_model = 4 + g.next() % 13;
            dims.d_ffn = 4;
            dims.slot_count = 1024;
            const std::size_t km = dims.k_active * dims.m_tokens;
            std::size_t t = 1 + g.next() % std::max<std::size_t>(
                                    1, 2 * dims.m_tokens * dims.k_active / dims.n_experts);
            t = std::min(t, km);

            MoeModel model = MoeModel::random(dims, 1000 + trial);
            RingTensor x = random_input(dims, 2000 + trial);

            Session s = make_session(3000 + trial);
            PipelineCapture cap = run_gate_and_dispatch(s, x, model, t);

            auto expect = oracle::balanced_kept_sets(decode_tensor(x), model.to_plain(),
                                                     dims.k_active, t);
            for (std::size_t e = 0; e < dims.n_experts; ++e) {
                std::set<std::pair<std::size_t, std::int64_t>> got(
                    cap.dispatched.kept[e].begin(), cap.dispatched.kept[e].end());
                std::set<std::pair<std::size_t, std::int64_t>> want;
                for (const auto& kt : expect[e]) want.insert({kt.token, kt.score_enc});
                CHECK(got == want);
            }
        }
    }
}

TEST_CASE("expert_forward") {
    MoeDims dims;
    dims.n_experts = 2;
    dims.k_active = 1;
    dims.m_tokens = 4;
    dims.d_model = 8;
    dims.d_ffn = 8;
    dims.slot_count = 64;

    SUBCASE("zero input gives zero output") {
        MoeModel model = MoeModel::random(dims, 12);
        Session s = make_session(13);
        DispatchShares d0, d1;
        RingTensor zero({2, dims.d_model}, 12);
        for (std::size_t e = 0; e < 2; ++e) {
            auto halves = make_shares(s, zero);
            d0.x.push_back(halves.first);
            d1.x.push_back(halves.second);
        }
        ShareTensor out[2][2];
        s.run([&](PartyCtx& ctx) {
            auto ys = expert_forward(ctx, ctx.is_p0() ? d0 : d1, model, PackingScheme::batch);
            for (std::size_t e = 0; e < 2; ++e) out[static_cast<int>(ctx.party)][e] = ys[e];
        });
        for (std::size_t e = 0; e < 2; ++e) {
            RingTensor y = reconstruct(out[0][e], out[1][e]);
            for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == 0);
        }
    }

    SUBCASE("scalar expert with unit weights evaluates silu(1)") {
        MoeDims tiny;
        tiny.n_experts = 1;
        tiny.k_active = 1;
        tiny.m_tokens = 1;
        tiny.d_model = 1;
        tiny.d_ffn = 1;
        tiny.slot_count = 8;
        MoeModel model = MoeModel::random(tiny, 14);
        model.experts[0].w_gate = encode_tensor({{1.0}}, 12);
        model.experts[0].w_up = encode_tensor({{1.0}}, 12);
        model.experts[0].w_down = encode_tensor({{1.0}}, 12);

        Session s = make_session(15);
        auto halves = make_shares(s, encode_tensor({{1.0}}, 12));
        DispatchShares d0, d1;
        d0.x.push_back(halves.first);
        d1.x.push_back(halves.second);
        ShareTensor out[2];
        s.run([&](PartyCtx& ctx) {
            out[static_cast<int>(ctx.party)] =
                expert_forward(ctx, ctx.is_p0() ? d0 : d1, model, PackingScheme::batch)[0];
        });
        const double got = decode_flat(reconstruct(out[0], out[1]))[0];
        const double expect = 1.0 / (1.0 + std::exp(-1.0)); // silu(1) * 1 * 1
        CHECK(std::fabs(got - expect) <= 4 * std::ldexp(1.0, -12));
    }

    SUBCASE("random experts track the double-precision SwiGLU") {
        MoeModel model = MoeModel::random(dims, 16);
        oracle::PlainModel plain = model.to_plain();
        Session s = make_session(17);
        DispatchShares d0, d1;
        std::vector<RingTensor> xs;
        for (std::size_t e = 0; e < 2; ++e) {
            RingTensor full = random_input(dims, 500 + e);
            RingTensor xe({2, dims.d_model},
                          std::vector<ring_t>(full.data().begin(),
                                              full.data().begin() + 2 * dims.d_model),
                          12);
            auto halves = make_shares(s, xe);
            d0.x.push_back(halves.first);
            d1.x.push_back(halves.second);
            xs.push_back(std::move(xe));
        }
        ShareTensor out[2][2];
        s.run([&](PartyCtx& ctx) {
            auto ys = expert_forward(ctx, ctx.is_p0() ? d0 : d1, model, PackingScheme::batch);
            for (std::size_t e = 0; e < 2; ++e) out[static_cast<int>(ctx.party)][e] = ys[e];
        });

        for (std::size_t e = 0; e < 2; ++e) {
            auto got = decode_tensor(reconstruct(out[0][e], out[1][e]));
            const auto x_plain = decode_tensor(xs[e]);
            const auto& ew = plain.experts[e];
            for (std::size_t r = 0; r < 2; ++r) {
                for (std::size_t o = 0; o < dims.d_model; ++o) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dims.d_ffn; ++c) {
                        double h1 = 0.0, h2 = 0.0;
                        for (std::size_t i = 0; i < dims.d_model; ++i) {
                            h1 += x_plain[r][i] * ew.w_gate[i][c];
                            h2 += x_plain[r][i] * ew.w_up[i][c];
                        }
                        acc += h1 / (1.0 + std::exp(-h1)) * h2 * ew.w_down[c][o];
                    }
                    CHECK(std::fabs(got[r][o] - acc) <= std::ldexp(1.0, -9));
                }
            }
        }
    }
}

TEST_CASE("combine") {
    SUBCASE("single expert, identity permutation, unit scores returns the expert output") {
        MoeDims dims;
        dims.n_experts = 1;
        dims.k_active = 1;
        dims.m_tokens = 3;
        dims.d_model = 4;
        dims.d_ffn = 4;
        Session s = make_session(18);

        RingTensor eye({3, 3}, 0);
        for (std::size_t i = 0; i < 3; ++i) eye.at2(i, i) = 1;
        RingTensor ones = encode_flat({1.0, 1.0, 1.0}, {3}, 12);
        RingTensor full = random_input(dims, 600);
        RingTensor ye({3, 4},
                      std::vector<ring_t>(full.data().begin(), full.data().begin() + 12), 12);

        auto h_oh = make_shares(s, eye);
        auto h_sc = make_shares(s, ones);
        auto h_y = make_shares(s, ye);
        ShareTensor out[2];
        s.run([&](PartyCtx& ctx) {
            const bool p0 = ctx.is_p0();
            DispatchShares d;
            d.one_hot.push_back(p0 ? h_oh.first : h_oh.second);
            d.scores.push_back(p0 ? h_sc.first : h_sc.second);
            std::vector<ShareTensor> ys = {p0 ? h_y.first : h_y.second};
            out[static_cast<int>(ctx.party)] = combine(ctx, d, ys, 3);
        });
        CHECK(reconstruct(out[0], out[1]).data() == ye.data());
    }

    SUBCASE("four experts, two tokens, t=1: output matches the balanced reference") {
        MoeDims dims;
        dims.n_experts = 4;
        dims.k_active = 1;
        dims.m_tokens = 2;
        dims.d_model = 4;
        dims.d_ffn = 4;
        dims.t_factor = 1.0;
        MoeModel model = gated_model(dims, 19,
                                     {{0, 0, 0, 0}, {6, 0, 0, 0}, {0, 0, 0, 0}, {0, 6, 0, 0}});
        RingTensor x = encode_tensor({{1.0, 0.0, 0.25, -0.5}, {0.0, 1.0, 0.5, 0.25}}, 12);

        RingTensor y = run_forward(20, Mode::cryptomoe, x, model);
        auto expect = oracle::plain_balanced_moe(decode_tensor(x), model.to_plain(), 1, 1);
        CHECK(max_abs_diff(decode_tensor(y), expect) <= std::ldexp(1.0, -8));
    }
}

TEST_CASE("moe_forward across modes") {
    MoeDims dims;
    dims.n_experts = 4;
    dims.k_active = 2;
    dims.m_tokens = 8;
    dims.d_model = 16;
    dims.d_ffn = 16;
    dims.t_factor = 2.0;
    dims.slot_count = 512;
    MoeModel model = MoeModel::random(dims, 21);
    RingTensor x = random_input(dims, 22);
    const auto x_plain = decode_tensor(x);
    const oracle::PlainModel plain = model.to_plain();
    const double tol = std::ldexp(1.0, -8);

    SUBCASE("dense matches the full plaintext MoE") {
        RingTensor y = run_forward(23, Mode::dense, x, model);
        CHECK(max_abs_diff(decode_tensor(y), oracle::plain_moe(x_plain, plain, 2)) <= tol);
    }

    SUBCASE("insecure matches the plaintext top-k MoE") {
        RingTensor y = run_forward(24, Mode::insecure, x, model);
        CHECK(max_abs_diff(decode_tensor(y), oracle::plain_moe(x_plain, plain, 2)) <= tol);
    }

    SUBCASE("dense equals insecure when k = n") {
        MoeDims full = dims;
        full.k_active = dims.n_experts;
        MoeModel fmodel = MoeModel::random(full, 25);
        RingTensor fx = random_input(full, 26);
        RingTensor yd = run_forward(27, Mode::dense, fx, fmodel);
        RingTensor yi = run_forward(28, Mode::insecure, fx, fmodel);
        CHECK(max_abs_diff(decode_tensor(yd), decode_tensor(yi)) <= 1e-12);
    }

    SUBCASE("cryptomoe matches the balanced plaintext reference") {
        RingTensor y = run_forward(29, Mode::cryptomoe, x, model);
        auto expect =
            oracle::plain_balanced_moe(x_plain, plain, 2, dims.tokens_per_expert());
        CHECK(max_abs_diff(decode_tensor(y), expect) <= tol);
    }

    SUBCASE("drop-free cryptomoe equals insecure") {
        MoeDims free = dims;
        free.t_factor = static_cast<double>(free.n_experts) / free.k_active; // t = m
        MoeModel fmodel = MoeModel::random(free, 30);
        RingTensor fx = random_input(free, 31);
        RingTensor yc = run_forward(32, Mode::cryptomoe, fx, fmodel);
        RingTensor yi = run_forward(33, Mode::insecure, fx, fmodel);
        CHECK(max_abs_diff(decode_tensor(yc), decode_tensor(yi)) <= tol);
    }

    SUBCASE("t = k*m is drop-free too") {
        MoeDims free = dims;
        free.m_tokens = 4; // keep the k*m-row expert batches small
        free.t_factor = static_cast<double>(free.n_experts); // t caps at k*m
        REQUIRE(free.tokens_per_expert() == free.k_active * free.m_tokens);
        MoeModel fmodel = MoeModel::random(free, 38);
        RingTensor fx = random_input(free, 39);
        RingTensor yc = run_forward(40, Mode::cryptomoe, fx, fmodel);
        RingTensor yi = run_forward(41, Mode::insecure, fx, fmodel);
        CHECK(max_abs_diff(decode_tensor(yc), decode_tensor(yi)) <= tol);
    }

    SUBCASE("cipherprune-dispatch pipeline reproduces cryptomoe exactly") {
        RingTensor yc = run_forward(34, Mode::cryptomoe, x, model);
        RingTensor yp = run_forward(35, Mode::cipherprune, x, model);
        CHECK(yc.data() == yp.data());
    }

    SUBCASE("two stacked layers run back to back") {
        RingTensor y1 = run_forward(36, Mode::cryptomoe, x, model);
        RingTensor y2 = run_forward(37, Mode::cryptomoe, y1, model);
        CHECK(y2.rows() == dims.m_tokens);
        CHECK(y2.cols() == dims.d_model);
    }
}

TEST_CASE("dispatchers produce identical reconstructed results") {
    CounterRng g(321);
    for (int trial = 0; trial < 10; ++trial) {
        MoeDims dims;
        dims.n_experts = 2 + g.next() % 5;
        dims.k_active = 1 + g.next() % 2;
        dims.m_tokens = 2 + g.next() % 7;
        dims.d_model = 4 + g.next() % 5;
        dims.d_ffn = 4;
        dims.slot_count = 256;
        const std::size_t t =
            std::min<std::size_t>(1 + g.next() % 4, dims.k_active * dims.m_tokens);
        MoeModel model = MoeModel::random(dims, 4000 + trial);
        RingTensor x = random_input(dims, 5000 + trial);

        Session sa = make_session(6000 + trial);
        Session sb = make_session(6000 + trial);
        PipelineCapture a = run_gate_and_dispatch(sa, x, model, t, false);
        PipelineCapture b = run_gate_and_dispatch(sb, x, model, t, true);

        for (std::size_t e = 0; e < dims.n_experts; ++e) {
            CHECK(a.dispatched.x_rows[e].data() == b.dispatched.x_rows[e].data());
            CHECK(a.dispatched.one_hot[e].data() == b.dispatched.one_hot[e].data());
            CHECK(a.dispatched.kept[e] == b.dispatched.kept[e]);
        }
    }
}

TEST_CASE("record-binding dispatch bytes scale with d, index dispatch bytes do not") {
    auto dispatch_bytes = [](std::size_t d, bool swap_based) {
        MoeDims dims;
        dims.n_experts = 4;
        dims.k_active = 2;
        dims.m_tokens = 8;
        dims.d_model = d;
        dims.d_ffn = 8;
        dims.slot_count = 1024;
        dims.t_factor = 2.0;
        MoeModel model = MoeModel::random(dims, 40);
        RingTensor x = random_input(dims, 41);

        Session s = make_session(42);
        auto halves = make_shares(s, x);
        RoutingShares routing[2];
        s.run([&](PartyCtx& ctx) {
            routing[static_cast<int>(ctx.party)] =
                gate_route(ctx, ctx.is_p0() ? halves.first : halves.second, model);
        });
        const std::uint64_t before = s.transcript().total_bytes();
        const std::uint64_t open_before = s.transcript().bytes_for_label(labels::open);
        s.run([&](PartyCtx& ctx) {
            const ShareTensor& mine = ctx.is_p0() ? halves.first : halves.second;
            const RoutingShares& r = routing[static_cast<int>(ctx.party)];
            if (swap_based) {
                dispatch_cipherprune(ctx, mine, r, dims, dims.tokens_per_expert());
            } else {
                dispatch(ctx, mine, r, dims, dims.tokens_per_expert());
            }
        });
        const std::uint64_t open_bytes =
            s.transcript().bytes_for_label(labels::open) - open_before;
        // Exclude the final retrieval matmul opening from the index dispatcher.
        return s.transcript().total_bytes() - before - (swap_based ? 0 : open_bytes);
    };

    const std::uint64_t idx16 = dispatch_bytes(16, false);
    const std::uint64_t idx32 = dispatch_bytes(32, false);
    CHECK(idx16 == idx32);

    const double swap16 = static_cast<double>(dispatch_bytes(16, true));
    const double swap32 = static_cast<double>(dispatch_bytes(32, true));
    CHECK(swap32 / swap16 >= 1.8);
    CHECK(swap32 / swap16 <= 2.2);
}

TEST_CASE("swap count follows the pass schedule on the toy configuration") {
    MoeDims dims;
    dims.n_experts = 4;
    dims.k_active = 1;
    dims.m_tokens = 2;
    dims.d_model = 4;
    dims.d_ffn = 4;
    dims.t_factor = 1.0;
    MoeModel model = MoeModel::random(dims, 50);
    RingTensor x = random_input(dims, 51);

    Session s = make_session(52);
    auto halves = make_shares(s, x);
    RoutingShares routing[2];
    s.run([&](PartyCtx& ctx) {
        routing[static_cast<int>(ctx.party)] =
            gate_route(ctx, ctx.is_p0() ? halves.first : halves.second, model);
    });
    const std::uint64_t gate_swap_bytes = s.transcript().bytes_for_label(labels::topk_compareswap);
    s.run([&](PartyCtx& ctx) {
        const ShareTensor& mine = ctx.is_p0() ? halves.first : halves.second;
        dispatch_cipherprune(ctx, mine, routing[static_cast<int>(ctx.party)], dims, 1);
    });
    // km = 2 candidates, t = 1: one swap per expert.
    const std::uint64_t per_swap_bytes =
        (dims.d_model + 2) * s.config().cost.at(labels::topk_compareswap).bytes_per_element;
    const std::uint64_t expected_swaps =
        dims.n_experts * oracle::swap_pass_count(dims.k_active * dims.m_tokens, 1);
    CHECK(expected_swaps == 4);
    CHECK(s.transcript().bytes_for_label(labels::topk_compareswap) - gate_swap_bytes ==
          expected_swaps * per_swap_bytes);
}

TEST_CASE("transcript shape invariance across inputs") {
    MoeDims dims;
    dims.n_experts = 4;
    dims.k_active = 2;
    dims.m_tokens = 4;
    dims.d_model = 8;
    dims.d_ffn = 8;
    dims.slot_count = 128;
    MoeModel model = MoeModel::random(dims, 60);

    auto transcript_for = [&](Mode mode, std::uint64_t input_seed) {
        Session s = make_session(61, mode == Mode::insecure);
        moe_forward(s, mode, random_input(dims, input_seed), model);
        return s.transcript();
    };

    for (int pair = 0; pair < 3; ++pair) {
        Transcript a = transcript_for(Mode::cryptomoe, 100 + pair);
        Transcript b = transcript_for(Mode::cryptomoe, 200 + pair);
        CHECK(a.same_shape(b));
        Transcript da = transcript_for(Mode::dense, 100 + pair);
        Transcript db = transcript_for(Mode::dense, 200 + pair);
        CHECK(da.same_shape(db));
    }

    // The insecure baseline leaks: routing-dependent expert loads change the
    // message sequence.
    bool any_differs = false;
    for (int pair = 0; pair < 5 && !any_differs; ++pair) {
        Transcript a = transcript_for(Mode::insecure, 300 + pair);
        Transcript b = transcript_for(Mode::insecure, 400 + pair);
        any_differs = !a.same_shape(b);
    }
    CHECK(any_differs);
}

TEST_CASE("moe_forward validates shapes and scales") {
    MoeDims dims;
    dims.n_experts = 2;
    dims.k_active = 1;
    dims.m_tokens = 2;
    dims.d_model = 4;
    dims.d_ffn = 4;
    MoeModel model = MoeModel::random(dims, 70);
    Session s = make_session(71);
    CHECK_THROWS_AS(moe_forward(s, Mode::cryptomoe, RingTensor({3, 4}, 12), model), ShapeError);
    CHECK_THROWS_AS(moe_forward(s, Mode::cryptomoe, RingTensor({2, 4}, 10), model), ScaleError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moe2pc/oracle.hpp"
#include "moe2pc/protocols.hpp"

using namespace moe2pc;

namespace {

Session make_session(std::uint64_t seed) {
    SessionConfig cfg;
    cfg.seed = seed;
    return Session(cfg);
}

struct TopKExpect {
    std::vector<double> values;
    std::vector<std::size_t> indices;
};

// Stable sort by descending score, then take t: the selection reference.
TopKExpect topk_reference(const std::vector<double>& scores, std::size_t t, int f) {
    std::vector<std::int64_t> enc(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        enc[i] = std::llround(std::ldexp(scores[i], f));
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return enc[a] > enc[b]; });
    TopKExpect e;
    for (std::size_t i = 0; i < t; ++i) {
        e.values.push_back(std::ldexp(static_cast<double>(enc[order[i]]), -f));
        e.indices.push_back(order[i]);
    }
    return e;
}

struct TopKOpened {
    std::vector<double> values;
    std::vector<std::uint64_t> indices;
    Transcript transcript;
};

TopKOpened run_topk(std::uint64_t seed, const std::vector<double>& scores, std::size_t t, int f) {
    Session s = make_session(seed);
    auto halves = make_shares(s, encode_flat(scores, {scores.size()}, f));
    ShareTensor v[2], idx[2];
    s.run([&](PartyCtx& ctx) {
        TopKShares sel = top_k(ctx, ctx.is_p0() ? halves.first : halves.second, t);
        v[static_cast<int>(ctx.party)] = sel.values;
        idx[static_cast<int>(ctx.party)] = sel.indices;
    });
    TopKOpened out;
    out.values = decode_flat(reconstruct(v[0], v[1]));
    out.indices = reconstruct(idx[0], idx[1]).data();
    out.transcript = s.transcript();
    return out;
}

} // namespace

TEST_CASE("equal_public computes the indicator") {
    Session s = make_session(1);
    RingTensor x({3}, {3, 5, 3}, 0);
    auto halves = make_shares(s, x);
    ShareTensor out[2];
    s.run([&](PartyCtx& ctx) {
        out[static_cast<int>(ctx.party)] =
            equal_public(ctx, ctx.is_p0() ? halves.first : halves.second, 3);
    });
    CHECK(reconstruct(out[0], out[1]).data() == std::vector<ring_t>{1, 0, 1});

    Session s2 = make_session(2);
    auto hz = make_shares(s2, RingTensor({1}, {0}, 0));
    ShareTensor outz[2];
    s2.run([&](PartyCtx& ctx) {
        outz[static_cast<int>(ctx.party)] =
            equal_public(ctx, ctx.is_p0() ? hz.first : hz.second, 0);
    });
    CHECK(reconstruct(outz[0], outz[1]).at(0) == 1);
}

TEST_CASE("equal_public matches the brute-force indicator on random input") {
    Session s = make_session(3);
    CounterRng g(10);
    RingTensor x({256}, 0);
    for (std::size_t i = 0; i < 256; ++i) x.at(i) = g.next() % 17;
    const ring_t c = g.next() % 17;
    auto halves = make_shares(s, x);
    ShareTensor out[2];
    s.run([&](PartyCtx& ctx) {
        out[static_cast<int>(ctx.party)] =
            equal_public(ctx, ctx.is_p0() ? halves.first : halves.second, c);
    });
    RingTensor opened = reconstruct(out[0], out[1]);
    for (std::size_t i = 0; i < 256; ++i) CHECK(opened.at(i) == (x.at(i) == c ? 1 : 0));

    CHECK(s.transcript().bytes_for_label(labels::equal) ==
          256 * s.config().cost.at(labels::equal).bytes_per_element);
}

TEST_CASE("equal_public rejects fixed-point input") {
    Session s = make_session(4);
    auto halves = make_shares(s, encode_tensor({{1.0}}, 12));
    CHECK_THROWS_AS(s.run([&](PartyCtx& ctx) {
        equal_public(ctx, ctx.is_p0() ? halves.first : halves.second, 1);
    }),
                    ScaleError);
}

TEST_CASE("mux selects by boolean bit") {
    Session s = make_session(5);
    CounterRng g(20);
    const std::size_t len = 64;
    RingTensor bits({len}, 0);
    std::vector<double> vals(len);
    for (std::size_t i = 0; i < len; ++i) {
        bits.at(i) = g.next() & 1;
        vals[i] = g.next_double() * 4.0 - 2.0;
    }
    RingTensor x = encode_flat(vals, {len}, 12);
    auto hb = make_shares(s, bits);
    auto hx = make_shares(s, x);
    ShareTensor out[2];
    s.run([&](PartyCtx& ctx) {
        const bool p0 = ctx.is_p0();
        out[static_cast<int>(ctx.party)] =
            mux(ctx, p0 ? hb.first : hb.second, p0 ? hx.first : hx.second);
    });
    RingTensor opened = reconstruct(out[0], out[1]);
    CHECK(opened.scale() == 12);
    for (std::size_t i = 0; i < len; ++i) {
        CHECK(opened.at(i) == (bits.at(i) ? x.at(i) : 0));
    }
}

TEST_CASE("top_k hand examples") {
    SUBCASE("simple selection") {
        auto out = run_topk(6, {0.9, 0.1, 0.5}, 2, 12);
        CHECK(out.values[0] == doctest::Approx(0.9).epsilon(1e-3));
        CHECK(out.values[1] == doctest::Approx(0.5).epsilon(1e-3));
        CHECK(out.indices == std::vector<std::uint64_t>{0, 2});
    }

    SUBCASE("all-equal scores break ties toward smaller index") {
        auto out = run_topk(7, {0.25, 0.25, 0.25, 0.25}, 2, 12);
        CHECK(out.indices == std::vector<std::uint64_t>{0, 1});
    }

    SUBCASE("t out of range throws") {
        Session s = make_session(8);
        auto halves = make_shares(s, encode_flat({0.5, 0.25}, {2}, 12));
        CHECK_THROWS_AS(s.run([&](PartyCtx& ctx) {
            top_k(ctx, ctx.is_p0() ? halves.first : halves.second, 3);
        }),
                        BoundsError);
    }
}

TEST_CASE("top_k matches the stable-sort oracle on 200 random vectors") {
    CounterRng g(30);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = 1 + g.next() % 32;
        const std::size_t t = 1 + g.next() % len;
        std::vector<double> scores(len);
        // Coarse grid keeps ties frequent, which is where the rule matters.
        for (auto& v : scores) v = static_cast<double>(g.next() % 16) / 16.0;
        auto expect = topk_reference(scores, t, 12);
        auto got = run_topk(1000 + trial, scores, t, 12);
        CHECK(got.indices.size() == t);
        for (std::size_t i = 0; i < t; ++i) {
            CHECK(got.indices[i] == expect.indices[i]);
            CHECK(got.values[i] == doctest::Approx(expect.values[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("top_k compare count equals the odd-even-merge closed form") {
    for (std::size_t len : {2u, 3u, 5u, 8u, 16u, 21u, 32u, 100u, 128u}) {
        auto out = run_topk(40 + len, std::vector<double>(len, 0.5), 1, 12);
        CHECK(out.transcript.topk_compares() == oracle::oem_compare_count(len));
    }
}

TEST_CASE("oem network comparator count matches the closed form directly") {
    for (std::size_t p2 : {2u, 4u, 8u, 16u, 32u, 64u, 128u, 256u}) {
        std::size_t total = 0;
        for (const auto& layer : oem_sort_network(p2)) total += layer.pairs.size();
        CHECK(total == oracle::oem_compare_count(p2));
    }
}

TEST_CASE("top_k transcript shape is value-independent") {
    CounterRng g(50);
    std::vector<double> a(24), b(24);
    for (auto& v : a) v = g.next_double();
    for (auto& v : b) v = g.next_double();
    auto ta = run_topk(60, a, 5, 12).transcript;
    auto tb = run_topk(60, b, 5, 12).transcript;
    CHECK(ta.same_shape(tb));
}

TEST_CASE("one_hot encodes rows") {
    SUBCASE("hand examples") {
        Session s = make_session(9);
        auto h1 = make_shares(s, RingTensor({1}, {1}, 0));
        ShareTensor out[2];
        s.run([&](PartyCtx& ctx) {
            out[static_cast<int>(ctx.party)] =
                one_hot(ctx, ctx.is_p0() ? h1.first : h1.second, 3);
        });
        CHECK(reconstruct(out[0], out[1]).data() == std::vector<ring_t>{0, 1, 0});

        Session s2 = make_session(10);
        auto h2 = make_shares(s2, RingTensor({2}, {0, 2}, 0));
        ShareTensor out2[2];
        s2.run([&](PartyCtx& ctx) {
            out2[static_cast<int>(ctx.party)] =
                one_hot(ctx, ctx.is_p0() ? h2.first : h2.second, 3);
        });
        CHECK(reconstruct(out2[0], out2[1]).data() ==
              std::vector<ring_t>{1, 0, 0, 0, 0, 1});
    }

    SUBCASE("random indices, t=4, c=8") {
        Session s = make_session(11);
        CounterRng g(70);
        RingTensor idx({4}, 0);
        for (std::size_t i = 0; i < 4; ++i) idx.at(i) = g.next() % 8;
        auto halves = make_shares(s, idx);
        ShareTensor out[2];
        s.run([&](PartyCtx& ctx) {
            out[static_cast<int>(ctx.party)] =
                one_hot(ctx, ctx.is_p0() ? halves.first : halves.second, 8);
        });
        RingTensor opened = reconstruct(out[0], out[1]);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 8; ++j)
                CHECK(opened.at2(i, j) == (idx.at(i) == j ? 1 : 0));
        // t*c equality calls, metered under the equal label.
        CHECK(s.transcript().bytes_for_label(labels::equal) ==
              4 * 8 * s.config().cost.at(labels::equal).bytes_per_element);
    }

    SUBCASE("out-of-range index yields an all-zero row in production mode") {
        Session s = make_session(12);
        auto halves = make_shares(s, RingTensor({1}, {9}, 0));
        ShareTensor out[2];
        s.run([&](PartyCtx& ctx) {
            out[static_cast<int>(ctx.party)] =
                one_hot(ctx, ctx.is_p0() ? halves.first : halves.second, 4);
        });
        CHECK(reconstruct(out[0], out[1]).data() == std::vector<ring_t>{0, 0, 0, 0});
    }

    SUBCASE("debug mode flags out-of-range indices") {
        SessionConfig cfg;
        cfg.seed = 13;
        cfg.debug_checks = true;
        Session s(cfg);
        auto halves = make_shares(s, RingTensor({1}, {9}, 0));
        CHECK_THROWS_AS(s.run([&](PartyCtx& ctx) {
            one_hot(ctx, ctx.is_p0() ? halves.first : halves.second, 4);
        }),
                        BoundsError);
    }
}

TEST_CASE("softmax_rows") {
    SUBCASE("equal logits split the mass evenly") {
        Session s = make_session(14);
        auto halves = make_shares(s, encode_tensor({{0.5, 0.5, 0.5, 0.5}}, 12));
        ShareTensor out[2];
        s.run([&](PartyCtx& ctx) {
            out[static_cast<int>(ctx.party)] =
                softmax_rows(ctx, ctx.is_p0() ? halves.first : halves.second);
        });
        auto opened = decode_flat(reconstruct(out[0], out[1]));
        for (double v : opened) CHECK(std::fabs(v - 0.25) <= std::ldexp(1.0, -12));
    }

    SUBCASE("dominant logit saturates") {
        Session s = make_session(15);
        auto halves = make_shares(s, encode_tensor({{10.0, 0.0, 0.0, 0.0}}, 12));
        ShareTensor out[2];
        s.run([&](PartyCtx& ctx) {
            out[static_cast<int>(ctx.party)] =
                softmax_rows(ctx, ctx.is_p0() ? halves.first : halves.second);
        });
        CHECK(decode_flat(reconstruct(out[0], out[1]))[0] > 0.999);
    }

    SUBCASE("random 8x16 rows sum to one and match the reference") {
        Session s = make_session(16);
        CounterRng g(80);
        std::vector<std::vector<double>> logits(8, std::vector<double>(16));
        for (auto& row : logits)
            for (auto& v : row) v = g.next_double() * 8.0 - 4.0;
        RingTensor enc = encode_tensor(logits, 12);
        auto halves = make_shares(s, enc);
        ShareTensor out[2];
        s.run([&](PartyCtx& ctx) {
            out[static_cast<int>(ctx.party)] =
                softmax_rows(ctx, ctx.is_p0() ? halves.first : halves.second);
        });
        auto opened = decode_tensor(reconstruct(out[0], out[1]));
        const double ulp = std::ldexp(1.0, -12);
        const auto dec = decode_tensor(enc);
        for (std::size_t r = 0; r < 8; ++r) {
            double sum = 0.0;
            auto expect = softmax_row_reference(dec[r]);
            for (std::size_t c = 0; c < 16; ++c) {
                sum += opened[r][c];
                CHECK(std::fabs(opened[r][c] - expect[c]) <= 2 * ulp);
            }
            CHECK(std::fabs(sum - 1.0) <= 16 * ulp);
        }
    }
}

TEST_CASE("floor_div_public") {
    Session s = make_session(17);
    auto halves = make_shares(s, RingTensor({4}, {0, 1, 2, 3}, 0));
    ShareTensor out[2];
    s.run([&](PartyCtx& ctx) {
        out[static_cast<int>(ctx.party)] =
            floor_div_public(ctx, ctx.is_p0() ? halves.first : halves.second, 2);
    });
    CHECK(reconstruct(out[0], out[1]).data() == std::vector<ring_t>{0, 0, 1, 1});

    Session s1 = make_session(18);
    auto h1 = make_shares(s1, RingTensor({1}, {5}, 0));
    ShareTensor o1[2];
    s1.run([&](PartyCtx& ctx) {
        o1[static_cast<int>(ctx.party)] =
            floor_div_public(ctx, ctx.is_p0() ? h1.first : h1.second, 1);
    });
    CHECK(reconstruct(o1[0], o1[1]).at(0) == 5);

    CounterRng g(90);
    RingTensor x({128}, 0);
    for (std::size_t i = 0; i < 128; ++i) x.at(i) = g.next() % 1024;
    for (std::uint64_t k : {2u, 4u, 6u}) {
        Session s2 = make_session(19 + k);
        auto hx = make_shares(s2, x);
        ShareTensor ox[2];
        s2.run([&](PartyCtx& ctx) {
            ox[static_cast<int>(ctx.party)] =
                floor_div_public(ctx, ctx.is_p0() ? hx.first : hx.second, k);
        });
        RingTensor opened = reconstruct(ox[0], ox[1]);
        for (std::size_t i = 0; i < 128; ++i) CHECK(opened.at(i) == x.at(i) / k);
    }
}

TEST_CASE("top_k then one_hot reproduces gather-by-rank") {
    CounterRng g(100);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t len = 4 + g.next() % 29;
        const std::size_t t = 1 + g.next() % std::min<std::size_t>(len, 6);
        std::vector<double> scores(len);
        for (auto& v : scores) v = static_cast<double>(g.next() % 32) / 32.0;

        Session s = make_session(2000 + trial);
        auto halves = make_shares(s, encode_flat(scores, {len}, 12));
        ShareTensor oh[2];
        s.run([&](PartyCtx& ctx) {
            TopKShares sel = top_k(ctx, ctx.is_p0() ? halves.first : halves.second, t);
            oh[static_cast<int>(ctx.party)] = one_hot(ctx, sel.indices, len);
        });
        RingTensor opened = reconstruct(oh[0], oh[1]);
        auto expect = topk_reference(scores, t, 12);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < len; ++c)
                CHECK(opened.at2(r, c) == (expect.indices[r] == c ? 1 : 0));
    }
}

TEST_CASE("mul_elementwise and column broadcast") {
    Session s = make_session(21);
    CounterRng g(110);
    std::vector<double> av(12), bv(12);
    for (auto& v : av) v = g.next_double() - 0.5;
    for (auto& v : bv) v = g.next_double() - 0.5;
    auto ha = make_shares(s, encode_flat(av, {12}, 12));
    auto hb = make_shares(s, encode_flat(bv, {12}, 12));
    ShareTensor out[2];
    s.run([&](PartyCtx& ctx) {
        const bool p0 = ctx.is_p0();
        ShareTensor prod =
            mul_elementwise(ctx, p0 ? ha.first : ha.second, p0 ? hb.first : hb.second);
        out[static_cast<int>(ctx.party)] = truncate_shares(ctx, prod, 12);
    });
    auto opened = decode_flat(reconstruct(out[0], out[1]));
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(std::fabs(opened[i] - av[i] * bv[i]) <= 3 * std::ldexp(1.0, -12));
    }

    Session s2 = make_session(22);
    auto hm = make_shares(s2, encode_tensor({{1.0, 2.0}, {3.0, 4.0}}, 12));
    auto hv = make_shares(s2, encode_flat({0.5, 0.25}, {2}, 12));
    ShareTensor o2[2];
    s2.run([&](PartyCtx& ctx) {
        const bool p0 = ctx.is_p0();
        ShareTensor prod =
            mul_broadcast_col(ctx, p0 ? hm.first : hm.second, p0 ? hv.first : hv.second);
        o2[static_cast<int>(ctx.party)] = truncate_shares(ctx, prod, 12);
    });
    auto m2 = decode_tensor(reconstruct(o2[0], o2[1]));
    CHECK(m2[0][0] == doctest::Approx(0.5).epsilon(1e-2));
    CHECK(m2[0][1] == doctest::Approx(0.5).epsilon(1e-2));
    CHECK(m2[1][0] == doctest::Approx(1.5).epsilon(1e-2));
    CHECK(m2[1][1] == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("silu_shares matches the reference nonlinearity") {
    Session s = make_session(23);
    CounterRng g(120);
    std::vector<double> vals(64);
    for (auto& v : vals) v = g.next_double() * 8.0 - 4.0;
    auto halves = make_shares(s, encode_flat(vals, {64}, 12));
    ShareTensor out[2];
    s.run([&](PartyCtx& ctx) {
        out[static_cast<int>(ctx.party)] =
            silu_shares(ctx, ctx.is_p0() ? halves.first : halves.second);
    });
    auto opened = decode_flat(reconstruct(out[0], out[1]));
    for (std::size_t i = 0; i < 64; ++i) {
        const double z = std::ldexp(static_cast<double>(std::llround(std::ldexp(vals[i], 12))), -12);
        const double expect = z / (1.0 + std::exp(-z));
        CHECK(std::fabs(opened[i] - expect) <= std::ldexp(1.0, -12));
    }
}

#include "moe2pc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moe2pc/errors.hpp"
#include "moe2pc/ring.hpp" // ranks_before, the one helper shared with the secure path

namespace moe2pc::oracle {

namespace {

std::int64_t enc(double v, int f) { return std::llround(std::ldexp(v, f)); }
double dec(std::int64_t v, int f) { return std::ldexp(static_cast<double>(v), -f); }

double silu(double v) { return v / (1.0 + std::exp(-v)); }

// SwiGLU expert forward in plain doubles, naive triple loops.
Mat expert_forward_plain(const Mat& x, const PlainExpert& e) {
    const std::size_t rows = x.size();
    const std::size_t d = e.w_gate.size();
    const std::size_t dffn = e.w_gate[0].size();
    const std::size_t dout = e.w_down[0].size();
    Mat y(rows, std::vector<double>(dout, 0.0));
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> h1(dffn, 0.0), h2(dffn, 0.0);
        for (std::size_t c = 0; c < dffn; ++c) {
            for (std::size_t i = 0; i < d; ++i) {
                h1[c] += x[r][i] * e.w_gate[i][c];
                h2[c] += x[r][i] * e.w_up[i][c];
            }
        }
        for (std::size_t c = 0; c < dffn; ++c) h1[c] = silu(h1[c]) * h2[c];
        for (std::size_t o = 0; o < dout; ++o) {
            for (std::size_t c = 0; c < dffn; ++c) y[r][o] += h1[c] * e.w_down[c][o];
        }
    }
    return y;
}

struct Candidate {
    std::size_t flat;  // token * k + slot
    std::size_t token;
    std::int64_t score_enc;
};

// Per-expert candidate lists in the confidence ranking order.
std::vector<std::vector<Candidate>> ranked_candidates(const PlainRouting& routing, std::size_t n,
                                                      std::size_t k) {
    const std::size_t m = routing.topk.size();
    std::vector<std::vector<Candidate>> per_expert(n);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t l = 0; l < k; ++l) {
            const std::size_t e = routing.topk[j][l];
            per_expert[e].push_back({j * k + l, j, routing.enc[j][e]});
        }
    }
    for (auto& cands : per_expert) {
        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            return moe2pc::ranks_before(a.score_enc, a.flat, b.score_enc, b.flat);
        });
    }
    return per_expert;
}

std::size_t pow2_at_least(std::size_t v) {
    std::size_t p = 1;
    while (p < v) p <<= 1;
    return p;
}

} // namespace

PlainRouting plain_gate(const Mat& x, const PlainModel& model, std::size_t k) {
    const std::size_t m = x.size();
    const std::size_t n = model.gate.size();
    const std::size_t d = n ? model.gate[0].size() : 0;
    const int f = model.frac_bits;

    PlainRouting routing;
    routing.scores.assign(m, std::vector<double>(n, 0.0));
    routing.enc.assign(m, std::vector<std::int64_t>(n, 0));
    routing.topk.assign(m, {});

    for (std::size_t j = 0; j < m; ++j) {
        // Fixed-point logits: encoded inputs times encoded weights, 2^64 wrap,
        // one arithmetic shift back to scale f. Matches the shared-tensor path
        // bit for bit.
        std::vector<double> logits(n);
        for (std::size_t e = 0; e < n; ++e) {
            std::uint64_t acc = 0;
            for (std::size_t i = 0; i < d; ++i) {
                acc += static_cast<std::uint64_t>(enc(x[j][i], f)) *
                       static_cast<std::uint64_t>(enc(model.gate[e][i], f));
            }
            logits[e] = dec(static_cast<std::int64_t>(acc) >> f, f);
        }

        double mx = logits.empty() ? 0.0 : logits[0];
        for (double v : logits) mx = std::max(mx, v);
        std::vector<double> ex(n);
        double sum = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
            ex[e] = std::exp(logits[e] - mx);
            sum += ex[e];
        }
        for (std::size_t e = 0; e < n; ++e) {
            const std::int64_t q = enc(ex[e] / sum, f);
            routing.enc[j][e] = q;
            routing.scores[j][e] = dec(q, f);
        }

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return moe2pc::ranks_before(routing.enc[j][a], a, routing.enc[j][b], b);
        });
        routing.topk[j].assign(order.begin(), order.begin() + std::min(k, order.size()));
    }
    return routing;
}

Mat plain_moe(const Mat& x, const PlainModel& model, std::size_t k) {
    const std::size_t m = x.size();
    const std::size_t dout = model.experts.empty() ? 0 : model.experts[0].w_down[0].size();
    PlainRouting routing = plain_gate(x, model, k);

    Mat y(m, std::vector<double>(dout, 0.0));
    for (std::size_t e = 0; e < model.experts.size(); ++e) {
        Mat ye = expert_forward_plain(x, model.experts[e]);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t l = 0; l < k; ++l) {
                if (routing.topk[j][l] != e) continue;
                const double w = routing.scores[j][e];
                for (std::size_t o = 0; o < dout; ++o) y[j][o] += w * ye[j][o];
            }
        }
    }
    return y;
}

Mat plain_balanced_moe(const Mat& x, const PlainModel& model, std::size_t k, std::size_t t) {
    const std::size_t m = x.size();
    const std::size_t n = model.experts.size();
    const std::size_t dout = n ? model.experts[0].w_down[0].size() : 0;
    PlainRouting routing = plain_gate(x, model, k);
    auto per_expert = ranked_candidates(routing, n, k);

    Mat y(m, std::vector<double>(dout, 0.0));
    for (std::size_t e = 0; e < n; ++e) {
        Mat ye = expert_forward_plain(x, model.experts[e]);
        const std::size_t kept = std::min(t, per_expert[e].size());
        for (std::size_t c = 0; c < kept; ++c) {
            const Candidate& cand = per_expert[e][c];
            const double w = dec(cand.score_enc, model.frac_bits);
            for (std::size_t o = 0; o < dout; ++o) y[cand.token][o] += w * ye[cand.token][o];
        }
    }
    return y;
}

std::vector<std::vector<KeptToken>> balanced_kept_sets(const Mat& x, const PlainModel& model,
                                                       std::size_t k, std::size_t t) {
    const std::size_t n = model.experts.size();
    PlainRouting routing = plain_gate(x, model, k);
    auto per_expert = ranked_candidates(routing, n, k);

    std::vector<std::vector<KeptToken>> kept(n);
    for (std::size_t e = 0; e < n; ++e) {
        const std::size_t limit = std::min(t, per_expert[e].size());
        for (std::size_t c = 0; c < limit; ++c) {
            if (per_expert[e][c].score_enc <= 0) continue;
            kept[e].push_back({per_expert[e][c].token, per_expert[e][c].score_enc});
        }
    }
    return kept;
}

std::uint64_t rotation_count(PackingScheme scheme, std::size_t n, std::size_t t, std::size_t d1,
                             std::size_t d2, std::size_t slot_count) {
    const std::size_t group = scheme == PackingScheme::bolt ? 1 : n;
    const std::size_t stride = pow2_at_least(group * t);
    if (stride > slot_count) {
        throw CapacityError("rotation_count: batched column exceeds slot capacity");
    }
    const std::size_t c = slot_count / stride;
    const std::uint64_t in_cts = (d1 + c - 1) / c;
    const std::uint64_t out_cts = (d2 + c - 1) / c;
    switch (scheme) {
        case PackingScheme::bolt:
            return static_cast<std::uint64_t>(n) * in_cts * (c - 1);
        case PackingScheme::batch:
            return in_cts * (c - 1);
        case PackingScheme::batch_bsgs: {
            std::uint64_t best = ~0ull;
            for (std::size_t bs = 1; bs <= c; ++bs) {
                const std::size_t gs = (c + bs - 1) / bs;
                best = std::min(best, in_cts * (bs - 1) + out_cts * (gs - 1));
            }
            return best;
        }
    }
    return 0;
}

std::uint64_t oem_compare_count(std::size_t length) {
    const std::size_t padded = pow2_at_least(length);
    if (padded < 2) return 0;
    std::size_t p = 0;
    for (std::size_t v = padded; v > 1; v >>= 1) ++p;
    if (p == 1) return 1;
    return (static_cast<std::uint64_t>(p) * p - p + 4) * (1ull << (p - 2)) - 1;
}

std::uint64_t swap_pass_count(std::size_t candidates, std::size_t t) {
    std::uint64_t swaps = 0;
    for (std::size_t pass = 0; pass < t && pass < candidates; ++pass) {
        swaps += candidates - 1 - pass;
    }
    return swaps;
}

} // namespace moe2pc::oracle

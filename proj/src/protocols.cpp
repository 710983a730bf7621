#include "moe2pc/protocols.hpp"

#include <algorithm>
#include <cmath>

#include "moe2pc/errors.hpp"

namespace moe2pc {

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

std::vector<double> softmax_row_reference(const std::vector<double>& row) {
    double mx = row.empty() ? 0.0 : row[0];
    for (double v : row) mx = std::max(mx, v);
    std::vector<double> e(row.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        e[i] = std::exp(row[i] - mx);
        sum += e[i];
    }
    for (auto& v : e) v /= sum;
    return e;
}

ShareTensor equal_public(PartyCtx& ctx, const ShareTensor& x, ring_t constant) {
    if (x.scale() != 0) throw ScaleError("equal_public needs integer-scaled input");
    auto out = detail::ideal_unary(ctx, x, [constant](std::vector<ring_t> v) {
        for (auto& e : v) e = (e == constant) ? 1 : 0;
        return v;
    });
    ctx.meter_ideal(labels::equal, x.numel());
    return detail::wrap(ctx, RingTensor(x.payload.shape(), std::move(out), 0));
}

ShareTensor mux(PartyCtx& ctx, const ShareTensor& bits, const ShareTensor& x) {
    if (!bits.payload.same_shape(x.payload)) {
        throw ShapeError("mux: " + bits.payload.shape_str() + " vs " + x.payload.shape_str());
    }
    const std::size_t n = x.numel();
    auto out = detail::ideal_binary(ctx, bits, x, [n](std::vector<ring_t> v) {
        std::vector<ring_t> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = ring_mul(v[i], v[n + i]);
        return y;
    });
    ctx.meter_ideal(labels::mux, n);
    return detail::wrap(ctx, RingTensor(x.payload.shape(), std::move(out), x.scale()));
}

ShareTensor mul_elementwise(PartyCtx& ctx, const ShareTensor& a, const ShareTensor& b) {
    if (!a.payload.same_shape(b.payload)) {
        throw ShapeError("mul_elementwise: " + a.payload.shape_str() + " vs " +
                         b.payload.shape_str());
    }
    const std::size_t n = a.numel();
    auto out = detail::ideal_binary(ctx, a, b, [n](std::vector<ring_t> v) {
        std::vector<ring_t> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = ring_mul(v[i], v[n + i]);
        return y;
    });
    ctx.meter_ideal(labels::mul, n);
    return detail::wrap(ctx, RingTensor(a.payload.shape(), std::move(out), a.scale() + b.scale()));
}

ShareTensor mul_broadcast_col(PartyCtx& ctx, const ShareTensor& matrix, const ShareTensor& vec) {
    const std::size_t r = matrix.payload.rows(), c = matrix.payload.cols();
    if (vec.numel() != c) throw ShapeError("mul_broadcast_col: vector length != columns");
    RingTensor rep({r, c}, vec.scale());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) rep.at2(i, j) = vec.payload.at(j);
    ShareTensor replicated{matrix.owner, std::move(rep), matrix.session_tag};
    return mul_elementwise(ctx, matrix, replicated);
}

namespace {

void oem_merge(std::size_t lo, std::size_t n, std::size_t r,
               std::vector<std::pair<std::size_t, std::size_t>>& out) {
    const std::size_t m = r * 2;
    if (m < n) {
        oem_merge(lo, n, m, out);
        oem_merge(lo + r, n, m, out);
        for (std::size_t i = lo + r; i + r < lo + n; i += m) out.emplace_back(i, i + r);
    } else {
        out.emplace_back(lo, lo + r);
    }
}

void oem_sort(std::size_t lo, std::size_t n,
              std::vector<std::pair<std::size_t, std::size_t>>& out) {
    if (n > 1) {
        const std::size_t m = n / 2;
        oem_sort(lo, m, out);
        oem_sort(lo + m, m, out);
        oem_merge(lo, n, 1, out);
    }
}

} // namespace

std::vector<CompareLayer> oem_sort_network(std::size_t padded_length) {
    std::vector<std::pair<std::size_t, std::size_t>> comparators;
    if (padded_length > 1) oem_sort(0, padded_length, comparators);

    // Greedy layering in generation order; the order respects dependencies.
    std::vector<std::size_t> busy(padded_length, 0);
    std::vector<CompareLayer> layers;
    for (auto [i, j] : comparators) {
        const std::size_t layer = std::max(busy[i], busy[j]);
        if (layer >= layers.size()) layers.resize(layer + 1);
        layers[layer].pairs.emplace_back(i, j);
        busy[i] = busy[j] = layer + 1;
    }
    return layers;
}

TopKShares top_k(PartyCtx& ctx, const ShareTensor& scores, std::size_t t) {
    const std::size_t len = scores.numel();
    if (t < 1 || t > len) {
        throw BoundsError("top_k: t=" + std::to_string(t) + " with " + std::to_string(len) +
                          " scores");
    }
    const std::size_t padded = next_pow2(len);

    // Working halves of (score, index) pairs. Indices are public positions at
    // this point, shared as (i, 0); padding entries carry score 0 and an index
    // past the real range so they always rank last.
    std::vector<ring_t> sv(padded, 0), si(padded, 0);
    for (std::size_t i = 0; i < len; ++i) sv[i] = scores.payload.at(i);
    if (ctx.is_p0()) {
        for (std::size_t i = 0; i < padded; ++i) si[i] = i;
    }

    const auto layers = oem_sort_network(padded);
    for (const auto& layer : layers) {
        const std::size_t pairs = layer.pairs.size();
        std::vector<ring_t> buf;
        buf.reserve(pairs * 4);
        for (auto [i, j] : layer.pairs) {
            buf.push_back(sv[i]);
            buf.push_back(si[i]);
            buf.push_back(sv[j]);
            buf.push_back(si[j]);
        }
        const std::uint64_t step = ctx.next_step();
        auto out = ctx.session.dealer().ideal_eval(
            ctx.party, step, buf, [pairs](std::vector<ring_t> v) {
                for (std::size_t p = 0; p < pairs; ++p) {
                    ring_t& a = v[p * 4 + 0];
                    ring_t& ai = v[p * 4 + 1];
                    ring_t& b = v[p * 4 + 2];
                    ring_t& bi = v[p * 4 + 3];
                    if (!ranks_before(to_signed(a), ai, to_signed(b), bi)) {
                        std::swap(a, b);
                        std::swap(ai, bi);
                    }
                }
                return v;
            });
        for (std::size_t p = 0; p < pairs; ++p) {
            auto [i, j] = layer.pairs[p];
            sv[i] = out[p * 4 + 0];
            si[i] = out[p * 4 + 1];
            sv[j] = out[p * 4 + 2];
            si[j] = out[p * 4 + 3];
        }
        if (ctx.is_p0()) ctx.session.transcript().add_topk_compares(pairs);
        ctx.meter_ideal(labels::topk_compareswap, pairs * 2);
    }

    TopKShares result;
    result.values = detail::wrap(
        ctx, RingTensor({t}, std::vector<ring_t>(sv.begin(), sv.begin() + t), scores.scale()));
    result.indices =
        detail::wrap(ctx, RingTensor({t}, std::vector<ring_t>(si.begin(), si.begin() + t), 0));
    return result;
}

ShareTensor one_hot(PartyCtx& ctx, const ShareTensor& idx, std::size_t width) {
    const std::size_t t = idx.numel();
    const bool debug = ctx.session.config().debug_checks;
    auto out = detail::ideal_unary(ctx, idx, [t, width, debug](std::vector<ring_t> v) {
        std::vector<ring_t> y(t * width, 0);
        for (std::size_t i = 0; i < t; ++i) {
            if (v[i] < width) {
                y[i * width + v[i]] = 1;
            } else if (debug) {
                throw BoundsError("one_hot index " + std::to_string(v[i]) + " out of [0, " +
                                  std::to_string(width) + ")");
            }
        }
        return y;
    });
    ctx.meter_ideal(labels::equal, t * width);
    return detail::wrap(ctx, RingTensor({t, width}, std::move(out), 0));
}

ShareTensor softmax_rows(PartyCtx& ctx, const ShareTensor& logits) {
    const std::size_t rows = logits.payload.rows(), cols = logits.payload.cols();
    const int f = logits.scale();
    auto out = detail::ideal_unary(ctx, logits, [rows, cols, f](std::vector<ring_t> v) {
        FixedPointCodec codec{f};
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<double> row(cols);
            for (std::size_t c = 0; c < cols; ++c) row[c] = codec.decode(v[r * cols + c]);
            std::vector<double> p = softmax_row_reference(row);
            for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] = codec.encode(p[c]);
        }
        return v;
    });
    ctx.meter_ideal(labels::softmax, rows * cols);
    return detail::wrap(ctx, RingTensor({rows, cols}, std::move(out), f));
}

ShareTensor floor_div_public(PartyCtx& ctx, const ShareTensor& x, std::uint64_t divisor) {
    if (x.scale() != 0) throw ScaleError("floor_div_public needs integer-scaled input");
    if (divisor == 0) throw BoundsError("floor_div_public: divisor must be positive");
    auto out = detail::ideal_unary(ctx, x, [divisor](std::vector<ring_t> v) {
        for (auto& e : v) e = e / divisor;
        return v;
    });
    ctx.meter_ideal(labels::divpub, x.numel());
    return detail::wrap(ctx, RingTensor(x.payload.shape(), std::move(out), 0));
}

ShareTensor silu_shares(PartyCtx& ctx, const ShareTensor& x) {
    const int f = x.scale();
    auto out = detail::ideal_unary(ctx, x, [f](std::vector<ring_t> v) {
        FixedPointCodec codec{f};
        for (auto& e : v) {
            const double z = codec.decode(e);
            e = codec.encode(z / (1.0 + std::exp(-z)));
        }
        return v;
    });
    ctx.meter_ideal(labels::silu, x.numel());
    return detail::wrap(ctx, RingTensor(x.payload.shape(), std::move(out), f));
}

} // namespace moe2pc

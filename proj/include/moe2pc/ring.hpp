#pragma once

#include <cmath>
#include <cstdint>

#include "moe2pc/errors.hpp"

namespace moe2pc {

// All secret-shared values live in Z_{2^64}; signed semantics via two's complement.
using ring_t = std::uint64_t;

inline ring_t ring_add(ring_t a, ring_t b) { return a + b; }
inline ring_t ring_sub(ring_t a, ring_t b) { return a - b; }
inline ring_t ring_mul(ring_t a, ring_t b) { return a * b; }
inline ring_t ring_neg(ring_t a) { return ~a + 1; }

inline std::int64_t to_signed(ring_t x) { return static_cast<std::int64_t>(x); }
inline ring_t to_ring(std::int64_t x) { return static_cast<ring_t>(x); }

// Arithmetic right shift of the signed representative, i.e. floor(x / 2^s).
inline ring_t arith_shift_right(ring_t x, int s) {
    return to_ring(to_signed(x) >> s);
}

// Fixed-point codec: encode(r) = round(r * 2^f) mod 2^64, decode with sign extension.
struct FixedPointCodec {
    int frac_bits = 12;

    ring_t encode(double r) const {
        const double limit = std::ldexp(1.0, 63 - frac_bits);
        if (!(std::fabs(r) < limit)) {
            throw OverflowError("value " + std::to_string(r) + " exceeds fixed-point range at f=" +
                                std::to_string(frac_bits));
        }
        return to_ring(std::llround(std::ldexp(r, frac_bits)));
    }

    double decode(ring_t x) const {
        return std::ldexp(static_cast<double>(to_signed(x)), -frac_bits);
    }

    // One ulp of the fixed-point grid.
    double ulp() const { return std::ldexp(1.0, -frac_bits); }
};

// Ranking order shared by the secure top-k network and the plaintext oracles:
// higher score first, ties broken toward the smaller input index.
inline bool ranks_before(std::int64_t score_a, std::uint64_t index_a, std::int64_t score_b,
                         std::uint64_t index_b) {
    if (score_a != score_b) return score_a > score_b;
    return index_a < index_b;
}

// splitmix64; the deterministic generator behind dealer randomness and model init.
struct CounterRng {
    std::uint64_t state;

    explicit CounterRng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

// Mix two 64-bit values into one stream seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    CounterRng g(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
    g.state += b;
    return g.next();
}

} // namespace moe2pc

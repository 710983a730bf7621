#include "moe2pc/slots.hpp"

#include <algorithm>

#include "moe2pc/errors.hpp"
#include "moe2pc/protocols.hpp" // next_pow2

namespace moe2pc {

SlotVector SlotVector::rotated_left(std::size_t k) const {
    const std::size_t n = slots_.size();
    k %= n;
    SlotVector out(n, counter_);
    if (k == 0) {
        out.slots_ = slots_;
        return out;
    }
    if (counter_) counter_->rotations++;
    for (std::size_t i = 0; i < n; ++i) out.slots_[i] = slots_[(i + k) % n];
    return out;
}

void SlotVector::add_inplace(const SlotVector& o) {
    if (o.size() != size()) throw ShapeError("slot count mismatch in ciphertext add");
    if (counter_) counter_->ct_adds++;
    for (std::size_t i = 0; i < slots_.size(); ++i) slots_[i] += o.slots_[i];
}

void SlotVector::mul_plain_inplace(std::span<const ring_t> plain) {
    if (plain.size() != size()) throw ShapeError("slot count mismatch in plaintext multiply");
    if (counter_) counter_->pt_multiplies++;
    for (std::size_t i = 0; i < slots_.size(); ++i) slots_[i] = ring_mul(slots_[i], plain[i]);
}

const char* packing_name(PackingScheme s) {
    switch (s) {
        case PackingScheme::bolt: return "bolt";
        case PackingScheme::batch: return "batch";
        case PackingScheme::batch_bsgs: return "batch_bsgs";
    }
    return "?";
}

PackingScheme packing_from_name(const std::string& name) {
    if (name == "bolt") return PackingScheme::bolt;
    if (name == "batch") return PackingScheme::batch;
    if (name == "batch_bsgs") return PackingScheme::batch_bsgs;
    throw ConfigError("unknown packing scheme '" + name + "'");
}

namespace {

struct KernelDims {
    std::size_t n = 0, t = 0, d1 = 0, d2 = 0;
    std::size_t stride = 0;   // padded batched-column length
    std::size_t cols_ct = 0;  // columns per ciphertext, N / stride
    std::size_t in_cts = 0;   // per group
    std::size_t out_cts = 0;  // per group
    std::size_t groups = 0;
    std::size_t group_size = 0;
};

KernelDims make_dims(std::span<const RingTensor> a, std::span<const RingTensor> b,
                     std::size_t slot_count, std::size_t group_size) {
    if (a.empty() || a.size() != b.size()) {
        throw ShapeError("packed matmul needs matching, non-empty matrix lists");
    }
    if (slot_count < 2 || (slot_count & (slot_count - 1)) != 0) {
        throw CapacityError("slot count must be a power of two");
    }
    KernelDims kd;
    kd.n = a.size();
    kd.t = a[0].rows();
    kd.d1 = a[0].cols();
    kd.d2 = b[0].cols();
    kd.group_size = group_size;
    kd.groups = kd.n / group_size;
    for (std::size_t e = 0; e < kd.n; ++e) {
        if (a[e].rows() != kd.t || a[e].cols() != kd.d1 || b[e].rows() != kd.d1 ||
            b[e].cols() != kd.d2) {
            throw ShapeError("expert " + std::to_string(e) + " matrix shape differs");
        }
    }
    kd.stride = next_pow2(group_size * kd.t);
    if (kd.stride > slot_count) {
        throw CapacityError("batched column of " + std::to_string(group_size * kd.t) +
                            " entries exceeds " + std::to_string(slot_count) + " slots");
    }
    kd.cols_ct = slot_count / kd.stride;
    kd.in_cts = (kd.d1 + kd.cols_ct - 1) / kd.cols_ct;
    kd.out_cts = (kd.d2 + kd.cols_ct - 1) / kd.cols_ct;
    return kd;
}

// Balanced baby/giant split: minimize in*(Bs-1) + out*(ceil(C/Bs)-1).
std::size_t pick_baby_steps(std::size_t c, std::size_t in_cts, std::size_t out_cts) {
    std::size_t best = 1;
    std::uint64_t best_cost = ~0ull;
    for (std::size_t bs = 1; bs <= c; ++bs) {
        const std::size_t gs = (c + bs - 1) / bs;
        const std::uint64_t cost = in_cts * (bs - 1) + out_cts * (gs - 1);
        if (cost < best_cost) {
            best_cost = cost;
            best = bs;
        }
    }
    return best;
}

// One kernel covers all three schemes: bolt is per-expert grouping, batch is
// one group of all experts, and plain accumulation is the degenerate split
// with every offset a baby step.
PackedMatmulResult packed_matmul(std::span<const RingTensor> a, std::span<const RingTensor> b,
                                 std::size_t slot_count, std::size_t group_size, bool bsgs,
                                 std::size_t baby_override) {
    const KernelDims kd = make_dims(a, b, slot_count, group_size);
    const std::size_t C = kd.cols_ct;

    std::size_t baby = C;
    if (bsgs) {
        baby = baby_override == 0 ? pick_baby_steps(C, kd.groups * kd.in_cts, kd.groups * kd.out_cts)
                                  : std::min(baby_override, C);
    }
    const std::size_t giant = (C + baby - 1) / baby;

    PackedMatmulResult result;
    result.input_cts = kd.groups * kd.in_cts;
    result.output_cts = kd.groups * kd.out_cts;
    result.baby_steps = baby;
    result.giant_steps = giant;
    RotationCounter& ctr = result.counters;

    const int out_scale = a[0].scale() + b[0].scale();
    for (std::size_t e = 0; e < kd.n; ++e) {
        result.products.emplace_back(std::vector<std::size_t>{kd.t, kd.d2}, out_scale);
    }

    std::vector<ring_t> mask(slot_count);
    for (std::size_t grp = 0; grp < kd.groups; ++grp) {
        // Pack this group's column blocks into input ciphertexts.
        std::vector<SlotVector> packed_in;
        packed_in.reserve(kd.in_cts);
        for (std::size_t g = 0; g < kd.in_cts; ++g) {
            SlotVector ct(slot_count, &ctr);
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t j = g * C + c;
                if (j >= kd.d1) break;
                for (std::size_t el = 0; el < kd.group_size; ++el) {
                    const RingTensor& ae = a[grp * kd.group_size + el];
                    for (std::size_t r = 0; r < kd.t; ++r) {
                        ct[c * kd.stride + el * kd.t + r] = ae.at2(r, j);
                    }
                }
            }
            packed_in.push_back(std::move(ct));
        }

        // Hoisted baby rotations, shared across outputs and giant steps.
        std::vector<std::vector<SlotVector>> rotated; // [input ct][baby]
        rotated.reserve(kd.in_cts);
        for (std::size_t g = 0; g < kd.in_cts; ++g) {
            std::vector<SlotVector> rs;
            rs.reserve(baby);
            for (std::size_t bsi = 0; bsi < baby; ++bsi) {
                rs.push_back(packed_in[g].rotated_left(bsi * kd.stride));
                if (bsi > 0) ctr.baby_rotations++;
            }
            rotated.push_back(std::move(rs));
        }

        for (std::size_t h = 0; h < kd.out_cts; ++h) {
            SlotVector out_ct(slot_count, &ctr);
            for (std::size_t gs = 0; gs < giant; ++gs) {
                SlotVector partial(slot_count, &ctr);
                bool any = false;
                for (std::size_t g = 0; g < kd.in_cts; ++g) {
                    for (std::size_t bsi = 0; bsi < baby; ++bsi) {
                        if (gs * baby + bsi >= C) continue;
                        // Block bp of rotated[g][bsi] holds column g*C + ((bp+bsi) mod C);
                        // after the giant rotation it lands at output block
                        // (bp - gs*baby) mod C.
                        std::fill(mask.begin(), mask.end(), 0);
                        bool nonzero = false;
                        for (std::size_t bp = 0; bp < C; ++bp) {
                            const std::size_t j = g * C + ((bp + bsi) % C);
                            if (j >= kd.d1) continue;
                            const std::size_t bout = (bp + C - (gs * baby) % C) % C;
                            const std::size_t l = h * C + bout;
                            if (l >= kd.d2) continue;
                            for (std::size_t el = 0; el < kd.group_size; ++el) {
                                const RingTensor& be = b[grp * kd.group_size + el];
                                const ring_t w = be.at2(j, l);
                                if (w == 0) continue;
                                nonzero = true;
                                for (std::size_t r = 0; r < kd.t; ++r) {
                                    mask[bp * kd.stride + el * kd.t + r] = w;
                                }
                            }
                        }
                        if (!nonzero) continue;
                        SlotVector term = rotated[g][bsi];
                        term.mul_plain_inplace(mask);
                        partial.add_inplace(term);
                        any = true;
                    }
                }
                if (gs == 0) {
                    if (any) out_ct.add_inplace(partial);
                } else {
                    // The giant rotation is structural: it happens whether or not
                    // this particular partial carries data, so the counter always
                    // advances.
                    SlotVector moved = partial.rotated_left(((gs * baby) % C) * kd.stride);
                    ctr.giant_rotations++;
                    if (any) out_ct.add_inplace(moved);
                }
            }

            // Unpack this output ciphertext into the per-expert products.
            for (std::size_t bout = 0; bout < C; ++bout) {
                const std::size_t l = h * C + bout;
                if (l >= kd.d2) break;
                for (std::size_t el = 0; el < kd.group_size; ++el) {
                    RingTensor& ce = result.products[grp * kd.group_size + el];
                    for (std::size_t r = 0; r < kd.t; ++r) {
                        ce.at2(r, l) = out_ct[bout * kd.stride + el * kd.t + r];
                    }
                }
            }
        }
    }
    return result;
}

} // namespace

PackedMatmulResult matmul_bolt(std::span<const RingTensor> a, std::span<const RingTensor> b,
                               std::size_t slot_count) {
    return packed_matmul(a, b, slot_count, 1, false, 0);
}

PackedMatmulResult matmul_batch(std::span<const RingTensor> a, std::span<const RingTensor> b,
                                std::size_t slot_count) {
    return packed_matmul(a, b, slot_count, a.size(), false, 0);
}

PackedMatmulResult matmul_batch_bsgs(std::span<const RingTensor> a, std::span<const RingTensor> b,
                                     std::size_t slot_count, std::size_t baby_override) {
    return packed_matmul(a, b, slot_count, a.size(), true, baby_override);
}

PackingFootprint packing_footprint(PackingScheme scheme, std::size_t n, std::size_t t,
                                   std::size_t d1, std::size_t d2, std::size_t slot_count) {
    if (slot_count < 2 || (slot_count & (slot_count - 1)) != 0) {
        throw CapacityError("slot count must be a power of two");
    }
    const std::size_t group = scheme == PackingScheme::bolt ? 1 : n;
    const std::size_t groups = n / group;
    PackingFootprint fp;
    fp.stride = next_pow2(group * t);
    if (fp.stride > slot_count) {
        throw CapacityError("batched column of " + std::to_string(group * t) +
                            " entries exceeds " + std::to_string(slot_count) + " slots");
    }
    fp.cols_per_ct = slot_count / fp.stride;
    fp.input_cts = groups * ((d1 + fp.cols_per_ct - 1) / fp.cols_per_ct);
    fp.output_cts = groups * ((d2 + fp.cols_per_ct - 1) / fp.cols_per_ct);
    return fp;
}

PackedMatmulResult packed_matmul_scheme(PackingScheme scheme, std::span<const RingTensor> a,
                                        std::span<const RingTensor> b, std::size_t slot_count) {
    switch (scheme) {
        case PackingScheme::bolt: return matmul_bolt(a, b, slot_count);
        case PackingScheme::batch: return matmul_batch(a, b, slot_count);
        case PackingScheme::batch_bsgs: return matmul_batch_bsgs(a, b, slot_count);
    }
    throw ConfigError("unknown packing scheme");
}

} // namespace moe2pc

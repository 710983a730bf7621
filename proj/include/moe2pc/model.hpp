#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moe2pc/oracle.hpp"
#include "moe2pc/tensor.hpp"

namespace moe2pc {

enum class Mode { cryptomoe, dense, insecure, cipherprune };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct MoeDims {
    std::size_t n_experts = 4;
    std::size_t k_active = 2;
    std::size_t m_tokens = 8;
    std::size_t d_model = 16;
    std::size_t d_ffn = 32;
    double t_factor = 2.0;
    std::size_t slot_count = 8192;
    int frac_bits = 12;

    // Balanced load per expert: t = ceil(t_factor * m * k / n), capped at k*m.
    std::size_t tokens_per_expert() const;
    void validate() const;
};

struct ExpertWeights {
    RingTensor w_gate; // d x dffn
    RingTensor w_up;   // d x dffn
    RingTensor w_down; // dffn x d
};

// Server-side model: gate projection plus per-expert SwiGLU weights, all
// public plaintext at P1. Weights default to seeded uniform [-0.1, 0.1].
struct MoeModel {
    MoeDims dims;
    std::uint64_t seed = 1;
    RingTensor gate;   // n x d
    RingTensor gate_t; // d x n, same values
    std::vector<ExpertWeights> experts;

    static MoeModel random(const MoeDims& dims, std::uint64_t seed);
    static MoeModel from_json_file(const std::string& path);

    // Decoded mirror for the plaintext references.
    oracle::PlainModel to_plain() const;
};

// Seeded token matrix in [-limit, limit], encoded at the model scale.
RingTensor random_input(const MoeDims& dims, std::uint64_t seed, double limit = 0.25);

} // namespace moe2pc

#include "moe2pc/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "moe2pc/errors.hpp"

namespace moe2pc {

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::cryptomoe: return "cryptomoe";
        case Mode::dense: return "dense";
        case Mode::insecure: return "insecure";
        case Mode::cipherprune: return "cipherprune";
    }
    return "?";
}

Mode mode_from_name(const std::string& name) {
    if (name == "cryptomoe") return Mode::cryptomoe;
    if (name == "dense") return Mode::dense;
    if (name == "insecure") return Mode::insecure;
    if (name == "cipherprune") return Mode::cipherprune;
    throw ConfigError("unknown mode '" + name + "'");
}

std::size_t MoeDims::tokens_per_expert() const {
    const double raw = t_factor * static_cast<double>(m_tokens) *
                       static_cast<double>(k_active) / static_cast<double>(n_experts);
    auto t = static_cast<std::size_t>(std::ceil(raw));
    if (t < 1) t = 1;
    return std::min(t, k_active * m_tokens);
}

void MoeDims::validate() const {
    if (n_experts == 0 || m_tokens == 0 || d_model == 0 || d_ffn == 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (k_active < 1 || k_active > n_experts) {
        throw ConfigError("k_active must lie in [1, n_experts]");
    }
    if (t_factor <= 0.0) throw ConfigError("t_factor must be positive");
    if (frac_bits < 1 || frac_bits > 30) throw ConfigError("frac_bits out of range");
    if ((slot_count & (slot_count - 1)) != 0 || slot_count < 8) {
        throw ConfigError("slot_count must be a power of two >= 8");
    }
}

namespace {

RingTensor random_weight(CounterRng& g, std::size_t rows, std::size_t cols, int f) {
    FixedPointCodec codec{f};
    RingTensor w({rows, cols}, f);
    for (std::size_t i = 0; i < w.numel(); ++i) {
        w.at(i) = codec.encode(g.next_double() * 0.2 - 0.1);
    }
    return w;
}

RingTensor parse_matrix(const nlohmann::json& j, std::size_t rows, std::size_t cols, int f,
                        const std::string& what) {
    if (!j.is_array() || j.size() != rows) {
        throw ConfigError(what + ": expected " + std::to_string(rows) + " rows");
    }
    std::vector<std::vector<double>> vals(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) {
            throw ConfigError(what + ": row " + std::to_string(r) + " must have " +
                              std::to_string(cols) + " entries");
        }
        vals[r] = j[r].get<std::vector<double>>();
    }
    return encode_tensor(vals, f);
}

} // namespace

MoeModel MoeModel::random(const MoeDims& dims, std::uint64_t seed) {
    dims.validate();
    MoeModel model;
    model.dims = dims;
    model.seed = seed;

    CounterRng g(mix_seed(seed, 0x6d6f64656cULL));
    model.gate = random_weight(g, dims.n_experts, dims.d_model, dims.frac_bits);
    model.gate_t = model.gate.transposed();
    model.experts.resize(dims.n_experts);
    for (auto& e : model.experts) {
        e.w_gate = random_weight(g, dims.d_model, dims.d_ffn, dims.frac_bits);
        e.w_up = random_weight(g, dims.d_model, dims.d_ffn, dims.frac_bits);
        e.w_down = random_weight(g, dims.d_ffn, dims.d_model, dims.frac_bits);
    }
    return model;
}

MoeModel MoeModel::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("model '" + path + "': " + e.what());
    }

    MoeDims dims;
    try {
        dims.n_experts = j.at("n_experts").get<std::size_t>();
        dims.k_active = j.at("k_active").get<std::size_t>();
        dims.m_tokens = j.at("m_tokens").get<std::size_t>();
        dims.d_model = j.at("d_model").get<std::size_t>();
        dims.d_ffn = j.at("d_ffn").get<std::size_t>();
        if (j.contains("t_factor")) dims.t_factor = j["t_factor"].get<double>();
        if (j.contains("slot_count")) dims.slot_count = j["slot_count"].get<std::size_t>();
        if (j.contains("frac_bits")) dims.frac_bits = j["frac_bits"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("model '" + path + "': " + e.what());
    }
    const std::uint64_t seed = j.value("seed", 1ull);

    MoeModel model = MoeModel::random(dims, seed);
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        if (w.contains("gate")) {
            model.gate = parse_matrix(w["gate"], dims.n_experts, dims.d_model, dims.frac_bits,
                                      path + ": weights.gate");
            model.gate_t = model.gate.transposed();
        }
        if (w.contains("experts")) {
            if (!w["experts"].is_array() || w["experts"].size() != dims.n_experts) {
                throw ConfigError(path + ": weights.experts must list all experts");
            }
            for (std::size_t e = 0; e < dims.n_experts; ++e) {
                const auto& we = w["experts"][e];
                const std::string tag = path + ": weights.experts[" + std::to_string(e) + "]";
                model.experts[e].w_gate =
                    parse_matrix(we.at("w_gate"), dims.d_model, dims.d_ffn, dims.frac_bits, tag);
                model.experts[e].w_up =
                    parse_matrix(we.at("w_up"), dims.d_model, dims.d_ffn, dims.frac_bits, tag);
                model.experts[e].w_down =
                    parse_matrix(we.at("w_down"), dims.d_ffn, dims.d_model, dims.frac_bits, tag);
            }
        }
    }
    return model;
}

oracle::PlainModel MoeModel::to_plain() const {
    oracle::PlainModel plain;
    plain.frac_bits = dims.frac_bits;
    plain.gate = decode_tensor(gate);
    for (const auto& e : experts) {
        plain.experts.push_back(
            {decode_tensor(e.w_gate), decode_tensor(e.w_up), decode_tensor(e.w_down)});
    }
    return plain;
}

RingTensor random_input(const MoeDims& dims, std::uint64_t seed, double limit) {
    CounterRng g(mix_seed(seed, 0x696e707574ULL));
    FixedPointCodec codec{dims.frac_bits};
    RingTensor x({dims.m_tokens, dims.d_model}, dims.frac_bits);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        x.at(i) = codec.encode((g.next_double() * 2.0 - 1.0) * limit);
    }
    return x;
}

} // namespace moe2pc

#include "moe2pc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include <json.hpp>

#include "moe2pc/errors.hpp"
#include "moe2pc/moe.hpp"
#include "moe2pc/oracle.hpp"
#include "moe2pc/protocols.hpp"

namespace moe2pc {

namespace {

template <typename T>
std::vector<T> axis_or(const std::vector<T>& axis, T fallback) {
    if (axis.empty()) return {fallback};
    return axis;
}

std::size_t thread_cap() {
    if (const char* env = std::getenv("MOE2PC_THREADS")) {
        const long v = std::atol(env);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 2 : std::min<unsigned>(hw, 8);
}

void run_indexed(std::size_t count, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min(count, thread_cap());
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error = nullptr;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct PackingPoint {
    std::size_t n, t, d1, d2, slot_count;
    std::string scheme;
};

struct MoePoint {
    MoeDims dims;
    Mode mode;
};

double max_abs_diff(const std::vector<std::vector<double>>& a,
                    const std::vector<std::vector<double>>& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j)
            mx = std::max(mx, std::fabs(a[i][j] - b[i][j]));
    return mx;
}

ReportRow run_packing_row(const ExperimentSpec& spec, std::size_t index, const PackingPoint& pt) {
    ReportRow row;
    row.index = index;
    row.kind = "packing";
    row.mode = pt.scheme;
    row.n = pt.n;
    row.t = pt.t;
    row.d1 = pt.d1;
    row.d2 = pt.d2;
    row.slot_count = pt.slot_count;
    row.frac_bits = 12;
    row.net_seconds.assign(spec.nets.size(), 0.0);

    const PackingScheme scheme = packing_from_name(pt.scheme);
    const std::size_t group = scheme == PackingScheme::bolt ? 1 : pt.n;
    if (next_pow2(group * pt.t) > pt.slot_count) {
        row.skipped = true;
        row.skip_reason = "batched column exceeds slot capacity";
        return row;
    }

    FixedPointCodec codec{row.frac_bits};
    CounterRng g(mix_seed(spec.seed, index));
    std::vector<RingTensor> a, b;
    for (std::size_t e = 0; e < pt.n; ++e) {
        RingTensor ae({pt.t, pt.d1}, row.frac_bits), be({pt.d1, pt.d2}, row.frac_bits);
        for (std::size_t i = 0; i < ae.numel(); ++i) ae.at(i) = codec.encode(g.next_double() - 0.5);
        for (std::size_t i = 0; i < be.numel(); ++i) be.at(i) = codec.encode(g.next_double() - 0.5);
        a.push_back(std::move(ae));
        b.push_back(std::move(be));
    }

    PackedMatmulResult result = packed_matmul_scheme(scheme, a, b, pt.slot_count);
    row.rotations = result.counters.rotations;
    row.baby_rotations = result.counters.baby_rotations;
    row.giant_rotations = result.counters.giant_rotations;
    row.pt_multiplies = result.counters.pt_multiplies;
    row.ct_adds = result.counters.ct_adds;
    row.formula_rotations =
        oracle::rotation_count(scheme, pt.n, pt.t, pt.d1, pt.d2, pt.slot_count);
    row.formula_match = row.rotations == row.formula_rotations;

    if (spec.oracle_check) {
        row.oracle_checked = true;
        for (std::size_t e = 0; e < pt.n && row.oracle_pass; ++e) {
            RingTensor expect = plain_matmul(a[e], b[e]);
            row.oracle_pass = expect.data() == result.products[e].data();
        }
    }
    return row;
}

ReportRow run_moe_row(const ExperimentSpec& spec, std::size_t index, std::size_t point_index,
                      const MoePoint& pt) {
    ReportRow row;
    row.index = index;
    row.kind = "moe";
    row.mode = mode_name(pt.mode);
    row.n = pt.dims.n_experts;
    row.k = pt.dims.k_active;
    row.m = pt.dims.m_tokens;
    row.d = pt.dims.d_model;
    row.dffn = pt.dims.d_ffn;
    row.slot_count = pt.dims.slot_count;
    row.frac_bits = pt.dims.frac_bits;
    row.net_seconds.assign(spec.nets.size(), 0.0);

    try {
        pt.dims.validate();
        if (next_pow2(pt.dims.m_tokens) > pt.dims.slot_count) {
            throw CapacityError("token column of " + std::to_string(pt.dims.m_tokens) +
                                " entries exceeds " + std::to_string(pt.dims.slot_count) +
                                " slots");
        }
        if (pt.mode == Mode::cryptomoe || pt.mode == Mode::cipherprune) {
            const std::size_t group_tokens =
                pt.dims.n_experts * pt.dims.tokens_per_expert(); // batch packing stride
            if (next_pow2(group_tokens) > pt.dims.slot_count) {
                throw CapacityError("batched column of " + std::to_string(group_tokens) +
                                    " entries exceeds " + std::to_string(pt.dims.slot_count) +
                                    " slots");
            }
        }
    } catch (const std::exception& e) {
        row.skipped = true;
        row.skip_reason = e.what();
        return row;
    }
    row.t = pt.dims.tokens_per_expert();

    SessionConfig cfg;
    cfg.seed = mix_seed(spec.seed, index);
    cfg.insecure_allowed = pt.mode == Mode::insecure;
    cfg.cost = spec.cost_model_path.empty() ? CostModel::defaults()
                                            : CostModel::from_json_file(spec.cost_model_path);

    // A model file (with possibly pinned weights) applies as long as the sweep
    // did not change a weight-bearing dimension.
    MoeModel model = MoeModel::random(pt.dims, spec.model_seed);
    if (!spec.model_path.empty()) {
        MoeModel loaded = MoeModel::from_json_file(spec.model_path);
        if (loaded.dims.n_experts == pt.dims.n_experts &&
            loaded.dims.d_model == pt.dims.d_model && loaded.dims.d_ffn == pt.dims.d_ffn &&
            loaded.dims.frac_bits == pt.dims.frac_bits) {
            loaded.dims = pt.dims;
            model = std::move(loaded);
        }
    }
    RingTensor x = random_input(pt.dims, mix_seed(spec.seed, point_index));

    Session session(cfg);
    MoeForwardResult out;
    try {
        out = moe_forward(session, pt.mode, x, model);
    } catch (const std::exception& e) {
        // Surface the module error on the failing sweep point instead of
        // aborting the whole run.
        row.oracle_pass = false;
        row.skip_reason = e.what();
        return row;
    }

    row.bytes = session.transcript().total_bytes();
    row.rounds = session.transcript().rounds();
    row.topk_compares = session.transcript().topk_compares();
    row.rotations = session.counters().rotations;
    row.baby_rotations = session.counters().baby_rotations;
    row.giant_rotations = session.counters().giant_rotations;
    row.pt_multiplies = session.counters().pt_multiplies;
    row.ct_adds = session.counters().ct_adds;

    if (spec.oracle_check) {
        row.oracle_checked = true;
        const RingTensor y = reconstruct(out.y_p0, out.y_p1);
        const auto got = decode_tensor(y);
        const auto x_plain = decode_tensor(x);
        const oracle::PlainModel plain = model.to_plain();
        std::vector<std::vector<double>> expect;
        if (pt.mode == Mode::cryptomoe || pt.mode == Mode::cipherprune) {
            expect = oracle::plain_balanced_moe(x_plain, plain, pt.dims.k_active, row.t);
        } else {
            expect = oracle::plain_moe(x_plain, plain, pt.dims.k_active);
        }
        row.max_abs_error = max_abs_diff(got, expect);
        row.oracle_pass = row.max_abs_error <= std::ldexp(1.0, -pt.dims.frac_bits + 4);
    }

    for (std::size_t i = 0; i < spec.nets.size(); ++i) {
        row.net_seconds[i] =
            latency_estimate(row.bytes, row.rounds, spec.nets[i].bandwidth_bps, spec.nets[i].rtt_s);
    }
    return row;
}

} // namespace

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open spec file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("spec '" + path + "': " + e.what());
    }

    ExperimentSpec spec;
    try {
        spec.kind = j.value("kind", std::string("moe"));
        if (spec.kind != "moe" && spec.kind != "packing") {
            throw ConfigError("spec '" + path + "': kind must be 'moe' or 'packing'");
        }
        spec.seed = j.value("seed", 1ull);
        spec.cost_model_path = j.value("cost_model", std::string());
        spec.oracle_check = j.value("oracle_check", true);
        spec.out_dir = j.value("out", spec.out_dir);
        spec.format = j.value("format", spec.format);
        if (spec.format != "json" && spec.format != "csv" && spec.format != "both") {
            throw ConfigError("spec '" + path + "': format must be json, csv or both");
        }

        if (j.contains("model_path")) {
            spec.model_path = j["model_path"].get<std::string>();
            MoeModel model = MoeModel::from_json_file(spec.model_path);
            spec.model_dims = model.dims;
            spec.model_seed = model.seed;
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            spec.model_dims.n_experts = m.value("n_experts", spec.model_dims.n_experts);
            spec.model_dims.k_active = m.value("k_active", spec.model_dims.k_active);
            spec.model_dims.m_tokens = m.value("m_tokens", spec.model_dims.m_tokens);
            spec.model_dims.d_model = m.value("d_model", spec.model_dims.d_model);
            spec.model_dims.d_ffn = m.value("d_ffn", spec.model_dims.d_ffn);
            spec.model_dims.t_factor = m.value("t_factor", spec.model_dims.t_factor);
            spec.model_dims.slot_count = m.value("slot_count", spec.model_dims.slot_count);
            spec.model_dims.frac_bits = m.value("frac_bits", spec.model_dims.frac_bits);
            spec.model_seed = m.value("seed", spec.model_seed);
        }

        if (j.contains("modes")) {
            spec.modes.clear();
            for (const auto& name : j["modes"]) {
                spec.modes.push_back(mode_from_name(name.get<std::string>()));
            }
        }
        if (j.contains("schemes")) {
            spec.schemes.clear();
            for (const auto& name : j["schemes"]) {
                packing_from_name(name.get<std::string>()); // validate
                spec.schemes.push_back(name.get<std::string>());
            }
        }

        if (j.contains("sweep")) {
            const auto& s = j["sweep"];
            auto read_axis = [&](const char* key) -> std::vector<std::size_t> {
                if (!s.contains(key)) return {};
                return s[key].get<std::vector<std::size_t>>();
            };
            spec.sweep.n = read_axis("n");
            spec.sweep.t = read_axis("t");
            spec.sweep.d1 = read_axis("d1");
            spec.sweep.d2 = read_axis("d2");
            spec.sweep.slot_count = read_axis("slot_count");
            spec.sweep.m = read_axis("m");
            spec.sweep.k = read_axis("k");
            if (s.contains("t_factor")) {
                spec.sweep.t_factor = s["t_factor"].get<std::vector<double>>();
            }
        }

        if (j.contains("net")) {
            spec.nets.clear();
            for (const auto& n : j["net"]) {
                spec.nets.push_back({n.at("name").get<std::string>(),
                                     n.at("bandwidth_bps").get<double>(),
                                     n.at("rtt_s").get<double>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("spec '" + path + "': " + e.what());
    }
    return spec;
}

Report run_experiment(const ExperimentSpec& spec) {
    Report report;
    report.spec_kind = spec.kind;
    report.seed = spec.seed;
    report.nets = spec.nets;

    if (spec.kind == "packing") {
        std::vector<PackingPoint> points;
        for (std::size_t n : axis_or<std::size_t>(spec.sweep.n, 2))
            for (std::size_t t : axis_or<std::size_t>(spec.sweep.t, 2))
                for (std::size_t d1 : axis_or<std::size_t>(spec.sweep.d1, 4))
                    for (std::size_t d2 : axis_or<std::size_t>(spec.sweep.d2, 4))
                        for (std::size_t sc : axis_or<std::size_t>(spec.sweep.slot_count, 8))
                            for (const auto& scheme : spec.schemes)
                                points.push_back({n, t, d1, d2, sc, scheme});

        report.rows.resize(points.size());
        run_indexed(points.size(), [&](std::size_t i) {
            report.rows[i] = run_packing_row(spec, i, points[i]);
        });
        return report;
    }

    std::vector<MoePoint> points;
    std::vector<std::size_t> point_ids;
    std::size_t point_id = 0;
    for (std::size_t m : axis_or(spec.sweep.m, spec.model_dims.m_tokens))
        for (std::size_t n : axis_or(spec.sweep.n, spec.model_dims.n_experts))
            for (std::size_t k : axis_or(spec.sweep.k, spec.model_dims.k_active))
                for (double tf : axis_or(spec.sweep.t_factor, spec.model_dims.t_factor))
                    for (std::size_t sc : axis_or(spec.sweep.slot_count, spec.model_dims.slot_count)) {
                        MoeDims dims = spec.model_dims;
                        dims.m_tokens = m;
                        dims.n_experts = n;
                        dims.k_active = k;
                        dims.t_factor = tf;
                        dims.slot_count = sc;
                        for (Mode mode : spec.modes) {
                            points.push_back({dims, mode});
                            point_ids.push_back(point_id);
                        }
                        ++point_id;
                    }

    report.rows.resize(points.size());
    run_indexed(points.size(), [&](std::size_t i) {
        report.rows[i] = run_moe_row(spec, i, point_ids[i], points[i]);
    });
    return report;
}

Report run_and_write(const ExperimentSpec& spec, const std::string& out_dir,
                     const std::string& format) {
    if (format != "json" && format != "csv" && format != "both") {
        throw ConfigError("format must be json, csv or both");
    }
    Report report = run_experiment(spec);
    std::filesystem::create_directories(out_dir);
    if (format == "json" || format == "both") {
        std::ofstream out(out_dir + "/report.json", std::ios::binary);
        out << report.to_json();
    }
    if (format == "csv" || format == "both") {
        std::ofstream out(out_dir + "/report.csv", std::ios::binary);
        out << report.to_csv();
    }
    return report;
}

} // namespace moe2pc

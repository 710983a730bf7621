#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace moe2pc {

struct NetPreset {
    std::string name;
    double bandwidth_bps = 0.0;
    double rtt_s = 0.0;

    bool operator==(const NetPreset&) const = default;
};

inline NetPreset lan_preset() { return {"lan", 3e9, 0.0002}; }
inline NetPreset wan_preset() { return {"wan", 4e8, 0.040}; }

// Analytic estimate only: serialized bytes over the link plus one RTT per
// protocol round. Not a wall-clock reproduction.
double latency_estimate(std::uint64_t bytes, std::uint64_t rounds, double bandwidth_bps,
                        double rtt_s);

// One row per executed run. Fields not applicable to a row's kind stay zero;
// docs/report-schema.md pins the exact semantics of every column.
struct ReportRow {
    std::size_t index = 0;
    std::string kind; // "moe" or "packing"
    std::string mode; // mode name (moe) or packing scheme (packing)

    std::size_t n = 0, k = 0, m = 0, d = 0, dffn = 0, t = 0;
    std::size_t d1 = 0, d2 = 0;
    std::size_t slot_count = 0;
    int frac_bits = 0;

    std::uint64_t bytes = 0, rounds = 0;
    std::uint64_t rotations = 0, baby_rotations = 0, giant_rotations = 0;
    std::uint64_t pt_multiplies = 0, ct_adds = 0;
    std::uint64_t topk_compares = 0;

    std::uint64_t formula_rotations = 0;
    bool formula_match = true;

    double max_abs_error = 0.0;
    bool oracle_checked = false;
    bool oracle_pass = true;

    bool skipped = false;
    std::string skip_reason;

    std::vector<double> net_seconds; // aligned with the report's net presets

    bool passed() const { return skipped || (formula_match && oracle_pass); }
    bool operator==(const ReportRow&) const = default;
};

struct Report {
    std::string spec_kind;
    std::uint64_t seed = 0;
    std::vector<NetPreset> nets;
    std::vector<ReportRow> rows;

    bool all_passed() const;
    std::string to_json() const;
    static Report from_json(const std::string& text);
    std::string to_csv() const;

    bool operator==(const Report&) const = default;
};

} // namespace moe2pc

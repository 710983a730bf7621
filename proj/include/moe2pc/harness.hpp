#pragma once

#include <optional>
#include <string>
#include <vector>

#include "moe2pc/model.hpp"
#include "moe2pc/report.hpp"

namespace moe2pc {

// Sweep axes; empty axes collapse to the spec's base value.
struct SweepAxes {
    std::vector<std::size_t> n, t, d1, d2, slot_count; // packing
    std::vector<std::size_t> m, k;                     // moe
    std::vector<double> t_factor;                      // moe
};

struct ExperimentSpec {
    std::string kind = "moe"; // "moe" or "packing"
    std::uint64_t seed = 1;
    std::string cost_model_path;

    // moe experiments
    MoeDims model_dims;
    std::uint64_t model_seed = 1;
    std::string model_path;
    std::vector<Mode> modes = {Mode::cryptomoe};

    // packing experiments
    std::vector<std::string> schemes = {"bolt", "batch"};

    SweepAxes sweep;
    bool oracle_check = true;
    std::vector<NetPreset> nets = {lan_preset(), wan_preset()};
    std::string out_dir = "out";
    std::string format = "both";

    static ExperimentSpec from_json_file(const std::string& path);
};

// Executes every sweep point (in parallel sessions, capped by MOE2PC_THREADS),
// validates against the oracles and returns the assembled report. Row order
// follows sweep-point order regardless of completion order.
Report run_experiment(const ExperimentSpec& spec);

// Runs and writes report.json / report.csv under out_dir per format
// ("json", "csv" or "both"). Returns the report.
Report run_and_write(const ExperimentSpec& spec, const std::string& out_dir,
                     const std::string& format);

} // namespace moe2pc

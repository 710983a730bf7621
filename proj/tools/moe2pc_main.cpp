#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "moe2pc/harness.hpp"

using namespace moe2pc;

int main(int argc, char** argv) {
    CLI::App app{"Two-party MoE inference simulator: runs a spec file, checks the "
                 "results against plaintext references and writes cost reports."};

    std::string spec_path;
    std::string mode_override;
    std::string cost_model_path;
    std::string out_dir = "out";
    std::string format = "both";
    std::string oracle_check = "on";
    std::string net_spec;
    std::uint64_t seed = 0;
    bool lan = false, wan = false;

    app.add_option("--spec", spec_path, "Experiment spec (JSON)")->required();
    app.add_option("--mode", mode_override, "Run a single mode: cryptomoe|dense|insecure|cipherprune");
    auto* seed_opt = app.add_option("--seed", seed, "Override the spec seed");
    app.add_option("--cost-model", cost_model_path, "Cost model file (JSON)");
    auto* out_opt = app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    auto* fmt_opt =
        app.add_option("--format", format, "Report format: csv|json|both")->capture_default_str();
    app.add_option("--oracle-check", oracle_check, "on|off")->capture_default_str();
    app.add_flag("--lan", lan, "Use only the LAN preset (3 Gbps, 0.2 ms)");
    app.add_flag("--wan", wan, "Use only the WAN preset (400 Mbps, 40 ms)");
    app.add_option("--net", net_spec, "Custom network preset: <bits_per_s>,<rtt_s>");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentSpec spec = ExperimentSpec::from_json_file(spec_path);
        if (seed_opt->count() > 0) spec.seed = seed;
        if (out_opt->count() > 0) spec.out_dir = out_dir;
        if (fmt_opt->count() > 0) spec.format = format;
        if (!mode_override.empty()) spec.modes = {mode_from_name(mode_override)};
        if (!cost_model_path.empty()) spec.cost_model_path = cost_model_path;
        if (oracle_check == "off") spec.oracle_check = false;
        else if (oracle_check != "on") throw ConfigError("--oracle-check takes on|off");

        if (lan) spec.nets = {lan_preset()};
        if (wan) spec.nets = {wan_preset()};
        if (!net_spec.empty()) {
            const auto comma = net_spec.find(',');
            if (comma == std::string::npos) throw ConfigError("--net takes <bits_per_s>,<rtt_s>");
            spec.nets = {{"net", std::stod(net_spec.substr(0, comma)),
                          std::stod(net_spec.substr(comma + 1))}};
        }

        Report report = run_and_write(spec, spec.out_dir, spec.format);
        std::size_t failed = 0, skipped = 0;
        for (const auto& row : report.rows) {
            if (row.skipped) {
                ++skipped;
                std::printf("row %zu [%s %s] skipped: %s\n", row.index, row.kind.c_str(),
                            row.mode.c_str(), row.skip_reason.c_str());
                continue;
            }
            if (!row.passed()) ++failed;
            std::printf("row %zu [%s %s] bytes=%llu rounds=%llu rotations=%llu %s\n", row.index,
                        row.kind.c_str(), row.mode.c_str(),
                        static_cast<unsigned long long>(row.bytes),
                        static_cast<unsigned long long>(row.rounds),
                        static_cast<unsigned long long>(row.rotations),
                        row.passed() ? "ok" : "FAIL");
        }
        std::printf("%zu rows, %zu skipped, %zu failed; reports in %s\n", report.rows.size(),
                    skipped, failed, spec.out_dir.c_str());
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

#include "moe2pc/report.hpp"

#include <cstdio>

#include <json.hpp>

#include "moe2pc/errors.hpp"

namespace moe2pc {

double latency_estimate(std::uint64_t bytes, std::uint64_t rounds, double bandwidth_bps,
                        double rtt_s) {
    if (bandwidth_bps <= 0.0) throw ConfigError("latency_estimate needs positive bandwidth");
    return static_cast<double>(bytes) * 8.0 / bandwidth_bps +
           static_cast<double>(rounds) * rtt_s;
}

bool Report::all_passed() const {
    for (const auto& r : rows)
        if (!r.passed()) return false;
    return true;
}

namespace {

nlohmann::json row_to_json(const ReportRow& r) {
    nlohmann::json j;
    j["index"] = r.index;
    j["kind"] = r.kind;
    j["mode"] = r.mode;
    j["n"] = r.n;
    j["k"] = r.k;
    j["m"] = r.m;
    j["d"] = r.d;
    j["dffn"] = r.dffn;
    j["t"] = r.t;
    j["d1"] = r.d1;
    j["d2"] = r.d2;
    j["slot_count"] = r.slot_count;
    j["frac_bits"] = r.frac_bits;
    j["bytes"] = r.bytes;
    j["rounds"] = r.rounds;
    j["rotations"] = r.rotations;
    j["baby_rotations"] = r.baby_rotations;
    j["giant_rotations"] = r.giant_rotations;
    j["pt_multiplies"] = r.pt_multiplies;
    j["ct_adds"] = r.ct_adds;
    j["topk_compares"] = r.topk_compares;
    j["formula_rotations"] = r.formula_rotations;
    j["formula_match"] = r.formula_match;
    j["max_abs_error"] = r.max_abs_error;
    j["oracle_checked"] = r.oracle_checked;
    j["oracle_pass"] = r.oracle_pass;
    j["skipped"] = r.skipped;
    j["skip_reason"] = r.skip_reason;
    j["net_seconds"] = r.net_seconds;
    return j;
}

ReportRow row_from_json(const nlohmann::json& j) {
    ReportRow r;
    r.index = j.at("index").get<std::size_t>();
    r.kind = j.at("kind").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.k = j.at("k").get<std::size_t>();
    r.m = j.at("m").get<std::size_t>();
    r.d = j.at("d").get<std::size_t>();
    r.dffn = j.at("dffn").get<std::size_t>();
    r.t = j.at("t").get<std::size_t>();
    r.d1 = j.at("d1").get<std::size_t>();
    r.d2 = j.at("d2").get<std::size_t>();
    r.slot_count = j.at("slot_count").get<std::size_t>();
    r.frac_bits = j.at("frac_bits").get<int>();
    r.bytes = j.at("bytes").get<std::uint64_t>();
    r.rounds = j.at("rounds").get<std::uint64_t>();
    r.rotations = j.at("rotations").get<std::uint64_t>();
    r.baby_rotations = j.at("baby_rotations").get<std::uint64_t>();
    r.giant_rotations = j.at("giant_rotations").get<std::uint64_t>();
    r.pt_multiplies = j.at("pt_multiplies").get<std::uint64_t>();
    r.ct_adds = j.at("ct_adds").get<std::uint64_t>();
    r.topk_compares = j.at("topk_compares").get<std::uint64_t>();
    r.formula_rotations = j.at("formula_rotations").get<std::uint64_t>();
    r.formula_match = j.at("formula_match").get<bool>();
    r.max_abs_error = j.at("max_abs_error").get<double>();
    r.oracle_checked = j.at("oracle_checked").get<bool>();
    r.oracle_pass = j.at("oracle_pass").get<bool>();
    r.skipped = j.at("skipped").get<bool>();
    r.skip_reason = j.at("skip_reason").get<std::string>();
    r.net_seconds = j.at("net_seconds").get<std::vector<double>>();
    return r;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + "\"";
}

} // namespace

std::string Report::to_json() const {
    nlohmann::json j;
    j["spec_kind"] = spec_kind;
    j["seed"] = seed;
    nlohmann::json jn = nlohmann::json::array();
    for (const auto& net : nets) {
        jn.push_back({{"name", net.name},
                      {"bandwidth_bps", net.bandwidth_bps},
                      {"rtt_s", net.rtt_s}});
    }
    j["nets"] = jn;
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& r : rows) jr.push_back(row_to_json(r));
    j["rows"] = jr;
    return j.dump(2) + "\n";
}

Report Report::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("report parse: ") + e.what());
    }
    Report rep;
    rep.spec_kind = j.at("spec_kind").get<std::string>();
    rep.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jn : j.at("nets")) {
        rep.nets.push_back({jn.at("name").get<std::string>(),
                            jn.at("bandwidth_bps").get<double>(), jn.at("rtt_s").get<double>()});
    }
    for (const auto& jr : j.at("rows")) rep.rows.push_back(row_from_json(jr));
    return rep;
}

std::string Report::to_csv() const {
    std::string out =
        "index,kind,mode,n,k,m,d,dffn,t,d1,d2,slot_count,frac_bits,bytes,rounds,rotations,"
        "baby_rotations,giant_rotations,pt_multiplies,ct_adds,topk_compares,formula_rotations,"
        "formula_match,max_abs_error,oracle_checked,oracle_pass,skipped,skip_reason";
    for (const auto& net : nets) out += "," + net.name + "_seconds";
    out += "\n";
    for (const auto& r : rows) {
        out += std::to_string(r.index) + "," + r.kind + "," + r.mode + "," + std::to_string(r.n) +
               "," + std::to_string(r.k) + "," + std::to_string(r.m) + "," + std::to_string(r.d) +
               "," + std::to_string(r.dffn) + "," + std::to_string(r.t) + "," +
               std::to_string(r.d1) + "," + std::to_string(r.d2) + "," +
               std::to_string(r.slot_count) + "," + std::to_string(r.frac_bits) + "," +
               std::to_string(r.bytes) + "," + std::to_string(r.rounds) + "," +
               std::to_string(r.rotations) + "," + std::to_string(r.baby_rotations) + "," +
               std::to_string(r.giant_rotations) + "," + std::to_string(r.pt_multiplies) + "," +
               std::to_string(r.ct_adds) + "," + std::to_string(r.topk_compares) + "," +
               std::to_string(r.formula_rotations) + "," + (r.formula_match ? "1" : "0") + "," +
               fmt_double(r.max_abs_error) + "," + (r.oracle_checked ? "1" : "0") + "," +
               (r.oracle_pass ? "1" : "0") + "," + (r.skipped ? "1" : "0") + "," +
               csv_field(r.skip_reason);
        for (double s : r.net_seconds) out += "," + fmt_double(s);
        out += "\n";
    }
    return out;
}

} // namespace moe2pc

#include "moe2pc/costmodel.hpp"

#include <fstream>

#include <json.hpp>

#include "moe2pc/errors.hpp"

namespace moe2pc {

CostModel CostModel::defaults() {
    CostModel cm;
    cm.table_ = {
        {labels::equal, {32, 2}},
        {labels::mux, {16, 1}},
        {labels::mul, {16, 1}},
        {labels::topk_compareswap, {64, 1}},
        {labels::softmax, {64, 4}},
        {labels::divpub, {24, 2}},
        {labels::he_matmul_ct, {16, 2}},
        {labels::silu, {48, 3}},
        {labels::trunc, {0, 0}},
    };
    return cm;
}

CostModel CostModel::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cost model file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("cost model '" + path + "': " + e.what());
    }
    CostModel cm = defaults();
    if (!j.is_object()) throw ConfigError("cost model '" + path + "': top level must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (cm.table_.find(it.key()) == cm.table_.end()) {
            throw ConfigError("cost model '" + path + "': unknown primitive label '" + it.key() +
                              "'");
        }
        const auto& entry = it.value();
        if (!entry.is_object() || !entry.contains("bytes_per_element") || !entry.contains("rounds")) {
            throw ConfigError("cost model '" + path + "': entry '" + it.key() +
                              "' needs fields bytes_per_element and rounds");
        }
        std::int64_t bpe = entry["bytes_per_element"].get<std::int64_t>();
        std::int64_t rounds = entry["rounds"].get<std::int64_t>();
        if (bpe < 0 || rounds < 0) {
            throw ConfigError("cost model '" + path + "': entry '" + it.key() +
                              "' must be non-negative");
        }
        cm.table_[it.key()] = {static_cast<std::uint64_t>(bpe), static_cast<std::uint32_t>(rounds)};
    }
    return cm;
}

const PrimitiveCost& CostModel::at(const std::string& label) const {
    auto it = table_.find(label);
    if (it == table_.end()) throw ConfigError("no cost model entry for primitive '" + label + "'");
    return it->second;
}

} // namespace moe2pc

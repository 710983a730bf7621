#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace moe2pc {

// Transcript labels. The cost-model file keys and the per-entry labels use
// these exact strings; "open", "declassify" and "he-request" carry real
// payload sizes, everything else is metered through the cost model.
namespace labels {
inline constexpr const char* equal = "equal";
inline constexpr const char* mux = "mux";
inline constexpr const char* mul = "mul";
inline constexpr const char* topk_compareswap = "topk-compareswap";
inline constexpr const char* softmax = "softmax";
inline constexpr const char* divpub = "divpub";
inline constexpr const char* he_matmul_ct = "he-matmul-ct";
inline constexpr const char* silu = "silu";
inline constexpr const char* trunc = "trunc";
inline constexpr const char* open = "open";
inline constexpr const char* declassify = "declassify";
} // namespace labels

struct PrimitiveCost {
    std::uint64_t bytes_per_element = 0;
    std::uint32_t rounds = 0;

    bool operator==(const PrimitiveCost&) const = default;
};

// Per-primitive byte/round surcharges standing in for the OT-based protocols
// behind the ideal functionalities. The defaults are order-of-magnitude
// placeholders, not measured values; override them via a JSON file.
class CostModel {
public:
    static CostModel defaults();
    static CostModel from_json_file(const std::string& path);

    const PrimitiveCost& at(const std::string& label) const;
    const std::map<std::string, PrimitiveCost>& table() const { return table_; }

private:
    std::map<std::string, PrimitiveCost> table_;
};

} // namespace moe2pc

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace moe2pc {

enum class PartyId : int { p0 = 0, p1 = 1 };

inline const char* party_name(PartyId p) { return p == PartyId::p0 ? "P0" : "P1"; }

struct TranscriptEntry {
    std::uint64_t round = 0;
    PartyId sender = PartyId::p0;
    std::string label;
    std::uint64_t bytes = 0;

    bool operator==(const TranscriptEntry&) const = default;
};

// Ordered record of every inter-party message. Byte lengths come from actual
// payload sizes for real exchanges and from the cost model for ideal
// functionalities. Equality of entry sequences across different inputs is the
// operational privacy check.
class Transcript {
public:
    void record(PartyId sender, std::string label, std::uint64_t bytes) {
        total_bytes_ += bytes;
        entries_.push_back({round_, sender, std::move(label), bytes});
    }

    void advance_rounds(std::uint32_t k) { round_ += k; }

    const std::vector<TranscriptEntry>& entries() const { return entries_; }
    std::uint64_t total_bytes() const { return total_bytes_; }
    std::uint64_t rounds() const { return round_; }

    std::uint64_t topk_compares() const { return topk_compares_; }
    void add_topk_compares(std::uint64_t n) { topk_compares_ += n; }

    std::uint64_t bytes_for_label(const std::string& label) const {
        std::uint64_t sum = 0;
        for (const auto& e : entries_)
            if (e.label == label) sum += e.bytes;
        return sum;
    }

    // Shape equality: same (round, sender, label, byteLength) sequence.
    bool same_shape(const Transcript& other) const { return entries_ == other.entries_; }

    void clear() {
        entries_.clear();
        total_bytes_ = 0;
        round_ = 0;
        topk_compares_ = 0;
    }

private:
    std::vector<TranscriptEntry> entries_;
    std::uint64_t total_bytes_ = 0;
    std::uint64_t round_ = 0;
    std::uint64_t topk_compares_ = 0;
};

} // namespace moe2pc

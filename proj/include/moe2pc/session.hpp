#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "moe2pc/channel.hpp"
#include "moe2pc/costmodel.hpp"
#include "moe2pc/dealer.hpp"
#include "moe2pc/slots.hpp"
#include "moe2pc/transcript.hpp"

namespace moe2pc {

struct SessionConfig {
    std::uint64_t seed = 1;
    bool insecure_allowed = false; // gates declassify; only the insecure baseline sets it
    bool debug_checks = false;     // extra reconstruction-side assertions, off in metered runs
    CostModel cost = CostModel::defaults();
    std::uint64_t triple_budget_elements = 1ull << 40;
};

class Session;

// Per-party view of a running protocol. Both party tasks execute the same
// SPMD code, so the step counters stay aligned without coordination.
struct PartyCtx {
    PartyId party;
    Channel& chan;
    Session& session;
    std::uint64_t step = 0;

    bool is_p0() const { return party == PartyId::p0; }
    std::uint64_t next_step() { return step++; }

    // Cost-model metered primitive: one entry, rounds from the table. P0 records
    // for both parties; entries depend on public shape information only.
    void meter_ideal(const char* label, std::uint64_t numel);
    // Simultaneous exchange of real payloads, one round.
    void meter_exchange(const char* label, std::uint64_t bytes_p0, std::uint64_t bytes_p1);
    // he-matmul ciphertext traffic: request cts from P0, response cts from P1.
    void meter_he(std::uint64_t request_cts, std::uint64_t response_cts, std::uint64_t slot_count);
};

// One two-party protocol session: duplex channel, trusted dealer, transcript,
// rotation counters. run() executes the body as two concurrent party tasks.
class Session {
public:
    explicit Session(SessionConfig cfg);
    Session(SessionConfig cfg, std::unique_ptr<Channel> ch0, std::unique_ptr<Channel> ch1);
    ~Session();

    void run(const std::function<void(PartyCtx&)>& body);

    const SessionConfig& config() const { return cfg_; }
    Transcript& transcript() { return transcript_; }
    const Transcript& transcript() const { return transcript_; }
    RotationCounter& counters() { return counters_; }
    TrustedDealer& dealer() { return dealer_; }
    std::uint64_t tag() const { return tag_; }

    bool is_open() const { return open_; }
    void close();

    // Harness-side step allocation (input sharing happens outside run()).
    std::uint64_t take_harness_step() { return step_base_++; }

private:
    SessionConfig cfg_;
    TrustedDealer dealer_;
    Transcript transcript_;
    RotationCounter counters_;
    std::unique_ptr<Channel> ch0_, ch1_;
    std::uint64_t tag_;
    std::uint64_t step_base_ = 0;
    bool open_ = true;
};

} // namespace moe2pc

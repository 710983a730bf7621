#include "moe2pc/session.hpp"

#include <atomic>
#include <exception>
#include <thread>

#include "moe2pc/errors.hpp"

namespace moe2pc {

namespace {
std::atomic<std::uint64_t> g_session_tag{1};
}

void PartyCtx::meter_ideal(const char* label, std::uint64_t numel) {
    next_step(); // keep both parties' step streams aligned even on P1
    if (!is_p0()) return;
    const PrimitiveCost& c = session.config().cost.at(label);
    session.transcript().record(PartyId::p0, label, numel * c.bytes_per_element);
    session.transcript().advance_rounds(c.rounds);
}

void PartyCtx::meter_exchange(const char* label, std::uint64_t bytes_p0, std::uint64_t bytes_p1) {
    if (!is_p0()) return;
    session.transcript().record(PartyId::p0, label, bytes_p0);
    session.transcript().record(PartyId::p1, label, bytes_p1);
    session.transcript().advance_rounds(1);
}

void PartyCtx::meter_he(std::uint64_t request_cts, std::uint64_t response_cts,
                        std::uint64_t slot_count) {
    if (!is_p0()) return;
    const PrimitiveCost& c = session.config().cost.at(labels::he_matmul_ct);
    session.transcript().record(PartyId::p0, labels::he_matmul_ct,
                                request_cts * slot_count * c.bytes_per_element);
    session.transcript().record(PartyId::p1, labels::he_matmul_ct,
                                response_cts * slot_count * c.bytes_per_element);
    session.transcript().advance_rounds(c.rounds);
}

Session::Session(SessionConfig cfg)
    : cfg_(cfg), dealer_(cfg.seed, cfg.triple_budget_elements),
      tag_(g_session_tag.fetch_add(1)) {
    auto [a, b] = make_local_pipe();
    ch0_ = std::move(a);
    ch1_ = std::move(b);
}

Session::Session(SessionConfig cfg, std::unique_ptr<Channel> ch0, std::unique_ptr<Channel> ch1)
    : cfg_(cfg), dealer_(cfg.seed, cfg.triple_budget_elements), ch0_(std::move(ch0)),
      ch1_(std::move(ch1)), tag_(g_session_tag.fetch_add(1)) {}

Session::~Session() {
    if (ch0_) ch0_->close();
    if (ch1_) ch1_->close();
}

void Session::run(const std::function<void(PartyCtx&)>& body) {
    if (!open_) throw SessionClosedError("run() on closed session " + std::to_string(tag_));

    std::exception_ptr err[2] = {nullptr, nullptr};
    std::uint64_t end_step = step_base_;

    auto party_main = [&](PartyId p) {
        Channel& ch = p == PartyId::p0 ? *ch0_ : *ch1_;
        PartyCtx ctx{p, ch, *this, step_base_};
        try {
            body(ctx);
            if (p == PartyId::p0) end_step = ctx.step;
        } catch (...) {
            err[static_cast<int>(p)] = std::current_exception();
            // Unblock the peer if it is parked on a recv or a dealer rendezvous.
            ch0_->close();
            ch1_->close();
            dealer_.poison();
        }
    };

    std::thread t1([&] { party_main(PartyId::p1); });
    party_main(PartyId::p0);
    t1.join();

    step_base_ = end_step;
    // Surface the root cause: a party killed by the peer's failure only sees a
    // closed channel, which is less informative than the peer's exception.
    if (err[0] && err[1]) {
        try {
            std::rethrow_exception(err[0]);
        } catch (const ChannelClosedError&) {
            std::rethrow_exception(err[1]);
        } catch (...) {
            throw;
        }
    }
    if (err[0]) std::rethrow_exception(err[0]);
    if (err[1]) std::rethrow_exception(err[1]);
}

void Session::close() {
    open_ = false;
    if (ch0_) ch0_->close();
    if (ch1_) ch1_->close();
}

} // namespace moe2pc

#include "moe2pc/dealer.hpp"

#include "moe2pc/errors.hpp"

namespace moe2pc {

namespace {

RingTensor stream_tensor(CounterRng& g, std::vector<std::size_t> shape, int scale) {
    RingTensor t(std::move(shape), scale);
    for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = g.next();
    return t;
}

} // namespace

TrustedDealer::MatmulTripleHalf TrustedDealer::matmul_triple(PartyId party, std::uint64_t step,
                                                             std::size_t m, std::size_t p,
                                                             std::size_t q) {
    const std::uint64_t elems = m * p + p * q + m * q;
    auto& issued = issued_[static_cast<int>(party)];
    if (issued.fetch_add(elems) + elems > triple_budget_) {
        throw TripleExhaustedError("triple budget of " + std::to_string(triple_budget_) +
                                   " ring elements exceeded");
    }

    CounterRng g(mix_seed(seed_, mix_seed(0x7269706c65ULL, step)));
    RingTensor u = stream_tensor(g, {m, p}, 0);
    RingTensor v = stream_tensor(g, {p, q}, 0);
    RingTensor w = plain_matmul(u, v);
    w.set_scale(0);
    RingTensor mu = stream_tensor(g, {m, p}, 0);
    RingTensor mv = stream_tensor(g, {p, q}, 0);
    RingTensor mw = stream_tensor(g, {m, q}, 0);
    if (party == PartyId::p1) return {mu, mv, mw};
    return {u - mu, v - mv, w - mw};
}

std::vector<ring_t> TrustedDealer::ideal_eval(
    PartyId party, std::uint64_t step, const std::vector<ring_t>& half,
    const std::function<std::vector<ring_t>(std::vector<ring_t>)>& f) {
    const int me = static_cast<int>(party);
    std::shared_ptr<Pending> slot;
    {
        std::unique_lock<std::mutex> lock(mu_);
        if (poisoned_) throw ChannelClosedError("dealer poisoned");
        auto& entry = pending_[step];
        if (!entry) entry = std::make_shared<Pending>();
        slot = entry;
        if (slot->arrived[me]) {
            throw ChannelClosedError("duplicate ideal_eval step " + std::to_string(step));
        }
        slot->halves[me] = half;
        slot->arrived[me] = true;

        if (slot->arrived[0] && slot->arrived[1]) {
            if (slot->halves[0].size() != slot->halves[1].size()) {
                poisoned_ = true;
                cv_.notify_all();
                throw ShapeError("ideal_eval halves disagree at step " + std::to_string(step));
            }
            std::vector<ring_t> x(slot->halves[0].size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] = slot->halves[0][i] + slot->halves[1][i];
            }
            std::vector<ring_t> y;
            try {
                y = f(std::move(x));
            } catch (...) {
                poisoned_ = true;
                cv_.notify_all();
                throw;
            }
            CounterRng g(mix_seed(seed_, mix_seed(0x696465616cULL, step)));
            slot->out[1].resize(y.size());
            slot->out[0].resize(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) {
                ring_t r = g.next();
                slot->out[1][i] = r;
                slot->out[0][i] = y[i] - r;
            }
            slot->computed = true;
            cv_.notify_all();
        } else {
            cv_.wait(lock, [&] { return slot->computed || poisoned_; });
            if (!slot->computed) throw ChannelClosedError("dealer poisoned while waiting");
        }
        std::vector<ring_t> mine = std::move(slot->out[me]);
        if (++slot->consumed == 2) pending_.erase(step);
        return mine;
    }
}

RingTensor TrustedDealer::uniform_tensor(std::uint64_t step, std::vector<std::size_t> shape,
                                         int scale) const {
    CounterRng g(mix_seed(seed_, mix_seed(0x6d61736bULL, step)));
    return stream_tensor(g, std::move(shape), scale);
}

std::vector<RingTensor> TrustedDealer::uniform_tensor_set(
    std::uint64_t step, const std::vector<std::vector<std::size_t>>& shapes, int scale) const {
    CounterRng g(mix_seed(seed_, mix_seed(0x6d61736bULL, step)));
    std::vector<RingTensor> out;
    out.reserve(shapes.size());
    for (const auto& shape : shapes) out.push_back(stream_tensor(g, shape, scale));
    return out;
}

void TrustedDealer::poison() {
    std::lock_guard<std::mutex> lock(mu_);
    poisoned_ = true;
    cv_.notify_all();
}

} // namespace moe2pc

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "moe2pc/ring.hpp"

namespace moe2pc {

// One endpoint of a duplex party-to-party link. Messages are length-prefixed
// frames; the in-process pipe keeps whole frames in a queue, the socket
// transport writes a u32-le length followed by the payload.
class Channel {
public:
    virtual ~Channel() = default;
    virtual void send(std::span<const std::uint8_t> frame) = 0;
    virtual std::vector<std::uint8_t> recv() = 0;
    virtual void close() = 0;

    void send_u64s(std::span<const std::uint64_t> words);
    std::vector<std::uint64_t> recv_u64s();
};

// In-process duplex pipe; returns the two endpoints.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_local_pipe();

// Loopback TCP transport with the same framing. connect_loopback_pair() spawns
// a listener on 127.0.0.1:0 and returns both connected endpoints.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> connect_loopback_pair();

} // namespace moe2pc

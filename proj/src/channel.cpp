#include "moe2pc/channel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <stdexcept>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "moe2pc/errors.hpp"

namespace moe2pc {

void Channel::send_u64s(std::span<const std::uint64_t> words) {
    std::vector<std::uint8_t> frame(words.size() * 8);
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::uint64_t w = words[i];
        for (int b = 0; b < 8; ++b) frame[i * 8 + b] = static_cast<std::uint8_t>(w >> (8 * b));
    }
    send(frame);
}

std::vector<std::uint64_t> Channel::recv_u64s() {
    std::vector<std::uint8_t> frame = recv();
    if (frame.size() % 8 != 0) throw ChannelClosedError("frame is not a whole number of words");
    std::vector<std::uint64_t> words(frame.size() / 8);
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::uint64_t w = 0;
        for (int b = 0; b < 8; ++b) w |= static_cast<std::uint64_t>(frame[i * 8 + b]) << (8 * b);
        words[i] = w;
    }
    return words;
}

namespace {

struct PipeShared {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::vector<std::uint8_t>> to0, to1;
    bool closed = false;
};

class LocalChannel final : public Channel {
public:
    LocalChannel(std::shared_ptr<PipeShared> shared, int side) : shared_(std::move(shared)), side_(side) {}

    void send(std::span<const std::uint8_t> frame) override {
        std::lock_guard<std::mutex> lock(shared_->mu);
        if (shared_->closed) throw ChannelClosedError("send on closed pipe");
        auto& q = side_ == 0 ? shared_->to1 : shared_->to0;
        q.emplace_back(frame.begin(), frame.end());
        shared_->cv.notify_all();
    }

    std::vector<std::uint8_t> recv() override {
        std::unique_lock<std::mutex> lock(shared_->mu);
        auto& q = side_ == 0 ? shared_->to0 : shared_->to1;
        shared_->cv.wait(lock, [&] { return !q.empty() || shared_->closed; });
        if (q.empty()) throw ChannelClosedError("recv on closed pipe");
        std::vector<std::uint8_t> frame = std::move(q.front());
        q.pop_front();
        return frame;
    }

    void close() override {
        std::lock_guard<std::mutex> lock(shared_->mu);
        shared_->closed = true;
        shared_->cv.notify_all();
    }

private:
    std::shared_ptr<PipeShared> shared_;
    int side_;
};

class SocketChannel final : public Channel {
public:
    explicit SocketChannel(int fd) : fd_(fd) {}
    ~SocketChannel() override { close(); }

    // close() may race between the two party tasks on a failure path.

    void send(std::span<const std::uint8_t> frame) override {
        std::uint8_t hdr[4];
        const std::uint32_t len = static_cast<std::uint32_t>(frame.size());
        for (int b = 0; b < 4; ++b) hdr[b] = static_cast<std::uint8_t>(len >> (8 * b));
        write_all(hdr, 4);
        write_all(frame.data(), frame.size());
    }

    std::vector<std::uint8_t> recv() override {
        std::uint8_t hdr[4];
        read_all(hdr, 4);
        std::uint32_t len = 0;
        for (int b = 0; b < 4; ++b) len |= static_cast<std::uint32_t>(hdr[b]) << (8 * b);
        std::vector<std::uint8_t> frame(len);
        read_all(frame.data(), len);
        return frame;
    }

    void close() override {
        const int fd = fd_.exchange(-1);
        if (fd >= 0) {
            ::shutdown(fd, SHUT_RDWR);
            ::close(fd);
        }
    }

private:
    void write_all(const std::uint8_t* p, std::size_t n) {
        while (n > 0) {
            ssize_t w = ::send(fd_.load(), p, n, 0);
            if (w <= 0) throw ChannelClosedError("socket send failed");
            p += w;
            n -= static_cast<std::size_t>(w);
        }
    }

    void read_all(std::uint8_t* p, std::size_t n) {
        while (n > 0) {
            ssize_t r = ::recv(fd_.load(), p, n, 0);
            if (r <= 0) throw ChannelClosedError("socket recv failed");
            p += r;
            n -= static_cast<std::size_t>(r);
        }
    }

    std::atomic<int> fd_;
};

} // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_local_pipe() {
    auto shared = std::make_shared<PipeShared>();
    return {std::make_unique<LocalChannel>(shared, 0), std::make_unique<LocalChannel>(shared, 1)};
}

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> connect_loopback_pair() {
    int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listener < 0) throw ChannelClosedError("cannot create listener socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listener, 1) != 0) {
        ::close(listener);
        throw ChannelClosedError("cannot bind loopback listener");
    }
    socklen_t alen = sizeof(addr);
    ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &alen);

    int client = ::socket(AF_INET, SOCK_STREAM, 0);
    if (client < 0 || ::connect(client, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listener);
        if (client >= 0) ::close(client);
        throw ChannelClosedError("cannot connect to loopback listener");
    }
    int server = ::accept(listener, nullptr, nullptr);
    ::close(listener);
    if (server < 0) {
        ::close(client);
        throw ChannelClosedError("accept failed");
    }
    int one = 1;
    ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    ::setsockopt(server, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return {std::make_unique<SocketChannel>(client), std::make_unique<SocketChannel>(server)};
}

} // namespace moe2pc

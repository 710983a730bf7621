#pragma once

#include <stdexcept>
#include <string>

namespace moe2pc {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ScaleError : std::runtime_error {
    explicit ScaleError(const std::string& msg) : std::runtime_error("scale error: " + msg) {}
};

struct OverflowError : std::runtime_error {
    explicit OverflowError(const std::string& msg) : std::runtime_error("overflow: " + msg) {}
};

struct BoundsError : std::runtime_error {
    explicit BoundsError(const std::string& msg) : std::runtime_error("bounds error: " + msg) {}
};

struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& msg) : std::runtime_error("capacity error: " + msg) {}
};

struct SessionClosedError : std::runtime_error {
    explicit SessionClosedError(const std::string& msg) : std::runtime_error("session closed: " + msg) {}
};

struct TripleExhaustedError : std::runtime_error {
    explicit TripleExhaustedError(const std::string& msg)
        : std::runtime_error("triple pool exhausted: " + msg) {}
};

struct PolicyError : std::runtime_error {
    explicit PolicyError(const std::string& msg) : std::runtime_error("policy error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct ChannelClosedError : std::runtime_error {
    explicit ChannelClosedError(const std::string& msg)
        : std::runtime_error("channel closed: " + msg) {}
};

} // namespace moe2pc

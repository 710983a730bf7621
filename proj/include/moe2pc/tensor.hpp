#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "moe2pc/ring.hpp"

namespace moe2pc {

// Row-major tensor of ring elements with the fixed-point scale currently in effect.
// The universal value carrier: plain data, share payloads and slot contents all use it.
class RingTensor {
public:
    RingTensor() = default;
    RingTensor(std::vector<std::size_t> shape, int scale);
    RingTensor(std::vector<std::size_t> shape, std::vector<ring_t> data, int scale);

    static RingTensor zeros(std::vector<std::size_t> shape, int scale) {
        return RingTensor(std::move(shape), scale);
    }
    static RingTensor scalar(ring_t v, int scale) { return RingTensor({1}, {v}, scale); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    int scale() const { return scale_; }
    void set_scale(int s) { scale_ = s; }
    std::size_t numel() const { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    ring_t& at(std::size_t i) { return data_[i]; }
    ring_t at(std::size_t i) const { return data_[i]; }
    ring_t& at2(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    ring_t at2(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::vector<ring_t>& data() { return data_; }
    const std::vector<ring_t>& data() const { return data_; }

    bool same_shape(const RingTensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    RingTensor reshaped(std::vector<std::size_t> new_shape) const;
    RingTensor transposed() const; // 2-D only

    RingTensor operator+(const RingTensor& o) const;
    RingTensor operator-(const RingTensor& o) const;
    void add_inplace(const RingTensor& o);
    void sub_inplace(const RingTensor& o);

private:
    void check_elementwise(const RingTensor& o) const;

    std::vector<std::size_t> shape_;
    std::vector<ring_t> data_;
    int scale_ = 0;
};

// Elementwise fixed-point encoding of a real matrix; scale of the result is f.
RingTensor encode_tensor(const std::vector<std::vector<double>>& real, int frac_bits);
RingTensor encode_flat(const std::vector<double>& real, std::vector<std::size_t> shape,
                       int frac_bits);
std::vector<std::vector<double>> decode_tensor(const RingTensor& t);
std::vector<double> decode_flat(const RingTensor& t);

// Exact ring product; result scale is the sum of the input scales. Callers truncate.
RingTensor plain_matmul(const RingTensor& a, const RingTensor& b);

// Arithmetic right shift by f with sign extension; requires the input at scale 2f.
RingTensor truncate(const RingTensor& t, int frac_bits);

} // namespace moe2pc

#include "moe2pc/tensor.hpp"

#include <numeric>

namespace moe2pc {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

} // namespace

RingTensor::RingTensor(std::vector<std::size_t> shape, int scale)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0), scale_(scale) {}

RingTensor::RingTensor(std::vector<std::size_t> shape, std::vector<ring_t> data, int scale)
    : shape_(std::move(shape)), data_(std::move(data)), scale_(scale) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("buffer length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
    }
}

std::size_t RingTensor::rows() const {
    if (shape_.size() != 2) throw ShapeError("rows() needs a 2-D tensor, got " + shape_str());
    return shape_[0];
}

std::size_t RingTensor::cols() const {
    if (shape_.size() != 2) throw ShapeError("cols() needs a 2-D tensor, got " + shape_str());
    return shape_[1];
}

std::string RingTensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

RingTensor RingTensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_numel(new_shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str() + ", element count differs");
    }
    return RingTensor(std::move(new_shape), data_, scale_);
}

RingTensor RingTensor::transposed() const {
    const std::size_t r = rows(), c = cols();
    RingTensor out({c, r}, scale_);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at2(j, i) = at2(i, j);
    return out;
}

void RingTensor::check_elementwise(const RingTensor& o) const {
    if (!same_shape(o)) throw ShapeError(shape_str() + " vs " + o.shape_str());
    if (scale_ != o.scale_) {
        throw ScaleError(std::to_string(scale_) + " vs " + std::to_string(o.scale_));
    }
}

RingTensor RingTensor::operator+(const RingTensor& o) const {
    RingTensor out = *this;
    out.add_inplace(o);
    return out;
}

RingTensor RingTensor::operator-(const RingTensor& o) const {
    RingTensor out = *this;
    out.sub_inplace(o);
    return out;
}

void RingTensor::add_inplace(const RingTensor& o) {
    check_elementwise(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

void RingTensor::sub_inplace(const RingTensor& o) {
    check_elementwise(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
}

RingTensor encode_tensor(const std::vector<std::vector<double>>& real, int frac_bits) {
    const std::size_t r = real.size();
    const std::size_t c = r ? real[0].size() : 0;
    FixedPointCodec codec{frac_bits};
    RingTensor out({r, c}, frac_bits);
    for (std::size_t i = 0; i < r; ++i) {
        if (real[i].size() != c) throw ShapeError("ragged rows in real matrix");
        for (std::size_t j = 0; j < c; ++j) out.at2(i, j) = codec.encode(real[i][j]);
    }
    return out;
}

RingTensor encode_flat(const std::vector<double>& real, std::vector<std::size_t> shape,
                       int frac_bits) {
    FixedPointCodec codec{frac_bits};
    std::vector<ring_t> data(real.size());
    for (std::size_t i = 0; i < real.size(); ++i) data[i] = codec.encode(real[i]);
    return RingTensor(std::move(shape), std::move(data), frac_bits);
}

std::vector<std::vector<double>> decode_tensor(const RingTensor& t) {
    FixedPointCodec codec{t.scale()};
    std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = codec.decode(t.at2(i, j));
    return out;
}

std::vector<double> decode_flat(const RingTensor& t) {
    FixedPointCodec codec{t.scale()};
    std::vector<double> out(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) out[i] = codec.decode(t.at(i));
    return out;
}

RingTensor plain_matmul(const RingTensor& a, const RingTensor& b) {
    const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
    if (b.rows() != p) {
        throw ShapeError("matmul inner dims: " + a.shape_str() + " x " + b.shape_str());
    }
    RingTensor out({m, q}, a.scale() + b.scale());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < p; ++k) {
            const ring_t aik = a.at2(i, k);
            if (aik == 0) continue;
            for (std::size_t j = 0; j < q; ++j) out.at2(i, j) += aik * b.at2(k, j);
        }
    }
    return out;
}

RingTensor truncate(const RingTensor& t, int frac_bits) {
    if (t.scale() != 2 * frac_bits) {
        throw ScaleError("truncate expects scale " + std::to_string(2 * frac_bits) + ", got " +
                         std::to_string(t.scale()));
    }
    RingTensor out = t;
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = arith_shift_right(out.at(i), frac_bits);
    out.set_scale(frac_bits);
    return out;
}

} // namespace moe2pc

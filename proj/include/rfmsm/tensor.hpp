#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rfmsm/error.hpp"

namespace rfmsm {

/// Dense [batch][channels][length] array, row-major.
template <class T>
struct Tensor {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::size_t b, std::size_t c, std::size_t l, T fill = T(0))
        : batch(b), channels(c), length(l), data(b * c * l, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    std::size_t frame_size() const noexcept { return channels * length; }

    T* frame(std::size_t b) noexcept { return data.data() + b * frame_size(); }
    const T* frame(std::size_t b) const noexcept { return data.data() + b * frame_size(); }
    T* row(std::size_t b, std::size_t c) noexcept { return frame(b) + c * length; }
    const T* row(std::size_t b, std::size_t c) const noexcept { return frame(b) + c * length; }

    T& operator()(std::size_t b, std::size_t c, std::size_t l) noexcept { return data[(b * channels + c) * length + l]; }
    const T& operator()(std::size_t b, std::size_t c, std::size_t l) const noexcept {
        return data[(b * channels + c) * length + l];
    }

    bool same_shape(const Tensor& o) const noexcept {
        return batch == o.batch && channels == o.channels && length == o.length;
    }

    std::string shape_string() const {
        return "[" + std::to_string(batch) + "][" + std::to_string(channels) + "][" + std::to_string(length) + "]";
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.batch = batch;
        out.channels = channels;
        out.length = length;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b)) {
        fail(ErrorCode::shape_mismatch, std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
    }
}

/// A named trainable array with its gradient accumulator.
template <class T>
struct ParamTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool frozen = false;
    std::size_t fan_in = 1;
    bool is_bias = false;

    ParamTensor() = default;
    ParamTensor(std::string n, std::vector<std::size_t> s, std::size_t fan, bool bias)
        : name(std::move(n)), shape(std::move(s)), fan_in(fan), is_bias(bias) {
        std::size_t count = 1;
        for (auto d : shape) count *= d;
        value.assign(count, T(0));
        grad.assign(count, T(0));
    }

    std::size_t size() const noexcept { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

} // namespace rfmsm

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rfmsm/tensor.hpp"

// Layers with explicit reverse-mode passes. Each layer caches what its
// backward pass needs during forward(); backward() accumulates parameter
// gradients (skipped for frozen tensors) and returns the input gradient.
// Tensors are passed by value so callers can move activations through.
namespace rfmsm::nn {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstRowMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

inline Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

template <class T>
class Module {
public:
    virtual ~Module() = default;
    virtual Tensor<T> forward(Tensor<T> x) = 0;
    virtual Tensor<T> backward(Tensor<T> grad_out) = 0;
    virtual void collect(std::vector<ParamTensor<T>*>& /*out*/) {}
};

/// 1D convolution with stride, dilation and explicit left/right zero padding.
/// Lowered to one GEMM per chunk of frames over an im2col buffer.
template <class T>
class Conv1d final : public Module<T> {
public:
    Conv1d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
           std::size_t dilation, std::size_t pad_left, std::size_t pad_right)
        : cin_(in_ch), cout_(out_ch), k_(kernel), stride_(stride), dil_(dilation), pl_(pad_left), pr_(pad_right),
          weight_(name + ".weight", {out_ch, in_ch, kernel}, in_ch * kernel, false),
          bias_(name + ".bias", {out_ch}, in_ch * kernel, true) {}

    /// "Same" padding for odd kernels; output length ceil(L / stride).
    static std::unique_ptr<Conv1d> same(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                        std::size_t stride = 1) {
        const std::size_t pad = (kernel - 1) / 2;
        return std::make_unique<Conv1d>(std::move(name), in_ch, out_ch, kernel, stride, 1, pad, pad);
    }

    /// Causal dilated convolution; output length equals input length.
    static std::unique_ptr<Conv1d> causal(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                          std::size_t dilation) {
        return std::make_unique<Conv1d>(std::move(name), in_ch, out_ch, kernel, 1, dilation, dilation * (kernel - 1),
                                        0);
    }

    std::size_t output_length(std::size_t length) const {
        const std::size_t span = dil_ * (k_ - 1) + 1;
        if (length + pl_ + pr_ < span) fail(ErrorCode::shape_mismatch, weight_.name + ": input shorter than kernel span");
        return (length + pl_ + pr_ - span) / stride_ + 1;
    }

    Tensor<T> forward(Tensor<T> x) override {
        if (x.channels != cin_) {
            fail(ErrorCode::shape_mismatch, weight_.name + ": expected " + std::to_string(cin_) +
                                                " input channels, got " + std::to_string(x.channels));
        }
        input_ = std::move(x);
        const Tensor<T>& in = input_;
        const std::size_t lout = output_length(in.length);
        Tensor<T> y(in.batch, cout_, lout);
        ConstRowMap<T> w(weight_.value.data(), idx(cout_), idx(cin_ * k_));
        ConstVecMap<T> b(bias_.value.data(), idx(cout_));
        for_chunks(in.batch, lout, [&](std::size_t b0, std::size_t nb) {
            const RowMatrix<T>& col = im2col(in, b0, nb, lout);
            out_.noalias() = w * col;
            for (std::size_t j = 0; j < nb; ++j) {
                RowMap<T> yb(y.frame(b0 + j), idx(cout_), idx(lout));
                yb = out_.middleCols(idx(j * lout), idx(lout));
                yb.colwise() += b;
            }
        });
        return y;
    }

    Tensor<T> backward(Tensor<T> grad_out) override {
        const Tensor<T>& x = input_;
        const std::size_t lout = output_length(x.length);
        if (grad_out.batch != x.batch || grad_out.channels != cout_ || grad_out.length != lout) {
            fail(ErrorCode::shape_mismatch, weight_.name + ": gradient shape mismatch");
        }
        Tensor<T> dx(x.batch, cin_, x.length);
        ConstRowMap<T> w(weight_.value.data(), idx(cout_), idx(cin_ * k_));
        RowMap<T> dw(weight_.grad.data(), idx(cout_), idx(cin_ * k_));
        VecMap<T> db(bias_.grad.data(), idx(cout_));
        for_chunks(x.batch, lout, [&](std::size_t b0, std::size_t nb) {
            out_.resize(idx(cout_), idx(nb * lout));
            for (std::size_t j = 0; j < nb; ++j) {
                out_.middleCols(idx(j * lout), idx(lout)) =
                    ConstRowMap<T>(grad_out.frame(b0 + j), idx(cout_), idx(lout));
            }
            if (!weight_.frozen) {
                const RowMatrix<T>& col = im2col(x, b0, nb, lout);
                dw.noalias() += out_ * col.transpose();
            }
            if (!bias_.frozen) db += out_.rowwise().sum();
            col_.noalias() = w.transpose() * out_;
            col2im(col_, dx, b0, nb, lout);
        });
        return dx;
    }

    void collect(std::vector<ParamTensor<T>*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

private:
    // Bounds the im2col scratch to ~256K elements so it stays cache resident.
    template <class F>
    void for_chunks(std::size_t batch, std::size_t lout, F&& fn) {
        const std::size_t per_frame = std::max<std::size_t>(1, cin_ * k_ * lout);
        const std::size_t chunk = std::max<std::size_t>(1, (std::size_t{1} << 18) / per_frame);
        for (std::size_t b0 = 0; b0 < batch; b0 += chunk) fn(b0, std::min(chunk, batch - b0));
    }

    // Output positions t in [lo, hi) read input index t * stride + offset inside [0, len).
    std::pair<std::size_t, std::size_t> valid_range(std::ptrdiff_t offset, std::size_t len, std::size_t lout) const {
        const auto s = static_cast<std::ptrdiff_t>(stride_);
        std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
        std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(len) - 1 - offset;
        hi = hi < 0 ? 0 : hi / s + 1;
        lo = std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(lout));
        hi = std::clamp<std::ptrdiff_t>(hi, lo, static_cast<std::ptrdiff_t>(lout));
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    }

    const RowMatrix<T>& im2col(const Tensor<T>& x, std::size_t b0, std::size_t nb, std::size_t lout) {
        col_.resize(idx(cin_ * k_), idx(nb * lout));
        for (std::size_t kk = 0; kk < k_; ++kk) {
            const auto offset = static_cast<std::ptrdiff_t>(kk * dil_) - static_cast<std::ptrdiff_t>(pl_);
            const auto [lo, hi] = valid_range(offset, x.length, lout);
            for (std::size_t c = 0; c < cin_; ++c) {
                T* dst = col_.data() + (c * k_ + kk) * nb * lout;
                for (std::size_t j = 0; j < nb; ++j) {
                    const T* src = x.row(b0 + j, c);
                    T* d = dst + j * lout;
                    std::fill(d, d + lo, T(0));
                    if (stride_ == 1) {
                        std::copy(src + (static_cast<std::ptrdiff_t>(lo) + offset),
                                  src + (static_cast<std::ptrdiff_t>(hi) + offset), d + lo);
                    } else {
                        for (std::size_t t = lo; t < hi; ++t) {
                            d[t] = src[static_cast<std::ptrdiff_t>(t * stride_) + offset];
                        }
                    }
                    std::fill(d + hi, d + lout, T(0));
                }
            }
        }
        return col_;
    }

    void col2im(const RowMatrix<T>& dcol, Tensor<T>& dx, std::size_t b0, std::size_t nb, std::size_t lout) const {
        for (std::size_t kk = 0; kk < k_; ++kk) {
            const auto offset = static_cast<std::ptrdiff_t>(kk * dil_) - static_cast<std::ptrdiff_t>(pl_);
            const auto [lo, hi] = valid_range(offset, dx.length, lout);
            for (std::size_t c = 0; c < cin_; ++c) {
                const T* src = dcol.data() + (c * k_ + kk) * nb * lout;
                for (std::size_t j = 0; j < nb; ++j) {
                    T* d = dx.row(b0 + j, c);
                    const T* s = src + j * lout;
                    for (std::size_t t = lo; t < hi; ++t) d[static_cast<std::ptrdiff_t>(t * stride_) + offset] += s[t];
                }
            }
        }
    }

    std::size_t cin_, cout_, k_, stride_, dil_, pl_, pr_;
    ParamTensor<T> weight_, bias_;
    Tensor<T> input_;
    RowMatrix<T> col_, out_;
};

template <class T>
class ReLU final : public Module<T> {
public:
    Tensor<T> forward(Tensor<T> x) override {
        T* p = x.data.data();
        const std::size_t n = x.size();
        for (std::size_t k = 0; k < n; ++k) p[k] = std::max(p[k], T(0));
        output_ = x;
        return x;
    }

    Tensor<T> backward(Tensor<T> g) override {
        require_same_shape(g, output_, "relu backward");
        T* d = g.data.data();
        const T* o = output_.data.data();
        const std::size_t n = g.size();
        for (std::size_t k = 0; k < n; ++k) d[k] = o[k] > T(0) ? d[k] : T(0);
        return g;
    }

private:
    Tensor<T> output_;
};

/// Nearest-neighbour x2 upsampling along time.
template <class T>
class Upsample2 final : public Module<T> {
public:
    Tensor<T> forward(Tensor<T> x) override {
        Tensor<T> y(x.batch, x.channels, x.length * 2);
        const std::size_t rows = x.batch * x.channels;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* s = x.data.data() + r * x.length;
            T* d = y.data.data() + r * y.length;
            for (std::size_t t = 0; t < x.length; ++t) {
                d[2 * t] = s[t];
                d[2 * t + 1] = s[t];
            }
        }
        return y;
    }

    Tensor<T> backward(Tensor<T> g) override {
        if (g.length % 2 != 0) fail(ErrorCode::shape_mismatch, "upsample backward: odd length");
        Tensor<T> dx(g.batch, g.channels, g.length / 2);
        const std::size_t rows = g.batch * g.channels;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* s = g.data.data() + r * g.length;
            T* d = dx.data.data() + r * dx.length;
            for (std::size_t t = 0; t < dx.length; ++t) d[t] = s[2 * t] + s[2 * t + 1];
        }
        return dx;
    }
};

/// Non-overlapping average pooling along time.
template <class T>
class AvgPool final : public Module<T> {
public:
    explicit AvgPool(std::size_t window) : window_(window) {}

    Tensor<T> forward(Tensor<T> x) override {
        if (x.length % window_ != 0) {
            fail(ErrorCode::indivisible_length,
                 "average pooling needs length divisible by " + std::to_string(window_));
        }
        Tensor<T> y(x.batch, x.channels, x.length / window_);
        const T scale = T(1) / static_cast<T>(window_);
        for (std::size_t r = 0; r < x.batch * x.channels; ++r) {
            const T* s = x.data.data() + r * x.length;
            T* d = y.data.data() + r * y.length;
            for (std::size_t t = 0; t < y.length; ++t) {
                T acc = T(0);
                for (std::size_t w = 0; w < window_; ++w) acc += s[t * window_ + w];
                d[t] = acc * scale;
            }
        }
        return y;
    }

    Tensor<T> backward(Tensor<T> g) override {
        Tensor<T> dx(g.batch, g.channels, g.length * window_);
        const T scale = T(1) / static_cast<T>(window_);
        for (std::size_t r = 0; r < g.batch * g.channels; ++r) {
            const T* s = g.data.data() + r * g.length;
            T* d = dx.data.data() + r * dx.length;
            for (std::size_t t = 0; t < dx.length; ++t) d[t] = s[t / window_] * scale;
        }
        return dx;
    }

private:
    std::size_t window_;
};

template <class T>
class Sequential final : public Module<T> {
public:
    Module<T>& add(std::unique_ptr<Module<T>> m) {
        layers_.push_back(std::move(m));
        return *layers_.back();
    }

    Tensor<T> forward(Tensor<T> x) override {
        for (auto& l : layers_) x = l->forward(std::move(x));
        return x;
    }

    Tensor<T> backward(Tensor<T> g) override {
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(std::move(g));
        return g;
    }

    void collect(std::vector<ParamTensor<T>*>& out) override {
        for (auto& l : layers_) l->collect(out);
    }

private:
    std::vector<std::unique_ptr<Module<T>>> layers_;
};

template <class T>
void add_into(Tensor<T>& acc, const Tensor<T>& other, const char* what) {
    require_same_shape(acc, other, what);
    T* a = acc.data.data();
    const T* b = other.data.data();
    const std::size_t n = acc.size();
    for (std::size_t k = 0; k < n; ++k) a[k] += b[k];
}

/// Two-conv residual block: relu(conv2(relu(conv1(x))) + shortcut(x)).
/// The shortcut is a strided 1x1 projection whenever shape changes.
template <class T>
class ResidualBlock final : public Module<T> {
public:
    ResidualBlock(const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                  std::size_t stride)
        : conv1_(Conv1d<T>::same(name + ".conv1", in_ch, out_ch, kernel, stride)),
          conv2_(Conv1d<T>::same(name + ".conv2", out_ch, out_ch, kernel, 1)) {
        if (in_ch != out_ch || stride != 1) {
            proj_ = std::make_unique<Conv1d<T>>(name + ".proj", in_ch, out_ch, 1, stride, 1, 0, 0);
        }
    }

    Tensor<T> forward(Tensor<T> x) override {
        Tensor<T> s = proj_ ? proj_->forward(x) : x;
        Tensor<T> h = conv2_->forward(relu1_.forward(conv1_->forward(std::move(x))));
        add_into(h, s, "residual add");
        return relu2_.forward(std::move(h));
    }

    Tensor<T> backward(Tensor<T> g) override {
        Tensor<T> dh = relu2_.backward(std::move(g));
        Tensor<T> ds = proj_ ? proj_->backward(dh) : dh;
        Tensor<T> dx = conv1_->backward(relu1_.backward(conv2_->backward(std::move(dh))));
        add_into(dx, ds, "residual backward");
        return dx;
    }

    void collect(std::vector<ParamTensor<T>*>& out) override {
        conv1_->collect(out);
        conv2_->collect(out);
        if (proj_) proj_->collect(out);
    }

private:
    std::unique_ptr<Conv1d<T>> conv1_, conv2_, proj_;
    ReLU<T> relu1_, relu2_;
};

/// Gated dilated residual block: x + conv1x1(tanh(a) * sigmoid(b)),
/// where [a; b] = causal_dilated_conv(x) split along channels.
template <class T>
class GatedResidualBlock final : public Module<T> {
public:
    GatedResidualBlock(const std::string& name, std::size_t channels, std::size_t kernel, std::size_t dilation)
        : channels_(channels), dilated_(Conv1d<T>::causal(name + ".dilated", channels, 2 * channels, kernel, dilation)),
          mix_(std::make_unique<Conv1d<T>>(name + ".mix", channels, channels, 1, 1, 1, 0, 0)) {}

    Tensor<T> forward(Tensor<T> x) override {
        const Tensor<T> h = dilated_->forward(x);
        tanh_ = Tensor<T>(x.batch, channels_, x.length);
        sig_ = Tensor<T>(x.batch, channels_, x.length);
        Tensor<T> z(x.batch, channels_, x.length);
        for (std::size_t b = 0; b < x.batch; ++b) {
            for (std::size_t c = 0; c < channels_; ++c) {
                const T* a = h.row(b, c);
                const T* s = h.row(b, c + channels_);
                T* th = tanh_.row(b, c);
                T* sg = sig_.row(b, c);
                T* zz = z.row(b, c);
                for (std::size_t t = 0; t < x.length; ++t) {
                    th[t] = std::tanh(a[t]);
                    sg[t] = T(1) / (T(1) + std::exp(-s[t]));
                    zz[t] = th[t] * sg[t];
                }
            }
        }
        Tensor<T> y = mix_->forward(std::move(z));
        add_into(y, x, "gated residual add");
        return y;
    }

    Tensor<T> backward(Tensor<T> g) override {
        const Tensor<T> dz = mix_->backward(g);
        Tensor<T> dh(g.batch, 2 * channels_, g.length);
        for (std::size_t b = 0; b < g.batch; ++b) {
            for (std::size_t c = 0; c < channels_; ++c) {
                const T* gz = dz.row(b, c);
                const T* th = tanh_.row(b, c);
                const T* sg = sig_.row(b, c);
                T* da = dh.row(b, c);
                T* ds = dh.row(b, c + channels_);
                for (std::size_t t = 0; t < g.length; ++t) {
                    da[t] = gz[t] * sg[t] * (T(1) - th[t] * th[t]);
                    ds[t] = gz[t] * th[t] * sg[t] * (T(1) - sg[t]);
                }
            }
        }
        Tensor<T> dx = dilated_->backward(std::move(dh));
        add_into(dx, g, "gated residual backward");
        return dx;
    }

    void collect(std::vector<ParamTensor<T>*>& out) override {
        dilated_->collect(out);
        mix_->collect(out);
    }

private:
    std::size_t channels_;
    std::unique_ptr<Conv1d<T>> dilated_, mix_;
    Tensor<T> tanh_, sig_;
};

/// Flatten [B][C][L] to [B][C*L] and apply an affine map, giving [B][N][1].
/// Weight is stored (flatten_dim x n_out).
template <class T>
class Linear final : public Module<T> {
public:
    Linear(const std::string& name, std::size_t in_dim, std::size_t out_dim)
        : in_(in_dim), out_(out_dim), weight_(name + ".weight", {in_dim, out_dim}, in_dim, false),
          bias_(name + ".bias", {out_dim}, in_dim, true) {}

    Tensor<T> forward(Tensor<T> x) override {
        if (x.frame_size() != in_) {
            fail(ErrorCode::shape_mismatch, weight_.name + ": flatten dim " + std::to_string(x.frame_size()) +
                                                " != expected " + std::to_string(in_));
        }
        input_ = std::move(x);
        const Tensor<T>& in = input_;
        Tensor<T> y(in.batch, out_, 1);
        ConstRowMap<T> xm(in.data.data(), idx(in.batch), idx(in_));
        ConstRowMap<T> w(weight_.value.data(), idx(in_), idx(out_));
        RowMap<T> ym(y.data.data(), idx(in.batch), idx(out_));
        ym.noalias() = xm * w;
        ym.rowwise() += ConstVecMap<T>(bias_.value.data(), idx(out_)).transpose();
        return y;
    }

    Tensor<T> backward(Tensor<T> g) override {
        const Tensor<T>& x = input_;
        if (g.batch != x.batch || g.frame_size() != out_) fail(ErrorCode::shape_mismatch, "linear backward");
        ConstRowMap<T> xm(x.data.data(), idx(x.batch), idx(in_));
        ConstRowMap<T> gm(g.data.data(), idx(g.batch), idx(out_));
        ConstRowMap<T> w(weight_.value.data(), idx(in_), idx(out_));
        if (!weight_.frozen) RowMap<T>(weight_.grad.data(), idx(in_), idx(out_)).noalias() += xm.transpose() * gm;
        if (!bias_.frozen) VecMap<T>(bias_.grad.data(), idx(out_)) += gm.colwise().sum().transpose();
        Tensor<T> dx(x.batch, x.channels, x.length);
        RowMap<T>(dx.data.data(), idx(x.batch), idx(in_)).noalias() = gm * w.transpose();
        return dx;
    }

    void collect(std::vector<ParamTensor<T>*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

private:
    std::size_t in_, out_;
    ParamTensor<T> weight_, bias_;
    Tensor<T> input_;
};

} // namespace rfmsm::nn

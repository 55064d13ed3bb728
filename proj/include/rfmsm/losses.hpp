#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rfmsm/tensor.hpp"

namespace rfmsm {

/// Scalar loss value plus d(loss)/d(input) with the input's shape.
template <class T>
struct LossResult {
    double value = 0.0;
    Tensor<T> grad;
};

enum class ReconstructionLoss { l1, l2 };

inline std::string to_string(ReconstructionLoss l) { return l == ReconstructionLoss::l1 ? "l1" : "l2"; }

inline ReconstructionLoss parse_reconstruction_loss(const std::string& s) {
    if (s == "l1") return ReconstructionLoss::l1;
    if (s == "l2") return ReconstructionLoss::l2;
    fail(ErrorCode::invalid_argument, "loss must be 'l1' or 'l2', got '" + s + "'");
}

namespace detail {

template <class T>
LossResult<T> reconstruction(const Tensor<T>& recon, const Tensor<T>& target, ReconstructionLoss kind,
                             const std::vector<std::vector<bool>>* masks) {
    require_same_shape(recon, target, "reconstruction loss");
    LossResult<T> out{0.0, Tensor<T>(recon.batch, recon.channels, recon.length)};
    double count = 0.0;
    if (masks) {
        require(masks->size() == recon.batch, ErrorCode::shape_mismatch, "one mask per frame required");
        for (const auto& m : *masks) {
            require(m.size() == recon.length, ErrorCode::shape_mismatch, "mask length mismatch");
            count += static_cast<double>(std::count(m.begin(), m.end(), true)) * static_cast<double>(recon.channels);
        }
    } else {
        count = static_cast<double>(recon.size());
    }
    if (count == 0.0) return out;

    double acc = 0.0;
    const T scale = static_cast<T>(1.0 / count);
    for (std::size_t b = 0; b < recon.batch; ++b) {
        for (std::size_t c = 0; c < recon.channels; ++c) {
            const T* r = recon.row(b, c);
            const T* t = target.row(b, c);
            T* g = out.grad.row(b, c);
            for (std::size_t n = 0; n < recon.length; ++n) {
                if (masks && !(*masks)[b][n]) continue;
                const T d = r[n] - t[n];
                if (kind == ReconstructionLoss::l1) {
                    acc += std::abs(static_cast<double>(d));
                    // subgradient convention: sign(0) = 0
                    g[n] = d > T(0) ? scale : (d < T(0) ? -scale : T(0));
                } else {
                    acc += static_cast<double>(d) * static_cast<double>(d);
                    g[n] = T(2) * d * scale;
                }
            }
        }
    }
    out.value = acc / count;
    return out;
}

} // namespace detail

/// Mean absolute difference over every sample and channel.
template <class T>
LossResult<T> l1_loss(const Tensor<T>& recon, const Tensor<T>& target) {
    return detail::reconstruction(recon, target, ReconstructionLoss::l1, nullptr);
}

/// Mean squared difference over every sample and channel.
template <class T>
LossResult<T> l2_loss(const Tensor<T>& recon, const Tensor<T>& target) {
    return detail::reconstruction(recon, target, ReconstructionLoss::l2, nullptr);
}

/// Reconstruction loss; when `masks` is given the mean runs only over masked
/// positions (both channels) and unmasked positions get zero gradient.
template <class T>
LossResult<T> reconstruction_loss(const Tensor<T>& recon, const Tensor<T>& target, ReconstructionLoss kind,
                                  const std::vector<std::vector<bool>>* masks = nullptr) {
    return detail::reconstruction(recon, target, kind, masks);
}

/// Mean over the batch of -log softmax(logits)[label], max-subtracted.
/// `logits` is [B][N][1].
template <class T>
LossResult<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    require(labels.size() == logits.batch, ErrorCode::shape_mismatch, "one label per logit row required");
    const std::size_t n_cls = logits.frame_size();
    LossResult<T> out{0.0, Tensor<T>(logits.batch, logits.channels, logits.length)};
    if (logits.batch == 0) return out;
    const double inv_b = 1.0 / static_cast<double>(logits.batch);
    double acc = 0.0;
    std::vector<double> p(n_cls);
    for (std::size_t b = 0; b < logits.batch; ++b) {
        const int label = labels[b];
        require(label >= 0 && static_cast<std::size_t>(label) < n_cls, ErrorCode::invalid_argument,
                "label " + std::to_string(label) + " out of range for " + std::to_string(n_cls) + " classes");
        const T* z = logits.frame(b);
        double zmax = static_cast<double>(z[0]);
        for (std::size_t k = 1; k < n_cls; ++k) zmax = std::max(zmax, static_cast<double>(z[k]));
        double sum = 0.0;
        for (std::size_t k = 0; k < n_cls; ++k) {
            p[k] = std::exp(static_cast<double>(z[k]) - zmax);
            sum += p[k];
        }
        acc += -(static_cast<double>(z[label]) - zmax - std::log(sum));
        T* g = out.grad.frame(b);
        for (std::size_t k = 0; k < n_cls; ++k) {
            const double target = static_cast<std::size_t>(label) == k ? 1.0 : 0.0;
            g[k] = static_cast<T>((p[k] / sum - target) * inv_b);
        }
    }
    out.value = acc * inv_b;
    return out;
}

} // namespace rfmsm

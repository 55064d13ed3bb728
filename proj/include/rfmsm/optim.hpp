#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rfmsm/tensor.hpp"

namespace rfmsm {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moments for one parameter array. `step` counts the updates
/// this array actually received, so a tensor that was frozen for a while
/// starts its bias correction from 1 when it is released.
template <class T>
struct AdamMoments {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<T> m;
    std::vector<T> v;
    std::uint64_t step = 0;
};

template <class T>
struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::vector<AdamMoments<T>> moments;
};

/// One bias-corrected Adam update of a flat array. `t` is the 1-based step.
template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::uint64_t t, double lr, const AdamHyper& h) {
    if (params.size() != grads.size() || m.size() != params.size() || v.size() != params.size()) {
        fail(ErrorCode::shape_mismatch, "adam: parameter, gradient and moment sizes differ");
    }
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
    const T step = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(h.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const T g = grads[k];
        m[k] = b1 * m[k] + (T(1) - b1) * g;
        v[k] = b2 * v[k] + (T(1) - b2) * g * g;
        params[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
    }
}

/// Adam over a fixed list of parameter tensors. Frozen tensors are skipped
/// entirely: their values and moments stay untouched.
template <class T>
class Adam {
public:
    explicit Adam(std::vector<ParamTensor<T>*> params, AdamHyper hyper = {}) : params_(std::move(params)) {
        state_.hyper = hyper;
        for (auto* p : params_) {
            state_.moments.push_back({p->name, p->shape, std::vector<T>(p->size(), T(0)),
                                      std::vector<T>(p->size(), T(0)), 0});
        }
    }

    void step(double lr) {
        ++state_.step;
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto* p = params_[k];
            if (p->frozen) continue;
            auto& mo = state_.moments[k];
            adam_update(std::span<T>(p->value), std::span<const T>(p->grad), std::span<T>(mo.m),
                        std::span<T>(mo.v), ++mo.step, lr, state_.hyper);
        }
    }

    const AdamState<T>& state() const { return state_; }

    void load_state(const AdamState<T>& s) {
        require(s.moments.size() == state_.moments.size(), ErrorCode::shape_mismatch,
                "optimizer state does not match parameter list");
        for (std::size_t k = 0; k < s.moments.size(); ++k) {
            require(s.moments[k].name == state_.moments[k].name && s.moments[k].m.size() == params_[k]->size() &&
                        s.moments[k].v.size() == params_[k]->size(),
                    ErrorCode::shape_mismatch, "optimizer state mismatch for '" + state_.moments[k].name + "'");
        }
        state_ = s;
    }

private:
    std::vector<ParamTensor<T>*> params_;
    AdamState<T> state_;
};

/// Validation-loss early stopping with min-delta 0: any strictly lower loss
/// counts as an improvement and resets the patience counter.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience) : patience_(patience) {
        require(patience >= 1, ErrorCode::config, "early-stopping patience must be >= 1");
    }

    /// Records the loss for the next epoch (1-based); returns true if it is a new best.
    bool observe(double val_loss) {
        ++epoch_;
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch_;
            bad_epochs_ = 0;
            return true;
        }
        ++bad_epochs_;
        return false;
    }

    bool should_stop() const { return bad_epochs_ >= patience_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }
    std::size_t epochs_seen() const { return epoch_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t bad_epochs_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

} // namespace rfmsm

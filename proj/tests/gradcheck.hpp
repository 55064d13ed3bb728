#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rfmsm/nn.hpp"
#include "rfmsm/rng.hpp"
#include "rfmsm/tensor.hpp"

namespace rfmsm::support {

struct GradError {
    std::string name;
    double rel_err = 0.0;
    std::size_t count = 0;
};

/// ||a - n|| / max(||a||, ||n||), with both norms below 1e-12 counted as agreement.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
        na += analytic[k] * analytic[k];
        nn += numeric[k] * numeric[k];
    }
    const double scale = std::sqrt(std::max(na, nn));
    return scale < 1e-12 ? 0.0 : std::sqrt(diff) / scale;
}

/// Central differences of `loss` against every entry of `values`.
inline std::vector<double> numeric_gradient(std::vector<double>& values, const std::function<double()>& loss,
                                            double h = 1e-5) {
    std::vector<double> g(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double saved = values[k];
        values[k] = saved + h;
        const double up = loss();
        values[k] = saved - h;
        const double down = loss();
        values[k] = saved;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Compares the gradients currently stored in `params` against finite differences.
inline std::vector<GradError> check_params(const std::vector<ParamTensor<double>*>& params,
                                           const std::function<double()>& loss, double h = 1e-5) {
    std::vector<GradError> out;
    for (auto* p : params) {
        const std::vector<double> analytic = p->grad;
        const std::vector<double> numeric = numeric_gradient(p->value, loss, h);
        out.push_back({p->name, relative_error(analytic, numeric), p->size()});
    }
    return out;
}

inline Tensor<double> random_tensor(std::size_t b, std::size_t c, std::size_t l, std::uint64_t seed) {
    Tensor<double> t(b, c, l);
    Rng rng(seed);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

/// Checks a single module under the scalar loss sum(w * module(x)) with random w.
/// Returns the input-gradient error followed by one entry per parameter tensor.
inline std::vector<GradError> check_module(nn::Module<double>& m, Tensor<double> x, std::uint64_t seed,
                                           double h = 1e-5) {
    std::vector<ParamTensor<double>*> params;
    m.collect(params);
    Rng rng(seed);
    for (auto* p : params) {
        for (auto& v : p->value) v = 0.5 * rng.normal();
    }
    const Tensor<double> y0 = m.forward(x);
    Tensor<double> w(y0.batch, y0.channels, y0.length);
    for (auto& v : w.data) v = rng.normal();

    auto loss = [&] {
        const Tensor<double> y = m.forward(x);
        double s = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) s += w.data[k] * y.data[k];
        return s;
    };
    for (auto* p : params) p->zero_grad();
    m.forward(x);
    const Tensor<double> dx = m.backward(w);

    std::vector<GradError> out;
    const std::vector<double> numeric_dx = numeric_gradient(x.data, loss, h);
    out.push_back({"input", relative_error(dx.data, numeric_dx), x.size()});
    const auto ps = check_params(params, loss, h);
    out.insert(out.end(), ps.begin(), ps.end());
    return out;
}

inline double worst(const std::vector<GradError>& errs) {
    double w = 0.0;
    for (const auto& e : errs) w = std::max(w, e.rel_err);
    return w;
}

} // namespace rfmsm::support

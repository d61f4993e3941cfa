#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "plumeseg/layers.hpp"
#include "plumeseg/unet.hpp"

namespace plumeseg {

// Central finite differences in float64. Nondifferentiable points (PReLU at
// exactly 0, maxpool ties) are measure-zero under the random inputs the test
// suites use and are excluded there.

/// Numeric gradient of `loss()` w.r.t. the n values at `data`, h = 1e-5.
template <class F>
std::vector<double> finite_difference(F&& loss, double* data, std::int64_t n, double h = 1e-5) {
    std::vector<double> g(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double saved = data[i];
        data[i] = saved + h;
        const double up = loss();
        data[i] = saved - h;
        const double down = loss();
        data[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// |a - b| over max(1e-4, |a|, |b|); the floor keeps vanishing gradients from
/// reporting spurious blowups at finite-difference noise level.
inline double rel_error(double a, double b) {
    return std::abs(a - b) / std::max({1e-4, std::abs(a), std::abs(b)});
}

inline double max_rel_error(const std::vector<double>& a, const double* b, std::int64_t n) {
    double m = 0.0;
    for (std::int64_t i = 0; i < n; ++i) m = std::max(m, rel_error(a[i], b[i]));
    return m;
}

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;

    void add(const std::string& name, double err) {
        entries.push_back({name, err});
        max_rel_err = std::max(max_rel_err, err);
    }
};

enum class LossKind { BCE, MAE };

/// Checks every parameter block of the network against finite differences of
/// the mean per-sample loss, plus the input gradient.
inline GradCheckReport gradient_check_unet(UNet<double>& net, Tensor4<double> x,
                                           const Tensor4<double>& target,
                                           LossKind loss_kind = LossKind::BCE, double h = 1e-5) {
    auto loss_of = [&]() {
        Tensor4<double> prob = net.forward(x);
        const VecX<double> per = loss_kind == LossKind::BCE ? bce_per_sample(prob, target)
                                                            : mae_per_sample(prob, target);
        return per.mean();
    };

    // Analytic pass.
    Tensor4<double> prob = net.forward(x);
    const VecX<double> weights = VecX<double>::Constant(x.n, 1.0 / x.n);
    Tensor4<double> dprob = loss_kind == LossKind::BCE ? bce_backward(prob, target, weights)
                                                       : mae_backward(prob, target, weights);
    std::vector<Tensor4<double>> grads = net.backward(dprob);
    Tensor4<double> dinput = net.input_gradient();

    GradCheckReport report;
    ModelState<double>& state = net.state();
    for (size_t b = 0; b < state.params.size(); ++b) {
        const std::vector<double> numeric =
            finite_difference(loss_of, state.params[b].data(), state.params[b].size(), h);
        report.add(state.names[b],
                   max_rel_error(numeric, grads[b].data(), grads[b].size()));
    }
    {
        const std::vector<double> numeric = finite_difference(loss_of, x.data(), x.size(), h);
        report.add("input", max_rel_error(numeric, dinput.data(), dinput.size()));
    }
    return report;
}

}  // namespace plumeseg

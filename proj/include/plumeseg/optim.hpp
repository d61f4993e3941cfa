#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "plumeseg/tensor.hpp"

namespace plumeseg {

struct TrainHyper {
    double lr0 = 5e-5;
    double gamma = 0.1;
    int step_epochs = 9;
    int epochs = 21;
    int batch = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (lr0 <= 0.0) throw ConfigError("lr0 must be positive");
        if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("gamma must be in (0, 1]");
        if (batch < 1) throw ConfigError("batch must be >= 1");
        if (step_epochs < 1) throw ConfigError("step_epochs must be >= 1");
    }
};

/// lr0 * gamma^floor(epoch / step_epochs); piecewise constant, non-increasing.
inline double lr_at_epoch(const TrainHyper& hyper, int epoch) {
    return hyper.lr0 * std::pow(hyper.gamma, epoch / hyper.step_epochs);
}

/// Named parameter store plus Adam first/second moment buffers.
template <class S>
struct ModelState {
    std::vector<std::string> names;
    std::vector<Tensor4<S>> params;
    std::vector<Tensor4<S>> adam_m;
    std::vector<Tensor4<S>> adam_v;
    std::int64_t step = 0;

    void add(const std::string& name, Tensor4<S> p) {
        names.push_back(name);
        adam_m.push_back(Tensor4<S>::zeros_like(p));
        adam_v.push_back(Tensor4<S>::zeros_like(p));
        params.push_back(std::move(p));
    }

    int index_of(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        return -1;
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& p : params) n += p.size();
        return n;
    }

    template <class Other>
    ModelState<Other> cast() const {
        ModelState<Other> out;
        out.names = names;
        out.step = step;
        for (const auto& p : params) out.params.push_back(p.template cast<Other>());
        for (const auto& m : adam_m) out.adam_m.push_back(m.template cast<Other>());
        for (const auto& v : adam_v) out.adam_v.push_back(v.template cast<Other>());
        return out;
    }
};

/// One bias-corrected Adam update over every parameter block.
template <class S>
void adam_step(ModelState<S>& state, const std::vector<Tensor4<S>>& grads, double lr,
               const TrainHyper& hyper) {
    if (grads.size() != state.params.size())
        throw ShapeError("adam_step: gradient block count mismatch");
    for (size_t b = 0; b < grads.size(); ++b) {
        if (!grads[b].same_shape(state.params[b]))
            throw ShapeError("adam_step: gradient shape mismatch for " + state.names[b]);
        grads[b].require_finite(state.names[b].c_str());
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);
    for (size_t b = 0; b < grads.size(); ++b) {
        Tensor4<S>& p = state.params[b];
        Tensor4<S>& m = state.adam_m[b];
        Tensor4<S>& v = state.adam_v[b];
        const Tensor4<S>& g = grads[b];
        for (std::int64_t i = 0; i < p.size(); ++i) {
            m.v[i] = S(hyper.beta1) * m.v[i] + S(1.0 - hyper.beta1) * g.v[i];
            v.v[i] = S(hyper.beta2) * v.v[i] + S(1.0 - hyper.beta2) * g.v[i] * g.v[i];
            const S mhat = m.v[i] / S(bc1);
            const S vhat = v.v[i] / S(bc2);
            p.v[i] -= S(lr) * mhat / (std::sqrt(vhat) + S(hyper.eps));
        }
    }
}

}  // namespace plumeseg

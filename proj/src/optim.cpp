#include "frap/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace frap {

void adam_update(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg)
{
    if (params.size() != grads.size()) throw std::invalid_argument("adam_update: parameter and gradient key sets differ");
    for (const auto& [name, p] : params) {
        auto it = grads.find(name);
        if (it == grads.end()) throw std::invalid_argument("adam_update: missing gradient for " + name);
        if (it->second.shape() != p.shape()) throw std::invalid_argument("adam_update: gradient shape mismatch for " + name);
        if (!it->second.all_finite()) throw std::domain_error("adam_update: non-finite gradient for " + name);
    }

    ++state.step;
    const double bc1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        const Tensor& g = grads.at(name);
        Tensor& m = state.m.try_emplace(name, p.shape(), 0).first->second;
        Tensor& v = state.v.try_emplace(name, p.shape(), 0).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace frap

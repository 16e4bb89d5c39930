#pragma once

#include <cstdint>

#include "frap/tensor.hpp"

namespace frap {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ParamSet m;
    ParamSet v;
    std::int64_t step = 0;
};

/// One bias-corrected Adam step. `grads` must carry exactly the keys of
/// `params`; a non-finite gradient throws naming the parameter and leaves
/// everything untouched.
void adam_update(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace frap

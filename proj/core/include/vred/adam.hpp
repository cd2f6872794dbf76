#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vred/tensor.hpp"

namespace vred::train {

/// Adam moment buffers, keyed by parameter name in a fixed order.
struct AdamState {
    struct Entry {
        std::string name;
        Tensor m;
        Tensor v;
    };
    std::vector<Entry> entries;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

}  // namespace vred::train

#pragma once

#include "poselab/layers.hpp"

#include <cstdint>
#include <vector>

namespace poselab {

struct SolverConfig {
    double base_lr = 0.0005;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    double gamma = 0.1;        // lr multiplier applied every decay_interval iterations
    std::int64_t decay_interval = 5000;
};

// Learning rate in effect at a given 0-based iteration.
double lr_at(const SolverConfig& cfg, std::int64_t iter);

// buffer <- momentum*buffer + grad + weight_decay*value
// value  <- value - lr*lr_scale*buffer
// Throws if any gradient entry is non-finite.
void sgd_step(Parameter& param, double lr, double momentum, double weight_decay);

void sgd_step_all(std::vector<Parameter*>& params, double lr, double momentum,
                  double weight_decay);

}  // namespace poselab

#include "poselab/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace poselab {

double lr_at(const SolverConfig& cfg, std::int64_t iter) {
    check(iter >= 0, "lr_at: iteration must be nonnegative");
    check(cfg.decay_interval > 0, "lr_at: decay_interval must be positive");
    const std::int64_t steps = iter / cfg.decay_interval;
    return cfg.base_lr * std::pow(cfg.gamma, static_cast<double>(steps));
}

void sgd_step(Parameter& param, double lr, double momentum, double weight_decay) {
    check_same_shape(param.value, param.gradient, "sgd_step(" + param.name + ")");
    check_same_shape(param.value, param.momentum_buffer, "sgd_step(" + param.name + ")");
    if (!param.gradient.all_finite()) {
        throw std::runtime_error("sgd_step: non-finite gradient in parameter '" + param.name +
                                 "'");
    }
    const double eff_lr = lr * param.lr_scale;
    for (std::size_t i = 0; i < param.value.data.size(); ++i) {
        double& buf = param.momentum_buffer.data[i];
        buf = momentum * buf + param.gradient.data[i] + weight_decay * param.value.data[i];
        param.value.data[i] -= eff_lr * buf;
    }
}

void sgd_step_all(std::vector<Parameter*>& params, double lr, double momentum,
                  double weight_decay) {
    for (Parameter* p : params) sgd_step(*p, lr, momentum, weight_decay);
}

}  // namespace poselab

#include "poselab/tensor.hpp"

#include <cmath>

namespace poselab {

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    check(a.shape == b.shape,
          what + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace poselab

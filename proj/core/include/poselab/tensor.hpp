#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace poselab {

// Contract failures (bad shapes, out-of-range labels, malformed files) are
// reported as exceptions with a message naming the offending quantity.
inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Dense n-dimensional array of 64-bit reals, row-major.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<std::int64_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        check(static_cast<std::int64_t>(data.size()) == numel_of(shape),
              "Tensor: data length " + std::to_string(data.size()) +
                  " does not match shape product " + std::to_string(numel_of(shape)));
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        check(!s.empty(), "Tensor: shape must have at least one extent");
        std::int64_t n = 1;
        for (auto e : s) {
            check(e > 0, "Tensor: extent must be positive, got " + std::to_string(e));
            n *= e;
        }
        return n;
    }

    static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::int64_t> s, double v) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // 4-d (NCHW) and 2-d (N x D) accessors used by the layer kernels.
    double& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data[static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    double at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data[static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    double& at2(std::int64_t r, std::int64_t c) {
        return data[static_cast<std::size_t>(r * shape[1] + c)];
    }
    double at2(std::int64_t r, std::int64_t c) const {
        return data[static_cast<std::size_t>(r * shape[1] + c)];
    }

    void fill(double v) {
        for (auto& x : data) x = v;
    }

    bool all_finite() const;

    std::string shape_str() const;
};

// Shape equality check with a diagnostic naming the tensors involved.
void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

}  // namespace poselab

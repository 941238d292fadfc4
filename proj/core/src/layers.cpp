#include "poselab/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace poselab {

namespace {

using MatX = Eigen::MatrixXd;  // column-major

std::int64_t out_extent(std::int64_t in, int k, int stride, int pad) {
    return (in + 2 * static_cast<std::int64_t>(pad) - k) / stride + 1;
}

struct ConvDims {
    std::int64_t n, c, h, w;
    std::int64_t oc, cg, kh, kw;  // cg = input channels per group
    std::int64_t oh, ow;
    std::int64_t groups;
    std::int64_t ocg;  // output channels per group
};

ConvDims conv_dims(const Tensor& input, const Tensor& weights, int stride, int pad, int groups) {
    check(input.rank() == 4, "conv2d: input must be NCHW, got rank " + std::to_string(input.rank()));
    check(weights.rank() == 4,
          "conv2d: weights must be (out_channels, in_channels/groups, kH, kW), got rank " +
              std::to_string(weights.rank()));
    check(stride >= 1, "conv2d: stride must be >= 1");
    check(pad >= 0, "conv2d: pad must be >= 0");
    check(groups >= 1, "conv2d: groups must be >= 1");

    ConvDims d;
    d.n = input.dim(0);
    d.c = input.dim(1);
    d.h = input.dim(2);
    d.w = input.dim(3);
    d.oc = weights.dim(0);
    d.cg = weights.dim(1);
    d.kh = weights.dim(2);
    d.kw = weights.dim(3);
    d.groups = groups;

    check(d.c % groups == 0, "conv2d: input channels " + std::to_string(d.c) +
                                 " not divisible by groups " + std::to_string(groups));
    check(d.oc % groups == 0, "conv2d: output channels " + std::to_string(d.oc) +
                                  " not divisible by groups " + std::to_string(groups));
    check(d.cg == d.c / groups, "conv2d: weight in-channel extent " + std::to_string(d.cg) +
                                    " does not equal input channels/groups = " +
                                    std::to_string(d.c / groups));
    d.oh = out_extent(d.h, static_cast<int>(d.kh), stride, pad);
    d.ow = out_extent(d.w, static_cast<int>(d.kw), stride, pad);
    check(d.oh >= 1 && d.ow >= 1,
          "conv2d: kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
              " does not fit input " + std::to_string(d.h) + "x" + std::to_string(d.w) +
              " with pad " + std::to_string(pad));
    d.ocg = d.oc / groups;
    return d;
}

// Patch matrix for one group: rows = cg*kh*kw, cols = n*oh*ow.
void im2col_group(const Tensor& input, const ConvDims& d, int stride, int pad,
                  std::int64_t group, MatX& cols) {
    const std::int64_t k_rows = d.cg * d.kh * d.kw;
    cols.resize(k_rows, d.n * d.oh * d.ow);
    const std::int64_t c0 = group * d.cg;
    std::int64_t m = 0;
    for (std::int64_t n = 0; n < d.n; ++n) {
        for (std::int64_t oh = 0; oh < d.oh; ++oh) {
            const std::int64_t h0 = oh * stride - pad;
            for (std::int64_t ow = 0; ow < d.ow; ++ow, ++m) {
                const std::int64_t w0 = ow * stride - pad;
                double* col = cols.data() + m * k_rows;
                std::int64_t r = 0;
                for (std::int64_t cl = 0; cl < d.cg; ++cl) {
                    const double* in_ch =
                        input.data.data() + ((n * d.c + c0 + cl) * d.h) * d.w;
                    for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                        const std::int64_t hh = h0 + kh;
                        if (hh < 0 || hh >= d.h) {
                            for (std::int64_t kw = 0; kw < d.kw; ++kw) col[r++] = 0.0;
                            continue;
                        }
                        const double* in_row = in_ch + hh * d.w;
                        for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                            const std::int64_t ww = w0 + kw;
                            col[r++] = (ww < 0 || ww >= d.w) ? 0.0 : in_row[ww];
                        }
                    }
                }
            }
        }
    }
}

void col2im_group(const MatX& cols, const ConvDims& d, int stride, int pad,
                  std::int64_t group, Tensor& input_grad) {
    const std::int64_t k_rows = d.cg * d.kh * d.kw;
    const std::int64_t c0 = group * d.cg;
    std::int64_t m = 0;
    for (std::int64_t n = 0; n < d.n; ++n) {
        for (std::int64_t oh = 0; oh < d.oh; ++oh) {
            const std::int64_t h0 = oh * stride - pad;
            for (std::int64_t ow = 0; ow < d.ow; ++ow, ++m) {
                const std::int64_t w0 = ow * stride - pad;
                const double* col = cols.data() + m * k_rows;
                std::int64_t r = 0;
                for (std::int64_t cl = 0; cl < d.cg; ++cl) {
                    double* g_ch = input_grad.data.data() + ((n * d.c + c0 + cl) * d.h) * d.w;
                    for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                        const std::int64_t hh = h0 + kh;
                        if (hh < 0 || hh >= d.h) {
                            r += d.kw;
                            continue;
                        }
                        double* g_row = g_ch + hh * d.w;
                        for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                            const std::int64_t ww = w0 + kw;
                            if (ww >= 0 && ww < d.w) g_row[ww] += col[r];
                            ++r;
                        }
                    }
                }
            }
        }
    }
}

// Weight slice of one group as an (ocg x cg*kh*kw) matrix.
MatX weight_matrix(const Tensor& weights, const ConvDims& d, std::int64_t group) {
    const std::int64_t k_rows = d.cg * d.kh * d.kw;
    MatX w(d.ocg, k_rows);
    const double* base = weights.data.data() + group * d.ocg * k_rows;
    for (std::int64_t o = 0; o < d.ocg; ++o) {
        for (std::int64_t r = 0; r < k_rows; ++r) {
            w(o, r) = base[o * k_rows + r];
        }
    }
    return w;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const std::vector<double>& bias, int stride, int pad, int groups) {
    const ConvDims d = conv_dims(input, weights, stride, pad, groups);
    check(static_cast<std::int64_t>(bias.size()) == d.oc,
          "conv2d: bias has " + std::to_string(bias.size()) + " entries, expected " +
              std::to_string(d.oc));

    Tensor out({d.n, d.oc, d.oh, d.ow});
    MatX cols;
    const std::int64_t plane = d.oh * d.ow;
    for (std::int64_t g = 0; g < d.groups; ++g) {
        im2col_group(input, d, stride, pad, g, cols);
        const MatX w = weight_matrix(weights, d, g);
        const MatX y = w * cols;  // ocg x (n*oh*ow)
        for (std::int64_t m = 0; m < y.cols(); ++m) {
            const std::int64_t n = m / plane;
            const std::int64_t p = m % plane;
            for (std::int64_t o = 0; o < d.ocg; ++o) {
                const std::int64_t oc = g * d.ocg + o;
                out.data[static_cast<std::size_t>((n * d.oc + oc) * plane + p)] =
                    y(o, m) + bias[static_cast<std::size_t>(oc)];
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& upstream_grad, const Tensor& cached_input,
                            const Tensor& weights, int stride, int pad, int groups) {
    const ConvDims d = conv_dims(cached_input, weights, stride, pad, groups);
    check(upstream_grad.rank() == 4 && upstream_grad.dim(0) == d.n &&
              upstream_grad.dim(1) == d.oc && upstream_grad.dim(2) == d.oh &&
              upstream_grad.dim(3) == d.ow,
          "conv2d_backward: upstream shape " + upstream_grad.shape_str() +
              " does not match forward output");

    Conv2dGrads grads;
    grads.input_grad = Tensor(cached_input.shape);
    grads.weight_grad = Tensor(weights.shape);
    grads.bias_grad.assign(static_cast<std::size_t>(d.oc), 0.0);

    const std::int64_t plane = d.oh * d.ow;
    const std::int64_t k_rows = d.cg * d.kh * d.kw;
    MatX cols, dy;
    for (std::int64_t g = 0; g < d.groups; ++g) {
        im2col_group(cached_input, d, stride, pad, g, cols);
        dy.resize(d.ocg, d.n * plane);
        for (std::int64_t m = 0; m < dy.cols(); ++m) {
            const std::int64_t n = m / plane;
            const std::int64_t p = m % plane;
            for (std::int64_t o = 0; o < d.ocg; ++o) {
                const std::int64_t oc = g * d.ocg + o;
                dy(o, m) =
                    upstream_grad.data[static_cast<std::size_t>((n * d.oc + oc) * plane + p)];
            }
        }

        const MatX dw = dy * cols.transpose();  // ocg x k_rows
        double* wg_base = grads.weight_grad.data.data() + g * d.ocg * k_rows;
        for (std::int64_t o = 0; o < d.ocg; ++o) {
            for (std::int64_t r = 0; r < k_rows; ++r) wg_base[o * k_rows + r] = dw(o, r);
            grads.bias_grad[static_cast<std::size_t>(g * d.ocg + o)] = dy.row(o).sum();
        }

        const MatX w = weight_matrix(weights, d, g);
        const MatX dcols = w.transpose() * dy;  // k_rows x (n*oh*ow)
        col2im_group(dcols, d, stride, pad, g, grads.input_grad);
    }
    return grads;
}

Tensor maxpool_forward(const Tensor& input, int kernel, int stride) {
    check(input.rank() == 4, "maxpool: input must be NCHW");
    check(kernel >= 1 && stride >= 1, "maxpool: kernel and stride must be >= 1");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    check(h >= kernel && w >= kernel,
          "maxpool: kernel " + std::to_string(kernel) + " larger than input " +
              std::to_string(h) + "x" + std::to_string(w));
    const std::int64_t oh = (h - kernel) / stride + 1;
    const std::int64_t ow = (w - kernel) / stride + 1;
    Tensor out({n, c, oh, ow});
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t x = 0; x < ow; ++x) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::int64_t ky = 0; ky < kernel; ++ky) {
                        for (std::int64_t kx = 0; kx < kernel; ++kx) {
                            best = std::max(best,
                                            input.at4(i, ch, y * stride + ky, x * stride + kx));
                        }
                    }
                    out.at4(i, ch, y, x) = best;
                }
            }
        }
    }
    return out;
}

Tensor maxpool_backward(const Tensor& upstream_grad, const Tensor& cached_input,
                        int kernel, int stride) {
    const std::int64_t n = cached_input.dim(0), c = cached_input.dim(1);
    const std::int64_t h = cached_input.dim(2), w = cached_input.dim(3);
    const std::int64_t oh = (h - kernel) / stride + 1;
    const std::int64_t ow = (w - kernel) / stride + 1;
    check(upstream_grad.rank() == 4 && upstream_grad.dim(0) == n && upstream_grad.dim(1) == c &&
              upstream_grad.dim(2) == oh && upstream_grad.dim(3) == ow,
          "maxpool_backward: upstream shape " + upstream_grad.shape_str() +
              " does not match forward output");
    Tensor dx(cached_input.shape);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t x = 0; x < ow; ++x) {
                    // First maximal element in row-major order wins.
                    double best = -std::numeric_limits<double>::infinity();
                    std::int64_t by = 0, bx = 0;
                    for (std::int64_t ky = 0; ky < kernel; ++ky) {
                        for (std::int64_t kx = 0; kx < kernel; ++kx) {
                            const double v =
                                cached_input.at4(i, ch, y * stride + ky, x * stride + kx);
                            if (v > best) {
                                best = v;
                                by = y * stride + ky;
                                bx = x * stride + kx;
                            }
                        }
                    }
                    dx.at4(i, ch, by, bx) += upstream_grad.at4(i, ch, y, x);
                }
            }
        }
    }
    return dx;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
        out.data[i] = input.data[i] > 0.0 ? input.data[i] : 0.0;
    }
    return out;
}

Tensor relu_backward(const Tensor& upstream_grad, const Tensor& cached_input) {
    check_same_shape(upstream_grad, cached_input, "relu_backward");
    Tensor dx(cached_input.shape);
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        dx.data[i] = cached_input.data[i] > 0.0 ? upstream_grad.data[i] : 0.0;
    }
    return dx;
}

Tensor fc_forward(const Tensor& input, const Tensor& weights, const std::vector<double>& bias) {
    check(input.rank() >= 2, "fc: input must have a leading batch dimension");
    check(weights.rank() == 2, "fc: weights must be (out_dim, in_dim)");
    const std::int64_t n = input.dim(0);
    const std::int64_t in_dim = input.numel() / n;
    const std::int64_t out_dim = weights.dim(0);
    check(weights.dim(1) == in_dim, "fc: weight in_dim " + std::to_string(weights.dim(1)) +
                                        " does not match input feature size " +
                                        std::to_string(in_dim));
    check(static_cast<std::int64_t>(bias.size()) == out_dim,
          "fc: bias has " + std::to_string(bias.size()) + " entries, expected " +
              std::to_string(out_dim));

    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> x(input.data.data(), n, in_dim);
    Eigen::Map<const RowMat> w(weights.data.data(), out_dim, in_dim);
    Tensor out({n, out_dim});
    Eigen::Map<RowMat> y(out.data.data(), n, out_dim);
    y.noalias() = x * w.transpose();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t o = 0; o < out_dim; ++o) out.at2(i, o) += bias[static_cast<std::size_t>(o)];
    }
    return out;
}

FcGrads fc_backward(const Tensor& upstream_grad, const Tensor& cached_input,
                    const Tensor& weights) {
    const std::int64_t n = cached_input.dim(0);
    const std::int64_t in_dim = cached_input.numel() / n;
    const std::int64_t out_dim = weights.dim(0);
    check(upstream_grad.rank() == 2 && upstream_grad.dim(0) == n &&
              upstream_grad.dim(1) == out_dim,
          "fc_backward: upstream shape " + upstream_grad.shape_str() + " does not match (" +
              std::to_string(n) + ", " + std::to_string(out_dim) + ")");

    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> x(cached_input.data.data(), n, in_dim);
    Eigen::Map<const RowMat> w(weights.data.data(), out_dim, in_dim);
    Eigen::Map<const RowMat> dy(upstream_grad.data.data(), n, out_dim);

    FcGrads g;
    g.input_grad = Tensor(cached_input.shape);
    g.weight_grad = Tensor(weights.shape);
    g.bias_grad.assign(static_cast<std::size_t>(out_dim), 0.0);

    Eigen::Map<RowMat> dx(g.input_grad.data.data(), n, in_dim);
    Eigen::Map<RowMat> dw(g.weight_grad.data.data(), out_dim, in_dim);
    dx.noalias() = dy * w;
    dw.noalias() = dy.transpose() * x;
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t o = 0; o < out_dim; ++o) {
            g.bias_grad[static_cast<std::size_t>(o)] += upstream_grad.at2(i, o);
        }
    }
    return g;
}

Tensor dropout_forward(const Tensor& input, double rate, Phase phase, Rng& rng, Tensor* mask_out) {
    check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
    Tensor out(input.shape);
    if (phase == Phase::Eval || rate == 0.0) {
        out.data = input.data;
        if (mask_out) *mask_out = Tensor::full(input.shape, 1.0);
        return out;
    }
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    Tensor mask(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
        const double m = rng.uniform() < keep ? scale : 0.0;
        mask.data[i] = m;
        out.data[i] = input.data[i] * m;
    }
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

Tensor dropout_backward(const Tensor& upstream_grad, const Tensor& mask) {
    check_same_shape(upstream_grad, mask, "dropout_backward");
    Tensor dx(upstream_grad.shape);
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        dx.data[i] = upstream_grad.data[i] * mask.data[i];
    }
    return dx;
}

Tensor lrn_forward(const Tensor& input, int size, double alpha, double beta, Tensor* scale_out) {
    check(input.rank() == 4, "lrn: input must be NCHW");
    check(size >= 1 && size % 2 == 1, "lrn: size must be a positive odd integer");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t half = size / 2;
    Tensor out(input.shape);
    Tensor scale(input.shape);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const std::int64_t lo = std::max<std::int64_t>(0, ch - half);
                    const std::int64_t hi = std::min(c - 1, ch + half);
                    double acc = 0.0;
                    for (std::int64_t j = lo; j <= hi; ++j) {
                        const double v = input.at4(i, j, y, x);
                        acc += v * v;
                    }
                    const double s = 1.0 + (alpha / size) * acc;
                    scale.at4(i, ch, y, x) = s;
                    out.at4(i, ch, y, x) = input.at4(i, ch, y, x) * std::pow(s, -beta);
                }
            }
        }
    }
    if (scale_out) *scale_out = std::move(scale);
    return out;
}

Tensor lrn_backward(const Tensor& upstream_grad, const Tensor& cached_input,
                    const Tensor& cached_scale, int size, double alpha, double beta) {
    check_same_shape(upstream_grad, cached_input, "lrn_backward");
    const std::int64_t n = cached_input.dim(0), c = cached_input.dim(1);
    const std::int64_t h = cached_input.dim(2), w = cached_input.dim(3);
    const std::int64_t half = size / 2;
    Tensor dx(cached_input.shape);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                for (std::int64_t m = 0; m < c; ++m) {
                    const std::int64_t lo = std::max<std::int64_t>(0, m - half);
                    const std::int64_t hi = std::min(c - 1, m + half);
                    const double sm = cached_scale.at4(i, m, y, x);
                    double g = upstream_grad.at4(i, m, y, x) * std::pow(sm, -beta);
                    double acc = 0.0;
                    for (std::int64_t ch = lo; ch <= hi; ++ch) {
                        const double sc = cached_scale.at4(i, ch, y, x);
                        acc += upstream_grad.at4(i, ch, y, x) * cached_input.at4(i, ch, y, x) *
                               std::pow(sc, -beta - 1.0);
                    }
                    g -= 2.0 * (alpha / size) * beta * cached_input.at4(i, m, y, x) * acc;
                    dx.at4(i, m, y, x) = g;
                }
            }
        }
    }
    return dx;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    check(!logits.empty(), "softmax: empty logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

SoftmaxLoss softmax_cross_entropy(const std::vector<double>& logits, int label) {
    check(label >= 0 && label < static_cast<int>(logits.size()),
          "softmax_cross_entropy: label " + std::to_string(label) + " out of range [0, " +
              std::to_string(logits.size()) + ")");
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - m);
    const double lse = std::log(sum);
    SoftmaxLoss out;
    out.loss = lse - (logits[static_cast<std::size_t>(label)] - m);
    out.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.grad[i] = std::exp(logits[i] - m - lse);
    }
    out.grad[static_cast<std::size_t>(label)] -= 1.0;
    return out;
}

BatchLossResult softmax_ce_batch(const Tensor& logits, const std::vector<int>& labels,
                                 double grad_scale) {
    check(logits.rank() == 2, "softmax_ce_batch: logits must be (N, K)");
    const std::int64_t n = logits.dim(0), k = logits.dim(1);
    check(static_cast<std::int64_t>(labels.size()) == n,
          "softmax_ce_batch: " + std::to_string(labels.size()) + " labels for batch of " +
              std::to_string(n));
    BatchLossResult res;
    res.dlogits = Tensor(logits.shape);
    std::vector<double> row(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = logits.at2(i, j);
        const SoftmaxLoss sl = softmax_cross_entropy(row, labels[static_cast<std::size_t>(i)]);
        res.mean_loss += sl.loss;
        std::int64_t arg = 0;
        for (std::int64_t j = 1; j < k; ++j) {
            if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(arg)]) arg = j;
        }
        if (arg != labels[static_cast<std::size_t>(i)]) ++res.errors;
        const double s = grad_scale / static_cast<double>(n);
        for (std::int64_t j = 0; j < k; ++j) {
            res.dlogits.at2(i, j) = s * sl.grad[static_cast<std::size_t>(j)];
        }
    }
    res.mean_loss /= static_cast<double>(n);
    return res;
}

Tensor softmax_rows(const Tensor& logits) {
    check(logits.rank() == 2, "softmax_rows: logits must be (N, K)");
    const std::int64_t n = logits.dim(0), k = logits.dim(1);
    Tensor out(logits.shape);
    std::vector<double> row(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = logits.at2(i, j);
        const std::vector<double> p = softmax(row);
        for (std::int64_t j = 0; j < k; ++j) out.at2(i, j) = p[static_cast<std::size_t>(j)];
    }
    return out;
}

}  // namespace poselab

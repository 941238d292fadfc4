#pragma once

#include <string>
#include <vector>

#include "poselab/rng.hpp"
#include "poselab/tensor.hpp"

namespace poselab {

enum class Phase { Train, Eval };

// A trainable tensor with its gradient and momentum buffer. The three
// tensors always share one shape. lr_scale is 1 for warm-started layers and
// 10 for freshly initialized ones when a warm start is in effect.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor gradient;
    Tensor momentum_buffer;
    double lr_scale = 1.0;
    bool warm_started = false;

    explicit Parameter(std::string n = "", std::vector<std::int64_t> shape = {1})
        : name(std::move(n)), value(shape), gradient(shape), momentum_buffer(shape) {}

    void zero_grad() { gradient.fill(0.0); }
};

// ---------------------------------------------------------------------------
// Convolution (cross-correlation), grouped, NCHW.
// ---------------------------------------------------------------------------

struct Conv2dGrads {
    Tensor input_grad;
    Tensor weight_grad;
    std::vector<double> bias_grad;
};

// input: (N, C, H, W); weights: (OC, C/groups, kH, kW); bias: OC entries.
// Output spatial extent: floor((in + 2*pad - k)/stride) + 1.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const std::vector<double>& bias, int stride, int pad, int groups);

Conv2dGrads conv2d_backward(const Tensor& upstream_grad, const Tensor& cached_input,
                            const Tensor& weights, int stride, int pad, int groups);

// ---------------------------------------------------------------------------
// Max pooling (no padding). Gradient routes to the first maximal element in
// row-major order on ties.
// ---------------------------------------------------------------------------

Tensor maxpool_forward(const Tensor& input, int kernel, int stride);
Tensor maxpool_backward(const Tensor& upstream_grad, const Tensor& cached_input,
                        int kernel, int stride);

// ---------------------------------------------------------------------------
// ReLU.
// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& upstream_grad, const Tensor& cached_input);

// ---------------------------------------------------------------------------
// Fully connected. Input of any rank is treated as (N, numel/N).
// weights: (out_dim, in_dim); bias: out_dim entries.
// ---------------------------------------------------------------------------

struct FcGrads {
    Tensor input_grad;  // in the cached input's original shape
    Tensor weight_grad;
    std::vector<double> bias_grad;
};

Tensor fc_forward(const Tensor& input, const Tensor& weights, const std::vector<double>& bias);
FcGrads fc_backward(const Tensor& upstream_grad, const Tensor& cached_input, const Tensor& weights);

// ---------------------------------------------------------------------------
// Inverted dropout: at train time entries are dropped with probability
// `rate` and survivors scaled by 1/(1-rate); eval is the identity. The mask
// written to mask_out holds the applied multipliers and feeds backward.
// ---------------------------------------------------------------------------

Tensor dropout_forward(const Tensor& input, double rate, Phase phase, Rng& rng, Tensor* mask_out);
Tensor dropout_backward(const Tensor& upstream_grad, const Tensor& mask);

// ---------------------------------------------------------------------------
// Local response normalization across channels (window `size` centered per
// channel, clipped at the edges):
//   out[c] = in[c] * (1 + (alpha/size) * sum in[c']^2)^(-beta)
// scale_out caches the parenthesized factor for backward.
// ---------------------------------------------------------------------------

Tensor lrn_forward(const Tensor& input, int size, double alpha, double beta, Tensor* scale_out);
Tensor lrn_backward(const Tensor& upstream_grad, const Tensor& cached_input,
                    const Tensor& cached_scale, int size, double alpha, double beta);

// ---------------------------------------------------------------------------
// Softmax cross-entropy, computed with max subtraction.
// ---------------------------------------------------------------------------

struct SoftmaxLoss {
    double loss;
    std::vector<double> grad;  // softmax(logits) - onehot(label)
};

SoftmaxLoss softmax_cross_entropy(const std::vector<double>& logits, int label);

std::vector<double> softmax(const std::vector<double>& logits);

// Batch form over logits (N, K). dlogits is scaled by grad_scale / N so that
// the per-parameter gradients of (grad_scale * mean loss) come out of the
// backward pass directly. errors counts argmax misclassifications.
struct BatchLossResult {
    double mean_loss = 0.0;
    Tensor dlogits;
    std::int64_t errors = 0;
};

BatchLossResult softmax_ce_batch(const Tensor& logits, const std::vector<int>& labels,
                                 double grad_scale);

// Row-wise softmax of a (N, K) logits tensor.
Tensor softmax_rows(const Tensor& logits);

}  // namespace poselab

#pragma once

#include <vector>

#include "weatherlpr/tensor.hpp"

/// Dense operations with hand-written backward rules. Feature maps are
/// (N, H, W, C); token sequences are (N, T, C). Every loop accumulates in a
/// fixed order so results are bit-identical between runs.
namespace wlpr::ops {

enum class Padding { Zero, Reflect };

struct ConvSpec {
    int pad = 1;
    Padding padding = Padding::Zero;
    int groups = 1;
};

/// Gradients of a parameterized op: input, weight, bias.
struct ParamGrads {
    Tensor dx;
    Tensor dw;
    Tensor db;
};

/// Stride-1 convolution. x: (N, H, W, Cin), w: (K, K, Cin/groups, Cout),
/// b: (Cout) or empty. Output spatial extent is H + 2*pad - K + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);
ParamGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, const ConvSpec& spec);

/// Transposed convolution without padding. x: (N, H, W, Cin),
/// w: (K, K, Cin, Cout). Output is ((H-1)*stride + K, (W-1)*stride + K).
Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
ParamGrads conv2d_transpose_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride);

struct MatmulGrads {
    Tensor da;
    Tensor db;
};

/// (M, K) x (K, N) -> (M, N).
Tensor matmul(const Tensor& a, const Tensor& b);
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc);

/// Applies a (Cin, Cout) matrix along the last axis, plus an optional
/// (Cout) bias. Works for any rank.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
ParamGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

/// Softmax along the last axis.
Tensor softmax(const Tensor& x);
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

struct NormCache {
    Tensor xhat;
    std::vector<double> inv_std;
};

struct NormGrads {
    Tensor dx;
    Tensor dgamma;
    Tensor dbeta;
};

/// Normalizes each row of the last axis (per-token layer norm).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, NormCache* cache);
NormGrads layer_norm_backward(const NormCache& cache, const Tensor& gamma, const Tensor& dy);

/// Normalizes each channel over every other axis using the statistics of
/// the current call (no running averages).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, NormCache* cache);
NormGrads batch_norm_backward(const NormCache& cache, const Tensor& gamma, const Tensor& dy);

/// Global average pooling (N, H, W, C) -> (N, C).
Tensor gap(const Tensor& x);
Tensor gap_backward(const Shape& x_shape, const Tensor& dy);

/// tanh approximation of GELU.
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

/// Average pooling with window == stride; trailing partial windows average
/// only the cells they cover. (N, H, W, C) -> (N, ceil(H/sh), ceil(W/sw), C).
Tensor avg_pool(const Tensor& x, int sh, int sw);
Tensor avg_pool_backward(const Shape& x_shape, const Tensor& dy, int sh, int sw);

struct AttentionCache {
    Tensor probs;  // (N, T, S)
};

struct AttentionGrads {
    Tensor dq;
    Tensor dk;
    Tensor dv;
};

/// softmax(q k^T / sqrt(D)) v with q: (N, T, D), k: (N, S, D), v: (N, S, E).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, AttentionCache* cache);
AttentionGrads attention_backward(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionCache& cache,
                                  const Tensor& dy);

}  // namespace wlpr::ops

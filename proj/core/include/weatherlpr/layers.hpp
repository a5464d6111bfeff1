#pragma once

#include <string>
#include <utility>
#include <vector>

#include "weatherlpr/ops.hpp"
#include "weatherlpr/rng.hpp"
#include "weatherlpr/tensor.hpp"

namespace wlpr::nn {

/// A trainable tensor and its accumulated gradient.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}
    void zero_grad() { grad.fill(0.0); }
};

using ParamRefs = std::vector<Param*>;

/// Normal(0, gain^2 / fan_in) initializer.
Tensor init_weight(Shape shape, int fan_in, Rng& rng, double gain = 1.0);

/// Pooling strides that bring an (h, w) token grid down to at most `cap`
/// tokens. Returns {1, 1} when no pooling is needed.
std::pair<int, int> token_pool_strides(int h, int w, int cap);

class Conv2d {
public:
    struct Cache {
        Tensor x;
    };

    Conv2d() = default;
    Conv2d(const std::string& name, int kernel, int cin, int cout, ops::ConvSpec spec, Rng& rng, double gain = 1.0);

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(ParamRefs& out) { out.push_back(&w); out.push_back(&b); }

    Param w;
    Param b;
    ops::ConvSpec spec;
};

/// Channel-wise affine map (a 1x1 convolution / fully connected layer).
class Linear {
public:
    struct Cache {
        Tensor x;
    };

    Linear() = default;
    Linear(const std::string& name, int cin, int cout, bool bias, Rng& rng, double gain = 1.0);

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(ParamRefs& out);

    Param w;
    Param b;  ///< empty when the layer has no bias
};

/// Spatial self-attention followed by grouped-conv channel mixing:
///   F_s = F + Attn(F Wq, P(F) Wk, P(F) Wv)
///   F_c = F_s + FC(GELU(BN(GConv3x3(F_s))))
/// P is average pooling down to the token cap.
class FeatureMix {
public:
    struct Cache {
        Tensor x, pooled;
        Linear::Cache q, k, v;
        Tensor qt, kt, vt;
        ops::AttentionCache att;
        int sh = 1, sw = 1;
        Tensor fs;
        Conv2d::Cache gconv;
        Tensor g;
        ops::NormCache bn;
        Tensor bn_out, act;
        Linear::Cache fc;
        Tensor probs() const { return att.probs; }
    };

    FeatureMix() = default;
    FeatureMix(const std::string& name, int channels, int token_cap, Rng& rng);

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(ParamRefs& out);

    Linear wq, wk, wv;
    Conv2d gconv;
    Param bn_gamma, bn_beta;
    Linear fc;
    int token_cap = 512;
};

/// Cross-attention fusion with Q = F_w and K = V = F_c:
///   F_att = LN(F_w + softmax(Q K^T / sqrt(d_k)) V)
///   out   = F_att + FFN(F_att)
class TransformerFuse {
public:
    struct Cache {
        Tensor fw, kv;
        int sh = 1, sw = 1;
        ops::AttentionCache att;
        ops::NormCache ln;
        Tensor f_att;
        Linear::Cache l1;
        Tensor h1, g1;
        Linear::Cache l2;
    };

    TransformerFuse() = default;
    TransformerFuse(const std::string& name, int channels, int token_cap, Rng& rng);

    Tensor forward(const Tensor& fw, const Tensor& fc, Cache* cache) const;
    /// Returns {dF_w, dF_c}.
    std::pair<Tensor, Tensor> backward(const Cache& cache, const Tensor& dy);
    void collect(ParamRefs& out);

    Param ln_gamma, ln_beta;
    Linear ffn1, ffn2;
    int token_cap = 512;
};

/// Encoder WaveTransformer block: DWT -> concat (4C) -> mix -> fuse ->
/// 1x1 projection to 2C. Halves H and W.
class EncoderBlock {
public:
    struct Cache {
        Tensor fw;
        FeatureMix::Cache mix;
        Tensor fc;
        TransformerFuse::Cache fuse;
        Linear::Cache proj;
    };

    EncoderBlock() = default;
    EncoderBlock(const std::string& name, int channels, int token_cap, Rng& rng);

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(ParamRefs& out);

    FeatureMix mix;
    TransformerFuse fuse;
    Linear proj;
};

/// Decoder WaveTransformer block: stride-2 transposed convolution over the
/// four sub-band channel groups (initialized to Haar synthesis), skip add,
/// mix, fuse. (h, w, C) -> (2h, 2w, C/2).
class DecoderBlock {
public:
    struct Cache {
        Tensor x;
        Tensor fw;
        FeatureMix::Cache mix;
        Tensor fc;
        TransformerFuse::Cache fuse;
    };

    DecoderBlock() = default;
    DecoderBlock(const std::string& name, int channels, int token_cap, Rng& rng);

    /// Wavelet reconstruction stage alone (no skip, no mixing).
    Tensor upsample(const Tensor& x) const;
    Tensor forward(const Tensor& x, const Tensor& skip, Cache* cache) const;
    /// Returns {dx, dskip}.
    std::pair<Tensor, Tensor> backward(const Cache& cache, const Tensor& dy);
    void collect(ParamRefs& out);

    Param up_w, up_b;
    FeatureMix mix;
    TransformerFuse fuse;
};

/// ContextGuide: W = softmax(FC(GAP(F))), F_cb = MLP(sum_k W_k CE_k),
/// output = F + F_cb broadcast over space.
class ContextGuide {
public:
    struct Cache {
        Shape x_shape;
        Tensor pooled;
        Linear::Cache fc;
        Tensor weights;
        Tensor mixed;
        Linear::Cache mlp;
    };

    ContextGuide() = default;
    ContextGuide(const std::string& name, int channels, int contexts, Rng& rng);

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& dy);
    void collect(ParamRefs& out);

    /// Softmax context weights for each batch item, (N, K).
    Tensor context_weights(const Tensor& x) const;

    Linear fc;
    Param embedding;  ///< (K, C) context embedding table
    Linear mlp;
};

}  // namespace wlpr::nn

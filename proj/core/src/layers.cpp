#include "weatherlpr/layers.hpp"

#include <cmath>

#include "weatherlpr/error.hpp"
#include "weatherlpr/wavelet.hpp"

namespace wlpr::nn {

namespace {

constexpr double kNormEps = 1e-5;

Tensor tokens(const Tensor& x) { return x.reshaped(Shape{x.dim(0), x.dim(1) * x.dim(2), x.dim(3)}); }

Tensor pool_tokens(const Tensor& x, int sh, int sw) {
    return (sh == 1 && sw == 1) ? x : ops::avg_pool(x, sh, sw);
}

Tensor unpool_tokens(const Shape& x_shape, const Tensor& dy, int sh, int sw) {
    return (sh == 1 && sw == 1) ? dy : ops::avg_pool_backward(x_shape, dy, sh, sw);
}

void accumulate(Param& p, const Tensor& g) { p.grad += g; }

}  // namespace

Tensor init_weight(Shape shape, int fan_in, Rng& rng, double gain) {
    Tensor t(shape);
    const double std = gain / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.normal() * std;
    return t;
}

std::pair<int, int> token_pool_strides(int h, int w, int cap) {
    if (cap < 1) throw ConfigError("token cap must be >= 1");
    int sh = 1, sw = 1;
    auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
    while (static_cast<long long>(ceil_div(h, sh)) * ceil_div(w, sw) > cap) {
        if (ceil_div(h, sh) >= ceil_div(w, sw) && sh < h)
            ++sh;
        else if (sw < w)
            ++sw;
        else
            ++sh;
    }
    return {sh, sw};
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, int kernel, int cin, int cout, ops::ConvSpec s, Rng& rng, double gain)
    : w(name + ".w", init_weight(Shape{kernel, kernel, cin / s.groups, cout}, kernel * kernel * cin / s.groups, rng, gain)),
      b(name + ".b", Tensor::zeros(Shape{cout})),
      spec(s) {}

Tensor Conv2d::forward(const Tensor& x, Cache* cache) const {
    if (cache) cache->x = x;
    return ops::conv2d(x, w.value, b.value, spec);
}

Tensor Conv2d::backward(const Cache& cache, const Tensor& dy) {
    ops::ParamGrads g = ops::conv2d_backward(cache.x, w.value, dy, spec);
    accumulate(w, g.dw);
    accumulate(b, g.db);
    return std::move(g.dx);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int cin, int cout, bool bias, Rng& rng, double gain)
    : w(name + ".w", init_weight(Shape{cin, cout}, cin, rng, gain)) {
    if (bias) b = Param(name + ".b", Tensor::zeros(Shape{cout}));
}

Tensor Linear::forward(const Tensor& x, Cache* cache) const {
    if (cache) cache->x = x;
    return ops::linear(x, w.value, b.value);
}

Tensor Linear::backward(const Cache& cache, const Tensor& dy) {
    ops::ParamGrads g = ops::linear_backward(cache.x, w.value, dy);
    accumulate(w, g.dw);
    if (!b.value.empty()) accumulate(b, g.db);
    return std::move(g.dx);
}

void Linear::collect(ParamRefs& out) {
    out.push_back(&w);
    if (!b.value.empty()) out.push_back(&b);
}

// ---------------------------------------------------------------- FeatureMix

FeatureMix::FeatureMix(const std::string& name, int channels, int cap, Rng& rng)
    : wq(name + ".wq", channels, channels, false, rng),
      wk(name + ".wk", channels, channels, false, rng),
      wv(name + ".wv", channels, channels, false, rng),
      gconv(name + ".gconv", 3, channels, channels,
            ops::ConvSpec{1, ops::Padding::Zero, channels % 2 == 0 ? channels / 2 : 1}, rng),
      bn_gamma(name + ".bn.gamma", Tensor(Shape{channels}, 1.0)),
      bn_beta(name + ".bn.beta", Tensor::zeros(Shape{channels})),
      fc(name + ".fc", channels, channels, true, rng, 0.5),
      token_cap(cap) {}

Tensor FeatureMix::forward(const Tensor& x, Cache* c) const {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), ch = x.dim(3);
    const auto [sh, sw] = token_pool_strides(h, w, token_cap);
    Tensor pooled = pool_tokens(x, sh, sw);
    const int s = pooled.dim(1) * pooled.dim(2);

    Tensor qt = wq.forward(x, c ? &c->q : nullptr).reshaped(Shape{n, h * w, ch});
    Tensor kt = wk.forward(pooled, c ? &c->k : nullptr).reshaped(Shape{n, s, ch});
    Tensor vt = wv.forward(pooled, c ? &c->v : nullptr).reshaped(Shape{n, s, ch});
    Tensor fs = x + ops::attention(qt, kt, vt, c ? &c->att : nullptr).reshaped(x.shape());

    Tensor g = gconv.forward(fs, c ? &c->gconv : nullptr);
    Tensor bn_out = ops::batch_norm(g, bn_gamma.value, bn_beta.value, kNormEps, c ? &c->bn : nullptr);
    Tensor act = ops::gelu(bn_out);
    Tensor out = fs + fc.forward(act, c ? &c->fc : nullptr);
    if (c) {
        c->x = x;
        c->pooled = std::move(pooled);
        c->qt = std::move(qt);
        c->kt = std::move(kt);
        c->vt = std::move(vt);
        c->sh = sh;
        c->sw = sw;
        c->fs = std::move(fs);
        c->g = std::move(g);
        c->bn_out = std::move(bn_out);
        c->act = std::move(act);
    }
    return out;
}

Tensor FeatureMix::backward(const Cache& c, const Tensor& dy) {
    Tensor dfs = dy;
    Tensor dact = fc.backward(c.fc, dy);
    Tensor dbn = ops::gelu_backward(c.bn_out, dact);
    ops::NormGrads bng = ops::batch_norm_backward(c.bn, bn_gamma.value, dbn);
    accumulate(bn_gamma, bng.dgamma);
    accumulate(bn_beta, bng.dbeta);
    dfs += gconv.backward(c.gconv, bng.dx);

    Tensor dx = dfs;
    ops::AttentionGrads ag = ops::attention_backward(c.qt, c.kt, c.vt, c.att, tokens(dfs));
    dx += wq.backward(c.q, ag.dq.reshaped(c.x.shape()));
    Tensor dpooled = wk.backward(c.k, ag.dk.reshaped(c.pooled.shape()));
    dpooled += wv.backward(c.v, ag.dv.reshaped(c.pooled.shape()));
    dx += unpool_tokens(c.x.shape(), dpooled, c.sh, c.sw);
    return dx;
}

void FeatureMix::collect(ParamRefs& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    gconv.collect(out);
    out.push_back(&bn_gamma);
    out.push_back(&bn_beta);
    fc.collect(out);
}

// ---------------------------------------------------------------- TransformerFuse

TransformerFuse::TransformerFuse(const std::string& name, int channels, int cap, Rng& rng)
    : ln_gamma(name + ".ln.gamma", Tensor(Shape{channels}, 1.0)),
      ln_beta(name + ".ln.beta", Tensor::zeros(Shape{channels})),
      ffn1(name + ".ffn1", channels, 2 * channels, true, rng),
      ffn2(name + ".ffn2", 2 * channels, channels, true, rng, 0.5),
      token_cap(cap) {}

Tensor TransformerFuse::forward(const Tensor& fw, const Tensor& fc, Cache* c) const {
    require_same_shape(fw, fc, "transformer_fuse");
    if (fw.dim(3) < 1) throw ShapeError("transformer_fuse: d_k must be >= 1");
    const auto [sh, sw] = token_pool_strides(fw.dim(1), fw.dim(2), token_cap);
    Tensor kv = tokens(pool_tokens(fc, sh, sw));
    Tensor fwt = tokens(fw);
    Tensor s = fw + ops::attention(fwt, kv, kv, c ? &c->att : nullptr).reshaped(fw.shape());
    Tensor f_att = ops::layer_norm(s, ln_gamma.value, ln_beta.value, kNormEps, c ? &c->ln : nullptr);
    Tensor h1 = ffn1.forward(f_att, c ? &c->l1 : nullptr);
    Tensor g1 = ops::gelu(h1);
    Tensor out = f_att + ffn2.forward(g1, c ? &c->l2 : nullptr);
    if (c) {
        c->fw = std::move(fwt);
        c->kv = std::move(kv);
        c->sh = sh;
        c->sw = sw;
        c->f_att = std::move(f_att);
        c->h1 = std::move(h1);
        c->g1 = std::move(g1);
    }
    return out;
}

std::pair<Tensor, Tensor> TransformerFuse::backward(const Cache& c, const Tensor& dy) {
    Tensor dfatt = dy;
    Tensor dg1 = ffn2.backward(c.l2, dy);
    dfatt += ffn1.backward(c.l1, ops::gelu_backward(c.h1, dg1));
    ops::NormGrads lng = ops::layer_norm_backward(c.ln, ln_gamma.value, dfatt);
    accumulate(ln_gamma, lng.dgamma);
    accumulate(ln_beta, lng.dbeta);

    const Shape& fshape = dy.shape();
    Tensor dfw = lng.dx;
    ops::AttentionGrads ag = ops::attention_backward(c.fw, c.kv, c.kv, c.att, tokens(lng.dx));
    dfw += ag.dq.reshaped(fshape);
    ag.dk += ag.dv;
    const int ph = (fshape[1] + c.sh - 1) / c.sh, pw = (fshape[2] + c.sw - 1) / c.sw;
    Tensor dfc = unpool_tokens(fshape, ag.dk.reshaped(Shape{fshape[0], ph, pw, fshape[3]}), c.sh, c.sw);
    return {std::move(dfw), std::move(dfc)};
}

void TransformerFuse::collect(ParamRefs& out) {
    out.push_back(&ln_gamma);
    out.push_back(&ln_beta);
    ffn1.collect(out);
    ffn2.collect(out);
}

// ---------------------------------------------------------------- EncoderBlock

EncoderBlock::EncoderBlock(const std::string& name, int channels, int cap, Rng& rng)
    : mix(name + ".mix", 4 * channels, cap, rng),
      fuse(name + ".fuse", 4 * channels, cap, rng),
      proj(name + ".proj", 4 * channels, 2 * channels, true, rng) {}

Tensor EncoderBlock::forward(const Tensor& x, Cache* c) const {
    Tensor fw = wavelet::concat(wavelet::dwt2(x));
    Tensor fc = mix.forward(fw, c ? &c->mix : nullptr);
    Tensor fb = fuse.forward(fw, fc, c ? &c->fuse : nullptr);
    return proj.forward(fb, c ? &c->proj : nullptr);
}

Tensor EncoderBlock::backward(const Cache& c, const Tensor& dy) {
    Tensor dfb = proj.backward(c.proj, dy);
    auto [dfw, dfc] = fuse.backward(c.fuse, dfb);
    dfw += mix.backward(c.mix, dfc);
    // The Haar analysis is orthonormal, so its adjoint is the synthesis.
    return wavelet::idwt2(wavelet::split(dfw));
}

void EncoderBlock::collect(ParamRefs& out) {
    mix.collect(out);
    fuse.collect(out);
    proj.collect(out);
}

// ---------------------------------------------------------------- DecoderBlock

DecoderBlock::DecoderBlock(const std::string& name, int channels, int cap, Rng& rng)
    : up_w(name + ".up.w", Tensor::zeros(Shape{2, 2, channels, channels / 2})),
      up_b(name + ".up.b", Tensor::zeros(Shape{channels / 2})),
      mix(name + ".mix", channels / 2, cap, rng),
      fuse(name + ".fuse", channels / 2, cap, rng) {
    if (channels % 4 != 0)
        throw ConfigError("decoder block channels must be divisible by 4, got " + std::to_string(channels));
    const int band = channels / 4;
    const Tensor synth = wavelet::synthesis_kernel(band);
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
            for (int ci = 0; ci < channels; ++ci)
                for (int co = 0; co < band; ++co) up_w.value.at(dy, dx, ci, co) = synth.at(dy, dx, ci, co);
}

Tensor DecoderBlock::upsample(const Tensor& x) const { return ops::conv2d_transpose(x, up_w.value, up_b.value, 2); }

Tensor DecoderBlock::forward(const Tensor& x, const Tensor& skip, Cache* c) const {
    Tensor fw = upsample(x);
    require_same_shape(fw, skip, "decoder skip connection");
    fw += skip;
    Tensor fc = mix.forward(fw, c ? &c->mix : nullptr);
    Tensor out = fuse.forward(fw, fc, c ? &c->fuse : nullptr);
    if (c) c->x = x;
    return out;
}

std::pair<Tensor, Tensor> DecoderBlock::backward(const Cache& c, const Tensor& dy) {
    auto [dfw, dfc] = fuse.backward(c.fuse, dy);
    dfw += mix.backward(c.mix, dfc);
    ops::ParamGrads g = ops::conv2d_transpose_backward(c.x, up_w.value, dfw, 2);
    accumulate(up_w, g.dw);
    accumulate(up_b, g.db);
    return {std::move(g.dx), std::move(dfw)};
}

void DecoderBlock::collect(ParamRefs& out) {
    out.push_back(&up_w);
    out.push_back(&up_b);
    mix.collect(out);
    fuse.collect(out);
}

// ---------------------------------------------------------------- ContextGuide

ContextGuide::ContextGuide(const std::string& name, int channels, int contexts, Rng& rng)
    : fc(name + ".fc", channels, contexts, true, rng),
      embedding(name + ".ce", init_weight(Shape{contexts, channels}, 1, rng, 0.1)),
      mlp(name + ".mlp", channels, channels, true, rng, 0.5) {}

Tensor ContextGuide::context_weights(const Tensor& x) const {
    return ops::softmax(fc.forward(ops::gap(x), nullptr));
}

Tensor ContextGuide::forward(const Tensor& x, Cache* c) const {
    if (x.dim(3) != embedding.value.dim(1))
        throw ShapeError("context_guide: feature channels " + std::to_string(x.dim(3)) +
                         " != context embedding width " + std::to_string(embedding.value.dim(1)));
    Tensor pooled = ops::gap(x);
    Tensor weights = ops::softmax(fc.forward(pooled, c ? &c->fc : nullptr));
    Tensor mixed = ops::matmul(weights, embedding.value);
    Tensor cb = mlp.forward(mixed, c ? &c->mlp : nullptr);
    Tensor out = x;
    const int n = x.dim(0), ch = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    for (int b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p)
            for (int j = 0; j < ch; ++j) out[(b * hw + p) * ch + j] += cb[static_cast<std::size_t>(b) * ch + j];
    if (c) {
        c->x_shape = x.shape();
        c->pooled = std::move(pooled);
        c->weights = std::move(weights);
        c->mixed = std::move(mixed);
    }
    return out;
}

Tensor ContextGuide::backward(const Cache& c, const Tensor& dy) {
    const int n = c.x_shape[0], ch = c.x_shape[3];
    const std::size_t hw = static_cast<std::size_t>(c.x_shape[1]) * c.x_shape[2];
    Tensor dcb(Shape{n, ch});
    for (int b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p)
            for (int j = 0; j < ch; ++j) dcb[static_cast<std::size_t>(b) * ch + j] += dy[(b * hw + p) * ch + j];
    Tensor dmixed = mlp.backward(c.mlp, dcb);
    ops::MatmulGrads mg = ops::matmul_backward(c.weights, embedding.value, dmixed);
    accumulate(embedding, mg.db);
    Tensor dlogits = ops::softmax_backward(c.weights, mg.da);
    Tensor dpooled = fc.backward(c.fc, dlogits);
    return dy + ops::gap_backward(c.x_shape, dpooled);
}

void ContextGuide::collect(ParamRefs& out) {
    fc.collect(out);
    out.push_back(&embedding);
    mlp.collect(out);
}

}  // namespace wlpr::nn

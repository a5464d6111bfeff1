#include "weatherlpr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gemm.hpp"
#include "weatherlpr/error.hpp"

namespace wlpr::ops {

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         t.shape().str());
}

// Maps a possibly out-of-range index onto [0, n); -1 means "zero padding".
int source_index(int i, int n, Padding padding) {
    if (i >= 0 && i < n) return i;
    if (padding == Padding::Zero) return -1;
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

struct ConvGeometry {
    int n, h, w, cin, k, cout, oh, ow, cin_g, cout_g, groups;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, const ConvSpec& spec) {
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    ConvGeometry g{};
    g.n = x.dim(0);
    g.h = x.dim(1);
    g.w = x.dim(2);
    g.cin = x.dim(3);
    g.k = w.dim(0);
    g.groups = spec.groups;
    if (w.dim(1) != g.k) throw ShapeError("conv2d: kernel must be square, got " + w.shape().str());
    if (g.groups < 1 || g.cin % g.groups != 0)
        throw ShapeError("conv2d: input channels C=" + std::to_string(g.cin) + " not divisible by groups=" +
                         std::to_string(g.groups));
    g.cin_g = g.cin / g.groups;
    g.cout = w.dim(3);
    if (g.cout % g.groups != 0)
        throw ShapeError("conv2d: output channels " + std::to_string(g.cout) + " not divisible by groups");
    g.cout_g = g.cout / g.groups;
    if (w.dim(2) != g.cin_g)
        throw ShapeError("conv2d: weight input channels " + std::to_string(w.dim(2)) + " != C/groups=" +
                         std::to_string(g.cin_g));
    g.oh = g.h + 2 * spec.pad - g.k + 1;
    g.ow = g.w + 2 * spec.pad - g.k + 1;
    if (g.oh < 1 || g.ow < 1) throw ShapeError("conv2d: kernel larger than padded input " + x.shape().str());
    return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
    const ConvGeometry g = conv_geometry(x, w, spec);
    if (!b.empty() && (b.rank() != 1 || b.dim(0) != g.cout))
        throw ShapeError("conv2d: bias shape " + b.shape().str() + " != (Cout=" + std::to_string(g.cout) + ")");
    Tensor y({g.n, g.oh, g.ow, g.cout});
    const double* xp = x.ptr();
    const double* wp = w.ptr();
    double* yp = y.ptr();
    for (int n = 0; n < g.n; ++n) {
        for (int oy = 0; oy < g.oh; ++oy) {
            for (int ox = 0; ox < g.ow; ++ox) {
                double* out = yp + ((static_cast<std::size_t>(n) * g.oh + oy) * g.ow + ox) * g.cout;
                if (!b.empty())
                    for (int co = 0; co < g.cout; ++co) out[co] = b[co];
                for (int ky = 0; ky < g.k; ++ky) {
                    const int iy = source_index(oy + ky - spec.pad, g.h, spec.padding);
                    if (iy < 0) continue;
                    for (int kx = 0; kx < g.k; ++kx) {
                        const int ix = source_index(ox + kx - spec.pad, g.w, spec.padding);
                        if (ix < 0) continue;
                        const double* in = xp + ((static_cast<std::size_t>(n) * g.h + iy) * g.w + ix) * g.cin;
                        const double* wk = wp + (static_cast<std::size_t>(ky) * g.k + kx) * g.cin_g * g.cout;
                        for (int gr = 0; gr < g.groups; ++gr) {
                            for (int ci = 0; ci < g.cin_g; ++ci) {
                                const double xv = in[gr * g.cin_g + ci];
                                const double* wrow = wk + static_cast<std::size_t>(ci) * g.cout + gr * g.cout_g;
                                double* o = out + gr * g.cout_g;
                                for (int co = 0; co < g.cout_g; ++co) o[co] += xv * wrow[co];
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

ParamGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, const ConvSpec& spec) {
    const ConvGeometry g = conv_geometry(x, w, spec);
    if (!(dy.shape() == Shape{g.n, g.oh, g.ow, g.cout}))
        throw ShapeError("conv2d_backward: output gradient shape " + dy.shape().str());
    ParamGrads grads{Tensor::zeros_like(x), Tensor::zeros_like(w), Tensor::zeros(Shape{g.cout})};
    const double* xp = x.ptr();
    const double* wp = w.ptr();
    const double* dyp = dy.ptr();
    double* dxp = grads.dx.ptr();
    double* dwp = grads.dw.ptr();
    for (int n = 0; n < g.n; ++n) {
        for (int oy = 0; oy < g.oh; ++oy) {
            for (int ox = 0; ox < g.ow; ++ox) {
                const double* gout = dyp + ((static_cast<std::size_t>(n) * g.oh + oy) * g.ow + ox) * g.cout;
                for (int co = 0; co < g.cout; ++co) grads.db[co] += gout[co];
                for (int ky = 0; ky < g.k; ++ky) {
                    const int iy = source_index(oy + ky - spec.pad, g.h, spec.padding);
                    if (iy < 0) continue;
                    for (int kx = 0; kx < g.k; ++kx) {
                        const int ix = source_index(ox + kx - spec.pad, g.w, spec.padding);
                        if (ix < 0) continue;
                        const std::size_t xoff = ((static_cast<std::size_t>(n) * g.h + iy) * g.w + ix) * g.cin;
                        const std::size_t woff = (static_cast<std::size_t>(ky) * g.k + kx) * g.cin_g * g.cout;
                        for (int gr = 0; gr < g.groups; ++gr) {
                            const double* go = gout + gr * g.cout_g;
                            for (int ci = 0; ci < g.cin_g; ++ci) {
                                const std::size_t xi = xoff + gr * g.cin_g + ci;
                                const std::size_t wi = woff + static_cast<std::size_t>(ci) * g.cout + gr * g.cout_g;
                                const double xv = xp[xi];
                                double acc = 0.0;
                                for (int co = 0; co < g.cout_g; ++co) {
                                    acc += go[co] * wp[wi + co];
                                    dwp[wi + co] += xv * go[co];
                                }
                                dxp[xi] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    return grads;
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    require_rank(x, 4, "conv2d_transpose input");
    require_rank(w, 4, "conv2d_transpose weight");
    const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
    const int k = w.dim(0), cout = w.dim(3);
    if (w.dim(1) != k || w.dim(2) != cin)
        throw ShapeError("conv2d_transpose: weight " + w.shape().str() + " incompatible with input channels " +
                         std::to_string(cin));
    if (stride < 1) throw ShapeError("conv2d_transpose: stride must be >= 1");
    if (!b.empty() && (b.rank() != 1 || b.dim(0) != cout))
        throw ShapeError("conv2d_transpose: bias shape " + b.shape().str());
    const int oh = (h - 1) * stride + k, ow = (wd - 1) * stride + k;
    Tensor y({n, oh, ow, cout});
    if (!b.empty())
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = b[i % cout];
    for (int bi = 0; bi < n; ++bi)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < wd; ++ix) {
                const double* in = &x.at(bi, iy, ix, 0);
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        double* out = &y.at(bi, iy * stride + ky, ix * stride + kx, 0);
                        const double* wk = w.ptr() + (static_cast<std::size_t>(ky) * k + kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const double xv = in[ci];
                            const double* wrow = wk + static_cast<std::size_t>(ci) * cout;
                            for (int co = 0; co < cout; ++co) out[co] += xv * wrow[co];
                        }
                    }
            }
    return y;
}

ParamGrads conv2d_transpose_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride) {
    const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
    const int k = w.dim(0), cout = w.dim(3);
    const int oh = (h - 1) * stride + k, ow = (wd - 1) * stride + k;
    if (!(dy.shape() == Shape{n, oh, ow, cout}))
        throw ShapeError("conv2d_transpose_backward: output gradient shape " + dy.shape().str());
    ParamGrads grads{Tensor::zeros_like(x), Tensor::zeros_like(w), Tensor::zeros(Shape{cout})};
    for (std::size_t i = 0; i < dy.numel(); ++i) grads.db[i % cout] += dy[i];
    for (int bi = 0; bi < n; ++bi)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < wd; ++ix) {
                const double* in = &x.at(bi, iy, ix, 0);
                double* din = &grads.dx.at(bi, iy, ix, 0);
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const double* gout = &dy.at(bi, iy * stride + ky, ix * stride + kx, 0);
                        const std::size_t woff = (static_cast<std::size_t>(ky) * k + kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const double* wrow = w.ptr() + woff + static_cast<std::size_t>(ci) * cout;
                            double* dwrow = grads.dw.ptr() + woff + static_cast<std::size_t>(ci) * cout;
                            double acc = 0.0;
                            for (int co = 0; co < cout; ++co) {
                                acc += gout[co] * wrow[co];
                                dwrow[co] += in[ci] * gout[co];
                            }
                            din[ci] += acc;
                        }
                    }
            }
    return grads;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions differ, lhs K=" + std::to_string(a.dim(1)) +
                         " rhs K=" + std::to_string(b.dim(0)));
    Tensor c({a.dim(0), b.dim(1)});
    detail::gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), c.ptr());
    return c;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc) {
    if (!(dc.shape() == Shape{a.dim(0), b.dim(1)}))
        throw ShapeError("matmul_backward: gradient shape " + dc.shape().str());
    MatmulGrads g{Tensor::zeros_like(a), Tensor::zeros_like(b)};
    detail::gemm_nt(a.dim(0), a.dim(1), b.dim(1), dc.ptr(), b.ptr(), g.da.ptr());
    detail::gemm_tn(b.dim(0), b.dim(1), a.dim(0), a.ptr(), dc.ptr(), g.db.ptr());
    return g;
}

namespace {

int last_dim(const Tensor& t) { return t.dim(t.rank() - 1); }

Shape with_last_dim(const Shape& s, int c) {
    switch (s.rank()) {
        case 1: return Shape{c};
        case 2: return Shape{s[0], c};
        case 3: return Shape{s[0], s[1], c};
        default: return Shape{s[0], s[1], s[2], c};
    }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(w, 2, "linear weight");
    const int cin = last_dim(x);
    if (w.dim(0) != cin)
        throw ShapeError("linear: input channels C=" + std::to_string(cin) + " but weight expects " +
                         std::to_string(w.dim(0)));
    const int cout = w.dim(1);
    if (!b.empty() && (b.rank() != 1 || b.dim(0) != cout))
        throw ShapeError("linear: bias shape " + b.shape().str() + " != (" + std::to_string(cout) + ")");
    const std::size_t rows = x.numel() / cin;
    Tensor y(with_last_dim(x.shape(), cout));
    if (!b.empty())
        for (std::size_t r = 0; r < rows; ++r)
            for (int c = 0; c < cout; ++c) y[r * cout + c] = b[c];
    detail::gemm_nn(rows, cout, cin, x.ptr(), w.ptr(), y.ptr());
    return y;
}

ParamGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
    const int cin = w.dim(0), cout = w.dim(1);
    const std::size_t rows = x.numel() / cin;
    if (dy.numel() != rows * cout) throw ShapeError("linear_backward: gradient shape " + dy.shape().str());
    ParamGrads g{Tensor::zeros_like(x), Tensor::zeros_like(w), Tensor::zeros(Shape{cout})};
    detail::gemm_nt(rows, cin, cout, dy.ptr(), w.ptr(), g.dx.ptr());
    detail::gemm_tn(cin, cout, rows, x.ptr(), dy.ptr(), g.dw.ptr());
    for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < cout; ++c) g.db[c] += dy[r * cout + c];
    return g;
}

Tensor softmax(const Tensor& x) {
    const int c = last_dim(x);
    const std::size_t rows = x.numel() / c;
    Tensor y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.ptr() + r * c;
        double* out = y.ptr() + r * c;
        const double m = *std::max_element(in, in + c);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += (out[j] = std::exp(in[j] - m));
        const double inv = 1.0 / z;
        for (int j = 0; j < c; ++j) out[j] *= inv;
    }
    return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
    require_same_shape(y, dy, "softmax_backward");
    const int c = last_dim(y);
    const std::size_t rows = y.numel() / c;
    Tensor dx(y.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* p = y.ptr() + r * c;
        const double* g = dy.ptr() + r * c;
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += p[j] * g[j];
        double* o = dx.ptr() + r * c;
        for (int j = 0; j < c; ++j) o[j] = p[j] * (g[j] - s);
    }
    return dx;
}

namespace {

void check_affine(const Tensor& gamma, const Tensor& beta, int c, const char* what) {
    if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
        throw ShapeError(std::string(what) + ": gamma/beta must be (C=" + std::to_string(c) + "), got " +
                         gamma.shape().str() + " and " + beta.shape().str());
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, NormCache* cache) {
    const int c = last_dim(x);
    check_affine(gamma, beta, c, "layer_norm");
    const std::size_t rows = x.numel() / c;
    Tensor y(x.shape());
    Tensor xhat(x.shape());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.ptr() + r * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += in[j];
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int j = 0; j < c; ++j) {
            const double xh = (in[j] - mean) * is;
            xhat[r * c + j] = xh;
            y[r * c + j] = xh * gamma[j] + beta[j];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

NormGrads layer_norm_backward(const NormCache& cache, const Tensor& gamma, const Tensor& dy) {
    require_same_shape(cache.xhat, dy, "layer_norm_backward");
    const int c = last_dim(dy);
    const std::size_t rows = dy.numel() / c;
    NormGrads g{Tensor(dy.shape()), Tensor::zeros(Shape{c}), Tensor::zeros(Shape{c})};
    std::vector<double> dxhat(c);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xh = cache.xhat.ptr() + r * c;
        const double* go = dy.ptr() + r * c;
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < c; ++j) {
            g.dgamma[j] += go[j] * xh[j];
            g.dbeta[j] += go[j];
            dxhat[j] = go[j] * gamma[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * xh[j];
        }
        const double is = cache.inv_std[r];
        for (int j = 0; j < c; ++j) g.dx[r * c + j] = is * (dxhat[j] - (s1 + xh[j] * s2) / c);
    }
    return g;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, NormCache* cache) {
    const int c = last_dim(x);
    check_affine(gamma, beta, c, "batch_norm");
    const std::size_t rows = x.numel() / c;
    std::vector<double> mean(c, 0.0), var(c, 0.0), inv_std(c);
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) mean[j] += x[r * c + j];
    for (int j = 0; j < c; ++j) mean[j] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
            const double d = x[r * c + j] - mean[j];
            var[j] += d * d;
        }
    for (int j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] / static_cast<double>(rows) + eps);
    Tensor y(x.shape());
    Tensor xhat(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
            const double xh = (x[r * c + j] - mean[j]) * inv_std[j];
            xhat[r * c + j] = xh;
            y[r * c + j] = xh * gamma[j] + beta[j];
        }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

NormGrads batch_norm_backward(const NormCache& cache, const Tensor& gamma, const Tensor& dy) {
    require_same_shape(cache.xhat, dy, "batch_norm_backward");
    const int c = last_dim(dy);
    const std::size_t rows = dy.numel() / c;
    NormGrads g{Tensor(dy.shape()), Tensor::zeros(Shape{c}), Tensor::zeros(Shape{c})};
    std::vector<double> s1(c, 0.0), s2(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
            const double go = dy[r * c + j];
            const double xh = cache.xhat[r * c + j];
            g.dgamma[j] += go * xh;
            g.dbeta[j] += go;
            s1[j] += go * gamma[j];
            s2[j] += go * gamma[j] * xh;
        }
    const double m = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
            const double dxh = dy[r * c + j] * gamma[j];
            const double xh = cache.xhat[r * c + j];
            g.dx[r * c + j] = cache.inv_std[j] * (dxh - (s1[j] + xh * s2[j]) / m);
        }
    return g;
}

Tensor gap(const Tensor& x) {
    require_rank(x, 4, "gap");
    const int n = x.dim(0), c = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    Tensor y({n, c});
    for (int b = 0; b < n; ++b) {
        const double* in = x.ptr() + b * hw * c;
        for (std::size_t p = 0; p < hw; ++p)
            for (int j = 0; j < c; ++j) y[static_cast<std::size_t>(b) * c + j] += in[p * c + j];
        for (int j = 0; j < c; ++j) y[static_cast<std::size_t>(b) * c + j] /= static_cast<double>(hw);
    }
    return y;
}

Tensor gap_backward(const Shape& x_shape, const Tensor& dy) {
    const int n = x_shape[0], c = x_shape[3];
    if (!(dy.shape() == Shape{n, c})) throw ShapeError("gap_backward: gradient shape " + dy.shape().str());
    const std::size_t hw = static_cast<std::size_t>(x_shape[1]) * x_shape[2];
    Tensor dx(x_shape);
    for (int b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p)
            for (int j = 0; j < c; ++j)
                dx[(b * hw + p) * c + j] = dy[static_cast<std::size_t>(b) * c + j] / static_cast<double>(hw);
    return dx;
}

namespace {
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = x[i];
        y[i] = 0.5 * v * (1.0 + std::tanh(kGeluK * (v + kGeluA * v * v * v)));
    }
    return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
    require_same_shape(x, dy, "gelu_backward");
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = x[i];
        const double t = std::tanh(kGeluK * (v + kGeluA * v * v * v));
        const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluA * v * v);
        dx[i] = dy[i] * d;
    }
    return dx;
}

Tensor avg_pool(const Tensor& x, int sh, int sw) {
    require_rank(x, 4, "avg_pool");
    if (sh < 1 || sw < 1) throw ShapeError("avg_pool: strides must be >= 1");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = (h + sh - 1) / sh, ow = (w + sw - 1) / sw;
    Tensor y({n, oh, ow, c});
    for (int b = 0; b < n; ++b)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const int y1 = std::min(h, (oy + 1) * sh), x1 = std::min(w, (ox + 1) * sw);
                const double inv = 1.0 / ((y1 - oy * sh) * (x1 - ox * sw));
                double* out = &y.at(b, oy, ox, 0);
                for (int iy = oy * sh; iy < y1; ++iy)
                    for (int ix = ox * sw; ix < x1; ++ix) {
                        const double* in = &x.at(b, iy, ix, 0);
                        for (int j = 0; j < c; ++j) out[j] += in[j];
                    }
                for (int j = 0; j < c; ++j) out[j] *= inv;
            }
    return y;
}

Tensor avg_pool_backward(const Shape& x_shape, const Tensor& dy, int sh, int sw) {
    const int n = x_shape[0], h = x_shape[1], w = x_shape[2], c = x_shape[3];
    const int oh = (h + sh - 1) / sh, ow = (w + sw - 1) / sw;
    if (!(dy.shape() == Shape{n, oh, ow, c})) throw ShapeError("avg_pool_backward: gradient shape " + dy.shape().str());
    Tensor dx(x_shape);
    for (int b = 0; b < n; ++b)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const int y1 = std::min(h, (oy + 1) * sh), x1 = std::min(w, (ox + 1) * sw);
                const double inv = 1.0 / ((y1 - oy * sh) * (x1 - ox * sw));
                const double* g = &dy.at(b, oy, ox, 0);
                for (int iy = oy * sh; iy < y1; ++iy)
                    for (int ix = ox * sw; ix < x1; ++ix) {
                        double* d = &dx.at(b, iy, ix, 0);
                        for (int j = 0; j < c; ++j) d[j] = g[j] * inv;
                    }
            }
    return dx;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, AttentionCache* cache) {
    require_rank(q, 3, "attention query");
    require_rank(k, 3, "attention key");
    require_rank(v, 3, "attention value");
    const int n = q.dim(0), t = q.dim(1), d = q.dim(2);
    const int s = k.dim(1), e = v.dim(2);
    if (k.dim(0) != n || v.dim(0) != n) throw ShapeError("attention: batch sizes differ");
    if (k.dim(2) != d)
        throw ShapeError("attention: key dim " + std::to_string(k.dim(2)) + " != query dim d_k=" + std::to_string(d));
    if (v.dim(1) != s)
        throw ShapeError("attention: value tokens " + std::to_string(v.dim(1)) + " != key tokens " +
                         std::to_string(s));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor scores({n, t, s});
    for (int b = 0; b < n; ++b)
        detail::gemm_nt(t, s, d, q.ptr() + static_cast<std::size_t>(b) * t * d,
                        k.ptr() + static_cast<std::size_t>(b) * s * d, scores.ptr() + static_cast<std::size_t>(b) * t * s);
    scores *= scale;
    Tensor probs = softmax(scores);
    Tensor y({n, t, e});
    for (int b = 0; b < n; ++b)
        detail::gemm_nn(t, e, s, probs.ptr() + static_cast<std::size_t>(b) * t * s,
                        v.ptr() + static_cast<std::size_t>(b) * s * e, y.ptr() + static_cast<std::size_t>(b) * t * e);
    if (cache) cache->probs = std::move(probs);
    return y;
}

AttentionGrads attention_backward(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionCache& cache,
                                  const Tensor& dy) {
    const int n = q.dim(0), t = q.dim(1), d = q.dim(2);
    const int s = k.dim(1), e = v.dim(2);
    if (!(dy.shape() == Shape{n, t, e})) throw ShapeError("attention_backward: gradient shape " + dy.shape().str());
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    AttentionGrads g{Tensor::zeros_like(q), Tensor::zeros_like(k), Tensor::zeros_like(v)};
    Tensor dprobs({n, t, s});
    for (int b = 0; b < n; ++b) {
        const std::size_t ts = static_cast<std::size_t>(b) * t * s;
        detail::gemm_nt(t, s, e, dy.ptr() + static_cast<std::size_t>(b) * t * e,
                        v.ptr() + static_cast<std::size_t>(b) * s * e, dprobs.ptr() + ts);
        detail::gemm_tn(s, e, t, cache.probs.ptr() + ts, dy.ptr() + static_cast<std::size_t>(b) * t * e,
                        g.dv.ptr() + static_cast<std::size_t>(b) * s * e);
    }
    Tensor dscores = softmax_backward(cache.probs, dprobs);
    dscores *= scale;
    for (int b = 0; b < n; ++b) {
        const std::size_t ts = static_cast<std::size_t>(b) * t * s;
        detail::gemm_nn(t, d, s, dscores.ptr() + ts, k.ptr() + static_cast<std::size_t>(b) * s * d,
                        g.dq.ptr() + static_cast<std::size_t>(b) * t * d);
        detail::gemm_tn(s, d, t, dscores.ptr() + ts, q.ptr() + static_cast<std::size_t>(b) * t * d,
                        g.dk.ptr() + static_cast<std::size_t>(b) * s * d);
    }
    return g;
}

}  // namespace wlpr::ops

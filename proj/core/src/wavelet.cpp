#include "weatherlpr/wavelet.hpp"

#include <string>

#include "weatherlpr/error.hpp"

namespace wlpr::wavelet {

Subbands dwt2(const Tensor& f) {
    if (f.rank() != 4) throw ShapeError("dwt2: expected (N, H, W, C), got " + f.shape().str());
    const int n = f.dim(0), h = f.dim(1), w = f.dim(2), c = f.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("dwt2: H and W must be even, got H=" + std::to_string(h) + " W=" + std::to_string(w));
    const Shape half{n, h / 2, w / 2, c};
    Subbands sb{Tensor(half), Tensor(half), Tensor(half), Tensor(half)};
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w / 2; ++x)
                for (int k = 0; k < c; ++k) {
                    const double a = f.at(b, 2 * y, 2 * x, k);
                    const double bb = f.at(b, 2 * y, 2 * x + 1, k);
                    const double cc = f.at(b, 2 * y + 1, 2 * x, k);
                    const double d = f.at(b, 2 * y + 1, 2 * x + 1, k);
                    sb.ll.at(b, y, x, k) = 0.5 * (a + bb + cc + d);
                    sb.lh.at(b, y, x, k) = 0.5 * (a - bb + cc - d);
                    sb.hl.at(b, y, x, k) = 0.5 * (a + bb - cc - d);
                    sb.hh.at(b, y, x, k) = 0.5 * (a - bb - cc + d);
                }
    return sb;
}

Tensor idwt2(const Subbands& sb) {
    const Shape& s = sb.ll.shape();
    if (s.rank() != 4 || !(sb.lh.shape() == s) || !(sb.hl.shape() == s) || !(sb.hh.shape() == s))
        throw ShapeError("idwt2: sub-band shapes differ: " + sb.ll.shape().str() + ", " + sb.lh.shape().str() + ", " +
                         sb.hl.shape().str() + ", " + sb.hh.shape().str());
    const int n = s[0], h = s[1], w = s[2], c = s[3];
    Tensor f({n, 2 * h, 2 * w, c});
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int k = 0; k < c; ++k) {
                    const double ll = sb.ll.at(b, y, x, k), lh = sb.lh.at(b, y, x, k);
                    const double hl = sb.hl.at(b, y, x, k), hh = sb.hh.at(b, y, x, k);
                    f.at(b, 2 * y, 2 * x, k) = 0.5 * (ll + lh + hl + hh);
                    f.at(b, 2 * y, 2 * x + 1, k) = 0.5 * (ll - lh + hl - hh);
                    f.at(b, 2 * y + 1, 2 * x, k) = 0.5 * (ll + lh - hl - hh);
                    f.at(b, 2 * y + 1, 2 * x + 1, k) = 0.5 * (ll - lh - hl + hh);
                }
    return f;
}

Tensor pad_to_even(const Tensor& f) {
    const int n = f.dim(0), h = f.dim(1), w = f.dim(2), c = f.dim(3);
    const int ph = h + (h % 2), pw = w + (w % 2);
    if (ph == h && pw == w) return f;
    auto reflect = [](int i, int len) { return i < len ? i : (len > 1 ? 2 * len - 2 - i : 0); };
    Tensor out({n, ph, pw, c});
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                for (int k = 0; k < c; ++k) out.at(b, y, x, k) = f.at(b, reflect(y, h), reflect(x, w), k);
    return out;
}

Tensor crop(const Tensor& f, int h, int w) {
    const int n = f.dim(0), c = f.dim(3);
    if (h > f.dim(1) || w > f.dim(2)) throw ShapeError("crop: target larger than " + f.shape().str());
    Tensor out({n, h, w, c});
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int k = 0; k < c; ++k) out.at(b, y, x, k) = f.at(b, y, x, k);
    return out;
}

Tensor concat(const Subbands& sb) {
    const Shape& s = sb.ll.shape();
    const int n = s[0], h = s[1], w = s[2], c = s[3];
    Tensor out({n, h, w, 4 * c});
    const Tensor* bands[4] = {&sb.ll, &sb.lh, &sb.hl, &sb.hh};
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int g = 0; g < 4; ++g)
                    for (int k = 0; k < c; ++k) out.at(b, y, x, g * c + k) = bands[g]->at(b, y, x, k);
    return out;
}

Subbands split(const Tensor& f) {
    if (f.rank() != 4 || f.dim(3) % 4 != 0)
        throw ShapeError("split: channel count must be a multiple of 4, got " + f.shape().str());
    const int n = f.dim(0), h = f.dim(1), w = f.dim(2), c = f.dim(3) / 4;
    const Shape s{n, h, w, c};
    Subbands sb{Tensor(s), Tensor(s), Tensor(s), Tensor(s)};
    Tensor* bands[4] = {&sb.ll, &sb.lh, &sb.hl, &sb.hh};
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int g = 0; g < 4; ++g)
                    for (int k = 0; k < c; ++k) bands[g]->at(b, y, x, k) = f.at(b, y, x, g * c + k);
    return sb;
}

Tensor synthesis_kernel(int channels) {
    // Sign of each band's contribution to output position (dy, dx).
    static constexpr double kSign[2][2][4] = {
        {{1, 1, 1, 1}, {1, -1, 1, -1}},
        {{1, 1, -1, -1}, {1, -1, -1, 1}},
    };
    Tensor w({2, 2, 4 * channels, channels});
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
            for (int g = 0; g < 4; ++g)
                for (int k = 0; k < channels; ++k) w.at(dy, dx, g * channels + k, k) = 0.5 * kSign[dy][dx][g];
    return w;
}

}  // namespace wlpr::wavelet

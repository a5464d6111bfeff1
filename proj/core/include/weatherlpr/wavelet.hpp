#pragma once

#include "weatherlpr/tensor.hpp"

namespace wlpr::wavelet {

/// One level of a 2D wavelet decomposition. Each band is (N, H/2, W/2, C).
struct Subbands {
    Tensor ll;  ///< low-pass approximation
    Tensor lh;  ///< horizontal detail
    Tensor hl;  ///< vertical detail
    Tensor hh;  ///< diagonal detail
};

/// Orthonormal Haar analysis over every 2x2 block (a b / c d), per channel:
///   LL = (a+b+c+d)/2   LH = (a-b+c-d)/2   HL = (a+b-c-d)/2   HH = (a-b-c+d)/2
/// Requires even H and W; use pad_to_even() first otherwise.
Subbands dwt2(const Tensor& f);

/// Exact inverse of dwt2.
Tensor idwt2(const Subbands& sb);

/// Reflect-pads one row/column on the bottom/right when H or W is odd.
Tensor pad_to_even(const Tensor& f);

/// Keeps the top-left (h, w) region.
Tensor crop(const Tensor& f, int h, int w);

/// Channel concatenation [LL | LH | HL | HH] -> (N, H/2, W/2, 4C).
Tensor concat(const Subbands& sb);

/// Inverse of concat: splits the channel axis into four equal groups.
Subbands split(const Tensor& f);

/// (2, 2, 4C, C) kernel for conv2d_transpose(stride 2) that performs idwt2
/// on concat()-ordered input.
Tensor synthesis_kernel(int channels);

}  // namespace wlpr::wavelet

#pragma once

// Raw forward/backward kernels over Tensors. The autodiff layer and the
// no-grad inference paths both call into these, so values stay bit-identical
// between the two.

#include "dkroot/tensor.hpp"

namespace dkroot::nn {

// Cross-correlation with zero same-padding (k odd), optional time stride.
// x: [ci, l], w: [co, ci, k], b: [co] -> [co, ceil(l/stride)]
Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride = 1);
void conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& gout, std::size_t stride,
                     Tensor& gx, Tensor& gw, Tensor& gb);

// x: [n], w: [p, n], b: [p] -> [p]
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                    Tensor& gx, Tensor& gw, Tensor& gb);

Tensor relu_forward(const Tensor& x);
// Nearest-neighbour x2 upsampling along time: [c, l] -> [c, 2l]
Tensor upsample2_forward(const Tensor& x);
Tensor concat_rows_forward(const Tensor& a, const Tensor& b);
// v: [m] broadcast to [m, l]
Tensor broadcast_time_forward(const Tensor& v, std::size_t l);

}  // namespace dkroot::nn

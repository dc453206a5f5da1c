#pragma once

#include "sauvolanet/tensor.hpp"

namespace sauvolanet::ops {

inline constexpr double kInstanceNormEps = 1e-5;

// Same-size 2-D cross-correlation over an HWC tensor.
// weights: [k, k, Cin, Cout] with k odd; bias: [Cout]. Zero padding of
// dilation * (k / 2) on every side keeps the spatial extent.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weights, const Tensor<Real>& bias,
                    int dilation = 1);

// Per-channel standardization over the spatial extent of one instance.
template <typename Real>
Tensor<Real> instance_norm(const Tensor<Real>& input, const Tensor<Real>& gain, const Tensor<Real>& shift,
                           double eps = kInstanceNormEps);

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& input);

// Softmax over the last axis at every spatial position.
template <typename Real>
Tensor<Real> softmax_channels(const Tensor<Real>& input);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& input);

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& input, double factor);

// Same data under a new shape with equal element count.
template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& input, Shape shape);

} // namespace sauvolanet::ops

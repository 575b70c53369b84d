#pragma once

#include <vector>

#include "intrinsic/autograd.hpp"

// Differentiable primitives used by the networks and the objectives. All
// image-like tensors are NCHW.
namespace intrinsic::ag {

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int padding = 0;  ///< zero padding
};

/// Output extent of a strided convolution: floor((n + 2p - k) / s) + 1.
std::int64_t conv_out_size(std::int64_t n, const ConvGeometry& g);

/// x: (N,Cin,H,W), weight: (Cout,Cin,k,k), bias: (Cout) or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);

/// Fractionally-strided convolution. weight: (Cin,Cout,k,k). Output extent is
/// (n - 1) * s - 2p + k + output_padding.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g,
                     int output_padding);

Var reflection_pad2d(const Var& x, int pad);

/// Per-sample, per-channel normalization over H and W with affine (C) params.
Var instance_norm2d(const Var& x, const Var& gamma, const Var& beta, double eps);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var tanh(const Var& x);
Var sigmoid(const Var& x);

Var add(const Var& a, const Var& b);
Var mean(const Var& x);

/// log(clamp(x, eps, 1 - eps)); the gradient is zero where the clamp is active.
Var log_clamped(const Var& x, double eps);
Var one_minus(const Var& x);

/// mean(|a - b|), subgradient sign(0) = 0.
Var l1_mean(const Var& a, const Var& b);

/// sum_i weights[i] * terms[i] over scalar terms.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

Var detach(const Var& x);

}  // namespace intrinsic::ag

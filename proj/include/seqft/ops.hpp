#pragma once

#include <vector>

#include "seqft/tensor.hpp"

namespace seqft {

// Differentiable tensor ops. Every op records a node on the active graph
// when a TapeScope is open and at least one input requires grad; otherwise
// it is a plain eager computation.

/// Matrix product of a [r x k] and b [k x c].
Tensor matmul(const Tensor& a, const Tensor& b);

/// 2-D cross-correlation (no kernel flip) of input [N x C x H x W] with
/// kernel [F x C x kh x kw]. Output spatial size is
/// floor((H + 2*padding - kh) / stride) + 1 and likewise for width.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);

/// Elementwise max(x, 0). The gradient at exactly 0 is defined as 0.
Tensor relu(const Tensor& x);

/// Average pooling over non-padded windows of [N x C x H x W].
Tensor avg_pool2d(const Tensor& x, int window, int stride);

/// Mean over the spatial dims: [N x C x H x W] -> [N x C].
Tensor global_avg_pool(const Tensor& x);

/// Concatenation along the channel dim of two [N x C x H x W] tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Per-channel batch normalization of [N x C x H x W]. In training mode the
/// batch statistics (biased variance) normalize the activations and the
/// running statistics are updated as r <- momentum*r + (1-momentum)*batch;
/// in eval mode the running statistics normalize and nothing is updated.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::vector<double>& running_mean, std::vector<double>& running_var,
                  bool training, double momentum = 0.9, double eps = 1e-5);

/// Row-wise softmax of a [N x K] tensor, computed in log space.
Tensor softmax_rows(const Tensor& x);

/// Adds a length-K bias row to every row of a [N x K] tensor.
Tensor add_bias_rows(const Tensor& x, const Tensor& bias);

/// Sum of all entries, as a one-element tensor.
Tensor sum(const Tensor& x);

}  // namespace seqft

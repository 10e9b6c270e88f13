#pragma once

#include "up2d/tensor.hpp"

#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace up2d {

using Rng = std::mt19937_64;

/// Clamp applied to probabilities before any logarithm.
inline constexpr Scalar kProbEps = 1e-7f;

struct Node;
using Var = std::shared_ptr<Node>;

/// One recorded value of the tape. Leaves with requires_grad are trainable parameters.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
};

/// Independent generator for (seed, stream, index); used to keep every random draw reproducible.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

Var make_leaf(Tensor value, bool requires_grad = false);
inline Var constant(Tensor value) { return make_leaf(std::move(value), false); }
inline Var parameter(Tensor value) { return make_leaf(std::move(value), true); }

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every node
/// with requires_grad; leaves keep them until zero_grad().
void backward(const Var& loss);
void zero_grad(std::span<const Var> params);

// Convolution and resampling on NCHW tensors.
Var conv2d(const Var& input, const Var& kernel, int stride, int padding);
Var add_channel_bias(const Var& input, const Var& bias);
Var upsample_nearest2x(const Var& input);
Var concat_channels(const Var& a, const Var& b);

// Pointwise.
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var dropout(const Var& x, Scalar rate, bool stochastic, Rng& rng);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, Scalar factor);

// Reductions.
Var sum(const Var& x);
Var mean(const Var& x);

/// Mean binary cross-entropy computed from logits (log-sum-exp form).
Var bce_with_logits(const Var& logits, const Tensor& target);

/// -sum m [y log p + (1-y) log(1-p)] / sum m, probabilities clamped to [eps, 1-eps].
/// Returns 0 with zero gradient when the mask is empty.
Var masked_bce(const Var& probs, const Tensor& target, const Tensor& mask);

/// -sum m p log p / sum m with clamped p. Returns 0 when the mask is empty.
Var masked_entropy(const Var& probs, const Tensor& mask);

// Non-differentiable tensor helpers shared across modules.
Tensor upsample_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w);
Scalar clamp_prob(Scalar p);

} // namespace up2d

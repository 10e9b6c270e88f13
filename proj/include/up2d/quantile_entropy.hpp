#pragma once

#include "up2d/autograd.hpp"

#include <span>
#include <vector>

namespace up2d {

/// Empirical beta-quantile: the order statistic at floor(beta * (n - 1)), lower interpolation.
Scalar quantile(std::span<const Scalar> values, double beta);

struct QuantileBand {
    double beta = 0.1;
    std::vector<Scalar> q_low;   // per class channel
    std::vector<Scalar> q_high;
    Tensor mask;                 // [N, C, H, W]
    std::vector<double> retained;
};

/// Per class channel, pooled over the whole batch: keep q_low < p < q_high (strict).
QuantileBand quantile_mask(const Tensor& probs, double beta);

/// -sum m p log p / sum m; zero when nothing is retained.
Var entropy_loss(const Var& probs, const Tensor& mask);

struct LossWeights {
    Scalar consistency = 1.0f;
    Scalar entropy = 1.0f;
};

/// L_cons + L_ent with optional weights (both 1 by default).
Var total_loss(const Var& consistency, const Var& entropy, LossWeights weights = {});

} // namespace up2d

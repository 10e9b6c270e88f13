#include "up2d/quantile_entropy.hpp"

#include "up2d/log.hpp"

#include <algorithm>
#include <cmath>

namespace up2d {

Scalar quantile(std::span<const Scalar> values, double beta) {
    if (values.empty()) throw ParameterError("quantile of empty input");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ParameterError("quantile: beta must lie in [0, 1]");
    std::vector<Scalar> v(values.begin(), values.end());
    const auto k = static_cast<std::size_t>(std::floor(beta * static_cast<double>(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

QuantileBand quantile_mask(const Tensor& probs, double beta) {
    if (!(beta >= 0.0 && beta < 0.5)) throw ParameterError("quantile_mask: beta must lie in [0, 0.5)");
    if (probs.rank() != 4) throw ShapeError("quantile_mask expects [N,C,H,W], got " + shape_str(probs.shape()));
    const std::size_t N = probs.dim(0), C = probs.dim(1), HW = probs.dim(2) * probs.dim(3);
    QuantileBand band;
    band.beta = beta;
    band.mask = Tensor(probs.shape());
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<Scalar> pooled;
        pooled.reserve(N * HW);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < HW; ++i) pooled.push_back(probs[(n * C + c) * HW + i]);
        const Scalar lo = quantile(pooled, beta);
        const Scalar hi = quantile(pooled, 1.0 - beta);
        std::size_t kept = 0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t idx = (n * C + c) * HW + i;
                const bool keep = probs[idx] > lo && probs[idx] < hi;
                band.mask[idx] = keep ? 1.0f : 0.0f;
                kept += keep;
            }
        if (lo == hi) log_warn("quantile_mask: class " + std::to_string(c) + " predictions are constant, mask is empty");
        band.q_low.push_back(lo);
        band.q_high.push_back(hi);
        band.retained.push_back(static_cast<double>(kept) / static_cast<double>(N * HW));
    }
    return band;
}

Var entropy_loss(const Var& probs, const Tensor& mask) { return masked_entropy(probs, mask); }

Var total_loss(const Var& consistency, const Var& entropy, LossWeights weights) {
    if (!consistency->value.all_finite() || !entropy->value.all_finite()) {
        throw NumericError("total_loss: non-finite component");
    }
    const Var c = weights.consistency == 1.0f ? consistency : scale(consistency, weights.consistency);
    const Var e = weights.entropy == 1.0f ? entropy : scale(entropy, weights.entropy);
    return add(c, e);
}

} // namespace up2d

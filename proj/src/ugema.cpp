#include "up2d/ugema.hpp"

#include "up2d/autograd.hpp"
#include "up2d/log.hpp"

#include <algorithm>
#include <cmath>

namespace up2d {

std::optional<GaussWeight> inverted_gaussian(const Tensor& mask, double scale) {
    if (!(scale > 0.0)) throw ParameterError("inverted_gaussian: scale s must be positive");
    if (mask.rank() != 2) throw ShapeError("inverted_gaussian expects an [H,W] mask");
    const std::size_t H = mask.dim(0), W = mask.dim(1);
    double sx = 0.0, sy = 0.0;
    std::size_t count = 0, x0 = W, x1 = 0, y0 = H, y1 = 0;
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            if (mask[y * W + x] < 0.5f) continue;
            ++count;
            sx += static_cast<double>(x);
            sy += static_cast<double>(y);
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (count == 0) return std::nullopt;

    GaussWeight g;
    g.mu_x = sx / static_cast<double>(count);
    g.mu_y = sy / static_cast<double>(count);
    g.box_w = x1 - x0 + 1;
    g.box_h = y1 - y0 + 1;
    g.sigma_x = scale * static_cast<double>(g.box_w);
    g.sigma_y = scale * static_cast<double>(g.box_h);
    g.fg_ratio = static_cast<double>(count) / static_cast<double>(H * W);
    g.map = Tensor({H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const double dx = static_cast<double>(x) - g.mu_x;
            const double dy = static_cast<double>(y) - g.mu_y;
            const double q = dx * dx / (2.0 * g.sigma_x * g.sigma_x) + dy * dy / (2.0 * g.sigma_y * g.sigma_y);
            g.map[y * W + x] = static_cast<Scalar>(1.0 - std::exp(-q));
        }
    return g;
}

RegionMask region_mask(const Tensor& mask, const Tensor& weight, double delta) {
    require_same_shape(mask, weight, "region_mask");
    double max_fg = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mask.numel(); ++i)
        if (mask[i] >= 0.5f) max_fg = std::max(max_fg, static_cast<double>(weight[i]));
    RegionMask r;
    r.tau = max_fg - delta;
    r.keep = Tensor(mask.shape());
    for (std::size_t i = 0; i < mask.numel(); ++i) {
        const bool fg = mask[i] >= 0.5f;
        r.keep[i] = (fg || static_cast<double>(weight[i]) <= r.tau) ? 1.0f : 0.0f;
    }
    return r;
}

std::optional<double> weighted_entropy(const Tensor& probs, const Tensor& region, const Tensor& weight) {
    require_same_shape(probs, region, "weighted_entropy");
    require_same_shape(probs, weight, "weighted_entropy");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        const double w = static_cast<double>(region[i]) * weight[i];
        if (w == 0.0) continue;
        const double p = clamp_prob(probs[i]);
        num -= w * p * std::log(p);
        den += w;
    }
    if (den <= 0.0) return std::nullopt;
    return num / den;
}

std::optional<double> weighted_uncertainty(const Tensor& student_probs, const Tensor& teacher_labels, double scale) {
    require_same_shape(student_probs, teacher_labels, "weighted_uncertainty");
    if (student_probs.rank() != 4) throw ShapeError("weighted_uncertainty expects [N,C,H,W]");
    const std::size_t N = student_probs.dim(0), C = student_probs.dim(1), H = student_probs.dim(2),
                      W = student_probs.dim(3);
    double total = 0.0;
    std::size_t terms = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const auto offset = static_cast<std::ptrdiff_t>((n * C + c) * H * W);
            auto slice = [&](const Tensor& t) {
                return Tensor({H, W}, std::vector<Scalar>(t.data().begin() + offset,
                                                          t.data().begin() + offset + static_cast<std::ptrdiff_t>(H * W)));
            };
            const Tensor labels = slice(teacher_labels);
            const auto g = inverted_gaussian(labels, scale);
            if (!g) continue;
            const auto region = region_mask(labels, g->map, g->fg_ratio);
            const auto e = weighted_entropy(slice(student_probs), region.keep, g->map);
            if (!e) continue;
            total += *e;
            ++terms;
        }
    if (terms == 0) return std::nullopt;
    return total / static_cast<double>(terms);
}

void ema_update(std::span<Scalar> teacher, std::span<const Scalar> student, double alpha) {
    if (teacher.size() != student.size()) throw ShapeError("ema_update: parameter count mismatch");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("ema_update: alpha must lie in [0, 1]");
    for (std::size_t i = 0; i < teacher.size(); ++i)
        teacher[i] = static_cast<Scalar>(alpha * teacher[i] + (1.0 - alpha) * student[i]);
}

bool ugema_step(UgemaState& state, double batch_uncertainty, std::span<Scalar> teacher,
                std::span<const Scalar> student, double alpha) {
    if (!std::isfinite(batch_uncertainty)) {
        ++state.rejected_non_finite;
        log_warn("ugema: non-finite batch uncertainty ignored");
        return false;
    }
    state.batch_uncertainties.push_back(batch_uncertainty);
    if (!(batch_uncertainty < state.min_batch_uncertainty)) return false;
    ema_update(teacher, student, alpha);
    state.min_batch_uncertainty = batch_uncertainty;
    ++state.update_count;
    return true;
}

std::optional<double> ugema_epoch_end(UgemaState& state) {
    if (state.batch_uncertainties.empty()) {
        log_warn("ugema: epoch ended without any recorded batch");
        return std::nullopt;
    }
    double total = 0.0;
    for (double e : state.batch_uncertainties) total += e;
    const double mean = total / static_cast<double>(state.batch_uncertainties.size());
    if (mean < state.min_epoch_uncertainty) state.min_epoch_uncertainty = mean;
    state.min_batch_uncertainty = state.min_epoch_uncertainty;
    state.batch_uncertainties.clear();
    ++state.epoch;
    return mean;
}

} // namespace up2d

#include "up2d/uncertainty.hpp"

#include "up2d/log.hpp"

#include <algorithm>
#include <cmath>

namespace up2d {

std::pair<Tensor, Tensor> mean_and_std(const std::vector<Tensor>& passes) {
    if (passes.empty()) throw ParameterError("mean_and_std: need at least one pass");
    const Shape& shape = passes.front().shape();
    Tensor mean(shape), stdev(shape);
    const auto k = static_cast<double>(passes.size());
    for (std::size_t i = 0; i < mean.numel(); ++i) {
        double s = 0.0;
        for (const auto& p : passes) s += p[i];
        const double m = s / k;
        double var = 0.0;
        for (const auto& p : passes) var += (p[i] - m) * (p[i] - m);
        mean[i] = static_cast<Scalar>(m);
        stdev[i] = static_cast<Scalar>(std::sqrt(var / k));
    }
    return {std::move(mean), std::move(stdev)};
}

Tensor entropy_map(const Tensor& probs, EntropyForm form) {
    Tensor e(probs.shape());
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        const double p = clamp_prob(probs[i]);
        double v = -p * std::log(p);
        if (form == EntropyForm::Binary) v -= (1.0 - p) * std::log(1.0 - p);
        e[i] = static_cast<Scalar>(v);
    }
    return e;
}

Tensor threshold(const Tensor& probs, Scalar gamma) {
    Tensor y(probs.shape());
    for (std::size_t i = 0; i < probs.numel(); ++i) y[i] = probs[i] >= gamma ? 1.0f : 0.0f;
    return y;
}

TeacherOutputs mc_forward(const SegNet& teacher, const Tensor& images, std::size_t passes, Scalar gamma, Rng& rng,
                          EntropyForm form) {
    if (passes == 0) throw ParameterError("mc_forward: number of passes K must be at least 1");
    if (!(gamma > 0.0f && gamma < 1.0f)) throw ParameterError("mc_forward: gamma must lie in (0, 1)");
    const std::uint64_t master = rng();
    std::vector<Tensor> probs;
    probs.reserve(passes);
    for (std::size_t k = 0; k < passes; ++k) {
        std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                          static_cast<std::uint32_t>(k)};
        Rng stream(seq);
        probs.push_back(teacher.forward(images, true, stream, false).probs->value);
    }
    TeacherOutputs out;
    std::tie(out.mean_probs, out.std_map) = mean_and_std(probs);
    out.entropy = entropy_map(out.mean_probs, form);
    out.pseudo_labels = threshold(out.mean_probs, gamma);

    Rng unused(0);
    const auto det = teacher.forward(images, false, unused, false);
    out.deterministic_probs = det.probs->value;
    out.features = upsample_bilinear(det.features->value, images.dim(2), images.dim(3));
    return out;
}

double median(std::vector<Scalar> values) {
    if (values.empty()) throw ParameterError("median of empty set");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::vector<EntropyThreshold> entropy_median_threshold(const Tensor& entropy, const Tensor& pseudo_labels,
                                                       EntropyMedianMode mode) {
    require_same_shape(entropy, pseudo_labels, "entropy_median_threshold");
    if (entropy.rank() != 4) throw ShapeError("entropy_median_threshold expects [N,C,H,W]");
    const std::size_t N = entropy.dim(0), C = entropy.dim(1), HW = entropy.dim(2) * entropy.dim(3);
    std::vector<EntropyThreshold> out(C);
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<Scalar> fg, bg, all;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t idx = (n * C + c) * HW + i;
                (pseudo_labels[idx] >= 0.5f ? fg : bg).push_back(entropy[idx]);
                all.push_back(entropy[idx]);
            }
        const auto global = static_cast<Scalar>(median(all));
        EntropyThreshold& t = out[c];
        if (mode == EntropyMedianMode::UnionMedian) {
            t.foreground = t.background = global;
            continue;
        }
        if (fg.empty() || bg.empty()) {
            log_warn("entropy threshold: class " + std::to_string(c) + " has an empty " +
                     (fg.empty() ? "foreground" : "background") + ", using global median");
            t.foreground = t.background = global;
            t.fallback = true;
            continue;
        }
        const auto mf = static_cast<Scalar>(median(fg));
        const auto mb = static_cast<Scalar>(median(bg));
        if (mode == EntropyMedianMode::PerRegion) {
            t.foreground = mf;
            t.background = mb;
        } else {
            t.foreground = t.background = static_cast<Scalar>(0.5 * (static_cast<double>(mf) + mb));
        }
    }
    return out;
}

} // namespace up2d

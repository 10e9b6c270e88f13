#include "up2d/rpf.hpp"

#include "up2d/log.hpp"

#include <cmath>

namespace up2d {

namespace {

void require_map(const Tensor& t, const char* what) {
    if (t.rank() != 4 || t.dim(1) != 1) throw ShapeError(std::string(what) + ": expected [N,1,H,W], got " + shape_str(t.shape()));
}

void require_aligned(const Tensor& features, const Tensor& map, const char* what) {
    require_map(map, what);
    if (features.rank() != 4 || features.dim(0) != map.dim(0) || features.dim(2) != map.dim(2) ||
        features.dim(3) != map.dim(3)) {
        throw ShapeError(std::string(what) + ": features " + shape_str(features.shape()) + " not pixel-aligned with " +
                         shape_str(map.shape()));
    }
}

Tensor slice_image(const Tensor& t, std::size_t n) {
    const std::size_t per = t.numel() / t.dim(0);
    Shape shape = t.shape();
    shape[0] = 1;
    std::vector<Scalar> data(t.data().begin() + static_cast<std::ptrdiff_t>(n * per),
                             t.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * per));
    return Tensor(std::move(shape), std::move(data));
}

void put_image(Tensor& dst, std::size_t n, const Tensor& src) {
    const std::size_t per = dst.numel() / dst.dim(0);
    std::copy(src.data().begin(), src.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(n * per));
}

Tensor mul_maps(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mask product");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
    return out;
}

Tensor mask_features(const Tensor& features, const Tensor& keep) {
    require_aligned(features, keep, "mask_features");
    Tensor out = features;
    const std::size_t N = features.dim(0), F = features.dim(1), HW = features.dim(2) * features.dim(3);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t i = 0; i < HW; ++i) out[(n * F + f) * HW + i] *= keep[n * HW + i];
    return out;
}

struct ChannelMasks {
    Tensor mask;
    std::size_t invalid = 0;
};

// Masks for one class channel over the images of one prototype scope.
ChannelMasks standard_channel(const TeacherOutputs& t, std::size_t c, const RpfConfig& cfg) {
    const Tensor labels = channel(t.pseudo_labels, c);
    const auto filtered = reliable_filter(t.features, channel(t.mean_probs, c), channel(t.std_map, c), cfg.eta1);
    const auto protos = compute_prototypes(filtered.features, filtered.probs, labels, &filtered.keep);
    const auto d = distance_map(t.features, protos);
    if (!d) return {Tensor::ones(labels.shape()), 1};
    return {denoise_mask_standard(labels, *d), 0};
}

ChannelMasks refined_channel(const TeacherOutputs& t, const RpfConfig& cfg, const EntropyThreshold& eta2) {
    const Tensor small = channel(t.pseudo_labels, cfg.cup_channel);
    const Tensor outer = channel(t.pseudo_labels, cfg.disc_channel);
    const Tensor keep =
        mul_maps(info_region_mask(small, outer),
                 uncertainty_mask(channel(t.std_map, cfg.cup_channel), channel(t.entropy, cfg.cup_channel), small,
                                  cfg.eta1, eta2));
    const Tensor features = mask_features(t.features, keep);
    const Tensor probs = mul_maps(channel(t.mean_probs, cfg.cup_channel), keep);
    const auto protos = compute_prototypes(features, probs, small, &keep);
    const auto d = distance_map(cfg.refined_distances == RefinedDistanceSource::Masked ? features : t.features, protos);
    if (!d) return {Tensor::ones(small.shape()), 1};
    return {denoise_mask_refined(small, outer, *d), 0};
}

TeacherOutputs slice_teacher(const TeacherOutputs& t, std::size_t n) {
    return {slice_image(t.mean_probs, n),    slice_image(t.std_map, n),  slice_image(t.entropy, n),
            slice_image(t.pseudo_labels, n), slice_image(t.features, n), slice_image(t.deterministic_probs, n)};
}

} // namespace

Tensor channel(const Tensor& t, std::size_t c) {
    if (t.rank() != 4 || c >= t.dim(1)) throw ShapeError("channel " + std::to_string(c) + " of " + shape_str(t.shape()));
    const std::size_t N = t.dim(0), C = t.dim(1), HW = t.dim(2) * t.dim(3);
    Tensor out({N, 1, t.dim(2), t.dim(3)});
    for (std::size_t n = 0; n < N; ++n)
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>((n * C + c) * HW), HW,
                    out.data().begin() + static_cast<std::ptrdiff_t>(n * HW));
    return out;
}

void set_channel(Tensor& dst, std::size_t c, const Tensor& src) {
    require_map(src, "set_channel");
    if (dst.rank() != 4 || c >= dst.dim(1) || dst.dim(0) != src.dim(0) || dst.dim(2) != src.dim(2) ||
        dst.dim(3) != src.dim(3)) {
        throw ShapeError("set_channel: " + shape_str(src.shape()) + " into " + shape_str(dst.shape()));
    }
    const std::size_t N = dst.dim(0), C = dst.dim(1), HW = dst.dim(2) * dst.dim(3);
    for (std::size_t n = 0; n < N; ++n)
        std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(n * HW), HW,
                    dst.data().begin() + static_cast<std::ptrdiff_t>((n * C + c) * HW));
}

FilteredFeatures reliable_filter(const Tensor& features, const Tensor& probs, const Tensor& std_map, Scalar eta1) {
    if (!(eta1 > 0.0f)) throw ParameterError("reliable_filter: eta1 must be positive");
    require_same_shape(probs, std_map, "reliable_filter");
    require_aligned(features, probs, "reliable_filter");
    Tensor keep(probs.shape());
    for (std::size_t i = 0; i < keep.numel(); ++i) keep[i] = std_map[i] < eta1 ? 1.0f : 0.0f;
    return {mask_features(features, keep), mul_maps(probs, keep), keep};
}

Tensor info_region_mask(const Tensor& labels_small, const Tensor& labels_outer) {
    require_same_shape(labels_small, labels_outer, "info_region_mask");
    Tensor m(labels_small.shape());
    for (std::size_t i = 0; i < m.numel(); ++i)
        m[i] = (labels_small[i] < 0.5f && labels_outer[i] < 0.5f) ? 0.0f : 1.0f;
    return m;
}

Tensor uncertainty_mask(const Tensor& std_map, const Tensor& entropy, const Tensor& labels, Scalar eta1,
                        const EntropyThreshold& eta2) {
    require_same_shape(std_map, entropy, "uncertainty_mask");
    require_same_shape(std_map, labels, "uncertainty_mask");
    Tensor m(std_map.shape());
    for (std::size_t i = 0; i < m.numel(); ++i)
        m[i] = (std_map[i] < eta1 && entropy[i] < eta2.for_label(labels[i])) ? 1.0f : 0.0f;
    return m;
}

Prototype compute_prototype(const Tensor& features, const Tensor& probs, const Tensor& labels, int omega,
                            const Tensor* keep) {
    require_aligned(features, probs, "compute_prototype");
    require_same_shape(probs, labels, "compute_prototype");
    if (keep) require_same_shape(probs, *keep, "compute_prototype keep");
    if (omega != 0 && omega != 1) throw ParameterError("compute_prototype: omega must be 0 or 1");
    const std::size_t N = features.dim(0), F = features.dim(1), HW = features.dim(2) * features.dim(3);
    std::vector<double> acc(F, 0.0);
    Prototype proto;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
            const std::size_t v = n * HW + i;
            if ((labels[v] >= 0.5f) != (omega == 1)) continue;
            if (keep && (*keep)[v] == 0.0f) continue;
            const double w = omega == 1 ? probs[v] : 1.0 - probs[v];
            if (w <= 0.0) continue;
            ++proto.count;
            proto.weight += w;
            for (std::size_t f = 0; f < F; ++f) acc[f] += w * features[(n * F + f) * HW + i];
        }
    proto.valid = proto.weight > 0.0;
    if (proto.valid) {
        proto.center.resize(F);
        for (std::size_t f = 0; f < F; ++f) proto.center[f] = static_cast<Scalar>(acc[f] / proto.weight);
    }
    return proto;
}

PrototypeSet compute_prototypes(const Tensor& features, const Tensor& probs, const Tensor& labels, const Tensor* keep) {
    return {compute_prototype(features, probs, labels, 0, keep), compute_prototype(features, probs, labels, 1, keep)};
}

std::optional<Tensor> distance_map(const Tensor& features, const PrototypeSet& protos) {
    if (!protos.valid()) return std::nullopt;
    if (features.rank() != 4) throw ShapeError("distance_map expects [N,F,H,W]");
    const std::size_t N = features.dim(0), F = features.dim(1), HW = features.dim(2) * features.dim(3);
    if (protos.background.center.size() != F || protos.foreground.center.size() != F) {
        throw ShapeError("distance_map: prototype dimension does not match feature channels");
    }
    Tensor d({N, 2, features.dim(2), features.dim(3)});
    const Prototype* ps[2] = {&protos.background, &protos.foreground};
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i)
            for (std::size_t w = 0; w < 2; ++w) {
                double sq = 0.0;
                for (std::size_t f = 0; f < F; ++f) {
                    const double diff = static_cast<double>(features[(n * F + f) * HW + i]) - ps[w]->center[f];
                    sq += diff * diff;
                }
                d[(n * 2 + w) * HW + i] = static_cast<Scalar>(std::sqrt(sq));
            }
    return d;
}

Tensor denoise_mask_standard(const Tensor& labels, const Tensor& distances) {
    require_map(labels, "denoise_mask_standard");
    const std::size_t N = labels.dim(0), HW = labels.dim(2) * labels.dim(3);
    if (distances.rank() != 4 || distances.dim(0) != N || distances.dim(1) != 2 ||
        distances.dim(2) * distances.dim(3) != HW) {
        throw ShapeError("denoise_mask_standard: distances " + shape_str(distances.shape()));
    }
    Tensor m(labels.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
            const Scalar d0 = distances[(n * 2) * HW + i];
            const Scalar d1 = distances[(n * 2 + 1) * HW + i];
            const bool fg = labels[n * HW + i] >= 0.5f;
            m[n * HW + i] = (fg ? d1 < d0 : d1 > d0) ? 1.0f : 0.0f;
        }
    return m;
}

Tensor denoise_mask_refined(const Tensor& labels_small, const Tensor& labels_outer, const Tensor& distances) {
    require_same_shape(labels_small, labels_outer, "denoise_mask_refined");
    Tensor m = denoise_mask_standard(labels_small, distances);
    for (std::size_t i = 0; i < m.numel(); ++i)
        if (labels_small[i] < 0.5f && labels_outer[i] < 0.5f) m[i] = 1.0f;
    return m;
}

Var consistency_loss(const Var& student_probs, const Tensor& pseudo_labels, const Tensor& mask) {
    return masked_bce(student_probs, pseudo_labels, mask);
}

DenoiseMasks build_denoise_masks(const TeacherOutputs& teacher, const RpfConfig& config) {
    const Tensor& labels = teacher.pseudo_labels;
    if (labels.rank() != 4 || labels.dim(1) != 2) throw ShapeError("build_denoise_masks expects two class channels");
    DenoiseMasks out;
    out.mask = Tensor::ones(labels.shape());
    out.eta2 = entropy_median_threshold(teacher.entropy, labels, config.eta2_mode);

    if (config.mode != RpfMode::Off) {
        const std::size_t N = labels.dim(0);
        std::vector<TeacherOutputs> scopes;
        if (config.per_image_prototypes) {
            for (std::size_t n = 0; n < N; ++n) scopes.push_back(slice_teacher(teacher, n));
        }
        for (std::size_t c = 0; c < 2; ++c) {
            const bool refined = config.mode == RpfMode::Refined && c == config.cup_channel;
            auto run = [&](const TeacherOutputs& t) {
                return refined ? refined_channel(t, config, out.eta2[c]) : standard_channel(t, c, config);
            };
            if (config.per_image_prototypes) {
                Tensor m(Shape{N, 1, labels.dim(2), labels.dim(3)});
                for (std::size_t n = 0; n < N; ++n) {
                    auto part = run(scopes[n]);
                    out.invalid_prototypes += part.invalid;
                    put_image(m, n, part.mask);
                }
                set_channel(out.mask, c, m);
            } else {
                auto part = run(teacher);
                out.invalid_prototypes += part.invalid;
                set_channel(out.mask, c, part.mask);
            }
        }
        if (out.invalid_prototypes > 0) {
            log_info("rpf: " + std::to_string(out.invalid_prototypes) +
                     " prototype scope(s) invalid, falling back to all-ones masks");
        }
    }

    for (std::size_t c = 0; c < 2; ++c) out.retained.push_back(channel(out.mask, c).mean());
    return out;
}

} // namespace up2d

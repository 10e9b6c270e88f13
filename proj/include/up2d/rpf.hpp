#pragma once

#include "up2d/uncertainty.hpp"

#include <optional>
#include <vector>

namespace up2d {

/// Extracts channel c of an [N, C, H, W] tensor as [N, 1, H, W].
Tensor channel(const Tensor& t, std::size_t c);
/// Writes an [N, 1, H, W] map into channel c of dst.
void set_channel(Tensor& dst, std::size_t c, const Tensor& src);

struct Prototype {
    std::vector<Scalar> center;
    std::size_t count = 0;  // pixels with the class label and nonzero weight
    double weight = 0.0;
    bool valid = false;
};

/// Background (omega = 0) and foreground (omega = 1) prototypes of one class channel.
struct PrototypeSet {
    Prototype background;
    Prototype foreground;
    bool valid() const { return background.valid && foreground.valid; }
};

struct FilteredFeatures {
    Tensor features;  // [N, F, H, W]
    Tensor probs;     // [N, 1, H, W]
    Tensor keep;      // [N, 1, H, W], 1 where the pixel survived
};

/// Zeroes features and probabilities wherever u >= eta1.
FilteredFeatures reliable_filter(const Tensor& features, const Tensor& probs, const Tensor& std_map, Scalar eta1);

/// 1 unless both the small-class and the surrounding-class labels are background.
Tensor info_region_mask(const Tensor& labels_small, const Tensor& labels_outer);

/// 1[u < eta1] * 1[e < eta2], eta2 chosen per pixel from its pseudo-label.
Tensor uncertainty_mask(const Tensor& std_map, const Tensor& entropy, const Tensor& labels, Scalar eta1,
                        const EntropyThreshold& eta2);

/// Confidence-weighted class mean of features. The foreground prototype weights pixels by p,
/// the background prototype by (1 - p). Pixels with keep == 0 never contribute.
Prototype compute_prototype(const Tensor& features, const Tensor& probs, const Tensor& labels, int omega,
                            const Tensor* keep = nullptr);
PrototypeSet compute_prototypes(const Tensor& features, const Tensor& probs, const Tensor& labels,
                                const Tensor* keep = nullptr);

/// [N, 2, H, W]: channel 0 = distance to background prototype, 1 = to foreground prototype.
/// Empty when either prototype is invalid.
std::optional<Tensor> distance_map(const Tensor& features, const PrototypeSet& protos);

/// Keeps pseudo-foreground closer to the foreground prototype and pseudo-background closer
/// to the background one. Ties are dropped.
Tensor denoise_mask_standard(const Tensor& labels, const Tensor& distances);

/// Small-class mask: background pixels are also trusted when the surrounding class agrees on background.
Tensor denoise_mask_refined(const Tensor& labels_small, const Tensor& labels_outer, const Tensor& distances);

/// Masked BCE between student probabilities and pseudo-labels, summed over classes, normalized by sum(m).
Var consistency_loss(const Var& student_probs, const Tensor& pseudo_labels, const Tensor& mask);

enum class RpfMode {
    Refined,   // standard mask for the disc, refined mask for the cup
    Standard,  // standard mask for both classes
    Off,       // every pixel trusted
};

enum class RefinedDistanceSource {
    Masked,  // distances from the informative/uncertainty-masked features
    Full,    // distances from the unmasked features
};

struct RpfConfig {
    RpfMode mode = RpfMode::Refined;
    Scalar eta1 = 0.05f;
    EntropyMedianMode eta2_mode = EntropyMedianMode::MeanOfMedians;
    bool per_image_prototypes = false;
    RefinedDistanceSource refined_distances = RefinedDistanceSource::Masked;
    std::size_t disc_channel = 0;
    std::size_t cup_channel = 1;
};

struct DenoiseMasks {
    Tensor mask;                          // [N, 2, H, W]
    std::vector<double> retained;         // fraction of pixels kept per class
    std::size_t invalid_prototypes = 0;   // scopes that fell back to an all-ones mask
    std::vector<EntropyThreshold> eta2;
};

DenoiseMasks build_denoise_masks(const TeacherOutputs& teacher, const RpfConfig& config);

} // namespace up2d

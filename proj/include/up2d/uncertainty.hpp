#pragma once

#include "up2d/model.hpp"

#include <vector>

namespace up2d {

enum class EntropyForm {
    Literal,  // e = -p log p
    Binary,   // e = -p log p - (1-p) log(1-p)
};

/// Teacher statistics from K stochastic passes plus one deterministic pass. All maps [N, C, H, W].
struct TeacherOutputs {
    Tensor mean_probs;           // p
    Tensor std_map;              // u, population std over passes
    Tensor entropy;              // e, from p
    Tensor pseudo_labels;        // 1[p >= gamma]
    Tensor features;             // [N, F, H, W], deterministic pass, resized to prediction resolution
    Tensor deterministic_probs;  // dropout-off probabilities
};

/// Monte Carlo dropout inference. Pass k draws dropout masks from its own stream seeded by (master, k).
TeacherOutputs mc_forward(const SegNet& teacher, const Tensor& images, std::size_t passes, Scalar gamma, Rng& rng,
                          EntropyForm form = EntropyForm::Literal);

Tensor entropy_map(const Tensor& probs, EntropyForm form = EntropyForm::Literal);
Tensor threshold(const Tensor& probs, Scalar gamma);

/// Mean and population std over a set of same-shaped tensors.
std::pair<Tensor, Tensor> mean_and_std(const std::vector<Tensor>& passes);

/// How the entropy threshold eta2 is formed from foreground/background entropy.
enum class EntropyMedianMode {
    MeanOfMedians,  // (median_fg + median_bg) / 2 for every pixel
    UnionMedian,    // median over all pixels
    PerRegion,      // median_fg for predicted foreground, median_bg for background
};

struct EntropyThreshold {
    Scalar foreground = 0.0f;
    Scalar background = 0.0f;
    bool fallback = false;  // a region was empty and the global median was used

    Scalar for_label(Scalar label) const { return label >= 0.5f ? foreground : background; }
};

double median(std::vector<Scalar> values);

/// One threshold pair per class channel, pooled over the batch.
std::vector<EntropyThreshold> entropy_median_threshold(const Tensor& entropy, const Tensor& pseudo_labels,
                                                       EntropyMedianMode mode = EntropyMedianMode::MeanOfMedians);

} // namespace up2d

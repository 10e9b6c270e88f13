#pragma once

#include "up2d/tensor.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace up2d {

/// Inverted-Gaussian boundary weighting for one class of one image.
struct GaussWeight {
    Tensor map;  // [H, W], 1 - exp(...)
    double mu_x = 0.0, mu_y = 0.0;
    double sigma_x = 0.0, sigma_y = 0.0;
    std::size_t box_w = 0, box_h = 0;
    double fg_ratio = 0.0;  // foreground pixels / (H * W)
};

/// Centroid and bounding box come from the binary mask ([H, W]). Empty foreground yields nullopt.
std::optional<GaussWeight> inverted_gaussian(const Tensor& mask, double scale);

struct RegionMask {
    double tau = 0.0;
    Tensor keep;  // [H, W] binary
};

/// tau = max weight over foreground - delta; keep foreground plus background with weight <= tau.
RegionMask region_mask(const Tensor& mask, const Tensor& weight, double delta);

/// -sum A G p log p / sum A G over one [H, W] map; nullopt when the weight mass is zero.
std::optional<double> weighted_entropy(const Tensor& probs, const Tensor& region, const Tensor& weight);

/// Batch uncertainty from student probabilities and teacher pseudo-labels ([N, C, H, W] each),
/// averaged over (image, class) pairs with nonempty foreground.
std::optional<double> weighted_uncertainty(const Tensor& student_probs, const Tensor& teacher_labels, double scale);

struct UgemaState {
    double min_epoch_uncertainty = std::numeric_limits<double>::infinity();
    double min_batch_uncertainty = std::numeric_limits<double>::infinity();
    std::vector<double> batch_uncertainties;
    std::size_t update_count = 0;
    std::size_t rejected_non_finite = 0;
    std::size_t epoch = 0;
};

/// Gated EMA. Returns true when the teacher was updated.
bool ugema_step(UgemaState& state, double batch_uncertainty, std::span<Scalar> teacher,
                std::span<const Scalar> student, double alpha);

/// Unconditional EMA update teacher <- alpha * teacher + (1 - alpha) * student.
void ema_update(std::span<Scalar> teacher, std::span<const Scalar> student, double alpha);

/// Closes an epoch: folds the epoch mean into the running minimum and seeds the next epoch's gate.
/// Returns the epoch mean, or nullopt for an epoch without batches.
std::optional<double> ugema_epoch_end(UgemaState& state);

} // namespace up2d

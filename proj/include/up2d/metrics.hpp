#pragma once

#include "up2d/tensor.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace up2d {

/// 2|P & G| / (|P| + |G|) on [H, W] binary masks; 1 when both are empty.
double dice(const Tensor& pred, const Tensor& gt);

/// Foreground pixels with at least one 4-neighbour outside the mask (image border counts as outside).
Tensor boundary(const Tensor& mask);

/// Exact Euclidean distance from every pixel to the nearest nonzero pixel of `sites`.
/// Infinite everywhere when `sites` is empty.
Tensor distance_transform(const Tensor& sites);

/// Mean of the two directed average boundary distances, in pixels. nullopt if either mask is empty.
std::optional<double> assd(const Tensor& pred, const Tensor& gt);

struct SampleMetrics {
    std::string id;
    std::size_t class_index = 0;
    double dice = 0.0;
    std::optional<double> assd;
};

struct ClassSummary {
    double dice_mean = 0.0, dice_std = 0.0;  // percent
    double assd_mean = 0.0, assd_std = 0.0;  // pixels, over defined values
    std::size_t assd_undefined = 0;
};

struct EvalReport {
    std::vector<std::string> class_names{"disc", "cup"};
    std::vector<SampleMetrics> records;
    std::vector<ClassSummary> classes;

    double mean_dice() const;  // percent, averaged over classes
    void summarize();
    void write_csv(std::ostream& os) const;
    void write_markdown(std::ostream& os, const std::string& title) const;
};

} // namespace up2d

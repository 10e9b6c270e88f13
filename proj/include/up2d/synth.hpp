#pragma once

#include "up2d/autograd.hpp"
#include "up2d/tensor.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace up2d {

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Geometry of one synthetic fundus-like scene. Fractions are relative to image size.
struct SceneSpec {
    std::size_t image_size = 64;
    std::array<double, 2> disc_center{0.5, 0.5};
    std::array<double, 2> disc_radii{0.2, 0.2};
    std::array<double, 2> cup_radii{0.1, 0.1};
    double background_texture_scale = 1.0;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Photometric appearance of a domain, applied after rendering.
struct DomainStyle {
    double brightness_shift = 0.0;
    double contrast_gain = 1.0;
    double blur_sigma = 0.0;
    double noise_std = 0.0;
    std::array<double, 3> hue_tint{1.0, 1.0, 1.0};

    bool is_identity() const;
    nlohmann::json to_json() const;
    static DomainStyle from_json(const nlohmann::json& j);

    static DomainStyle identity() { return {}; }
    /// Default target shift: darker, lower contrast, blurred, noisy, blue-tinted.
    static DomainStyle default_target();
};

namespace audit {
/// Number of ground-truth reads since process start; the adaptation loop asserts no change.
std::size_t ground_truth_reads() noexcept;
} // namespace audit

/// One image with its disc/cup masks. Ground truth is only reachable through an audited accessor.
class Sample {
public:
    Sample() = default;
    Sample(std::string id, Tensor image, Tensor gt_masks);

    const std::string& id() const noexcept { return id_; }
    const Tensor& image() const noexcept { return image_; }
    /// [2, H, W] binary, channel 0 = disc, channel 1 = cup. Counted by audit::ground_truth_reads.
    const Tensor& ground_truth() const;
    std::size_t size() const { return image_.dim(1); }

private:
    std::string id_;
    Tensor image_;     // [3, H, W] in [0, 1]
    Tensor gt_masks_;  // [2, H, W]
};

/// Label-free view of a target dataset: the only thing the adaptation loop receives.
struct UnlabeledImage {
    std::string id;
    Tensor image;
};
std::vector<UnlabeledImage> strip_labels(const std::vector<Sample>& samples);

Tensor render_scene(const SceneSpec& spec);  // unstyled [3, H, W]
Tensor render_masks(const SceneSpec& spec);  // [2, H, W]
Tensor apply_style(const Tensor& image, const DomainStyle& style, std::uint64_t noise_seed);
Sample render(const SceneSpec& spec, const DomainStyle& style);

// ---- augmentation ----

struct GeometricTransform {
    bool flip = false;
    std::size_t crop_x = 0, crop_y = 0, crop_w = 0, crop_h = 0;  // crop_w == 0 means no crop
};

struct AugmentConfig {
    double min_crop_scale = 0.85;
    double contrast_min = 0.7;
    double contrast_max = 1.3;
    double erase_probability = 0.5;
    double erase_min_fraction = 0.02;
    double erase_max_fraction = 0.15;
    double noise_std = 0.05;
    std::array<double, 3> erase_fill{0.5, 0.5, 0.5};  // dataset mean colour

    static AugmentConfig zero_strength();
};

struct Rect {
    std::size_t x = 0, y = 0, w = 0, h = 0;
};

GeometricTransform sample_geometry(std::size_t size, const AugmentConfig& cfg, Rng& rng);
/// Bilinear for images, nearest for masks (threshold kept binary).
Tensor apply_geometry(const Tensor& chw, const GeometricTransform& t, bool nearest);

Tensor adjust_contrast(const Tensor& image, double gain);
Tensor random_erase(const Tensor& image, double area_fraction, const std::array<double, 3>& fill, Rng& rng,
                    Rect* erased = nullptr);
Tensor add_gaussian_noise(const Tensor& image, double stddev, Rng& rng);
/// Contrast, erasing and noise in that order, clamped to [0, 1].
Tensor photometric_strong(const Tensor& image, const AugmentConfig& cfg, Rng& rng);

Sample weak_augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);
Sample strong_augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);

struct AugmentedPair {
    Sample weak;
    Sample strong;
};
/// Weak and strong views sharing one geometric transform.
AugmentedPair augment_pair(const Sample& s, const AugmentConfig& cfg, Rng& rng);

/// Pixel-aligned teacher/student inputs for one label-free image. Without `geometric` the teacher
/// sees the original and the student a strong photometric view of it; with it both share a random
/// flip/crop, the teacher getting the weak view.
struct UnlabeledViews {
    Tensor teacher;
    Tensor student;
};
UnlabeledViews unlabeled_views(const Tensor& image, const AugmentConfig& cfg, bool geometric, Rng& rng);

// ---- datasets ----

/// Ranges from which per-sample scene geometry is drawn.
struct SceneDistribution {
    std::size_t image_size = 64;
    double center_jitter = 0.08;
    std::array<double, 2> disc_radius{0.17, 0.23};
    double disc_aspect_jitter = 0.12;
    std::array<double, 2> cup_ratio{0.40, 0.58};
    std::array<double, 2> texture_scale{0.6, 1.4};

    SceneSpec sample(std::uint64_t seed) const;
    nlohmann::json to_json() const;
    static SceneDistribution from_json(const nlohmann::json& j);
};

std::vector<Sample> generate_samples(std::size_t n, const SceneDistribution& dist, const DomainStyle& style,
                                     std::uint64_t seed, const std::string& id_prefix = "s");

/// Quantizes to 8 bit and writes images/, masks/ and manifest.json; returns the persisted samples.
std::vector<Sample> make_dataset(const std::filesystem::path& dir, std::size_t n, const SceneDistribution& dist,
                                 const DomainStyle& style, std::uint64_t seed, const std::string& id_prefix = "s");
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

/// Rounds an image to the 8-bit grid used on disk.
Tensor quantize8(const Tensor& image);

void write_png_rgb(const std::filesystem::path& path, const Tensor& chw);
Tensor read_png_rgb(const std::filesystem::path& path);  // [3, H, W] in [0, 1]

} // namespace up2d

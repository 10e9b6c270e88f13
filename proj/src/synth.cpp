#include "up2d/synth.hpp"

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <fstream>
#include <numbers>

namespace up2d {

namespace {

std::atomic<std::size_t> g_ground_truth_reads{0};

constexpr std::array<double, 3> kBackground{0.55, 0.26, 0.13};
constexpr std::array<double, 3> kDisc{0.80, 0.55, 0.33};
constexpr std::array<double, 3> kCup{0.96, 0.82, 0.62};
constexpr double kCupFalloff = 0.14;
constexpr double kDiscFalloff = 0.25;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Rng seeded(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Ellipse {
    double cx, cy, rx, ry;  // pixels
    double radius2(double x, double y) const {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        return dx * dx + dy * dy;
    }
};

struct SceneGeometry {
    Ellipse disc, cup;
};

SceneGeometry geometry_of(const SceneSpec& spec) {
    const auto s = static_cast<double>(spec.image_size);
    return {{spec.disc_center[0] * s, spec.disc_center[1] * s, spec.disc_radii[0] * s, spec.disc_radii[1] * s},
            {spec.disc_center[0] * s, spec.disc_center[1] * s, spec.cup_radii[0] * s, spec.cup_radii[1] * s}};
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (auto& v : k) v /= total;
    return k;
}

std::size_t reflect(long i, std::size_t n) {
    const auto m = static_cast<long>(n);
    if (m == 1) return 0;
    while (i < 0 || i >= m) i = i < 0 ? -i - 1 : 2 * m - i - 1;
    return static_cast<std::size_t>(i);
}

Tensor gaussian_blur(const Tensor& chw, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const long radius = static_cast<long>(k.size() / 2);
    const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor tmp(chw.shape());
    Tensor out(chw.shape());
    for (std::size_t c = 0; c < C; ++c) {
        const Scalar* src = chw.data().data() + c * H * W;
        Scalar* mid = tmp.data().data() + c * H * W;
        Scalar* dst = out.data().data() + c * H * W;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (long i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] * src[y * W + reflect(static_cast<long>(x) + i, W)];
                mid[y * W + x] = static_cast<Scalar>(acc);
            }
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (long i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] * mid[reflect(static_cast<long>(y) + i, H) * W + x];
                dst[y * W + x] = static_cast<Scalar>(acc);
            }
    }
    return out;
}

Tensor clamp_image(Tensor t) {
    for (auto& v : t.data()) v = std::clamp(v, 0.0f, 1.0f);
    return t;
}

nlohmann::json spec_to_json(const SceneSpec& s) {
    return {{"image_size", s.image_size},
            {"disc_center", s.disc_center},
            {"disc_radii", s.disc_radii},
            {"cup_radii", s.cup_radii},
            {"background_texture_scale", s.background_texture_scale},
            {"rng_seed", s.rng_seed}};
}

} // namespace

std::size_t audit::ground_truth_reads() noexcept { return g_ground_truth_reads.load(); }

void SceneSpec::validate() const {
    if (image_size < 8) throw SpecError("scene: image_size must be at least 8");
    for (int i = 0; i < 2; ++i) {
        if (!(disc_radii[i] > 0.0 && disc_radii[i] < 0.5)) throw SpecError("scene: disc radii must lie in (0, 0.5)");
        if (!(cup_radii[i] > 0.0 && cup_radii[i] < 0.5)) throw SpecError("scene: cup radii must lie in (0, 0.5)");
        if (!(cup_radii[i] < disc_radii[i])) throw SpecError("scene: cup must lie strictly inside the disc");
    }
}

bool DomainStyle::is_identity() const {
    return brightness_shift == 0.0 && contrast_gain == 1.0 && blur_sigma == 0.0 && noise_std == 0.0 &&
           hue_tint == std::array<double, 3>{1.0, 1.0, 1.0};
}

nlohmann::json DomainStyle::to_json() const {
    return {{"brightness_shift", brightness_shift},
            {"contrast_gain", contrast_gain},
            {"blur_sigma", blur_sigma},
            {"noise_std", noise_std},
            {"hue_tint", hue_tint}};
}

DomainStyle DomainStyle::from_json(const nlohmann::json& j) {
    DomainStyle s;
    s.brightness_shift = j.value("brightness_shift", s.brightness_shift);
    s.contrast_gain = j.value("contrast_gain", s.contrast_gain);
    s.blur_sigma = j.value("blur_sigma", s.blur_sigma);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.hue_tint = j.value("hue_tint", s.hue_tint);
    return s;
}

DomainStyle DomainStyle::default_target() {
    DomainStyle s;
    s.brightness_shift = -0.04;
    s.contrast_gain = 0.85;
    s.blur_sigma = 0.8;
    s.noise_std = 0.02;
    s.hue_tint = {0.95, 1.0, 1.1};
    return s;
}

Sample::Sample(std::string id, Tensor image, Tensor gt_masks)
    : id_(std::move(id)), image_(std::move(image)), gt_masks_(std::move(gt_masks)) {
    if (image_.rank() != 3 || image_.dim(0) != 3) throw ShapeError("sample image must be [3,H,W]");
    if (gt_masks_.rank() != 3 || gt_masks_.dim(0) != 2 || gt_masks_.dim(1) != image_.dim(1) ||
        gt_masks_.dim(2) != image_.dim(2)) {
        throw ShapeError("sample masks must be [2,H,W] matching the image");
    }
}

const Tensor& Sample::ground_truth() const {
    g_ground_truth_reads.fetch_add(1);
    return gt_masks_;
}

std::vector<UnlabeledImage> strip_labels(const std::vector<Sample>& samples) {
    std::vector<UnlabeledImage> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.id(), s.image()});
    return out;
}

Tensor render_masks(const SceneSpec& spec) {
    spec.validate();
    const auto g = geometry_of(spec);
    const std::size_t S = spec.image_size;
    Tensor masks({2, S, S});
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            const double px = static_cast<double>(x) + 0.5;
            const double py = static_cast<double>(y) + 0.5;
            masks[y * S + x] = g.disc.radius2(px, py) <= 1.0 ? 1.0f : 0.0f;
            masks[S * S + y * S + x] = g.cup.radius2(px, py) <= 1.0 ? 1.0f : 0.0f;
        }
    return masks;
}

Tensor render_scene(const SceneSpec& spec) {
    spec.validate();
    const auto g = geometry_of(spec);
    const std::size_t S = spec.image_size;
    const double s = static_cast<double>(S);

    // Low-frequency background texture from three random plane waves.
    Rng rng = seeded(spec.rng_seed, 1);
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::array<Wave, 3> waves{};
    for (auto& w : waves) {
        w = {uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0), uniform(rng, 0.0, 2.0 * std::numbers::pi),
             uniform(rng, 0.02, 0.05)};
    }

    Tensor img({3, S, S});
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            const double px = static_cast<double>(x) + 0.5;
            const double py = static_cast<double>(y) + 0.5;
            double tex = 0.0;
            for (const auto& w : waves)
                tex += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * px + w.fy * py) / s + w.phase);
            tex *= spec.background_texture_scale;
            const double dx = px / s - 0.5;
            const double dy = py / s - 0.5;
            const double vignette = 1.0 - 0.6 * (dx * dx + dy * dy);

            const double rd2 = g.disc.radius2(px, py);
            const double rc2 = g.cup.radius2(px, py);
            for (std::size_t c = 0; c < 3; ++c) {
                double v = 0.0;
                if (rc2 <= 1.0) {
                    v = kCup[c] - kCupFalloff * rc2;
                } else if (rd2 <= 1.0) {
                    v = kDisc[c] + (kBackground[c] - kDisc[c]) * kDiscFalloff * rd2;
                } else {
                    v = (kBackground[c] + tex) * vignette;
                }
                img[(c * S + y) * S + x] = static_cast<Scalar>(clamp01(v));
            }
        }
    return img;
}

Tensor apply_style(const Tensor& image, const DomainStyle& style, std::uint64_t noise_seed) {
    if (style.is_identity()) return image;
    Tensor out = image;
    const std::size_t plane = image.dim(1) * image.dim(2);
    if (style.contrast_gain != 1.0 || style.brightness_shift != 0.0) {
        for (auto& v : out.data())
            v = static_cast<Scalar>((static_cast<double>(v) - 0.5) * style.contrast_gain + 0.5 + style.brightness_shift);
    }
    if (style.hue_tint != std::array<double, 3>{1.0, 1.0, 1.0}) {
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                out[c * plane + i] = static_cast<Scalar>(out[c * plane + i] * style.hue_tint[c]);
    }
    out = clamp_image(std::move(out));
    if (style.blur_sigma > 0.0) out = gaussian_blur(out, style.blur_sigma);
    if (style.noise_std > 0.0) {
        Rng rng = seeded(noise_seed, 2);
        std::normal_distribution<double> noise(0.0, style.noise_std);
        for (auto& v : out.data()) v = static_cast<Scalar>(v + noise(rng));
    }
    return clamp_image(std::move(out));
}

Sample render(const SceneSpec& spec, const DomainStyle& style) {
    return Sample("scene-" + std::to_string(spec.rng_seed), apply_style(render_scene(spec), style, spec.rng_seed),
                  render_masks(spec));
}

// ---- augmentation ----

AugmentConfig AugmentConfig::zero_strength() {
    AugmentConfig c;
    c.contrast_min = 1.0;
    c.contrast_max = 1.0;
    c.erase_probability = 0.0;
    c.erase_min_fraction = 0.0;
    c.erase_max_fraction = 0.0;
    c.noise_std = 0.0;
    return c;
}

GeometricTransform sample_geometry(std::size_t size, const AugmentConfig& cfg, Rng& rng) {
    GeometricTransform t;
    t.flip = uniform(rng, 0.0, 1.0) < 0.5;
    const double scale = uniform(rng, std::min(cfg.min_crop_scale, 1.0), 1.0);
    const auto side = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * static_cast<double>(size))),
                                              1, size);
    t.crop_w = side;
    t.crop_h = side;
    std::uniform_int_distribution<std::size_t> offset(0, size - side);
    t.crop_x = offset(rng);
    t.crop_y = offset(rng);
    return t;
}

Tensor apply_geometry(const Tensor& chw, const GeometricTransform& t, bool nearest) {
    const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor out(chw.shape());
    const bool crop = t.crop_w != 0 && !(t.crop_w == W && t.crop_h == H && t.crop_x == 0 && t.crop_y == 0);
    const double sx = crop ? static_cast<double>(t.crop_w) / static_cast<double>(W) : 1.0;
    const double sy = crop ? static_cast<double>(t.crop_h) / static_cast<double>(H) : 1.0;
    const double ox = crop ? static_cast<double>(t.crop_x) : 0.0;
    const double oy = crop ? static_cast<double>(t.crop_y) : 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        const Scalar* src = chw.data().data() + c * H * W;
        Scalar* dst = out.data().data() + c * H * W;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t xs = t.flip ? W - 1 - x : x;
                if (!crop) {
                    dst[y * W + x] = src[y * W + xs];
                    continue;
                }
                const double fx = ox + (static_cast<double>(xs) + 0.5) * sx - 0.5;
                const double fy = oy + (static_cast<double>(y) + 0.5) * sy - 0.5;
                if (nearest) {
                    const auto ix = std::min(static_cast<std::size_t>(std::max(0.0, std::round(fx))), W - 1);
                    const auto iy = std::min(static_cast<std::size_t>(std::max(0.0, std::round(fy))), H - 1);
                    dst[y * W + x] = src[iy * W + ix];
                } else {
                    const double cx = std::clamp(fx, 0.0, static_cast<double>(W - 1));
                    const double cy = std::clamp(fy, 0.0, static_cast<double>(H - 1));
                    const auto x0 = static_cast<std::size_t>(cx);
                    const auto y0 = static_cast<std::size_t>(cy);
                    const std::size_t x1 = std::min(x0 + 1, W - 1);
                    const std::size_t y1 = std::min(y0 + 1, H - 1);
                    const double wx = cx - static_cast<double>(x0);
                    const double wy = cy - static_cast<double>(y0);
                    const double top = src[y0 * W + x0] * (1.0 - wx) + src[y0 * W + x1] * wx;
                    const double bot = src[y1 * W + x0] * (1.0 - wx) + src[y1 * W + x1] * wx;
                    dst[y * W + x] = static_cast<Scalar>(top * (1.0 - wy) + bot * wy);
                }
            }
    }
    return out;
}

Tensor adjust_contrast(const Tensor& image, double gain) {
    if (gain == 1.0) return image;
    const std::size_t plane = image.dim(1) * image.dim(2);
    Tensor out = image;
    for (std::size_t c = 0; c < image.dim(0); ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mean += image[c * plane + i];
        mean /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i)
            out[c * plane + i] = static_cast<Scalar>(clamp01((image[c * plane + i] - mean) * gain + mean));
    }
    return out;
}

Tensor random_erase(const Tensor& image, double area_fraction, const std::array<double, 3>& fill, Rng& rng,
                    Rect* erased) {
    const std::size_t H = image.dim(1), W = image.dim(2);
    if (area_fraction <= 0.0) {
        if (erased) *erased = {};
        return image;
    }
    const double area = area_fraction * static_cast<double>(H * W);
    const double aspect = std::exp(uniform(rng, std::log(0.5), std::log(2.0)));
    // Among heights near the requested aspect, take the integer rectangle closest to the requested area.
    const auto h0 = static_cast<long>(std::lround(std::sqrt(area * aspect)));
    std::size_t h = 1, w = 1;
    double best = std::numeric_limits<double>::infinity();
    for (long cand = std::max(1L, h0 - 3); cand <= h0 + 3; ++cand) {
        const auto ch = std::min(static_cast<std::size_t>(cand), H);
        const auto cw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(area / static_cast<double>(ch))), 1, W);
        const double err = std::abs(static_cast<double>(ch * cw) - area);
        if (err < best) {
            best = err;
            h = ch;
            w = cw;
        }
    }
    std::uniform_int_distribution<std::size_t> px(0, W - w);
    std::uniform_int_distribution<std::size_t> py(0, H - h);
    const Rect r{px(rng), py(rng), w, h};
    Tensor out = image;
    for (std::size_t c = 0; c < image.dim(0); ++c)
        for (std::size_t y = r.y; y < r.y + r.h; ++y)
            for (std::size_t x = r.x; x < r.x + r.w; ++x) out[(c * H + y) * W + x] = static_cast<Scalar>(fill[c]);
    if (erased) *erased = r;
    return out;
}

Tensor add_gaussian_noise(const Tensor& image, double stddev, Rng& rng) {
    if (stddev <= 0.0) return image;
    std::normal_distribution<double> noise(0.0, stddev);
    Tensor out = image;
    for (auto& v : out.data()) v = static_cast<Scalar>(v + noise(rng));
    return out;
}

Tensor photometric_strong(const Tensor& image, const AugmentConfig& cfg, Rng& rng) {
    Tensor out = adjust_contrast(image, uniform(rng, cfg.contrast_min, std::max(cfg.contrast_min, cfg.contrast_max)));
    if (cfg.erase_max_fraction > 0.0 && uniform(rng, 0.0, 1.0) < cfg.erase_probability) {
        const double frac = uniform(rng, cfg.erase_min_fraction, cfg.erase_max_fraction);
        out = random_erase(out, frac, cfg.erase_fill, rng);
    }
    if (cfg.noise_std > 0.0) out = add_gaussian_noise(out, cfg.noise_std, rng);
    return clamp_image(std::move(out));
}

namespace {

Sample with_geometry(const Sample& s, const GeometricTransform& t, Tensor image) {
    return Sample(s.id(), std::move(image), apply_geometry(s.ground_truth(), t, true));
}

} // namespace

Sample weak_augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
    const auto t = sample_geometry(s.size(), cfg, rng);
    return with_geometry(s, t, apply_geometry(s.image(), t, false));
}

Sample strong_augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
    return augment_pair(s, cfg, rng).strong;
}

AugmentedPair augment_pair(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
    const auto t = sample_geometry(s.size(), cfg, rng);
    Tensor weak_img = apply_geometry(s.image(), t, false);
    Tensor strong_img = photometric_strong(weak_img, cfg, rng);
    Sample weak = with_geometry(s, t, std::move(weak_img));
    Sample strong(s.id(), std::move(strong_img), weak.ground_truth());
    return {std::move(weak), std::move(strong)};
}

UnlabeledViews unlabeled_views(const Tensor& image, const AugmentConfig& cfg, bool geometric, Rng& rng) {
    UnlabeledViews v;
    v.teacher = geometric ? apply_geometry(image, sample_geometry(image.dim(1), cfg, rng), false) : image;
    v.student = photometric_strong(v.teacher, cfg, rng);
    return v;
}

// ---- datasets ----

SceneSpec SceneDistribution::sample(std::uint64_t seed) const {
    Rng rng = seeded(seed, 0);
    SceneSpec s;
    s.image_size = image_size;
    s.rng_seed = seed;
    s.disc_center = {0.5 + uniform(rng, -center_jitter, center_jitter),
                     0.5 + uniform(rng, -center_jitter, center_jitter)};
    const double r = uniform(rng, disc_radius[0], disc_radius[1]);
    const double aspect = 1.0 + uniform(rng, -disc_aspect_jitter, disc_aspect_jitter);
    s.disc_radii = {r * aspect, r / aspect};
    const double ratio = uniform(rng, cup_ratio[0], cup_ratio[1]);
    const double cup_aspect = 1.0 + uniform(rng, -0.08, 0.08);
    s.cup_radii = {s.disc_radii[0] * ratio * cup_aspect, s.disc_radii[1] * ratio / cup_aspect};
    s.background_texture_scale = uniform(rng, texture_scale[0], texture_scale[1]);
    return s;
}

nlohmann::json SceneDistribution::to_json() const {
    return {{"image_size", image_size},     {"center_jitter", center_jitter},
            {"disc_radius", disc_radius},   {"disc_aspect_jitter", disc_aspect_jitter},
            {"cup_ratio", cup_ratio},       {"texture_scale", texture_scale}};
}

SceneDistribution SceneDistribution::from_json(const nlohmann::json& j) {
    SceneDistribution d;
    d.image_size = j.value("image_size", d.image_size);
    d.center_jitter = j.value("center_jitter", d.center_jitter);
    d.disc_radius = j.value("disc_radius", d.disc_radius);
    d.disc_aspect_jitter = j.value("disc_aspect_jitter", d.disc_aspect_jitter);
    d.cup_ratio = j.value("cup_ratio", d.cup_ratio);
    d.texture_scale = j.value("texture_scale", d.texture_scale);
    return d;
}

Tensor quantize8(const Tensor& image) {
    Tensor out = image;
    for (auto& v : out.data()) v = static_cast<Scalar>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    return out;
}

std::vector<Sample> generate_samples(std::size_t n, const SceneDistribution& dist, const DomainStyle& style,
                                     std::uint64_t seed, const std::string& id_prefix) {
    if (n == 0) throw ParameterError("dataset size must be at least 1");
    Rng rng = seeded(seed, 3);
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const SceneSpec spec = dist.sample(rng());
        char id[32];
        std::snprintf(id, sizeof id, "%s%05zu", id_prefix.c_str(), i);
        out.emplace_back(id, quantize8(apply_style(render_scene(spec), style, spec.rng_seed)), render_masks(spec));
    }
    return out;
}

void write_png_rgb(const std::filesystem::path& path, const Tensor& chw) {
    const std::size_t H = chw.dim(1), W = chw.dim(2);
    std::vector<unsigned char> buf(H * W * 3);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const Scalar v = c < chw.dim(0) ? chw[(c * H + y) * W + x] : 0.0f;
                buf[(y * W + x) * 3 + c] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
            }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(W);
    img.height = static_cast<png_uint_32>(H);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
        throw IoError("cannot write " + path.string() + ": " + img.message);
    }
}

Tensor read_png_rgb(const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
        throw IoError("cannot read " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        throw IoError("cannot decode " + path.string() + ": " + img.message);
    }
    const std::size_t H = img.height, W = img.width;
    Tensor out({3, H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out[(c * H + y) * W + x] = static_cast<Scalar>(buf[(y * W + x) * 3 + c]) / 255.0f;
    return out;
}

std::vector<Sample> make_dataset(const std::filesystem::path& dir, std::size_t n, const SceneDistribution& dist,
                                 const DomainStyle& style, std::uint64_t seed, const std::string& id_prefix) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir / "images", ec);
    if (!ec) fs::create_directories(dir / "masks", ec);
    if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

    auto samples = generate_samples(n, dist, style, seed, id_prefix);
    Rng rng = seeded(seed, 3);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& s : samples) {
        const std::uint64_t scene_seed = rng();
        write_png_rgb(dir / "images" / (s.id() + ".png"), s.image());
        write_png_rgb(dir / "masks" / (s.id() + ".png"), s.ground_truth());
        entries.push_back({{"id", s.id()}, {"seed", scene_seed}, {"scene", spec_to_json(dist.sample(scene_seed))}});
    }
    const nlohmann::json manifest{{"count", n},
                                  {"seed", seed},
                                  {"image_size", dist.image_size},
                                  {"style", style.to_json()},
                                  {"distribution", dist.to_json()},
                                  {"mask_channels", {"disc", "cup"}},
                                  {"samples", entries}};
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write manifest in " + dir.string());
    os << manifest.dump(2) << '\n';
    return samples;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw IoError("missing manifest.json in " + dir.string());
    const auto manifest = nlohmann::json::parse(is);
    std::vector<Sample> out;
    for (const auto& e : manifest.at("samples")) {
        const auto id = e.at("id").get<std::string>();
        Tensor image = read_png_rgb(dir / "images" / (id + ".png"));
        const auto mask_path = dir / "masks" / (id + ".png");
        if (!std::filesystem::exists(mask_path)) throw IoError("missing mask " + mask_path.string());
        Tensor rgb = read_png_rgb(mask_path);
        const std::size_t H = rgb.dim(1), W = rgb.dim(2);
        Tensor masks({2, H, W});
        std::copy_n(rgb.data().begin(), 2 * H * W, masks.data().begin());
        for (auto& v : masks.data()) v = v >= 0.5f ? 1.0f : 0.0f;
        out.emplace_back(id, std::move(image), std::move(masks));
    }
    return out;
}

} // namespace up2d

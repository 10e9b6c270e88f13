#include "up2d/synth.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace up2d;
namespace fs = std::filesystem;

namespace {

double area(const Tensor& masks, std::size_t channel) {
    const std::size_t plane = masks.dim(1) * masks.dim(2);
    double a = 0.0;
    for (std::size_t i = 0; i < plane; ++i) a += masks[channel * plane + i];
    return a;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("up2d_test_" + name);
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("render geometry") {
    SceneSpec spec;
    spec.disc_radii = {0.22, 0.2};
    spec.cup_radii = {0.11, 0.1};
    const Tensor m = render_masks(spec);
    const double ratio = area(m, 1) / area(m, 0);
    CHECK(ratio >= 0.2);
    CHECK(ratio <= 0.3);

    SUBCASE("cup inside disc, binary masks") {
        const std::size_t plane = m.dim(1) * m.dim(2);
        for (std::size_t i = 0; i < plane; ++i) {
            CHECK((m[i] == 0.0f || m[i] == 1.0f));
            if (m[plane + i] > 0.5f) CHECK(m[i] == 1.0f);
        }
    }
    SUBCASE("cup outside disc is a spec error") {
        SceneSpec bad = spec;
        bad.cup_radii = {0.25, 0.1};
        CHECK_THROWS_AS(render_scene(bad), SpecError);
        bad.cup_radii = {0.1, 0.1};
        bad.disc_radii = {0.6, 0.2};
        CHECK_THROWS_AS(render_masks(bad), SpecError);
    }
}

TEST_CASE("cup brighter than disc brighter than background") {
    SceneSpec spec;
    spec.background_texture_scale = 1.0;
    const Tensor img = render_scene(spec);
    const Tensor m = render_masks(spec);
    const std::size_t plane = m.dim(1) * m.dim(2);
    double cup = 0, disc = 0, bg = 0, nc = 0, nd = 0, nb = 0;
    for (std::size_t i = 0; i < plane; ++i) {
        const double lum = (img[i] + img[plane + i] + img[2 * plane + i]) / 3.0;
        if (m[plane + i] > 0.5f) cup += lum, ++nc;
        else if (m[i] > 0.5f) disc += lum, ++nd;
        else bg += lum, ++nb;
    }
    CHECK(cup / nc > disc / nd);
    CHECK(disc / nd > bg / nb);
}

TEST_CASE("domain styles") {
    SceneSpec spec;
    spec.rng_seed = 5;
    const Tensor raw = render_scene(spec);
    CHECK(render(spec, DomainStyle::identity()).image() == render(spec, DomainStyle::identity()).image());
    CHECK(apply_style(raw, DomainStyle::identity(), 1) == raw);

    DomainStyle affine;
    affine.contrast_gain = 0.8;
    affine.brightness_shift = -0.05;
    const Tensor styled = apply_style(raw, affine, 1);
    for (std::size_t i = 0; i < raw.numel(); ++i) {
        const double expect = std::clamp((raw[i] - 0.5) * 0.8 + 0.5 - 0.05, 0.0, 1.0);
        CHECK(styled[i] == doctest::Approx(expect).epsilon(1e-6));
    }

    SUBCASE("default target shift is nontrivial") {
        const auto src = generate_samples(16, SceneDistribution{}, DomainStyle::identity(), 3);
        const auto tgt = generate_samples(16, SceneDistribution{}, DomainStyle::default_target(), 3);
        double diff = 0.0, n = 0.0;
        for (std::size_t s = 0; s < src.size(); ++s)
            for (std::size_t i = 0; i < src[s].image().numel(); ++i, ++n)
                diff += std::abs(src[s].image()[i] - tgt[s].image()[i]);
        MESSAGE("mean absolute source/target difference " << diff / n);
        CHECK(diff / n > 0.03);
    }
}

TEST_CASE("class imbalance holds in every generated sample") {
    const auto samples = generate_samples(200, SceneDistribution{}, DomainStyle::identity(), 9);
    for (const auto& s : samples) {
        const Tensor& m = s.ground_truth();
        const double total = static_cast<double>(m.dim(1) * m.dim(2));
        const double disc = area(m, 0), cup = area(m, 1);
        CHECK(cup > 0.0);
        CHECK(cup < disc);
        CHECK(disc < 0.25 * total);
    }
}

TEST_CASE("augmentation") {
    const auto samples = generate_samples(4, SceneDistribution{}, DomainStyle::identity(), 2);

    SUBCASE("zero-strength strong view equals the weak view") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng a(seed), b(seed);
            const auto pair = augment_pair(samples[0], AugmentConfig::zero_strength(), a);
            const auto weak = weak_augment(samples[0], AugmentConfig::zero_strength(), b);
            CHECK(pair.strong.image() == weak.image());
            CHECK(pair.weak.image() == weak.image());
        }
    }
    SUBCASE("random erasing changes exactly one rectangle of the requested area") {
        Rng rng(4);
        Tensor img({3, 64, 64});
        std::uniform_real_distribution<float> u(0.0f, 0.4f);
        for (auto& v : img.data()) v = u(rng);
        for (int trial = 0; trial < 50; ++trial) {
            Rect r;
            const Tensor out = random_erase(img, 0.1, {0.9, 0.9, 0.9}, rng, &r);
            std::size_t x0 = 64, x1 = 0, y0 = 64, y1 = 0, changed = 0;
            for (std::size_t y = 0; y < 64; ++y)
                for (std::size_t x = 0; x < 64; ++x) {
                    bool diff = false;
                    for (std::size_t c = 0; c < 3; ++c) diff |= out[(c * 64 + y) * 64 + x] != img[(c * 64 + y) * 64 + x];
                    if (!diff) continue;
                    ++changed;
                    x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
                }
            const std::size_t box = (x1 - x0 + 1) * (y1 - y0 + 1);
            CHECK(changed == box);  // the changed set is one filled rectangle
            CHECK(std::abs(static_cast<double>(changed) - 0.1 * 4096) <= 0.02 * 0.1 * 4096);
            CHECK(r.w * r.h == changed);
        }
    }
    SUBCASE("gaussian noise statistics") {
        Rng rng(8);
        const Tensor flat = Tensor({1, 1, 100000}, 0.5f);
        const Tensor noisy = add_gaussian_noise(flat, 0.05, rng);
        double m = 0, s = 0;
        for (std::size_t i = 0; i < flat.numel(); ++i) m += noisy[i] - flat[i];
        m /= static_cast<double>(flat.numel());
        for (std::size_t i = 0; i < flat.numel(); ++i) s += std::pow(noisy[i] - flat[i] - m, 2);
        const double sd = std::sqrt(s / static_cast<double>(flat.numel()));
        CHECK(sd >= 0.045);
        CHECK(sd <= 0.055);
    }
    SUBCASE("geometry commutes with mask transport") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(seed);
            SceneSpec spec = SceneDistribution{}.sample(seed);
            const auto t = sample_geometry(spec.image_size, AugmentConfig{}, rng);
            // Masks carried through augment_pair equal the masks transformed on their own.
            const Tensor m = render_masks(spec);
            const Tensor moved = apply_geometry(m, t, true);
            Rng r2(seed);
            const auto pair = augment_pair(Sample("x", render_scene(spec), m), AugmentConfig::zero_strength(), r2);
            CHECK(pair.weak.ground_truth() == moved);
            CHECK(pair.strong.ground_truth() == moved);
            if (!t.flip && t.crop_w == spec.image_size) CHECK(moved == m);
        }
    }
    SUBCASE("weak and strong views share the geometric transform") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const auto pair = augment_pair(samples[1], AugmentConfig{}, rng);
            CHECK(pair.weak.ground_truth() == pair.strong.ground_truth());
            for (Scalar v : pair.strong.image().data()) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
    SUBCASE("flip is an involution on masks") {
        GeometricTransform t;
        t.flip = true;
        const Tensor& m = samples[2].ground_truth();
        CHECK(apply_geometry(apply_geometry(m, t, true), t, true) == m);
    }
}

TEST_CASE("unlabeled views are pixel aligned and label free") {
    const auto samples = generate_samples(2, SceneDistribution{}, DomainStyle::identity(), 5);
    const auto before = audit::ground_truth_reads();
    const auto unlabeled = strip_labels(samples);
    Rng rng(1);
    const auto views = unlabeled_views(unlabeled[0].image, AugmentConfig::zero_strength(), false, rng);
    CHECK(views.teacher == unlabeled[0].image);
    CHECK(views.student == unlabeled[0].image);
    CHECK(audit::ground_truth_reads() == before);
}

TEST_CASE("datasets on disk") {
    const SceneDistribution dist;
    SUBCASE("same seed gives byte-identical directories") {
        const auto a = temp_dir("ds_a"), b = temp_dir("ds_b");
        make_dataset(a, 6, dist, DomainStyle::default_target(), 42);
        make_dataset(b, 6, dist, DomainStyle::default_target(), 42);
        for (const auto& entry : fs::recursive_directory_iterator(a)) {
            if (!entry.is_regular_file()) continue;
            const auto rel = fs::relative(entry.path(), a);
            REQUIRE(fs::exists(b / rel));
            CHECK(slurp(entry.path()) == slurp(b / rel));
        }
        fs::remove_all(a);
        fs::remove_all(b);
    }
    SUBCASE("manifest lists every sample; reload matches") {
        const auto dir = temp_dir("ds_100");
        const auto written = make_dataset(dir, 100, dist, DomainStyle::identity(), 7);
        const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
        REQUIRE(manifest["samples"].size() == 100);
        for (const auto& e : manifest["samples"]) {
            const std::string id = e["id"];
            CHECK(fs::exists(dir / "images" / (id + ".png")));
            CHECK(fs::exists(dir / "masks" / (id + ".png")));
        }
        const auto loaded = load_dataset(dir);
        REQUIRE(loaded.size() == 100);
        CHECK(loaded[17].image() == written[17].image());
        CHECK(loaded[17].ground_truth() == written[17].ground_truth());
        fs::remove_all(dir);
    }
    SUBCASE("unwritable directory is an IO error") {
        const auto file = temp_dir("ds_file");
        std::ofstream(file) << "x";
        CHECK_THROWS_AS(make_dataset(file / "sub", 1, dist, DomainStyle::identity(), 1), IoError);
        fs::remove_all(file);
    }
    SUBCASE("n = 0 is rejected") {
        CHECK_THROWS(generate_samples(0, dist, DomainStyle::identity(), 1));
    }
}

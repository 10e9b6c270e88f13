#pragma once

#include "up2d/rpf.hpp"
#include "up2d/synth.hpp"
#include "up2d/uncertainty.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace up2d {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class UgemaMode {
    On,        // gated update
    PlainEma,  // update after every batch (mean teacher)
    Off,       // teacher frozen at the source model
};

enum class EntropyFilter {
    On,    // quantile band
    Full,  // entropy over every pixel
    Off,   // no entropy term
};

enum class TeacherView {
    Original,  // un-augmented image; the student gets a photometric strong view of it
    Weak,      // shared flip/crop; the student gets the weak view plus photometric strong augmentation
};

enum class UgemaMetric {
    WeightedEntropy,  // inverted-Gaussian weighted entropy of the student
    FullEntropy,      // unweighted entropy over all pixels
    Loss,             // the batch objective
};

/// Everything a run depends on. Serialized as `key = value` lines; see RunConfig::keys().
struct RunConfig {
    // data
    std::size_t image_size = 64;
    std::size_t n_source = 96;
    std::size_t n_source_val = 32;
    std::size_t n_target = 32;
    std::size_t n_target_test = 32;
    DomainStyle target_style = DomainStyle::default_target();
    std::string data_dir = "data";

    // source training
    std::size_t source_epochs = 60;
    double source_lr = 1e-3;

    // adaptation
    std::size_t adapt_epochs = 20;
    double adapt_lr = 5e-4;
    std::size_t batch_size = 8;
    double gamma = 0.75;
    std::size_t mc_passes = 10;
    double eta1 = 0.05;
    EntropyMedianMode eta2_mode = EntropyMedianMode::MeanOfMedians;
    double alpha = 0.95;
    double beta = 0.1;
    double scale_s = 0.25;
    double weight_consistency = 1.0;
    double weight_entropy = 1.0;
    double eval_threshold = 0.5;

    // component toggles
    RpfMode rpf = RpfMode::Refined;
    UgemaMode ugema = UgemaMode::On;
    EntropyFilter entropy_filter = EntropyFilter::On;
    TeacherView teacher_view = TeacherView::Original;
    UgemaMetric ugema_metric = UgemaMetric::WeightedEntropy;
    EntropyForm entropy_form = EntropyForm::Literal;
    bool per_image_prototypes = false;
    RefinedDistanceSource refined_distances = RefinedDistanceSource::Masked;

    std::uint64_t seed = 0;

    /// Assigns one key; unknown keys and malformed values throw ConfigError.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();

    /// Applies `name=mode` component overrides (rpf, ugema, entropy_filter, ...) or a preset name.
    void apply_toggle(const std::string& assignment);

    std::string to_text() const;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Short label of the active component toggles, e.g. "rpf=on ugema=on entropy_filter=on".
    std::string toggle_label() const;
};

/// Rows of the component ablation lattice: name and the toggles it implies.
struct AblationPreset {
    std::string name;
    RpfMode rpf;
    EntropyFilter entropy_filter;
    UgemaMode ugema;
};
const std::vector<AblationPreset>& ablation_lattice();
void apply_preset(RunConfig& config, const std::string& name);

} // namespace up2d

#pragma once

#include "up2d/autograd.hpp"
#include "up2d/synth.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace up2d {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Encoder widths, decoder widths mirror them; features = last decoder activation.
struct ArchSpec {
    std::size_t in_channels = 3;
    std::vector<std::size_t> encoder{16, 24, 32};
    std::size_t feature_channels = 8;
    std::size_t classes = 2;
    Scalar dropout = 0.1f;

    std::size_t downsample_factor() const { return std::size_t{1} << encoder.size(); }
    nlohmann::json to_json() const;
    static ArchSpec from_json(const nlohmann::json& j);
    bool operator==(const ArchSpec&) const = default;
};

struct ForwardResult {
    Var logits;
    Var probs;     // [N, classes, H, W], channel 0 = disc, 1 = cup
    Var features;  // [N, feature_channels, H, W]
};

/// Tiny U-shaped encoder-decoder: stride-2 conv stages with dropout, nearest-neighbour
/// upsampling plus conv in the decoder, concatenated skips, 1x1 sigmoid classifier.
class SegNet {
public:
    explicit SegNet(ArchSpec arch = {}, std::uint64_t init_seed = 0);

    /// `stochastic` turns dropout on. With `track_grad` false no tape is kept for parameters.
    ForwardResult forward(const Tensor& images, bool stochastic, Rng& rng, bool track_grad = false) const;

    const ArchSpec& arch() const noexcept { return arch_; }
    std::span<const Var> parameters() const noexcept { return params_; }
    std::size_t num_parameters() const noexcept;

    Tensor parameters_flat() const;
    void load_flat(const Tensor& flat);
    void zero_parameters();

private:
    struct ConvLayer {
        std::size_t weight;  // index into params_
        std::size_t bias;
        int stride;
        int padding;
    };

    ConvLayer add_conv(std::size_t cout, std::size_t cin, std::size_t k, int stride, int padding, Rng& rng);

    ArchSpec arch_;
    std::vector<Var> params_;
    std::vector<ConvLayer> encoder_;
    std::vector<ConvLayer> decoder_;
    ConvLayer classifier_{};
};

/// Adam with bias correction; one moment pair per parameter tensor.
class Adam {
public:
    explicit Adam(Scalar lr, Scalar beta1 = 0.9f, Scalar beta2 = 0.999f, Scalar eps = 1e-8f)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<const Var> params);
    Scalar lr() const noexcept { return lr_; }

private:
    Scalar lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct Checkpoint {
    ArchSpec arch;
    Tensor params;
    nlohmann::json metadata = nlohmann::json::object();

    SegNet instantiate() const;
    static Checkpoint from(const SegNet& net, nlohmann::json metadata = nlohmann::json::object());
    /// FNV-1a over the raw parameter bytes.
    std::uint64_t param_hash() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct SourceTrainConfig {
    std::size_t epochs = 60;
    Scalar lr = 1e-3f;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    ArchSpec arch{};
    bool augment = true;
};

struct SourceTrainResult {
    Checkpoint checkpoint;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
    std::vector<double> batch_loss;
};

/// Per-class binary cross-entropy with Adam on a labeled source dataset.
SourceTrainResult train_source(const std::vector<Sample>& dataset, const SourceTrainConfig& config);

/// Stacks images of the given samples into [N, 3, H, W].
Tensor stack_images(const std::vector<const Tensor*>& images);

} // namespace up2d

#include "up2d/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace up2d {

nlohmann::json ArchSpec::to_json() const {
    return {{"in_channels", in_channels},
            {"encoder", encoder},
            {"feature_channels", feature_channels},
            {"classes", classes},
            {"dropout", dropout}};
}

ArchSpec ArchSpec::from_json(const nlohmann::json& j) {
    ArchSpec a;
    a.in_channels = j.at("in_channels").get<std::size_t>();
    a.encoder = j.at("encoder").get<std::vector<std::size_t>>();
    a.feature_channels = j.at("feature_channels").get<std::size_t>();
    a.classes = j.at("classes").get<std::size_t>();
    a.dropout = j.at("dropout").get<Scalar>();
    return a;
}

SegNet::SegNet(ArchSpec arch, std::uint64_t init_seed) : arch_(std::move(arch)) {
    if (arch_.encoder.empty()) throw ParameterError("SegNet needs at least one encoder stage");
    if (arch_.feature_channels < 8) throw ParameterError("SegNet feature channel count must be at least 8");
    Rng rng(init_seed);
    std::size_t cin = arch_.in_channels;
    for (std::size_t width : arch_.encoder) {
        encoder_.push_back(add_conv(width, cin, 3, 2, 1, rng));
        cin = width;
    }
    for (std::size_t i = arch_.encoder.size(); i-- > 0;) {
        const std::size_t skip = i > 0 ? arch_.encoder[i - 1] : arch_.in_channels;
        const std::size_t cout = i > 0 ? arch_.encoder[i - 1] : arch_.feature_channels;
        decoder_.push_back(add_conv(cout, cin + skip, 3, 1, 1, rng));
        cin = cout;
    }
    classifier_ = add_conv(arch_.classes, cin, 1, 1, 0, rng);
}

SegNet::ConvLayer SegNet::add_conv(std::size_t cout, std::size_t cin, std::size_t k, int stride, int padding,
                                   Rng& rng) {
    const double fan_in = static_cast<double>(cin * k * k);
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / fan_in));
    Tensor w({cout, cin, k, k});
    for (auto& v : w.data()) v = static_cast<Scalar>(init(rng));
    const std::size_t index = params_.size();
    params_.push_back(parameter(std::move(w)));
    params_.push_back(parameter(Tensor::zeros({cout})));
    return {index, index + 1, stride, padding};
}

std::size_t SegNet::num_parameters() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

ForwardResult SegNet::forward(const Tensor& images, bool stochastic, Rng& rng, bool track_grad) const {
    if (images.rank() != 4 || images.dim(1) != arch_.in_channels) {
        throw ShapeError("SegNet::forward expects [N," + std::to_string(arch_.in_channels) + ",H,W], got " +
                         shape_str(images.shape()));
    }
    const std::size_t factor = arch_.downsample_factor();
    if (images.dim(2) % factor != 0 || images.dim(3) % factor != 0) {
        throw ShapeError("SegNet::forward: spatial size " + shape_str(images.shape()) + " not divisible by " +
                         std::to_string(factor));
    }
    std::vector<Var> p;
    p.reserve(params_.size());
    for (const auto& param : params_) p.push_back(track_grad ? param : constant(param->value));

    auto conv = [&](const Var& x, const ConvLayer& l) {
        return add_channel_bias(conv2d(x, p[l.weight], l.stride, l.padding), p[l.bias]);
    };

    Var h = constant(images);
    std::vector<Var> skips{h};
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        h = dropout(relu(conv(h, encoder_[i])), arch_.dropout, stochastic, rng);
        if (i + 1 < encoder_.size()) skips.push_back(h);
    }
    for (std::size_t j = 0; j < decoder_.size(); ++j) {
        const std::size_t level = encoder_.size() - 1 - j;
        h = relu(conv(concat_channels(upsample_nearest2x(h), skips[level]), decoder_[j]));
    }
    ForwardResult out;
    out.features = h;
    out.logits = conv(h, classifier_);
    out.probs = sigmoid(out.logits);
    return out;
}

Tensor SegNet::parameters_flat() const {
    std::vector<Scalar> flat;
    flat.reserve(num_parameters());
    for (const auto& param : params_) flat.insert(flat.end(), param->value.data().begin(), param->value.data().end());
    const std::size_t n = flat.size();
    return Tensor({n}, std::move(flat));
}

void SegNet::load_flat(const Tensor& flat) {
    if (flat.numel() != num_parameters()) {
        throw ShapeError("load_flat: expected " + std::to_string(num_parameters()) + " parameters, got " +
                         std::to_string(flat.numel()));
    }
    flat.check_finite("load_flat");
    std::size_t offset = 0;
    for (const auto& param : params_) {
        auto dst = param->value.data();
        std::copy_n(flat.data().begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
        offset += dst.size();
    }
}

void SegNet::zero_parameters() {
    for (const auto& param : params_) std::fill(param->value.data().begin(), param->value.data().end(), 0.0f);
}

void Adam::step(std::span<const Var> params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Tensor::zeros(p->value.shape()));
            v_.push_back(Tensor::zeros(p->value.shape()));
        }
    }
    if (m_.size() != params.size()) throw ParameterError("Adam: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Node& p = *params[i];
        if (p.grad.numel() != p.value.numel()) continue;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.value.numel(); ++j) {
            const Scalar g = p.grad[j];
            m[j] = beta1_ * m[j] + (1.0f - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0f - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= static_cast<Scalar>(lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

SegNet Checkpoint::instantiate() const {
    SegNet net(arch);
    net.load_flat(params);
    return net;
}

Checkpoint Checkpoint::from(const SegNet& net, nlohmann::json metadata) {
    return {net.arch(), net.parameters_flat(), std::move(metadata)};
}

std::uint64_t Checkpoint::param_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (Scalar v : params.data()) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) {
            h ^= (bits >> (8 * i)) & 0xFFu;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

namespace {

constexpr char kCkptMagic[5] = {'U', 'P', '2', 'D', 'C'};
constexpr std::uint8_t kCkptVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = is.get();
        if (c == EOF) throw IoError("truncated checkpoint");
        v |= static_cast<std::uint64_t>(c & 0xFF) << (8 * i);
    }
    return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const nlohmann::json header{{"arch", ckpt.arch.to_json()}, {"metadata", ckpt.metadata}};
    const std::string text = header.dump();
    os.write(kCkptMagic, 5);
    os.put(static_cast<char>(kCkptVersion));
    put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_u64(os, ckpt.params.numel());
    for (Scalar v : ckpt.params.data()) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
    if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    char magic[5];
    if (!is.read(magic, 5) || std::memcmp(magic, kCkptMagic, 5) != 0) throw IoError("bad checkpoint magic");
    if (is.get() != kCkptVersion) throw IoError("unsupported checkpoint version");
    std::string text(get_u64(is), '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(text.size()))) throw IoError("truncated checkpoint");
    const auto header = nlohmann::json::parse(text);
    const std::uint64_t count = get_u64(is);
    std::vector<Scalar> data(count);
    for (auto& v : data) {
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) {
            const int c = is.get();
            if (c == EOF) throw IoError("truncated checkpoint parameters");
            bits |= static_cast<std::uint32_t>(c & 0xFF) << (8 * i);
        }
        v = std::bit_cast<Scalar>(bits);
    }
    Checkpoint ckpt{ArchSpec::from_json(header.at("arch")), Tensor({count}, std::move(data)),
                    header.value("metadata", nlohmann::json::object())};
    ckpt.instantiate();  // validates parameter count against the architecture
    return ckpt;
}

Tensor stack_images(const std::vector<const Tensor*>& images) {
    if (images.empty()) throw ShapeError("stack_images: empty batch");
    const Shape& s = images.front()->shape();
    Shape out_shape{images.size()};
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    Tensor out(out_shape);
    const std::size_t stride = images.front()->numel();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->shape() != s) throw ShapeError("stack_images: inconsistent shapes in batch");
        std::copy(images[i]->data().begin(), images[i]->data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

SourceTrainResult train_source(const std::vector<Sample>& dataset, const SourceTrainConfig& config) {
    if (dataset.empty()) throw ParameterError("train_source: empty dataset");
    if (config.batch_size == 0) throw ParameterError("train_source: batch size must be positive");
    SegNet net(config.arch, config.seed);
    Adam opt(config.lr);
    Rng rng(config.seed ^ 0x5eedULL);
    const AugmentConfig aug{};
    SourceTrainResult result;
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<Sample> views;
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = dataset[order[i]];
                views.push_back(config.augment ? weak_augment(s, aug, rng) : s);
            }
            std::vector<const Tensor*> imgs, masks;
            for (const auto& v : views) {
                imgs.push_back(&v.image());
                masks.push_back(&v.ground_truth());
            }
            const Tensor images = stack_images(imgs);
            const Tensor targets = stack_images(masks);
            double loss_value = 0.0;
            try {
                const auto out = net.forward(images, true, rng, true);
                const Var loss = bce_with_logits(out.logits, targets);
                loss_value = loss->value.item();
                backward(loss);
                opt.step(net.parameters());
                zero_grad(net.parameters());
            } catch (const NumericError& e) {
                throw TrainingError("source training diverged at epoch " + std::to_string(epoch) + " (seed " +
                                    std::to_string(config.seed) + "): " + e.what());
            }
            result.batch_loss.push_back(loss_value);
            epoch_total += loss_value;
            ++batches;
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
    }
    result.checkpoint = Checkpoint::from(
        net, {{"stage", "source"},
              {"epochs", config.epochs},
              {"seed", config.seed},
              {"lr", config.lr},
              {"final_loss", result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()}});
    return result;
}

} // namespace up2d

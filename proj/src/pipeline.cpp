#include "up2d/pipeline.hpp"

#include "up2d/log.hpp"
#include "up2d/quantile_entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace up2d {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream identifiers for derive_rng; every random draw of a run hangs off the run seed.
enum Stream : std::uint64_t {
    kSourceData = 1,
    kSourceValData = 2,
    kTargetData = 3,
    kTargetTestData = 4,
    kShuffle = 10,
    kViews = 11,
    kTeacherMc = 12,
    kStudentDropout = 13,
};

std::uint64_t split_seed(std::uint64_t seed, Stream stream) { return derive_rng(seed, stream)(); }

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

Tensor stack(const std::vector<const Tensor*>& images) { return stack_images(images); }

double mean_entropy(const Tensor& probs) {
    double total = 0.0;
    for (Scalar p : probs.data()) {
        const double q = clamp_prob(p);
        total -= q * std::log(q);
    }
    return total / static_cast<double>(probs.numel());
}

} // namespace

SceneDistribution scene_distribution(const RunConfig& config) {
    SceneDistribution d;
    d.image_size = config.image_size;
    return d;
}

DataBundle generate_data(const RunConfig& config) {
    const auto dist = scene_distribution(config);
    const auto identity = DomainStyle::identity();
    DataBundle b;
    b.source = generate_samples(config.n_source, dist, identity, split_seed(config.seed, kSourceData), "src");
    b.source_val = generate_samples(config.n_source_val, dist, identity, split_seed(config.seed, kSourceValData), "srcval");
    b.target = generate_samples(config.n_target, dist, config.target_style, split_seed(config.seed, kTargetData), "tgt");
    b.target_test = generate_samples(config.n_target_test, dist, config.target_style,
                                     split_seed(config.seed, kTargetTestData), "tgttest");
    return b;
}

DataBundle write_data(const RunConfig& config, const std::filesystem::path& dir) {
    const auto dist = scene_distribution(config);
    const auto identity = DomainStyle::identity();
    DataBundle b;
    b.source = make_dataset(dir / "source", config.n_source, dist, identity, split_seed(config.seed, kSourceData), "src");
    b.source_val = make_dataset(dir / "source_val", config.n_source_val, dist, identity,
                                split_seed(config.seed, kSourceValData), "srcval");
    b.target = make_dataset(dir / "target", config.n_target, dist, config.target_style,
                            split_seed(config.seed, kTargetData), "tgt");
    b.target_test = make_dataset(dir / "target_test", config.n_target_test, dist, config.target_style,
                                 split_seed(config.seed, kTargetTestData), "tgttest");
    return b;
}

DataBundle load_data(const std::filesystem::path& dir) {
    DataBundle b;
    b.source = load_dataset(dir / "source");
    b.source_val = load_dataset(dir / "source_val");
    b.target = load_dataset(dir / "target");
    b.target_test = load_dataset(dir / "target_test");
    return b;
}

SourceTrainConfig source_train_config(const RunConfig& config) {
    SourceTrainConfig s;
    s.epochs = config.source_epochs;
    s.lr = static_cast<Scalar>(config.source_lr);
    s.batch_size = config.batch_size;
    s.seed = config.seed;
    return s;
}

EvalReport evaluate(const SegNet& net, const std::vector<Sample>& labeled, double threshold, std::size_t batch_size) {
    if (labeled.empty()) throw ParameterError("evaluate: empty dataset");
    EvalReport report;
    Rng unused(0);
    for (std::size_t start = 0; start < labeled.size(); start += batch_size) {
        const std::size_t end = std::min(labeled.size(), start + batch_size);
        std::vector<const Tensor*> images;
        for (std::size_t i = start; i < end; ++i) images.push_back(&labeled[i].image());
        const Tensor probs = net.forward(stack(images), false, unused, false).probs->value;
        const std::size_t C = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
        for (std::size_t i = start; i < end; ++i) {
            const Tensor& gt = labeled[i].ground_truth();
            if (gt.rank() != 3 || gt.dim(0) != C || gt.dim(1) != H || gt.dim(2) != W)
                throw ShapeError("evaluate: masks of '" + labeled[i].id() + "' do not match the prediction");
            for (std::size_t c = 0; c < C; ++c) {
                Tensor pred({H, W}), truth({H, W});
                for (std::size_t p = 0; p < H * W; ++p) {
                    pred[p] = probs[((i - start) * C + c) * H * W + p] >= threshold ? 1.0f : 0.0f;
                    truth[p] = gt[c * H * W + p];
                }
                report.records.push_back({labeled[i].id(), c, dice(pred, truth), assd(pred, truth)});
            }
        }
    }
    report.summarize();
    return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["mean_dice"] = report.mean_dice();
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
        const auto& s = report.classes[c];
        j[report.class_names[c]] = {{"dice", s.dice_mean},
                                    {"dice_std", s.dice_std},
                                    {"assd", s.assd_mean},
                                    {"assd_std", s.assd_std},
                                    {"assd_undefined", s.assd_undefined}};
    }
    return j;
}

EpochHook evaluation_hook(const std::vector<Sample>& labeled, double threshold) {
    return [&labeled, threshold](std::size_t, const SegNet& student, const SegNet&) {
        return report_to_json(evaluate(student, labeled, threshold));
    };
}

nlohmann::json StepLog::to_json() const {
    return {{"epoch", epoch},
            {"batch", batch},
            {"loss", loss},
            {"l_cons", consistency},
            {"l_ent", entropy},
            {"E_b", finite_or_null(batch_uncertainty)},
            {"updated", updated},
            {"E_min_epoch", finite_or_null(min_epoch_uncertainty)},
            {"E_min_batch", finite_or_null(min_batch_uncertainty)},
            {"mask_retained", mask_retained},
            {"quantile_retained", quantile_retained},
            {"invalid_prototypes", invalid_prototypes}};
}

nlohmann::json EpochLog::to_json() const {
    nlohmann::json j{{"epoch", epoch},
                     {"E_mean", finite_or_null(mean_uncertainty)},
                     {"E_min_epoch", finite_or_null(min_epoch_uncertainty)},
                     {"updates", updates}};
    if (!evaluation.is_null()) j["eval"] = evaluation;
    return j;
}

AdaptResult adapt(const Checkpoint& source, const std::vector<UnlabeledImage>& target, const RunConfig& config,
                  const EpochHook& hook) {
    if (target.empty()) throw ParameterError("adapt: empty target dataset");
    if (config.batch_size == 0) throw ParameterError("adapt: batch size must be at least 1");
    if (!(config.beta >= 0.0 && config.beta < 0.5)) throw ParameterError("adapt: beta must lie in [0, 0.5)");

    const std::size_t reads_at_start = audit::ground_truth_reads();
    std::size_t hook_reads = 0;

    SegNet student = source.instantiate();
    SegNet teacher = source.instantiate();
    Adam optimizer(static_cast<Scalar>(config.adapt_lr));
    UgemaState state;

    RpfConfig rpf;
    rpf.mode = config.rpf;
    rpf.eta1 = static_cast<Scalar>(config.eta1);
    rpf.eta2_mode = config.eta2_mode;
    rpf.per_image_prototypes = config.per_image_prototypes;
    rpf.refined_distances = config.refined_distances;

    const LossWeights weights{static_cast<Scalar>(config.weight_consistency),
                              static_cast<Scalar>(config.weight_entropy)};
    AugmentConfig augment;
    const bool geometric = config.teacher_view == TeacherView::Weak;

    AdaptResult result;
    std::vector<std::size_t> order(target.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.adapt_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = derive_rng(config.seed, kShuffle, epoch);
        std::shuffle(order.begin(), order.end(), shuffle);
        const std::size_t updates_before = state.update_count;

        for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch, ++step) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            Rng view_rng = derive_rng(config.seed, kViews, step);
            std::vector<Tensor> teacher_views, student_views;
            for (std::size_t i = start; i < end; ++i) {
                auto v = unlabeled_views(target[order[i]].image, augment, geometric, view_rng);
                teacher_views.push_back(std::move(v.teacher));
                student_views.push_back(std::move(v.student));
            }
            auto pointers = [](const std::vector<Tensor>& v) {
                std::vector<const Tensor*> p;
                for (const auto& t : v) p.push_back(&t);
                return p;
            };
            const Tensor teacher_in = stack(pointers(teacher_views));
            const Tensor student_in = stack(pointers(student_views));

            StepLog log;
            log.epoch = epoch;
            log.batch = batch;
            try {
                Rng mc_rng = derive_rng(config.seed, kTeacherMc, step);
                const TeacherOutputs t = mc_forward(teacher, teacher_in, config.mc_passes,
                                                    static_cast<Scalar>(config.gamma), mc_rng, config.entropy_form);
                const DenoiseMasks masks = build_denoise_masks(t, rpf);
                log.mask_retained = masks.retained;
                log.invalid_prototypes = masks.invalid_prototypes;
                result.invalid_prototypes += masks.invalid_prototypes;

                Rng drop_rng = derive_rng(config.seed, kStudentDropout, step);
                const auto out = student.forward(student_in, true, drop_rng, true);
                const Var l_cons = consistency_loss(out.probs, t.pseudo_labels, masks.mask);
                Var l_ent = constant(Tensor::scalar(0.0f));
                if (config.entropy_filter == EntropyFilter::On) {
                    const QuantileBand band = quantile_mask(out.probs->value, config.beta);
                    log.quantile_retained = band.retained;
                    l_ent = entropy_loss(out.probs, band.mask);
                } else if (config.entropy_filter == EntropyFilter::Full) {
                    l_ent = entropy_loss(out.probs, Tensor::ones(out.probs->value.shape()));
                }
                const Var loss = total_loss(l_cons, l_ent, weights);
                log.consistency = l_cons->value.item();
                log.entropy = l_ent->value.item();
                log.loss = loss->value.item();

                zero_grad(student.parameters());
                backward(loss);
                optimizer.step(student.parameters());

                // The gate judges the updated student on the teacher's view.
                Rng unused(0);
                const Tensor student_probs = student.forward(teacher_in, false, unused, false).probs->value;
                switch (config.ugema_metric) {
                case UgemaMetric::WeightedEntropy: {
                    const Tensor teacher_labels = threshold(t.deterministic_probs, static_cast<Scalar>(config.gamma));
                    log.batch_uncertainty =
                        weighted_uncertainty(student_probs, teacher_labels, config.scale_s).value_or(kNaN);
                    break;
                }
                case UgemaMetric::FullEntropy:
                    log.batch_uncertainty = mean_entropy(student_probs);
                    break;
                case UgemaMetric::Loss:
                    log.batch_uncertainty = log.loss;
                    break;
                }
            } catch (const NumericError& e) {
                nlohmann::json dump{{"error", e.what()},
                                    {"seed", config.seed},
                                    {"epoch", epoch},
                                    {"batch", batch},
                                    {"step", step},
                                    {"last_step", result.steps.empty() ? nlohmann::json() : result.steps.back().to_json()}};
                throw TrainingError("adaptation diverged: " + dump.dump());
            }

            Tensor teacher_flat = teacher.parameters_flat();
            const Tensor student_flat = student.parameters_flat();
            switch (config.ugema) {
            case UgemaMode::On:
                log.updated = ugema_step(state, log.batch_uncertainty, teacher_flat.data(), student_flat.data(),
                                         config.alpha);
                break;
            case UgemaMode::PlainEma:
                ema_update(teacher_flat.data(), student_flat.data(), config.alpha);
                ++state.update_count;
                log.updated = true;
                if (std::isfinite(log.batch_uncertainty)) state.batch_uncertainties.push_back(log.batch_uncertainty);
                break;
            case UgemaMode::Off:
                if (std::isfinite(log.batch_uncertainty)) state.batch_uncertainties.push_back(log.batch_uncertainty);
                break;
            }
            if (log.updated) teacher.load_flat(teacher_flat);
            log.min_epoch_uncertainty = state.min_epoch_uncertainty;
            log.min_batch_uncertainty = state.min_batch_uncertainty;
            result.steps.push_back(std::move(log));
        }

        EpochLog elog;
        elog.epoch = epoch;
        elog.mean_uncertainty = ugema_epoch_end(state).value_or(kNaN);
        elog.min_epoch_uncertainty = state.min_epoch_uncertainty;
        elog.updates = state.update_count - updates_before;
        if (hook) {
            const std::size_t before = audit::ground_truth_reads();
            elog.evaluation = hook(epoch, student, teacher);
            hook_reads += audit::ground_truth_reads() - before;
        }
        result.epochs.push_back(std::move(elog));
    }

    result.update_count = state.update_count;
    result.rejected_uncertainties = state.rejected_non_finite;
    result.ground_truth_reads = audit::ground_truth_reads() - reads_at_start - hook_reads;
    if (result.ground_truth_reads != 0)
        throw std::logic_error("source-free contract violated: adaptation read target ground truth");

    nlohmann::json meta{{"seed", config.seed},
                        {"epochs", config.adapt_epochs},
                        {"toggles", config.toggle_label()},
                        {"teacher_updates", state.update_count},
                        {"source_hash", source.param_hash()}};
    result.student = Checkpoint::from(student, meta);
    meta["role"] = "teacher";
    result.teacher = Checkpoint::from(teacher, meta);
    result.student.metadata["role"] = "student";
    return result;
}

} // namespace up2d

#pragma once

#include "up2d/config.hpp"
#include "up2d/metrics.hpp"
#include "up2d/model.hpp"
#include "up2d/ugema.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace up2d {

/// The four splits of one experiment: labeled source train/val, unlabeled-at-adaptation target
/// train, and labeled target test.
struct DataBundle {
    std::vector<Sample> source;
    std::vector<Sample> source_val;
    std::vector<Sample> target;
    std::vector<Sample> target_test;
};

SceneDistribution scene_distribution(const RunConfig& config);

/// In-memory splits, identical to what write_data() persists.
DataBundle generate_data(const RunConfig& config);
/// Writes source/, source_val/, target/, target_test/ under `dir`.
DataBundle write_data(const RunConfig& config, const std::filesystem::path& dir);
DataBundle load_data(const std::filesystem::path& dir);

SourceTrainConfig source_train_config(const RunConfig& config);

/// Segmentation quality of `net` (deterministic pass, probabilities binarized at `threshold`).
EvalReport evaluate(const SegNet& net, const std::vector<Sample>& labeled, double threshold = 0.5,
                    std::size_t batch_size = 8);

/// Per-batch adaptation record (one JSON line of the step log).
struct StepLog {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double loss = 0.0;
    double consistency = 0.0;
    double entropy = 0.0;
    double batch_uncertainty = 0.0;  // E_b, NaN when undefined
    bool updated = false;
    double min_epoch_uncertainty = 0.0;
    double min_batch_uncertainty = 0.0;
    std::vector<double> mask_retained;      // per class
    std::vector<double> quantile_retained;  // per class, empty when the filter is not a band
    std::size_t invalid_prototypes = 0;

    nlohmann::json to_json() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double mean_uncertainty = 0.0;  // NaN for an epoch without a finite E_b
    double min_epoch_uncertainty = 0.0;
    std::size_t updates = 0;        // teacher updates during the epoch
    nlohmann::json evaluation;      // filled by the epoch hook, if any

    nlohmann::json to_json() const;
};

struct AdaptResult {
    Checkpoint student;
    Checkpoint teacher;
    std::vector<StepLog> steps;
    std::vector<EpochLog> epochs;
    std::size_t update_count = 0;
    std::size_t rejected_uncertainties = 0;
    std::size_t invalid_prototypes = 0;
    std::size_t ground_truth_reads = 0;  // must stay 0
};

/// Called after every adaptation epoch. Whatever it returns is stored in EpochLog::evaluation.
/// Ground-truth reads made inside the hook are not charged to the adaptation audit.
using EpochHook = std::function<nlohmann::json(std::size_t epoch, const SegNet& student, const SegNet& teacher)>;

/// Source-free adaptation of `source` on unlabeled target images. Both teacher and student start
/// from the source model. Throws TrainingError (with a step dump) on a non-finite loss and
/// std::logic_error if the adaptation path read any ground truth.
AdaptResult adapt(const Checkpoint& source, const std::vector<UnlabeledImage>& target, const RunConfig& config,
                  const EpochHook& hook = {});

/// Hook that evaluates the student on a labeled split and records mean/per-class Dice and ASSD.
EpochHook evaluation_hook(const std::vector<Sample>& labeled, double threshold);

nlohmann::json report_to_json(const EvalReport& report);

} // namespace up2d

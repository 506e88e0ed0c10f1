#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cpnav/dataset.hpp"
#include "cpnav/error.hpp"
#include "cpnav/network.hpp"

namespace cpnav {

struct TrainConfig {
    double base_lr = 0.005;
    double momentum = 0.9;
    int batch_size = 32;
    int iterations = 3000;
    double head_lr_mult = 10.0;  // applied by replace_head; recorded here for reports
    double decay_factor = 0.5;   // applied at 1/3 and 2/3 of the iterations
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> checkpoint_path;  // final + decay-boundary checkpoints
    int log_every = 0;  // 0 = silent
};

void validate(const TrainConfig& config);

// Learning-rate multiplier from the step schedule at `iteration` (0-based).
double lr_decay(const TrainConfig& config, int iteration);

using ConfusionMatrix = std::array<std::array<std::int64_t, kNumCommands>, kNumCommands>;  // [truth][predicted]

struct EvalReport {
    double accuracy = 0.0;
    std::array<double, kNumCommands> per_class_accuracy{};  // NaN-free: classes with no samples report 0
    std::array<std::int64_t, kNumCommands> per_class_count{};
    ConfusionMatrix confusion{};
    std::int64_t total = 0;

    std::string format() const;
};

struct TrainReport {
    std::vector<double> loss_curve;  // mean batch loss per iteration
    std::optional<EvalReport> holdout;
    std::vector<std::filesystem::path> checkpoints;
};

class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, TrainReport report) : NumericError(what), report_(std::move(report)) {}
    const TrainReport& report() const noexcept { return report_; }

private:
    TrainReport report_;
};

struct TrainResult {
    Network network;
    TrainReport report;
};

using TrainLogger = std::function<void(int iteration, double loss, double lr)>;

/// SGD with momentum over seeded shuffled batches. Effective per-layer rate
/// is base_lr * lr_mult * decay(iteration). Deterministic given the seed.
TrainResult finetune(const Network& network, const ImageStore& train, const ImageStore* holdout,
                     const TrainConfig& config, const TrainLogger& logger = {});

EvalReport evaluate(const Network& network, const ImageStore& data);

// Holdout evaluation helper straight from a dataset directory.
EvalReport evaluate_split(const Network& network, const std::filesystem::path& dir, const Manifest& manifest,
                          const std::vector<std::size_t>& indices);

}  // namespace cpnav

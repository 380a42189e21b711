#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dipe/data.hpp"
#include "dipe/model.hpp"
#include "dipe/training.hpp"

namespace dipe {

struct TrainerConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    TauSchedule tau;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double tau = 1.0;
    double train_loss = 0.0;  // window-weighted mean of batch totals
    double train_freq = 0.0;
    double train_time = 0.0;
    double val_mse = 0.0;
    double val_mae = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainReport {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;

    bool operator==(const TrainReport&) const = default;
};

/// Everything needed to reuse a trained model.
struct Checkpoint {
    ModelConfig config;
    LossConfig loss;
    TrainerConfig trainer;
    ModelParams params;
    Standardizer scaler;
    std::vector<std::string> channel_names;
    TrainReport report;
};

/// JSON document; every number is written with 17 significant digits.
std::string checkpoint_to_json(const Checkpoint& ckpt);
/// Throws IoError on malformed documents and the usual validation errors
/// on inconsistent contents.
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t windows = 0;
};

/// MSE and MAE over every window and channel of a range, in standardized units.
Metrics evaluate(const ModelParams& params, const SpectralEngine& engine, const PreparedData& data,
                 const IndexRange& range);
Metrics evaluate(const Checkpoint& ckpt, const PreparedData& data, SplitName split);

struct FitResult {
    Checkpoint checkpoint;  // parameters of the epoch with the lowest validation MSE
    TrainReport report;
};

/// Adam on shuffled mini-batches with per-epoch temperature annealing.
/// `on_epoch`, if set, is called after each epoch's validation pass.
FitResult fit(const PreparedData& data, const ModelConfig& cfg, const LossConfig& loss, const TrainerConfig& trainer,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Shuffle seed of one epoch.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch);

}  // namespace dipe

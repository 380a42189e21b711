#include "dipe/trainer.hpp"

#include <cmath>
#include <limits>

#include "dipe/error.hpp"

namespace dipe {

namespace {

constexpr std::size_t kEvalBatch = 256;

}  // namespace

void TrainerConfig::validate() const {
    if (epochs == 0) throw ParameterError("trainer: epochs must be positive");
    if (batch_size == 0) throw ParameterError("trainer: batch size must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("trainer: learning rate must be positive");
    tau.validate();
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
    // splitmix64 finalizer over (seed, epoch).
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Metrics evaluate(const ModelParams& params, const SpectralEngine& engine, const PreparedData& data,
                 const IndexRange& range) {
    const auto& cfg = engine.config();
    auto it = windows(data.raw, range, data.scaler, cfg, kEvalBatch, false, 0, data.borrow_lookback);
    double sq = 0.0;
    double abs = 0.0;
    Metrics m;
    while (auto batch = it.next()) {
        for (std::size_t b = 0; b < batch->size(); ++b) {
            const Matrix y_hat = model_forward(batch->inputs[b], params, engine);
            const auto& y = batch->targets[b];
            for (std::size_t i = 0; i < y.data.size(); ++i) {
                const double d = y_hat.data[i] - y.data[i];
                sq += d * d;
                abs += std::abs(d);
            }
        }
        m.windows += batch->size();
    }
    const double n = static_cast<double>(m.windows * cfg.channels * cfg.horizon);
    m.mse = sq / n;
    m.mae = abs / n;
    if (!std::isfinite(m.mse)) throw NumericError("evaluate: non-finite forecast error");
    return m;
}

Metrics evaluate(const Checkpoint& ckpt, const PreparedData& data, SplitName split) {
    if (data.raw.channels() != ckpt.config.channels) {
        throw DimensionError("evaluate: checkpoint expects " + std::to_string(ckpt.config.channels) +
                             " channels, data has " + std::to_string(data.raw.channels()));
    }
    const SpectralEngine engine(ckpt.config);
    return evaluate(ckpt.params, engine, data, select(data.ranges, split));
}

FitResult fit(const PreparedData& data, const ModelConfig& cfg, const LossConfig& loss, const TrainerConfig& trainer,
              const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    loss.validate();
    trainer.validate();
    if (data.raw.channels() != cfg.channels) {
        throw DimensionError("fit: data has " + std::to_string(data.raw.channels()) + " channels, model expects " +
                             std::to_string(cfg.channels));
    }

    const SpectralEngine engine(cfg);
    ModelParams params = init_params(cfg, trainer.seed, anneal_tau(trainer.tau, 0));
    OptimizerState opt;
    opt.lr = trainer.lr;

    FitResult result;
    ModelParams best = params;
    double best_mse = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 0; epoch < trainer.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.tau = anneal_tau(trainer.tau, epoch);
        if (params.router) params.router->temperature = rec.tau;

        auto it = windows(data.raw, data.ranges.train, data.scaler, cfg, trainer.batch_size, true,
                          epoch_seed(trainer.seed, epoch), data.borrow_lookback);
        std::size_t seen = 0;
        while (auto batch = it.next()) {
            const auto [breakdown, grads] = backward_batch(batch->inputs, batch->targets, params, engine, loss);
            adam_step(params, grads, opt);
            const double w = static_cast<double>(batch->size());
            rec.train_loss += w * breakdown.total;
            rec.train_freq += w * breakdown.l_freq;
            rec.train_time += w * breakdown.l_time;
            seen += batch->size();
        }
        rec.train_loss /= static_cast<double>(seen);
        rec.train_freq /= static_cast<double>(seen);
        rec.train_time /= static_cast<double>(seen);

        const auto val = evaluate(params, engine, data, data.ranges.val);
        rec.val_mse = val.mse;
        rec.val_mae = val.mae;
        if (val.mse < best_mse) {
            best_mse = val.mse;
            best = params;
            result.report.best_epoch = epoch;
        }
        result.report.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }

    auto& ckpt = result.checkpoint;
    ckpt.config = cfg;
    ckpt.loss = loss;
    ckpt.trainer = trainer;
    ckpt.params = std::move(best);
    ckpt.scaler = data.scaler;
    ckpt.channel_names = data.raw.names;
    ckpt.report = result.report;
    return result;
}

}  // namespace dipe

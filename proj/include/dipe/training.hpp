#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dipe/matrix.hpp"
#include "dipe/model.hpp"

namespace dipe {

struct LossConfig {
    double alpha = 0.5;  // weight of the frequency term

    /// Throws ParameterError unless 0 <= alpha <= 1.
    void validate() const;
};

struct LossBreakdown {
    double l_freq = 0.0;  // spectrum-weighted MAE on the forecast spectrum
    double l_time = 0.0;  // time-domain MSE
    double total = 0.0;   // alpha * l_freq + (1 - alpha) * l_time

    // Per-channel contributions (each averaged over the batch).
    std::vector<double> channel_freq;
    std::vector<double> channel_time;
};

/// Same layout as ModelParams; the router block is empty for M == 1.
struct Gradients {
    std::vector<ExpertWeights> experts;
    Matrix router_logits;

    static Gradients zeros_like(const ModelParams& params);
};

/// |sfa_gain| sampled at the input bin nearest to each horizon bin's
/// normalized frequency: out[k] = |g[min(round(k L / L'), F_in - 1)]|.
std::vector<double> resample_freq_weights(std::span<const double> sfa_gain, const ModelConfig& cfg);

/// Frequency loss of one sample (C x L'). The per-channel bin weights come
/// from the routed SFA gains and are treated as constants. Throws
/// NumericError if a channel's weights are all zero.
double sfa_loss_freq(const Matrix& y, const Matrix& y_hat, const ModelParams& params, const Matrix& mix,
                     const ModelConfig& cfg);

/// Mean squared error over all entries. Throws DimensionError on shape mismatch.
double mse_time(const Matrix& y, const Matrix& y_hat);

/// Combines the two terms. Throws ParameterError for alpha outside [0, 1].
LossBreakdown total_loss(double l_freq, double l_time, double alpha);

/// Loss and exact gradients of the batch-mean loss for every parameter.
/// Reduction runs over samples in index order, so results are bit-stable.
/// Throws NumericError naming the stage if a non-finite value appears.
std::pair<LossBreakdown, Gradients> backward_batch(std::span<const Matrix> inputs, std::span<const Matrix> targets,
                                                   const ModelParams& params, const SpectralEngine& engine,
                                                   const LossConfig& loss);

/// Single-sample convenience form of backward_batch.
std::pair<LossBreakdown, Gradients> backward(const Matrix& x, const Matrix& y, const ModelParams& params,
                                             const ModelConfig& cfg, const LossConfig& loss);

/// Loss only, same definition as backward_batch.
LossBreakdown batch_loss(std::span<const Matrix> inputs, std::span<const Matrix> targets, const ModelParams& params,
                         const SpectralEngine& engine, const LossConfig& loss);

struct OptimizerState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::size_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update. Complex parameters are two real
/// coordinates. Throws NumericError on a non-finite gradient.
void adam_step(ModelParams& params, const Gradients& grads, OptimizerState& state);

/// Number of real scalars stored in `params` (frozen ablated gains included).
std::size_t stored_scalar_count(const ModelParams& params);

struct TauSchedule {
    double tau_start = 4.0;
    double tau_end = 1.0;
    std::size_t anneal_epochs = 10;

    void validate() const;
};

/// Linear interpolation from tau_start at epoch 0 to tau_end at
/// anneal_epochs, constant afterwards.
double anneal_tau(const TauSchedule& schedule, std::size_t epoch);

}  // namespace dipe

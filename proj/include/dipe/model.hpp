#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dipe/matrix.hpp"
#include "dipe/spectral.hpp"

namespace dipe {

/// Dimensions of a forecaster. Derived lengths are computed on demand.
struct ModelConfig {
    std::size_t lookback = 720;  // L
    std::size_t horizon = 96;    // L'
    std::size_t channels = 1;    // C
    std::size_t rank = 1;        // M, number of expert weight sets

    // Ablation switches. A disabled stage acts as identity (unit gain) and its
    // weights are neither trained nor counted.
    bool use_sfa = true;
    bool use_sta = true;

    std::size_t pad_length() const noexcept { return lookback + horizon - 1; }
    std::size_t freq_in() const noexcept { return half_length(lookback); }
    std::size_t freq_pad() const noexcept { return half_length(pad_length()); }
    std::size_t freq_out() const noexcept { return half_length(horizon); }
    bool has_router() const noexcept { return rank > 1; }

    /// Throws ParameterError unless L >= 2, L' >= 1, C >= 1 and 1 <= M <= C.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// One expert's weights for the three stages.
struct ExpertWeights {
    std::vector<double> sfa_gain;     // per input bin, F_in
    std::vector<double> sta_gain;     // per input step, L
    std::vector<Complex> ifm_weight;  // per padded bin, F_pad
    std::vector<Complex> ifm_bias;    // per padded bin, F_pad

    /// Unit SFA/STA gains, zero IFM weight and bias.
    static ExpertWeights identity(const ModelConfig& cfg);

    /// Throws DimensionError on wrong lengths, NumericError on non-finite entries.
    void validate(const ModelConfig& cfg) const;

    bool operator==(const ExpertWeights&) const = default;
};

/// Weights actually applied to one channel after routing.
using EffectiveChannelWeights = ExpertWeights;

/// Static routing logits (M x C) and the softmax temperature.
struct Router {
    Matrix logits;
    double temperature = 1.0;

    bool operator==(const Router&) const = default;
};

struct ModelParams {
    std::vector<ExpertWeights> experts;
    std::optional<Router> router;  // present iff M > 1

    void validate(const ModelConfig& cfg) const;

    bool operator==(const ModelParams&) const = default;
};

/// Fresh parameters: unit SFA/STA gains, N(0, 0.02^2) real and imaginary
/// parts for the IFM weight and bias, zero router logits.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, double temperature = 1.0);

/// Column-wise softmax of logits / temperature. Throws ParameterError if the
/// temperature is not positive.
Matrix router_normalize(const Router& router);

/// Mixing coefficients R' (M x C): the normalized router, or a 1 x C row of
/// ones for a single-expert model.
Matrix routing_matrix(const ModelParams& params, const ModelConfig& cfg);

/// Convex combination of the expert weights with column `channel` of `mix`.
EffectiveChannelWeights mix_weights(const ModelParams& params, const Matrix& mix, std::size_t channel);

// Reference stage implementations. Each builds its transform plans per call;
// use SpectralEngine for repeated evaluation.

/// irfft(sfa_gain * rfft(x), L)
std::vector<double> sfa_forward(std::span<const double> x, const EffectiveChannelWeights& w);
/// sta_gain * z, elementwise
std::vector<double> sta_forward(std::span<const double> z, const EffectiveChannelWeights& w);
/// Last L' samples of irfft(ifm_weight * rfft(pad(z, N)) + ifm_bias, N), N = L + L' - 1.
std::vector<double> ifm_forward(std::span<const double> z, const EffectiveChannelWeights& w,
                                const ModelConfig& cfg);

/// Weights of one channel in the form used by SpectralEngine: the IFM weight
/// turned into the spectrum of its time-domain kernel at the engine's
/// convolution length, and the IFM bias turned into its contribution to the
/// forecast.
struct PreparedChannel {
    std::vector<double> sfa_gain;
    std::vector<double> sta_gain;
    std::vector<Complex> kernel_spectrum;
    std::vector<double> bias_tail;
};

/// Intermediate values of one channel's forward pass, kept for backprop.
struct ChannelTrace {
    std::vector<Complex> input_spectrum;  // rfft(x), F_in
    std::vector<double> filtered;         // SFA output, L
    std::vector<Complex> padded_spectrum;  // rfft(pad(z_STA)) at conv length
};

/// Cached transform plans for one ModelConfig.
///
/// The IFM stage is evaluated as a linear convolution of the STA output with
/// the kernel irfft(ifm_weight, N). Only output indices L-1 .. N-1 are kept,
/// and for those the circular convolution at any length >= N agrees with the
/// linear one, so the engine convolves at the smallest FFT-friendly length
/// >= N instead of N itself (N = L + L' - 1 is often prime).
class SpectralEngine {
public:
    explicit SpectralEngine(const ModelConfig& cfg);

    const ModelConfig& config() const noexcept { return cfg_; }
    std::size_t conv_length() const noexcept { return conv_.size(); }

    const RealFftPlan& lookback_plan() const noexcept { return lookback_; }
    const RealFftPlan& padded_plan() const noexcept { return padded_; }
    const RealFftPlan& conv_plan() const noexcept { return conv_; }
    const RealFftPlan& horizon_plan() const noexcept { return horizon_; }

    PreparedChannel prepare(const EffectiveChannelWeights& w) const;

    /// Forecast of one channel; `y` has length L'. Fills `trace` when given.
    void forward(std::span<const double> x, const PreparedChannel& ch, std::span<double> y,
                 ChannelTrace* trace = nullptr) const;

private:
    ModelConfig cfg_;
    RealFftPlan lookback_;
    RealFftPlan padded_;
    RealFftPlan conv_;
    RealFftPlan horizon_;
};

/// Forecast for every channel: x is C x L, the result C x L'. Throws
/// DimensionError on shape mismatch and DataError on non-finite input.
Matrix model_forward(const Matrix& x, const ModelParams& params, const ModelConfig& cfg);
Matrix model_forward(const Matrix& x, const ModelParams& params, const SpectralEngine& engine);

/// Trainable real degrees of freedom; complex parameters count twice.
std::size_t param_count(const ModelConfig& cfg);

}  // namespace dipe

#include "dipe/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <type_traits>

#include "dipe/error.hpp"

namespace dipe {

namespace {

constexpr double kInitStd = 0.02;

void require_length(const char* what, std::size_t got, std::size_t want) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                             std::to_string(got));
    }
}

template <class T>
void require_finite(const char* what, const std::vector<T>& v) {
    for (const auto& x : v) {
        bool ok;
        if constexpr (std::is_same_v<T, Complex>) {
            ok = std::isfinite(x.real()) && std::isfinite(x.imag());
        } else {
            ok = std::isfinite(x);
        }
        if (!ok) throw NumericError(std::string(what) + ": non-finite weight");
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (lookback < 2) throw ParameterError("model config: lookback must be >= 2, got " + std::to_string(lookback));
    if (horizon < 1) throw ParameterError("model config: horizon must be >= 1");
    if (channels < 1) throw ParameterError("model config: channels must be >= 1");
    if (rank < 1 || rank > channels) {
        throw ParameterError("model config: rank must lie in [1, channels=" + std::to_string(channels) + "], got " +
                             std::to_string(rank));
    }
}

ExpertWeights ExpertWeights::identity(const ModelConfig& cfg) {
    return {std::vector<double>(cfg.freq_in(), 1.0), std::vector<double>(cfg.lookback, 1.0),
            std::vector<Complex>(cfg.freq_pad()), std::vector<Complex>(cfg.freq_pad())};
}

void ExpertWeights::validate(const ModelConfig& cfg) const {
    require_length("sfa_gain", sfa_gain.size(), cfg.freq_in());
    require_length("sta_gain", sta_gain.size(), cfg.lookback);
    require_length("ifm_weight", ifm_weight.size(), cfg.freq_pad());
    require_length("ifm_bias", ifm_bias.size(), cfg.freq_pad());
    require_finite("sfa_gain", sfa_gain);
    require_finite("sta_gain", sta_gain);
    require_finite("ifm_weight", ifm_weight);
    require_finite("ifm_bias", ifm_bias);
}

void ModelParams::validate(const ModelConfig& cfg) const {
    require_length("experts", experts.size(), cfg.rank);
    for (const auto& e : experts) e.validate(cfg);
    if (cfg.has_router() != router.has_value()) {
        throw DimensionError(cfg.has_router() ? "params: router missing for rank > 1"
                                              : "params: single-expert model must not carry a router");
    }
    if (router) {
        if (router->logits.rows != cfg.rank || router->logits.cols != cfg.channels) {
            throw DimensionError("params: router logits must be " + std::to_string(cfg.rank) + " x " +
                                 std::to_string(cfg.channels));
        }
        if (!(router->temperature > 0.0)) throw ParameterError("params: router temperature must be positive");
    }
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, double temperature) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, kInitStd);

    ModelParams params;
    params.experts.reserve(cfg.rank);
    for (std::size_t m = 0; m < cfg.rank; ++m) {
        auto w = ExpertWeights::identity(cfg);
        for (auto& v : w.ifm_weight) v = {normal(rng), normal(rng)};
        for (auto& v : w.ifm_bias) v = {normal(rng), normal(rng)};
        params.experts.push_back(std::move(w));
    }
    if (cfg.has_router()) {
        if (!(temperature > 0.0)) throw ParameterError("init_params: temperature must be positive");
        params.router = Router{Matrix(cfg.rank, cfg.channels, 0.0), temperature};
    }
    return params;
}

Matrix router_normalize(const Router& router) {
    if (!(router.temperature > 0.0)) {
        throw ParameterError("router_normalize: temperature must be positive, got " +
                             std::to_string(router.temperature));
    }
    const auto& r = router.logits;
    Matrix out(r.rows, r.cols);
    for (std::size_t c = 0; c < r.cols; ++c) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < r.rows; ++m) peak = std::max(peak, r(m, c) / router.temperature);
        double sum = 0.0;
        for (std::size_t m = 0; m < r.rows; ++m) {
            out(m, c) = std::exp(r(m, c) / router.temperature - peak);
            sum += out(m, c);
        }
        for (std::size_t m = 0; m < r.rows; ++m) out(m, c) /= sum;
    }
    return out;
}

Matrix routing_matrix(const ModelParams& params, const ModelConfig& cfg) {
    if (!params.router) return Matrix(1, cfg.channels, 1.0);
    return router_normalize(*params.router);
}

EffectiveChannelWeights mix_weights(const ModelParams& params, const Matrix& mix, std::size_t channel) {
    if (params.experts.empty()) throw DimensionError("mix_weights: no experts");
    if (mix.rows != params.experts.size()) {
        throw DimensionError("mix_weights: routing matrix has " + std::to_string(mix.rows) + " rows for " +
                             std::to_string(params.experts.size()) + " experts");
    }
    if (channel >= mix.cols) {
        throw DimensionError("mix_weights: channel " + std::to_string(channel) + " out of range [0, " +
                             std::to_string(mix.cols) + ")");
    }
    if (params.experts.size() == 1) return params.experts.front();

    const auto& first = params.experts.front();
    EffectiveChannelWeights out{std::vector<double>(first.sfa_gain.size(), 0.0),
                                std::vector<double>(first.sta_gain.size(), 0.0),
                                std::vector<Complex>(first.ifm_weight.size()),
                                std::vector<Complex>(first.ifm_bias.size())};
    for (std::size_t m = 0; m < params.experts.size(); ++m) {
        const double coef = mix(m, channel);
        const auto& e = params.experts[m];
        for (std::size_t i = 0; i < out.sfa_gain.size(); ++i) out.sfa_gain[i] += coef * e.sfa_gain[i];
        for (std::size_t i = 0; i < out.sta_gain.size(); ++i) out.sta_gain[i] += coef * e.sta_gain[i];
        for (std::size_t i = 0; i < out.ifm_weight.size(); ++i) out.ifm_weight[i] += coef * e.ifm_weight[i];
        for (std::size_t i = 0; i < out.ifm_bias.size(); ++i) out.ifm_bias[i] += coef * e.ifm_bias[i];
    }
    return out;
}

std::vector<double> sfa_forward(std::span<const double> x, const EffectiveChannelWeights& w) {
    require_length("sfa_forward input", half_length(x.size()), w.sfa_gain.size());
    if (x.empty()) throw DimensionError("sfa_forward: empty input");
    const RealFftPlan plan(x.size());
    auto spec = plan.forward(x);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= w.sfa_gain[k];
    return plan.inverse(spec);
}

std::vector<double> sta_forward(std::span<const double> z, const EffectiveChannelWeights& w) {
    require_length("sta_forward input", z.size(), w.sta_gain.size());
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = w.sta_gain[i] * z[i];
    return out;
}

std::vector<double> ifm_forward(std::span<const double> z, const EffectiveChannelWeights& w,
                                const ModelConfig& cfg) {
    require_length("ifm_forward input", z.size(), cfg.lookback);
    require_length("ifm_weight", w.ifm_weight.size(), cfg.freq_pad());
    require_length("ifm_bias", w.ifm_bias.size(), cfg.freq_pad());
    const std::size_t n = cfg.pad_length();
    const RealFftPlan plan(n);
    auto spec = plan.forward(zero_pad(z, n));
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = w.ifm_weight[k] * spec[k] + w.ifm_bias[k];
    const auto full = plan.inverse(spec);
    return {full.end() - static_cast<std::ptrdiff_t>(cfg.horizon), full.end()};
}

SpectralEngine::SpectralEngine(const ModelConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      lookback_(cfg.lookback),
      padded_(cfg.pad_length()),
      conv_(fast_real_length(cfg.pad_length())),
      horizon_(cfg.horizon) {}

PreparedChannel SpectralEngine::prepare(const EffectiveChannelWeights& w) const {
    w.validate(cfg_);
    PreparedChannel ch;
    if (cfg_.use_sfa) ch.sfa_gain = w.sfa_gain;
    if (cfg_.use_sta) ch.sta_gain = w.sta_gain;

    auto kernel = padded_.inverse(w.ifm_weight);
    kernel.resize(conv_.size(), 0.0);
    ch.kernel_spectrum = conv_.forward(kernel);

    const auto bias = padded_.inverse(w.ifm_bias);
    ch.bias_tail.assign(bias.end() - static_cast<std::ptrdiff_t>(cfg_.horizon), bias.end());
    return ch;
}

void SpectralEngine::forward(std::span<const double> x, const PreparedChannel& ch, std::span<double> y,
                             ChannelTrace* trace) const {
    const std::size_t len = cfg_.lookback;
    require_length("engine input", x.size(), len);
    require_length("engine output", y.size(), cfg_.horizon);

    std::vector<double> filtered;
    std::vector<Complex> input_spectrum;
    if (!ch.sfa_gain.empty()) {
        input_spectrum = lookback_.forward(x);
        std::vector<Complex> scaled(input_spectrum.size());
        for (std::size_t k = 0; k < scaled.size(); ++k) scaled[k] = ch.sfa_gain[k] * input_spectrum[k];
        filtered = lookback_.inverse(scaled);
    } else {
        filtered.assign(x.begin(), x.end());
    }

    std::vector<double> padded(conv_.size(), 0.0);
    for (std::size_t i = 0; i < len; ++i) {
        padded[i] = ch.sta_gain.empty() ? filtered[i] : ch.sta_gain[i] * filtered[i];
    }
    auto spectrum = conv_.forward(padded);
    std::vector<Complex> product(spectrum.size());
    for (std::size_t k = 0; k < product.size(); ++k) product[k] = ch.kernel_spectrum[k] * spectrum[k];
    conv_.inverse(product, padded);
    for (std::size_t i = 0; i < cfg_.horizon; ++i) y[i] = padded[len - 1 + i] + ch.bias_tail[i];

    if (trace) {
        trace->input_spectrum = std::move(input_spectrum);
        trace->filtered = std::move(filtered);
        trace->padded_spectrum = std::move(spectrum);
    }
}

Matrix model_forward(const Matrix& x, const ModelParams& params, const SpectralEngine& engine) {
    const auto& cfg = engine.config();
    if (x.rows != cfg.channels || x.cols != cfg.lookback) {
        throw DimensionError("model_forward: input is " + std::to_string(x.rows) + " x " + std::to_string(x.cols) +
                             ", expected " + std::to_string(cfg.channels) + " x " + std::to_string(cfg.lookback));
    }
    for (double v : x.data) {
        if (!std::isfinite(v)) throw DataError("model_forward: non-finite input value");
    }
    params.validate(cfg);
    const Matrix mix = routing_matrix(params, cfg);
    Matrix y(cfg.channels, cfg.horizon);
    // Without a router every channel shares the same weights.
    std::optional<PreparedChannel> shared;
    if (!cfg.has_router()) shared = engine.prepare(mix_weights(params, mix, 0));
    for (std::size_t c = 0; c < cfg.channels; ++c) {
        if (shared) {
            engine.forward(x.row(c), *shared, y.row(c));
        } else {
            engine.forward(x.row(c), engine.prepare(mix_weights(params, mix, c)), y.row(c));
        }
    }
    return y;
}

Matrix model_forward(const Matrix& x, const ModelParams& params, const ModelConfig& cfg) {
    return model_forward(x, params, SpectralEngine(cfg));
}

std::size_t param_count(const ModelConfig& cfg) {
    const std::size_t per_expert =
        (cfg.use_sfa ? cfg.freq_in() : 0) + (cfg.use_sta ? cfg.lookback : 0) + 4 * cfg.freq_pad();
    return cfg.rank * per_expert + (cfg.has_router() ? cfg.rank * cfg.channels : 0);
}

}  // namespace dipe

#include "dipe/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dipe/error.hpp"

namespace dipe {

namespace {

// Bins 0 and n/2 (even n) appear once in a real signal's spectrum, the rest twice.
double multiplicity(std::size_t k, std::size_t n) { return (k == 0 || 2 * k == n) ? 1.0 : 2.0; }

// Gradient w.r.t. the bins B of y = inverse(B), given the gradient g of y.
// Complex entries pack (d/dRe, d/dIm).
std::vector<Complex> adjoint_inverse(const RealFftPlan& plan, std::span<const double> g) {
    auto out = plan.forward(g);
    const std::size_t n = plan.size();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= multiplicity(k, n) / static_cast<double>(n);
    return out;
}

// Gradient w.r.t. the real signal x of Y = forward(x), given the packed gradient G of Y.
std::vector<double> adjoint_forward(const RealFftPlan& plan, std::vector<Complex> g) {
    const std::size_t n = plan.size();
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (multiplicity(k, n) == 2.0) g[k] *= 0.5;
    }
    auto out = plan.inverse(g);
    for (auto& v : out) v *= static_cast<double>(n);
    return out;
}

void require_shape(const char* what, const Matrix& m, std::size_t rows, std::size_t cols) {
    if (m.rows != rows || m.cols != cols) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + " x " + std::to_string(cols) +
                             ", got " + std::to_string(m.rows) + " x " + std::to_string(m.cols));
    }
}

void require_finite_input(const char* what, const Matrix& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) throw DataError(std::string(what) + ": non-finite value");
    }
}

template <class T>
void check_finite(const char* stage, const std::vector<T>& v) {
    for (const auto& x : v) {
        bool ok;
        if constexpr (std::is_same_v<T, Complex>) {
            ok = std::isfinite(x.real()) && std::isfinite(x.imag());
        } else {
            ok = std::isfinite(x);
        }
        if (!ok) throw NumericError(std::string("backward: non-finite gradient in ") + stage);
    }
}

std::vector<double> loss_weights(const EffectiveChannelWeights& w, const ModelConfig& cfg) {
    if (!cfg.use_sfa) return std::vector<double>(cfg.freq_out(), 1.0);
    return resample_freq_weights(w.sfa_gain, cfg);
}

double weight_norm(std::span<const double> w, std::size_t channel) {
    double norm = 0.0;
    for (double v : w) norm += v;
    if (!(norm > 0.0)) {
        throw NumericError("frequency loss: all loss weights of channel " + std::to_string(channel) + " are zero");
    }
    return norm;
}

// Weighted spectral MAE of one channel: <w, |D|> / |w|_1.
double channel_freq_loss(std::span<const Complex> d, std::span<const double> w, double norm) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) acc += w[k] * std::abs(d[k]);
    return acc / norm;
}

struct Pass {
    bool want_grad = false;
    LossBreakdown loss;
    Gradients grads;
};

void run_batch(std::span<const Matrix> inputs, std::span<const Matrix> targets, const ModelParams& params,
               const SpectralEngine& engine, const LossConfig& loss_cfg, Pass& pass) {
    loss_cfg.validate();
    const auto& cfg = engine.config();
    if (inputs.empty()) throw DataError("batch: no samples");
    if (inputs.size() != targets.size()) throw DimensionError("batch: input and target counts differ");
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        require_shape("batch input", inputs[b], cfg.channels, cfg.lookback);
        require_shape("batch target", targets[b], cfg.channels, cfg.horizon);
        require_finite_input("batch input", inputs[b]);
        require_finite_input("batch target", targets[b]);
    }
    params.validate(cfg);

    const double alpha = loss_cfg.alpha;
    const std::size_t batch = inputs.size();
    const std::size_t channels = cfg.channels;
    const std::size_t len = cfg.lookback;
    const std::size_t horizon = cfg.horizon;
    const double inv_b = 1.0 / static_cast<double>(batch);
    const double inv_c = 1.0 / static_cast<double>(channels);
    const double time_scale = 1.0 / static_cast<double>(channels * horizon);

    const Matrix mix = routing_matrix(params, cfg);
    const auto& conv = engine.conv_plan();
    const auto& out_plan = engine.horizon_plan();

    auto& loss = pass.loss;
    loss.channel_freq.assign(channels, 0.0);
    loss.channel_time.assign(channels, 0.0);
    if (pass.want_grad) pass.grads = Gradients::zeros_like(params);
    Matrix g_mix(mix.rows, mix.cols, 0.0);

    std::vector<double> y_hat(horizon);
    std::vector<double> g_full(conv.size());
    ChannelTrace trace;

    for (std::size_t c = 0; c < channels; ++c) {
        const auto eff = mix_weights(params, mix, c);
        const auto prepared = engine.prepare(eff);
        const auto w = loss_weights(eff, cfg);
        const double norm = weight_norm(w, c);

        ExpertWeights g_eff{std::vector<double>(cfg.freq_in(), 0.0), std::vector<double>(len, 0.0),
                            std::vector<Complex>(cfg.freq_pad()), std::vector<Complex>(cfg.freq_pad())};
        std::vector<Complex> g_kernel_spec(conv.bins());
        std::vector<double> g_bias_tail(horizon, 0.0);
        double freq_sum = 0.0;
        double time_sum = 0.0;

        for (std::size_t b = 0; b < batch; ++b) {
            engine.forward(inputs[b].row(c), prepared, y_hat, pass.want_grad ? &trace : nullptr);
            const auto y = targets[b].row(c);

            std::vector<double> resid(horizon);
            double sq = 0.0;
            for (std::size_t i = 0; i < horizon; ++i) {
                resid[i] = y_hat[i] - y[i];
                sq += resid[i] * resid[i];
            }
            time_sum += sq / static_cast<double>(horizon);
            const auto d = out_plan.forward(resid);
            freq_sum += channel_freq_loss(d, w, norm);
            if (!pass.want_grad) continue;

            // d loss / d y_hat for this sample.
            std::vector<Complex> g_d(d.size());
            const double freq_coef = alpha * inv_b * inv_c / norm;
            for (std::size_t k = 0; k < d.size(); ++k) {
                const double mag = std::abs(d[k]);
                if (mag > 0.0) g_d[k] = (freq_coef * w[k] / mag) * d[k];
            }
            auto g_y = adjoint_forward(out_plan, std::move(g_d));
            const double time_coef = (1.0 - alpha) * inv_b * 2.0 * time_scale;
            for (std::size_t i = 0; i < horizon; ++i) g_y[i] += time_coef * resid[i];

            for (std::size_t i = 0; i < horizon; ++i) g_bias_tail[i] += g_y[i];
            std::fill(g_full.begin(), g_full.end(), 0.0);
            for (std::size_t i = 0; i < horizon; ++i) g_full[len - 1 + i] = g_y[i];

            // Convolution adjoint: correlate with the kernel and the padded input.
            const auto g_spec = conv.forward(g_full);
            std::vector<Complex> g_z_spec(g_spec.size());
            for (std::size_t k = 0; k < g_spec.size(); ++k) {
                g_kernel_spec[k] += g_spec[k] * std::conj(trace.padded_spectrum[k]);
                g_z_spec[k] = g_spec[k] * std::conj(prepared.kernel_spectrum[k]);
            }
            const auto g_z = conv.inverse(g_z_spec);

            std::vector<double> g_u(len);
            for (std::size_t i = 0; i < len; ++i) {
                if (cfg.use_sta) {
                    g_eff.sta_gain[i] += g_z[i] * trace.filtered[i];
                    g_u[i] = g_z[i] * prepared.sta_gain[i];
                } else {
                    g_u[i] = g_z[i];
                }
            }
            if (cfg.use_sfa) {
                const auto g_scaled = adjoint_inverse(engine.lookback_plan(), g_u);
                for (std::size_t k = 0; k < g_scaled.size(); ++k) {
                    g_eff.sfa_gain[k] += (g_scaled[k] * std::conj(trace.input_spectrum[k])).real();
                }
            }
        }
        loss.channel_freq[c] = freq_sum * inv_b;
        loss.channel_time[c] = time_sum * inv_b;
        loss.l_freq += loss.channel_freq[c] * inv_c;
        loss.l_time += loss.channel_time[c] * inv_c;
        if (!pass.want_grad) continue;

        // Kernel and bias live on the padded grid of length N.
        const std::size_t n = cfg.pad_length();
        auto g_kernel = conv.inverse(g_kernel_spec);
        g_kernel.resize(n);
        g_eff.ifm_weight = adjoint_inverse(engine.padded_plan(), g_kernel);
        std::vector<double> g_bias_full(n, 0.0);
        std::copy(g_bias_tail.begin(), g_bias_tail.end(), g_bias_full.end() - static_cast<std::ptrdiff_t>(horizon));
        g_eff.ifm_bias = adjoint_inverse(engine.padded_plan(), g_bias_full);

        check_finite("sfa", g_eff.sfa_gain);
        check_finite("sta", g_eff.sta_gain);
        check_finite("ifm weight", g_eff.ifm_weight);
        check_finite("ifm bias", g_eff.ifm_bias);

        // Distribute over experts; the mixing coefficient gradient is a real inner product.
        for (std::size_t m = 0; m < params.experts.size(); ++m) {
            const double coef = mix(m, c);
            const auto& e = params.experts[m];
            auto& ge = pass.grads.experts[m];
            double dot = 0.0;
            for (std::size_t i = 0; i < ge.sfa_gain.size(); ++i) {
                ge.sfa_gain[i] += coef * g_eff.sfa_gain[i];
                dot += g_eff.sfa_gain[i] * e.sfa_gain[i];
            }
            for (std::size_t i = 0; i < ge.sta_gain.size(); ++i) {
                ge.sta_gain[i] += coef * g_eff.sta_gain[i];
                dot += g_eff.sta_gain[i] * e.sta_gain[i];
            }
            for (std::size_t i = 0; i < ge.ifm_weight.size(); ++i) {
                ge.ifm_weight[i] += coef * g_eff.ifm_weight[i];
                ge.ifm_bias[i] += coef * g_eff.ifm_bias[i];
                dot += (g_eff.ifm_weight[i] * std::conj(e.ifm_weight[i])).real();
                dot += (g_eff.ifm_bias[i] * std::conj(e.ifm_bias[i])).real();
            }
            g_mix(m, c) = dot;
        }
    }

    loss.total = alpha * loss.l_freq + (1.0 - alpha) * loss.l_time;
    if (!std::isfinite(loss.total)) throw NumericError("loss: non-finite value");

    if (pass.want_grad && params.router) {
        // Softmax over experts per channel, scaled by 1/temperature.
        const double inv_tau = 1.0 / params.router->temperature;
        auto& g_logits = pass.grads.router_logits;
        for (std::size_t c = 0; c < channels; ++c) {
            double avg = 0.0;
            for (std::size_t m = 0; m < mix.rows; ++m) avg += mix(m, c) * g_mix(m, c);
            for (std::size_t m = 0; m < mix.rows; ++m) g_logits(m, c) = inv_tau * mix(m, c) * (g_mix(m, c) - avg);
        }
        check_finite("router", g_logits.data);
    }
}

// Visits every stored real coordinate in a fixed order: per expert sfa, sta,
// ifm weight (re, im), ifm bias (re, im); then router logits row-major.
template <class P, class G, class F>
void for_each_coordinate(P& params, G& grads, F&& f) {
    for (std::size_t m = 0; m < params.experts.size(); ++m) {
        auto& e = params.experts[m];
        auto& g = grads.experts[m];
        for (std::size_t i = 0; i < e.sfa_gain.size(); ++i) f(e.sfa_gain[i], g.sfa_gain[i]);
        for (std::size_t i = 0; i < e.sta_gain.size(); ++i) f(e.sta_gain[i], g.sta_gain[i]);
        for (auto [pp, gp] : {std::pair{&e.ifm_weight, &g.ifm_weight}, std::pair{&e.ifm_bias, &g.ifm_bias}}) {
            auto& pv = *pp;
            auto& gv = *gp;
            for (std::size_t i = 0; i < pv.size(); ++i) {
                double re = pv[i].real();
                double im = pv[i].imag();
                f(re, gv[i].real());
                f(im, gv[i].imag());
                pv[i] = {re, im};
            }
        }
    }
    if (params.router) {
        for (std::size_t i = 0; i < params.router->logits.data.size(); ++i) {
            f(params.router->logits.data[i], grads.router_logits.data[i]);
        }
    }
}

}  // namespace

void LossConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ParameterError("loss: alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
}

Gradients Gradients::zeros_like(const ModelParams& params) {
    Gradients g;
    for (const auto& e : params.experts) {
        g.experts.push_back({std::vector<double>(e.sfa_gain.size(), 0.0), std::vector<double>(e.sta_gain.size(), 0.0),
                             std::vector<Complex>(e.ifm_weight.size()), std::vector<Complex>(e.ifm_bias.size())});
    }
    if (params.router) g.router_logits = Matrix(params.router->logits.rows, params.router->logits.cols, 0.0);
    return g;
}

std::vector<double> resample_freq_weights(std::span<const double> sfa_gain, const ModelConfig& cfg) {
    if (sfa_gain.size() != cfg.freq_in()) {
        throw DimensionError("resample_freq_weights: expected " + std::to_string(cfg.freq_in()) + " gains, got " +
                             std::to_string(sfa_gain.size()));
    }
    std::vector<double> out(cfg.freq_out());
    const double ratio = static_cast<double>(cfg.lookback) / static_cast<double>(cfg.horizon);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto src = static_cast<std::size_t>(std::llround(static_cast<double>(k) * ratio));
        out[k] = std::abs(sfa_gain[std::min(src, sfa_gain.size() - 1)]);
    }
    return out;
}

double sfa_loss_freq(const Matrix& y, const Matrix& y_hat, const ModelParams& params, const Matrix& mix,
                     const ModelConfig& cfg) {
    require_shape("sfa_loss_freq target", y, cfg.channels, cfg.horizon);
    require_shape("sfa_loss_freq forecast", y_hat, cfg.channels, cfg.horizon);
    const RealFftPlan plan(cfg.horizon);
    double total = 0.0;
    for (std::size_t c = 0; c < cfg.channels; ++c) {
        const auto w = loss_weights(mix_weights(params, mix, c), cfg);
        const double norm = weight_norm(w, c);
        std::vector<double> resid(cfg.horizon);
        for (std::size_t i = 0; i < cfg.horizon; ++i) resid[i] = y(c, i) - y_hat(c, i);
        total += channel_freq_loss(plan.forward(resid), w, norm);
    }
    return total / static_cast<double>(cfg.channels);
}

double mse_time(const Matrix& y, const Matrix& y_hat) {
    require_shape("mse_time", y_hat, y.rows, y.cols);
    if (y.empty()) throw DimensionError("mse_time: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        const double d = y.data[i] - y_hat.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.data.size());
}

LossBreakdown total_loss(double l_freq, double l_time, double alpha) {
    LossConfig{alpha}.validate();
    LossBreakdown out;
    out.l_freq = l_freq;
    out.l_time = l_time;
    out.total = alpha * l_freq + (1.0 - alpha) * l_time;
    return out;
}

std::pair<LossBreakdown, Gradients> backward_batch(std::span<const Matrix> inputs, std::span<const Matrix> targets,
                                                   const ModelParams& params, const SpectralEngine& engine,
                                                   const LossConfig& loss) {
    Pass pass;
    pass.want_grad = true;
    run_batch(inputs, targets, params, engine, loss, pass);
    return {std::move(pass.loss), std::move(pass.grads)};
}

std::pair<LossBreakdown, Gradients> backward(const Matrix& x, const Matrix& y, const ModelParams& params,
                                             const ModelConfig& cfg, const LossConfig& loss) {
    const SpectralEngine engine(cfg);
    return backward_batch(std::span(&x, 1), std::span(&y, 1), params, engine, loss);
}

LossBreakdown batch_loss(std::span<const Matrix> inputs, std::span<const Matrix> targets, const ModelParams& params,
                         const SpectralEngine& engine, const LossConfig& loss) {
    Pass pass;
    run_batch(inputs, targets, params, engine, loss, pass);
    return std::move(pass.loss);
}

std::size_t stored_scalar_count(const ModelParams& params) {
    std::size_t n = 0;
    for (const auto& e : params.experts) {
        n += e.sfa_gain.size() + e.sta_gain.size() + 2 * (e.ifm_weight.size() + e.ifm_bias.size());
    }
    if (params.router) n += params.router->logits.data.size();
    return n;
}

void adam_step(ModelParams& params, const Gradients& grads, OptimizerState& state) {
    if (grads.experts.size() != params.experts.size() ||
        grads.router_logits.data.size() != (params.router ? params.router->logits.data.size() : 0)) {
        throw DimensionError("adam_step: gradients do not match parameters");
    }
    for (std::size_t m = 0; m < params.experts.size(); ++m) {
        const auto& e = params.experts[m];
        const auto& g = grads.experts[m];
        if (g.sfa_gain.size() != e.sfa_gain.size() || g.sta_gain.size() != e.sta_gain.size() ||
            g.ifm_weight.size() != e.ifm_weight.size() || g.ifm_bias.size() != e.ifm_bias.size()) {
            throw DimensionError("adam_step: gradient shape mismatch in expert " + std::to_string(m));
        }
    }
    if (!(state.lr > 0.0)) throw ParameterError("adam_step: learning rate must be positive");

    const std::size_t count = stored_scalar_count(params);
    if (state.first_moment.empty()) {
        state.first_moment.assign(count, 0.0);
        state.second_moment.assign(count, 0.0);
    }
    if (state.first_moment.size() != count || state.second_moment.size() != count) {
        throw DimensionError("adam_step: optimizer state does not match parameters");
    }

    // Check everything before touching any parameter.
    std::size_t idx = 0;
    for_each_coordinate(params, grads, [&](double, double g) {
        if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient at coordinate " + std::to_string(idx));
        ++idx;
    });

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    idx = 0;
    for_each_coordinate(params, grads, [&](double& p, double g) {
        double& m = state.first_moment[idx];
        double& v = state.second_moment[idx];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        p -= state.lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
        ++idx;
    });
}

void TauSchedule::validate() const {
    if (!(tau_start > 0.0 && tau_end > 0.0)) throw ParameterError("tau schedule: temperatures must be positive");
    if (anneal_epochs == 0) throw ParameterError("tau schedule: anneal_epochs must be positive");
}

double anneal_tau(const TauSchedule& schedule, std::size_t epoch) {
    schedule.validate();
    if (epoch >= schedule.anneal_epochs) return schedule.tau_end;
    const double frac = static_cast<double>(epoch) / static_cast<double>(schedule.anneal_epochs);
    return schedule.tau_start + (schedule.tau_end - schedule.tau_start) * frac;
}

}  // namespace dipe

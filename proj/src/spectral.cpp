#include "dipe/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "dipe/error.hpp"

namespace dipe {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSymmetryTolerance = 1e-12;

// Smallest 2^a 3^b 5^c >= n.
std::size_t next_smooth_length(std::size_t n) {
    std::size_t best = 1;
    while (best < n) best *= 2;
    for (std::size_t p5 = 1; p5 < 2 * n; p5 *= 5) {
        for (std::size_t p35 = p5; p35 < 2 * n; p35 *= 3) {
            std::size_t v = p35;
            while (v < n) v *= 2;
            if (v < best) best = v;
        }
    }
    return best;
}

// Factor n into radices 4, 2, 3, 5, 7. Returns false if another prime remains.
bool factorize(std::size_t n, std::vector<std::size_t>& factors) {
    factors.clear();
    std::size_t remaining = n;
    auto take = [&](std::size_t p) {
        while (remaining % p == 0) {
            remaining /= p;
            factors.push_back(p);
            factors.push_back(remaining);
        }
    };
    take(4);
    take(2);
    take(3);
    take(5);
    take(7);
    return remaining == 1;
}

}  // namespace

std::size_t fast_real_length(std::size_t n) {
    for (std::size_t len = std::max<std::size_t>(2, n + (n % 2));; len += 2) {
        std::size_t v = len;
        for (std::size_t p : {2u, 3u, 5u, 7u}) {
            while (v % p == 0) v /= p;
        }
        if (v == 1) return len;
    }
}

ComplexFftPlan::ComplexFftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw DimensionError("fft: length must be positive");
    if (factorize(n, factors_)) {
        twiddles_.resize(n);
        inverse_twiddles_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            twiddles_[k] = std::polar(1.0, -kTwoPi * static_cast<double>(k) / static_cast<double>(n));
            inverse_twiddles_[k] = std::conj(twiddles_[k]);
        }
        return;
    }

    factors_.clear();
    const std::size_t m = next_smooth_length(2 * n - 1);
    inner_ = std::make_unique<ComplexFftPlan>(m);

    // k^2 mod 2n keeps the chirp phase exact for large k.
    chirp_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t k2 = (k * k) % (2 * n);
        chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
    }
    std::vector<Complex> kernel(m, Complex{});
    kernel[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
        kernel[k] = std::conj(chirp_[k]);
        kernel[m - k] = std::conj(chirp_[k]);
    }
    kernel_spectrum_.resize(m);
    inner_->forward(kernel.data(), kernel_spectrum_.data());
    const double scale = 1.0 / static_cast<double>(m);
    for (auto& v : kernel_spectrum_) v *= scale;
}

ComplexFftPlan::~ComplexFftPlan() = default;
ComplexFftPlan::ComplexFftPlan(ComplexFftPlan&&) noexcept = default;
ComplexFftPlan& ComplexFftPlan::operator=(ComplexFftPlan&&) noexcept = default;

void ComplexFftPlan::forward(const Complex* in, Complex* out) const {
    if (n_ == 1) {
        out[0] = in[0];
    } else if (inner_) {
        bluestein(in, out);
    } else {
        mixed_radix<false>(out, in, 1, factors_.data());
    }
}

void ComplexFftPlan::backward(const Complex* in, Complex* out) const {
    if (n_ == 1) {
        out[0] = in[0];
    } else if (inner_) {
        std::vector<Complex> conj_in(n_);
        for (std::size_t k = 0; k < n_; ++k) conj_in[k] = std::conj(in[k]);
        bluestein(conj_in.data(), out);
        for (std::size_t k = 0; k < n_; ++k) out[k] = std::conj(out[k]);
    } else {
        mixed_radix<true>(out, in, 1, factors_.data());
    }
}

void ComplexFftPlan::bluestein(const Complex* in, Complex* out) const {
    const std::size_t m = inner_->size();
    std::vector<Complex> a(m, Complex{});
    for (std::size_t k = 0; k < n_; ++k) a[k] = in[k] * chirp_[k];
    std::vector<Complex> spec(m);
    inner_->forward(a.data(), spec.data());
    for (std::size_t k = 0; k < m; ++k) spec[k] *= kernel_spectrum_[k];
    inner_->backward(spec.data(), a.data());
    for (std::size_t k = 0; k < n_; ++k) out[k] = a[k] * chirp_[k];
}

// Decimation in time: out[q*m + k] for q < p holds the length-m sub-transforms
// of the p interleaved subsequences, combined in place by a radix-p butterfly.
template <bool Inverse>
void ComplexFftPlan::mixed_radix(Complex* out, const Complex* in, std::size_t stride,
                                 const std::size_t* factors) const {
    const std::size_t p = factors[0];
    const std::size_t m = factors[1];

    if (m == 1) {
        for (std::size_t q = 0; q < p; ++q) out[q] = in[q * stride];
    } else {
        for (std::size_t q = 0; q < p; ++q) {
            mixed_radix<Inverse>(out + q * m, in + q * stride, stride * p, factors + 2);
        }
    }

    const Complex* tw = Inverse ? inverse_twiddles_.data() : twiddles_.data();
    switch (p) {
        case 2:
            for (std::size_t k = 0; k < m; ++k) {
                const Complex t = out[k + m] * tw[k * stride];
                out[k + m] = out[k] - t;
                out[k] += t;
            }
            break;
        case 4:
            for (std::size_t k = 0; k < m; ++k) {
                const Complex s0 = out[k + m] * tw[k * stride];
                const Complex s1 = out[k + 2 * m] * tw[2 * k * stride];
                const Complex s2 = out[k + 3 * m] * tw[3 * k * stride];
                const Complex s5 = out[k] - s1;
                const Complex a0 = out[k] + s1;
                const Complex s3 = s0 + s2;
                const Complex s4 = s0 - s2;
                out[k + 2 * m] = a0 - s3;
                out[k] = a0 + s3;
                if constexpr (Inverse) {
                    out[k + m] = {s5.real() - s4.imag(), s5.imag() + s4.real()};
                    out[k + 3 * m] = {s5.real() + s4.imag(), s5.imag() - s4.real()};
                } else {
                    out[k + m] = {s5.real() + s4.imag(), s5.imag() - s4.real()};
                    out[k + 3 * m] = {s5.real() - s4.imag(), s5.imag() + s4.real()};
                }
            }
            break;
        case 3: {
            const double sin60 = tw[stride * m].imag();
            for (std::size_t k = 0; k < m; ++k) {
                const Complex s1 = out[k + m] * tw[k * stride];
                const Complex s2 = out[k + 2 * m] * tw[2 * k * stride];
                const Complex s3 = s1 + s2;
                const Complex s0 = (s1 - s2) * sin60;
                const Complex mid = out[k] - 0.5 * s3;
                out[k] += s3;
                out[k + m] = {mid.real() - s0.imag(), mid.imag() + s0.real()};
                out[k + 2 * m] = {mid.real() + s0.imag(), mid.imag() - s0.real()};
            }
            break;
        }
        default: {
            // Generic radix (5 and 7).
            std::array<Complex, 7> scratch{};
            for (std::size_t k = 0; k < m; ++k) {
                for (std::size_t q = 0; q < p; ++q) scratch[q] = out[k + q * m];
                for (std::size_t q = 0; q < p; ++q) {
                    const std::size_t idx = k + q * m;
                    Complex acc = scratch[0];
                    std::size_t tw_idx = 0;
                    for (std::size_t r = 1; r < p; ++r) {
                        tw_idx += stride * idx;
                        if (tw_idx >= n_) tw_idx -= n_;
                        acc += scratch[r] * tw[tw_idx];
                    }
                    out[idx] = acc;
                }
            }
            break;
        }
    }
}

RealFftPlan::RealFftPlan(std::size_t n)
    : n_(n), plan_(n == 0 ? 1 : ((n % 2 == 0) ? n / 2 : n)) {
    if (n == 0) throw DimensionError("rfft: length must be positive");
    if (n % 2 == 0) {
        const std::size_t h = n / 2;
        twiddles_.resize(h + 1);
        for (std::size_t k = 0; k <= h; ++k) {
            twiddles_[k] = std::polar(1.0, -kTwoPi * static_cast<double>(k) / static_cast<double>(n));
        }
    }
}

void RealFftPlan::forward(std::span<const double> x, std::span<Complex> out) const {
    if (x.size() != n_ || out.size() != bins()) {
        throw DimensionError("rfft: expected " + std::to_string(n_) + " samples and " +
                             std::to_string(bins()) + " bins");
    }
    if (n_ % 2 == 1) {
        std::vector<Complex> buf(n_), spec(n_);
        for (std::size_t j = 0; j < n_; ++j) buf[j] = x[j];
        plan_.forward(buf.data(), spec.data());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = spec[k];
        return;
    }

    // Pack even/odd samples into one complex signal of half the length.
    const std::size_t h = n_ / 2;
    std::vector<Complex> z(h), spec(h);
    for (std::size_t j = 0; j < h; ++j) z[j] = {x[2 * j], x[2 * j + 1]};
    plan_.forward(z.data(), spec.data());
    for (std::size_t k = 0; k <= h; ++k) {
        const Complex zk = spec[k % h];
        const Complex zc = std::conj(spec[(h - k) % h]);
        const Complex even = 0.5 * (zk + zc);
        const Complex diff = zk - zc;
        const Complex odd{0.5 * diff.imag(), -0.5 * diff.real()};
        out[k] = even + twiddles_[k] * odd;
    }
}

void RealFftPlan::inverse(std::span<const Complex> bins_in, std::span<double> out) const {
    if (bins_in.size() != bins() || out.size() != n_) {
        throw DimensionError("irfft: expected " + std::to_string(bins()) + " bins and " +
                             std::to_string(n_) + " samples");
    }
    const double inv_n = 1.0 / static_cast<double>(n_);
    if (n_ % 2 == 1) {
        std::vector<Complex> full(n_), sig(n_);
        full[0] = bins_in[0].real();
        for (std::size_t k = 1; k < bins_in.size(); ++k) {
            full[k] = bins_in[k];
            full[n_ - k] = std::conj(bins_in[k]);
        }
        plan_.backward(full.data(), sig.data());
        for (std::size_t j = 0; j < n_; ++j) out[j] = sig[j].real() * inv_n;
        return;
    }

    const std::size_t h = n_ / 2;
    std::vector<Complex> z(h), sig(h);
    auto bin = [&](std::size_t k) {
        return (k == 0 || k == h) ? Complex{bins_in[k].real(), 0.0} : bins_in[k];
    };
    for (std::size_t k = 0; k < h; ++k) {
        const Complex xk = bin(k);
        const Complex xc = std::conj(bin(h - k));
        const Complex even = 0.5 * (xk + xc);
        const Complex odd = 0.5 * (xk - xc) * std::conj(twiddles_[k]);
        z[k] = even + Complex{-odd.imag(), odd.real()};
    }
    plan_.backward(z.data(), sig.data());
    const double inv_h = 1.0 / static_cast<double>(h);
    for (std::size_t j = 0; j < h; ++j) {
        out[2 * j] = sig[j].real() * inv_h;
        out[2 * j + 1] = sig[j].imag() * inv_h;
    }
}

std::vector<Complex> RealFftPlan::forward(std::span<const double> x) const {
    std::vector<Complex> out(bins());
    forward(x, out);
    return out;
}

std::vector<double> RealFftPlan::inverse(std::span<const Complex> bins_in) const {
    std::vector<double> out(n_);
    inverse(bins_in, out);
    return out;
}

HalfSpectrum rfft(std::span<const double> x) {
    if (x.empty()) throw DimensionError("rfft: empty signal");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) throw DataError("rfft: non-finite sample at index " + std::to_string(i));
    }
    return {RealFftPlan(x.size()).forward(x), x.size()};
}

std::vector<double> irfft(std::span<const Complex> bins, std::size_t n) {
    if (n == 0) throw DimensionError("irfft: length must be positive");
    if (bins.size() != half_length(n)) {
        throw DimensionError("irfft: " + std::to_string(bins.size()) + " bins cannot describe a length-" +
                             std::to_string(n) + " signal (need " + std::to_string(half_length(n)) + ")");
    }
    if (std::abs(bins[0].imag()) > kSymmetryTolerance) {
        throw SymmetryError("irfft: DC bin has imaginary part " + std::to_string(bins[0].imag()));
    }
    if (n % 2 == 0 && std::abs(bins[n / 2].imag()) > kSymmetryTolerance) {
        throw SymmetryError("irfft: Nyquist bin has imaginary part " + std::to_string(bins[n / 2].imag()));
    }
    return RealFftPlan(n).inverse(bins);
}

std::vector<double> irfft(const HalfSpectrum& spectrum, std::size_t n) {
    return irfft(std::span<const Complex>(spectrum.bins), n);
}

std::vector<double> zero_pad(std::span<const double> x, std::size_t n) {
    if (n < x.size()) {
        throw DimensionError("zero_pad: target length " + std::to_string(n) + " is shorter than input length " +
                             std::to_string(x.size()));
    }
    std::vector<double> out(n, 0.0);
    std::copy(x.begin(), x.end(), out.begin());
    return out;
}

std::vector<double> convolve_full(std::span<const double> x, std::span<const double> h) {
    if (x.empty() || h.empty()) throw DimensionError("convolve_full: empty input");
    std::vector<double> y(x.size() + h.size() - 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
    }
    return y;
}

}  // namespace dipe

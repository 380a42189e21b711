#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace dipe {

using Complex = std::complex<double>;

/// One-sided spectrum of a real signal of length `origin_length`.
/// Holds floor(N/2)+1 bins; the remaining bins follow by conjugate symmetry.
struct HalfSpectrum {
    std::vector<Complex> bins;
    std::size_t origin_length = 0;
};

/// Number of one-sided bins for a real signal of length n.
constexpr std::size_t half_length(std::size_t n) noexcept { return n / 2 + 1; }

/// Smallest even length >= n whose prime factors are all in {2, 3, 5, 7}.
std::size_t fast_real_length(std::size_t n);

/// Unnormalized complex DFT of a fixed length. Lengths whose prime factors
/// are all in {2, 3, 5, 7} use a recursive mixed-radix decomposition; any
/// other length goes through Bluestein's chirp-z algorithm on a smooth
/// length >= 2n - 1. Immutable after construction, so a plan may be shared
/// across threads.
class ComplexFftPlan {
public:
    explicit ComplexFftPlan(std::size_t n);
    ~ComplexFftPlan();
    ComplexFftPlan(ComplexFftPlan&&) noexcept;
    ComplexFftPlan& operator=(ComplexFftPlan&&) noexcept;

    std::size_t size() const noexcept { return n_; }

    /// out[k] = sum_j in[j] exp(-2 pi i jk/n). `in` and `out` must not alias.
    void forward(const Complex* in, Complex* out) const;
    /// out[k] = sum_j in[j] exp(+2 pi i jk/n), no 1/n factor.
    void backward(const Complex* in, Complex* out) const;

private:
    template <bool Inverse>
    void mixed_radix(Complex* out, const Complex* in, std::size_t stride,
                     const std::size_t* factors) const;
    void bluestein(const Complex* in, Complex* out) const;

    std::size_t n_ = 0;
    std::vector<Complex> twiddles_;
    std::vector<Complex> inverse_twiddles_;
    std::vector<std::size_t> factors_;  // (radix, remaining length) pairs

    // Bluestein state; empty when the mixed-radix path is used.
    std::vector<Complex> chirp_;
    std::vector<Complex> kernel_spectrum_;
    std::unique_ptr<ComplexFftPlan> inner_;
};

/// Real-input transform pair of a fixed length, with the convention
/// forward unnormalized, inverse scaled by 1/n.
class RealFftPlan {
public:
    explicit RealFftPlan(std::size_t n);

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return half_length(n_); }

    /// Writes the floor(n/2)+1 one-sided bins of `x` (length n) into `out`.
    void forward(std::span<const double> x, std::span<Complex> out) const;

    /// Inverse of forward(). The imaginary parts of the DC bin and (for even
    /// n) the Nyquist bin are ignored, i.e. the spectrum is projected onto the
    /// set of spectra of real signals before inversion.
    void inverse(std::span<const Complex> bins, std::span<double> out) const;

    std::vector<Complex> forward(std::span<const double> x) const;
    std::vector<double> inverse(std::span<const Complex> bins) const;

private:
    std::size_t n_;
    std::vector<Complex> twiddles_;  // exp(-2 pi i k/n), k < n/2, even n only
    ComplexFftPlan plan_;            // length n/2 for even n, n otherwise
};

/// Unnormalized forward real DFT. Throws DimensionError on empty input and
/// DataError on non-finite samples.
HalfSpectrum rfft(std::span<const double> x);

/// Inverse real DFT with the 1/N factor. Throws DimensionError when the bin
/// count is not floor(n/2)+1 and SymmetryError when the DC or Nyquist bin has
/// an imaginary part larger than 1e-12.
std::vector<double> irfft(const HalfSpectrum& spectrum, std::size_t n);
std::vector<double> irfft(std::span<const Complex> bins, std::size_t n);

/// x followed by zeros up to length n. Throws DimensionError if n < x.size().
std::vector<double> zero_pad(std::span<const double> x, std::size_t n);

/// Full linear convolution by direct summation, length x.size()+h.size()-1.
std::vector<double> convolve_full(std::span<const double> x, std::span<const double> h);

}  // namespace dipe

#ifndef WINDSCALE_SPECTRAL_HPP
#define WINDSCALE_SPECTRAL_HPP

#include <complex>
#include <string>
#include <vector>

#include "windscale/tensor.hpp"

namespace windscale {

/// Isotropically binned spatial power spectrum. Power is normalized so that
/// the sum over all non-DC bins equals the field variance (Parseval).
struct SpatialSpectrum {
    std::vector<std::size_t> k;   // integer |k| bins, starting at 1
    std::vector<double> power;    // per-bin power
    double variance = 0.0;        // population variance of the field
};

struct TemporalSpectrum {
    std::vector<double> freq;   // cycles per step, strictly increasing
    std::vector<double> power;
    std::size_t loc_i = 0, loc_j = 0;
    std::size_t segment_len = 0;
    double overlap = 0.5;
};

enum class FilterKind { SpectralCutoff, LiftingWavelet };

struct FilterSpec {
    FilterKind kind = FilterKind::SpectralCutoff;
    double k_c = 1.0;  // cutoff wavenumber (spectral kind)
    int levels = 1;    // decomposition levels J (wavelet kind)

    void validate() const {
        if (kind == FilterKind::SpectralCutoff && k_c < 1)
            throw ArgError("FilterSpec: k_c must be >= 1");
        if (kind == FilterKind::LiftingWavelet && levels < 1)
            throw ArgError("FilterSpec: levels must be >= 1");
    }

    /// Wavenumber below which content survives (used for band bookkeeping).
    double equivalent_cutoff(std::size_t H) const {
        if (kind == FilterKind::SpectralCutoff) return k_c;
        return double(H) / double(2 << levels);  // H / 2^(J+1)
    }
};

using ComplexGrid = std::vector<std::complex<double>>;  // row-major [H,W]

/// Unitary 2-D DFT and its inverse.
ComplexGrid dft2(const Tensor64& field);
Tensor64 idft2(const ComplexGrid& spec, std::size_t H, std::size_t W);

SpatialSpectrum radial_spectrum(const Tensor64& field);

/// Averaged windowed periodogram (Hann window, 50% overlap default).
TemporalSpectrum temporal_spectrum(const std::vector<double>& series, std::size_t segment_len,
                                   double overlap = 0.5);

/// Band-limiting lowpass. Spectral-cutoff kind zeroes modes with |k| > k_c
/// exactly; wavelet kind runs a J-level linear-interpolating lifting
/// decomposition, zeroes the detail coefficients and reconstructs.
Tensor64 lowpass(const Tensor64& field, const FilterSpec& spec);

double band_energy(const SpatialSpectrum& s, std::size_t k_lo, std::size_t k_hi);

void write_spectrum_csv(const SpatialSpectrum& s, const std::string& path);
void write_spectrum_csv(const TemporalSpectrum& s, const std::string& path);

}  // namespace windscale

#endif

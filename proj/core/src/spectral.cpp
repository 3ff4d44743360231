#include "windscale/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

namespace windscale {

namespace {

// FFTW's planner is not thread-safe; execution of independent plans is.
std::mutex fftw_mutex;

void fft2_raw(const ComplexGrid& in, ComplexGrid& out, std::size_t H, std::size_t W, int sign) {
    out.resize(H * W);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex);
        plan = fftw_plan_dft_2d(
            static_cast<int>(H), static_cast<int>(W),
            reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
            reinterpret_cast<fftw_complex*>(out.data()), sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_mutex);
        fftw_destroy_plan(plan);
    }
}

inline double wavenumber(std::size_t idx, std::size_t n) {
    return idx <= n / 2 ? double(idx) : double(idx) - double(n);
}

}  // namespace

ComplexGrid dft2(const Tensor64& field) {
    if (field.rank() != 2 || field.shape[0] < 2 || field.shape[1] < 2)
        throw ShapeError("dft2: expected [H,W] with H,W >= 2");
    const std::size_t H = field.shape[0], W = field.shape[1];
    ComplexGrid in(H * W);
    for (std::size_t i = 0; i < H * W; ++i) in[i] = field.data[i];
    ComplexGrid out;
    fft2_raw(in, out, H, W, FFTW_FORWARD);
    const double norm = 1.0 / std::sqrt(double(H * W));
    for (auto& v : out) v *= norm;
    return out;
}

Tensor64 idft2(const ComplexGrid& spec, std::size_t H, std::size_t W) {
    if (spec.size() != H * W) throw ShapeError("idft2: spectrum size mismatch");
    ComplexGrid out;
    fft2_raw(spec, out, H, W, FFTW_BACKWARD);
    const double norm = 1.0 / std::sqrt(double(H * W));
    Tensor64 field({H, W});
    for (std::size_t i = 0; i < H * W; ++i) field.data[i] = out[i].real() * norm;
    return field;
}

SpatialSpectrum radial_spectrum(const Tensor64& field) {
    const std::size_t H = field.shape[0], W = field.shape[1];
    const ComplexGrid F = dft2(field);
    const std::size_t kmax =
        static_cast<std::size_t>(std::round(std::hypot(double(H / 2), double(W / 2))));
    SpatialSpectrum s;
    s.k.resize(kmax);
    s.power.assign(kmax, 0.0);
    for (std::size_t n = 0; n < kmax; ++n) s.k[n] = n + 1;
    const double inv_n = 1.0 / double(H * W);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            if (i == 0 && j == 0) continue;  // DC excluded from variance accounting
            const double kr = std::hypot(wavenumber(i, H), wavenumber(j, W));
            const std::size_t bin = static_cast<std::size_t>(std::round(kr));
            if (bin < 1 || bin > kmax) continue;
            s.power[bin - 1] += std::norm(F[i * W + j]) * inv_n;
        }
    double mean = 0;
    for (double v : field.data) mean += v;
    mean /= double(H * W);
    double var = 0;
    for (double v : field.data) var += (v - mean) * (v - mean);
    s.variance = var / double(H * W);
    return s;
}

TemporalSpectrum temporal_spectrum(const std::vector<double>& series, std::size_t segment_len,
                                   double overlap) {
    if (segment_len < 8) throw ArgError("temporal_spectrum: segment_len must be >= 8");
    if (series.size() < segment_len)
        throw ArgError("temporal_spectrum: segment_len exceeds series length");
    if (overlap < 0 || overlap >= 1) throw ArgError("temporal_spectrum: overlap must be in [0,1)");
    const std::size_t L = segment_len;
    const std::size_t hop = std::max<std::size_t>(1, std::size_t(double(L) * (1.0 - overlap)));
    std::vector<double> window(L);
    double win_power = 0;
    for (std::size_t i = 0; i < L; ++i) {
        window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * double(i) / double(L)));
        win_power += window[i] * window[i];
    }
    win_power /= double(L);
    const std::size_t nbins = L / 2 + 1;
    TemporalSpectrum out;
    out.segment_len = L;
    out.overlap = overlap;
    out.freq.resize(nbins);
    out.power.assign(nbins, 0.0);
    for (std::size_t k = 0; k < nbins; ++k) out.freq[k] = double(k) / double(L);
    std::size_t nseg = 0;
    for (std::size_t start = 0; start + L <= series.size(); start += hop, ++nseg) {
        for (std::size_t k = 0; k < nbins; ++k) {
            double re = 0, im = 0;
            for (std::size_t i = 0; i < L; ++i) {
                const double ph = -2.0 * M_PI * double(k) * double(i) / double(L);
                const double v = series[start + i] * window[i];
                re += v * std::cos(ph);
                im += v * std::sin(ph);
            }
            // one-sided periodogram, window-gain corrected
            double p = (re * re + im * im) / (double(L) * double(L) * win_power);
            if (k != 0 && !(L % 2 == 0 && k == nbins - 1)) p *= 2.0;
            out.power[k] += p;
        }
    }
    for (auto& p : out.power) p /= double(nseg);
    return out;
}

namespace {

// One linear-interpolating lifting level along a length-n periodic signal
// laid out with stride. Coarse coefficients land in the first half,
// details in the second half.
void lift_forward(double* x, std::size_t n, std::size_t stride) {
    const std::size_t h = n / 2;
    std::vector<double> s(h), d(h);
    for (std::size_t i = 0; i < h; ++i) {
        s[i] = x[2 * i * stride];
        d[i] = x[(2 * i + 1) * stride];
    }
    for (std::size_t i = 0; i < h; ++i) d[i] -= 0.5 * (s[i] + s[(i + 1) % h]);
    for (std::size_t i = 0; i < h; ++i) s[i] += 0.25 * (d[(i + h - 1) % h] + d[i]);
    for (std::size_t i = 0; i < h; ++i) {
        x[i * stride] = s[i];
        x[(i + h) * stride] = d[i];
    }
}

void lift_inverse(double* x, std::size_t n, std::size_t stride) {
    const std::size_t h = n / 2;
    std::vector<double> s(h), d(h);
    for (std::size_t i = 0; i < h; ++i) {
        s[i] = x[i * stride];
        d[i] = x[(i + h) * stride];
    }
    for (std::size_t i = 0; i < h; ++i) s[i] -= 0.25 * (d[(i + h - 1) % h] + d[i]);
    for (std::size_t i = 0; i < h; ++i) d[i] += 0.5 * (s[i] + s[(i + 1) % h]);
    for (std::size_t i = 0; i < h; ++i) {
        x[2 * i * stride] = s[i];
        x[(2 * i + 1) * stride] = d[i];
    }
}

}  // namespace

Tensor64 lowpass(const Tensor64& field, const FilterSpec& spec) {
    spec.validate();
    if (field.rank() != 2) throw ShapeError("lowpass: expected [H,W]");
    const std::size_t H = field.shape[0], W = field.shape[1];
    if (spec.kind == FilterKind::SpectralCutoff) {
        ComplexGrid F = dft2(field);
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                if (std::hypot(wavenumber(i, H), wavenumber(j, W)) > spec.k_c) F[i * W + j] = 0.0;
        return idft2(F, H, W);
    }
    // lifting wavelet: separable 2-D decomposition, detail subbands zeroed
    const int J = spec.levels;
    if ((H >> J) < 2 || (W >> J) < 2 || H % (1u << J) || W % (1u << J))
        throw ArgError("lowpass: grid too small or not divisible for " + std::to_string(J) +
                       " wavelet levels");
    Tensor64 out = field;
    std::size_t h = H, w = W;
    for (int l = 0; l < J; ++l) {
        for (std::size_t i = 0; i < h; ++i) lift_forward(&out.data[i * W], w, 1);
        for (std::size_t j = 0; j < w; ++j) lift_forward(&out.data[j], h, W);
        h /= 2;
        w /= 2;
    }
    // zero everything outside the coarsest approximation block
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            if (i >= h || j >= w) out.data[i * W + j] = 0.0;
    for (int l = J - 1; l >= 0; --l) {
        h *= 2;
        w *= 2;
        for (std::size_t j = 0; j < w; ++j) lift_inverse(&out.data[j], h, W);
        for (std::size_t i = 0; i < h; ++i) lift_inverse(&out.data[i * W], w, 1);
    }
    return out;
}

double band_energy(const SpatialSpectrum& s, std::size_t k_lo, std::size_t k_hi) {
    if (k_lo > k_hi) return 0.0;  // empty range
    double e = 0.0;
    for (std::size_t n = 0; n < s.k.size(); ++n)
        if (s.k[n] >= k_lo && s.k[n] <= k_hi) e += s.power[n];
    return e;
}

namespace {

void write_two_col(const std::string& path, const char* header, const std::vector<double>& a,
                   const std::vector<double>& b) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os << header << "\n";
    char buf[64];
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", a[i], b[i]);
        os << buf;
    }
}

}  // namespace

void write_spectrum_csv(const SpatialSpectrum& s, const std::string& path) {
    std::vector<double> bins(s.k.begin(), s.k.end());
    write_two_col(path, "bin,power", bins, s.power);
}

void write_spectrum_csv(const TemporalSpectrum& s, const std::string& path) {
    write_two_col(path, "freq,power", s.freq, s.power);
}

}  // namespace windscale

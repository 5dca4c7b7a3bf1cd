#pragma once

// Frequency-domain respiratory rate estimation: Butterworth bandpass,
// zero-padded periodogram, in-band peak ranking with sub-bin refinement,
// and the peak-ratio confidence measure.
//
// The bandpass is designed from the analog Butterworth prototype via the
// lowpass-to-bandpass transform and the bilinear transform with frequency
// prewarping, realized as a cascade of biquad sections. "order" is the
// prototype order, so the realized filter has 2*order poles.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "psmrr/psm_data.hpp"

namespace psmrr {

struct Biquad {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;  // numerator
    double a1 = 0.0, a2 = 0.0;            // denominator, a0 normalized to 1
};

struct BandpassFilter {
    double low_cut = 0.0;   // Hz
    double high_cut = 0.0;  // Hz
    int order = 0;          // prototype order
    double sample_rate = 0.0;
    std::vector<Biquad> sections;
};

// Magnitude of the realized transfer function at f_hz (unit-circle evaluation).
inline double filter_gain(const BandpassFilter& f, double f_hz) {
    const std::complex<double> z =
        std::polar(1.0, 2.0 * std::numbers::pi * f_hz / f.sample_rate);
    const std::complex<double> zi = 1.0 / z;
    std::complex<double> h(1.0, 0.0);
    for (const auto& s : f.sections)
        h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
    return std::abs(h);
}

inline BandpassFilter design_bandpass(double low, double high, int order, double sample_rate) {
    if (!(low > 0.0) || !(high > low) || !(high < sample_rate / 2.0))
        throw std::invalid_argument("design_bandpass: need 0 < low < high < sample_rate/2");
    if (order < 1) throw std::invalid_argument("design_bandpass: order must be >= 1");

    constexpr double pi = std::numbers::pi;
    const double fs = sample_rate;
    const double w1 = 2.0 * fs * std::tan(pi * low / fs);  // prewarped rad/s
    const double w2 = 2.0 * fs * std::tan(pi * high / fs);
    const double bw = w2 - w1;
    const double w0 = std::sqrt(w1 * w2);

    // Prototype poles on the unit circle, left half-plane; each maps to a
    // bandpass pole pair under s -> (s^2 + w0^2) / (bw * s).
    std::vector<std::complex<double>> analog_poles;
    analog_poles.reserve(static_cast<std::size_t>(2 * order));
    for (int k = 0; k < order; ++k) {
        const double phi = pi * (2.0 * k + order + 1.0) / (2.0 * order);
        const std::complex<double> p(std::cos(phi), std::sin(phi));
        const std::complex<double> q = 0.5 * bw * p;
        const std::complex<double> r = std::sqrt(q * q - w0 * w0);
        analog_poles.push_back(q + r);
        analog_poles.push_back(q - r);
    }

    // Bilinear transform s = c (z-1)/(z+1); the n analog zeros at s=0 map to
    // z=+1 and the n excess poles contribute zeros at z=-1.
    const double c = 2.0 * fs;
    std::vector<std::complex<double>> digital_poles;
    digital_poles.reserve(analog_poles.size());
    std::complex<double> denom(1.0, 0.0);
    for (const auto& p : analog_poles) {
        digital_poles.push_back((c + p) / (c - p));
        denom *= (c - p);
    }
    const double k_digital = (std::pow(bw * c, order) / denom).real();
    if (!(k_digital > 0.0)) throw std::logic_error("design_bandpass: non-positive realized gain");

    BandpassFilter filt;
    filt.low_cut = low;
    filt.high_cut = high;
    filt.order = order;
    filt.sample_rate = sample_rate;

    // Pair conjugate poles into biquads; real poles (degenerate narrow-band
    // cases) are paired with each other. Every section gets one zero at z=+1
    // and one at z=-1, with the overall gain spread evenly.
    constexpr double imag_tol = 1e-12;
    const double g = std::pow(k_digital, 1.0 / order);
    std::vector<double> real_poles;
    for (const auto& p : digital_poles) {
        if (p.imag() > imag_tol) {
            Biquad s;
            s.b0 = g;
            s.b1 = 0.0;
            s.b2 = -g;
            s.a1 = -2.0 * p.real();
            s.a2 = std::norm(p);
            filt.sections.push_back(s);
        } else if (p.imag() >= -imag_tol) {
            real_poles.push_back(p.real());
        }
    }
    for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
        Biquad s;
        s.b0 = g;
        s.b1 = 0.0;
        s.b2 = -g;
        s.a1 = -(real_poles[i] + real_poles[i + 1]);
        s.a2 = real_poles[i] * real_poles[i + 1];
        filt.sections.push_back(s);
    }
    if (filt.sections.size() != static_cast<std::size_t>(order))
        throw std::logic_error("design_bandpass: pole pairing failed");

    // Corner sanity: both band edges must sit at 1/sqrt(2) of the peak
    // passband gain (within 2%).
    const double peak = filter_gain(filt, std::sqrt(low * high));
    for (double corner : {low, high}) {
        const double rel = filter_gain(filt, corner) / peak;
        if (std::abs(rel - std::numbers::sqrt2 / 2.0) > 0.02)
            throw std::logic_error("design_bandpass: corner gain outside Butterworth tolerance");
    }
    return filt;
}

// Single forward pass, zero initial state (direct form II transposed).
inline SignalTrace apply_filter(const SignalTrace& t, const BandpassFilter& f) {
    if (t.frame_rate != f.sample_rate)
        throw std::invalid_argument("apply_filter: trace and filter sample rates differ");
    SignalTrace out = t;
    for (const auto& s : f.sections) {
        double s1 = 0.0, s2 = 0.0;
        for (double& x : out.samples) {
            const double y = s.b0 * x + s1;
            s1 = s.b1 * x - s.a1 * y + s2;
            s2 = s.b2 * x - s.a2 * y;
            x = y;
        }
    }
    out.stages.push_back(Stage::bandpassed);
    return out;
}

struct Spectrum {
    std::vector<double> freqs;  // Hz, 0 .. sample_rate/2
    std::vector<double> power;  // |DFT|^2 / N
    std::size_t n_fft = 0;

    double bin_width() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

namespace detail {

inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j |= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace detail

// Power spectrum of the zero-padded trace. n_fft is the smallest power of two
// >= pad_factor * N; power is normalized by the unpadded length N.
inline Spectrum periodogram(const SignalTrace& t, int pad_factor = 4) {
    if (t.samples.empty()) throw std::invalid_argument("periodogram: empty trace");
    if (pad_factor < 1) throw std::invalid_argument("periodogram: pad_factor must be >= 1");

    const std::size_t n = t.samples.size();
    const std::size_t n_fft = detail::next_pow2(n * static_cast<std::size_t>(pad_factor));
    std::vector<std::complex<double>> buf(n_fft, {0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) buf[i] = t.samples[i];
    detail::fft_radix2(buf);

    Spectrum s;
    s.n_fft = n_fft;
    const std::size_t half = n_fft / 2;
    s.freqs.resize(half + 1);
    s.power.resize(half + 1);
    const double df = t.frame_rate / static_cast<double>(n_fft);
    for (std::size_t k = 0; k <= half; ++k) {
        s.freqs[k] = df * static_cast<double>(k);
        s.power[k] = std::norm(buf[k]) / static_cast<double>(n);
    }
    return s;
}

struct SpectralPeak {
    double freq_hz = 0.0;
    double power = 0.0;
};

using PeakSet = std::vector<SpectralPeak>;

// In-band local maxima, refined by quadratic interpolation through the
// log-power of the peak bin and its neighbors, sorted by descending power.
// Peaks closer than 0.05 Hz to a stronger peak are suppressed.
inline PeakSet find_peaks(const Spectrum& s, double band_low, double band_high) {
    if (band_low >= band_high || band_low < s.freqs.front() || band_high > s.freqs.back())
        throw std::invalid_argument("find_peaks: band outside spectrum range");
    constexpr double kMinSeparationHz = 0.05;

    PeakSet candidates;
    for (std::size_t k = 1; k + 1 < s.power.size(); ++k) {
        if (s.freqs[k] < band_low || s.freqs[k] > band_high) continue;
        const double left = s.power[k - 1], center = s.power[k], right = s.power[k + 1];
        if (!(center > left && center > right)) continue;

        SpectralPeak p{s.freqs[k], center};
        if (left > 0.0 && right > 0.0 && center > 0.0) {
            const double l = std::log(left), c = std::log(center), r = std::log(right);
            const double denom = l - 2.0 * c + r;
            if (denom < 0.0) {
                const double delta = 0.5 * (l - r) / denom;
                p.freq_hz = (static_cast<double>(k) + delta) * s.bin_width();
                p.power = std::exp(c - 0.25 * (l - r) * delta);
            }
        }
        candidates.push_back(p);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const SpectralPeak& a, const SpectralPeak& b) { return a.power > b.power; });

    PeakSet kept;
    for (const auto& p : candidates) {
        bool shadowed = false;
        for (const auto& q : kept)
            if (std::abs(p.freq_hz - q.freq_hz) <= kMinSeparationHz) {
                shadowed = true;
                break;
            }
        if (!shadowed) kept.push_back(p);
    }
    return kept;
}

struct FdEstimate {
    double rr_bpm = 0.0;
    double f_a = 0.0;  // fundamental peak location, Hz
    double p_a = 0.0;
    double f_b = 0.0;  // second-ranked peak; 0 when absent
    double p_b = 0.0;
    double confidence = std::numeric_limits<double>::infinity();  // p_a / p_b

    bool has_second_peak() const { return p_b > 0.0; }
};

struct FdBand {
    double low = 0.3;
    double high = 1.5;
};

// Bandpass -> periodogram -> ranked peaks. Returns nothing when no in-band
// local maximum exists.
inline std::optional<FdEstimate> estimate_rr_fd(const SignalTrace& t, FdBand band = {},
                                                int pad_factor = 4, int order = 2) {
    const auto filt = design_bandpass(band.low, band.high, order, t.frame_rate);
    const auto banded = apply_filter(t, filt);
    const auto spectrum = periodogram(banded, pad_factor);
    const auto peaks = find_peaks(spectrum, band.low, band.high);
    if (peaks.empty()) return std::nullopt;

    FdEstimate e;
    e.f_a = peaks[0].freq_hz;
    e.p_a = peaks[0].power;
    e.rr_bpm = 60.0 * e.f_a;
    if (peaks.size() > 1) {
        e.f_b = peaks[1].freq_hz;
        e.p_b = peaks[1].power;
        e.confidence = e.p_a / e.p_b;
    }
    return e;
}

}  // namespace psmrr

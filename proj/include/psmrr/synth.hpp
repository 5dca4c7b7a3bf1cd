#pragma once

// Synthetic neonatal PSM trial generator. Stands in for the bench setup:
// a breathing oscillation with a mild second harmonic around a static load,
// plus sensor drift, measurement noise and an optional grunting disturbance,
// rendered either as a 1D trace or as full 2D pressure frames.
//
// Everything is deterministic given (spec, seed). Draw order is part of the
// contract: for grunting patterns, per-cycle jitter, ripple frequency, ripple
// phase and ripple amplitude factors are drawn first (one array each), then
// per-sample measurement noise.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "psmrr/conditions.hpp"
#include "psmrr/psm_data.hpp"

namespace psmrr {

struct DriftSpec {
    double amplitude = 0.01;  // psi
    double frequency = 0.03;  // Hz
};

// Sub-band drift sits below the analysis passband and is removed by the
// bandpass alone; near-band drift intrudes just above the lower corner.
inline constexpr DriftSpec kSubBandDrift{0.01, 0.03};
inline constexpr DriftSpec kNearBandDrift{0.02, 0.34};

struct GruntSpec {
    double noise_gain = 3.0;       // expiratory ripple gain, relative to breathing amplitude
    double amplitude_jitter = 0.3; // per-cycle expiratory amplitude variation
};

// Expiratory ripple band: fast enough to corrupt threshold crossings, above
// the 0.3-1.5 Hz analysis band so spectra stay anchored at the fundamental.
inline constexpr double kGruntRippleLowHz = 1.8;
inline constexpr double kGruntRippleHighHz = 3.0;

struct TrialSpec {
    double true_rr_bpm = 60.0;
    double duration_s = 60.0;
    double frame_rate = 20.0;
    Pattern pattern = Pattern::normal;
    Position position = Position::supine;
    Mattress mattress = Mattress::warmer;
    double breathing_amplitude = 0.025;  // psi
    double dc_bias = 0.45;               // psi, static load
    double harmonic_ratio = 0.10;        // second-harmonic amplitude, relative
    DriftSpec drift = kSubBandDrift;
    double noise_sigma = 0.004;  // psi
    GruntSpec grunt;
    std::uint64_t seed = 0;
};

struct GroundTruth {
    double true_rr_bpm = 0.0;
    double fundamental_hz = 0.0;
    TrialSpec spec;
};

// Condition-to-parameter mapping: prone and crib raise the effective
// signal-to-noise ratio, supine and warmer lower it.
inline double position_amp_scale(Position p) { return p == Position::supine ? 0.8 : 1.2; }
inline double position_noise_scale(Position p) { return p == Position::supine ? 1.3 : 0.8; }
inline double mattress_amp_scale(Mattress m) { return m == Mattress::warmer ? 0.9 : 1.1; }
inline double mattress_noise_scale(Mattress m) { return m == Mattress::warmer ? 1.2 : 0.85; }

namespace detail {

// Deterministic uniform/gaussian source. The mt19937_64 stream is pinned by
// the standard; uniforms take the top 53 bits, gaussians use Box-Muller.
class TrialRng {
public:
    explicit TrialRng(std::uint64_t seed) : engine_(seed) {}

    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01();  // (0,1], keeps log finite
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline double hash01(std::uint64_t seed, std::uint64_t r, std::uint64_t c) {
    const std::uint64_t h = splitmix64(splitmix64(seed ^ (r * 0x100000001b3ULL)) ^ c);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace detail

inline void validate_spec(const TrialSpec& spec) {
    if (!(spec.true_rr_bpm > 0.0)) throw std::invalid_argument("trial spec: rate must be positive");
    if (!(spec.duration_s > 0.0)) throw std::invalid_argument("trial spec: duration must be positive");
    if (!(spec.frame_rate > 0.0)) throw std::invalid_argument("trial spec: frame rate must be positive");
    if (!(spec.true_rr_bpm / 60.0 < spec.frame_rate / 2.0))
        throw std::invalid_argument("trial spec: rate exceeds Nyquist limit");
    if (spec.breathing_amplitude < 0.0 || spec.drift.amplitude < 0.0 || spec.noise_sigma < 0.0 ||
        spec.grunt.noise_gain < 0.0 || spec.grunt.amplitude_jitter < 0.0)
        throw std::invalid_argument("trial spec: amplitudes must be non-negative");
}

struct GeneratedTrace {
    SignalTrace trace;
    GroundTruth truth;
};

inline GeneratedTrace generate_trace(const TrialSpec& spec) {
    validate_spec(spec);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.frame_rate));
    if (n < 2) throw std::invalid_argument("trial spec: too short for a trace");
    const double f0 = spec.true_rr_bpm / 60.0;
    const double amp = spec.breathing_amplitude * position_amp_scale(spec.position) *
                       mattress_amp_scale(spec.mattress);
    const double sigma = spec.noise_sigma * position_noise_scale(spec.position) *
                         mattress_noise_scale(spec.mattress);

    detail::TrialRng rng(spec.seed);
    const bool grunting = spec.pattern == Pattern::grunting;
    std::vector<double> cycle_jitter, ripple_freq, ripple_phase, ripple_amp;
    if (grunting) {
        const auto cycles = static_cast<std::size_t>(std::floor(f0 * spec.duration_s)) + 2;
        cycle_jitter.reserve(cycles);
        for (std::size_t c = 0; c < cycles; ++c)
            cycle_jitter.push_back(
                1.0 + rng.uniform(-spec.grunt.amplitude_jitter, spec.grunt.amplitude_jitter));
        for (std::size_t c = 0; c < cycles; ++c)
            ripple_freq.push_back(rng.uniform(kGruntRippleLowHz, kGruntRippleHighHz));
        for (std::size_t c = 0; c < cycles; ++c) ripple_phase.push_back(rng.uniform(0.0, two_pi));
        for (std::size_t c = 0; c < cycles; ++c) ripple_amp.push_back(rng.uniform(0.5, 1.5));
    }

    SignalTrace trace;
    trace.frame_rate = spec.frame_rate;
    trace.stages = {Stage::raw};
    trace.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.frame_rate;
        const double theta = two_pi * f0 * t;
        const double w = std::sin(theta) + spec.harmonic_ratio * std::sin(2.0 * theta);
        // Expiration is the falling half-cycle of the breathing waveform.
        const bool expiratory =
            std::cos(theta) + 2.0 * spec.harmonic_ratio * std::cos(2.0 * theta) < 0.0;

        double sample = spec.dc_bias +
                        spec.drift.amplitude * std::sin(two_pi * spec.drift.frequency * t);
        double breath_amp = amp;
        if (grunting && expiratory) {
            const auto cycle = static_cast<std::size_t>(std::floor(f0 * t));
            breath_amp *= cycle_jitter[cycle];
            sample += spec.grunt.noise_gain * amp * ripple_amp[cycle] *
                      std::sin(two_pi * ripple_freq[cycle] * t + ripple_phase[cycle]);
        }
        sample += breath_amp * w;
        if (sigma > 0.0) sample += sigma * rng.gaussian();
        trace.samples[i] = sample;
    }

    GeneratedTrace out;
    out.trace = std::move(trace);
    out.truth = GroundTruth{spec.true_rr_bpm, f0, spec};
    return out;
}

struct GeneratedRecording {
    Recording recording;
    GroundTruth truth;
};

// Static body-pressure template with the trial signal superimposed uniformly
// on the ROI. ROI sensels are lifted so they always stay above the noise
// floor; off-ROI sensels are static, some above and some below the floor.
inline GeneratedRecording generate_recording(const TrialSpec& spec, std::size_t rows,
                                             std::size_t cols, const RegionOfInterest& roi,
                                             double noise_floor = kDefaultNoiseFloor) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("generate_recording: empty grid");
    if (noise_floor < 0.0) throw std::invalid_argument("generate_recording: negative noise floor");
    validate_roi(roi, rows, cols);

    auto generated = generate_trace(spec);
    const auto& samples = generated.trace.samples;
    double min_sample = samples.front();
    for (double v : samples) min_sample = std::min(min_sample, v);

    // Lift keeps every ROI sensel >= floor + margin even at the signal minimum.
    const double lift = noise_floor + 0.02 + std::max(0.0, -min_sample);
    std::vector<double> roi_template(rows * cols, 0.0);
    std::vector<bool> in_roi(rows * cols, false);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t idx = r * cols + c;
            const double h = detail::hash01(spec.seed, r, c);
            if (r >= roi.row_start && r <= roi.row_end && c >= roi.col_start && c <= roi.col_end) {
                in_roi[idx] = true;
                roi_template[idx] = lift + 0.08 * h;
            } else {
                roi_template[idx] = 0.04 + 0.08 * h;  // straddles the 0.0773 floor
            }
        }
    }

    GeneratedRecording out;
    out.truth = generated.truth;
    out.recording.frame_rate = spec.frame_rate;
    out.recording.noise_floor = noise_floor;
    out.recording.meta["position"] = std::string(to_string(spec.position));
    out.recording.meta["pattern"] = std::string(to_string(spec.pattern));
    out.recording.meta["mattress"] = std::string(to_string(spec.mattress));
    out.recording.meta["true_rr_bpm"] = detail::format_number(spec.true_rr_bpm);

    out.recording.frames.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        PressureFrame frame;
        frame.index = i;
        frame.rows = rows;
        frame.cols = cols;
        frame.values.resize(rows * cols);
        for (std::size_t idx = 0; idx < rows * cols; ++idx)
            frame.values[idx] = in_roi[idx] ? roi_template[idx] + samples[i] : roi_template[idx];
        out.recording.frames.push_back(std::move(frame));
    }
    return out;
}

}  // namespace psmrr

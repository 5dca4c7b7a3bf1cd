#pragma once

// Time-domain respiratory rate estimation by threshold-crossing counting.
// The threshold is the 75th percentile of the trace for raw data and half of
// it for preprocessed data; crossings in both directions are counted and
// converted to breaths per minute.

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "psmrr/psm_data.hpp"

namespace psmrr {

enum class ThresholdMode { raw, preprocessed };

inline ThresholdMode threshold_mode_for(Stage stage) {
    return stage == Stage::raw ? ThresholdMode::raw : ThresholdMode::preprocessed;
}

// Linear interpolation between order statistics at fractional rank (n-1)*q.
inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("percentile: q outside [0,1]");
    std::sort(values.begin(), values.end());
    const double rank = static_cast<double>(values.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

inline double compute_threshold(const SignalTrace& t, ThresholdMode mode) {
    const double p75 = percentile(t.samples, 0.75);
    return mode == ThresholdMode::raw ? p75 : 0.5 * p75;
}

// Counts sign changes of (sample - threshold) in both directions.
// A sample exactly at the threshold counts as above it.
inline std::size_t count_crossings(const SignalTrace& t, double threshold) {
    if (t.samples.size() < 2) throw std::invalid_argument("count_crossings: need at least 2 samples");
    std::size_t crossings = 0;
    bool above = t.samples[0] >= threshold;
    for (std::size_t i = 1; i < t.samples.size(); ++i) {
        const bool a = t.samples[i] >= threshold;
        if (a != above) ++crossings;
        above = a;
    }
    return crossings;
}

struct TdEstimate {
    double rr_bpm = 0.0;
    double threshold = 0.0;
    std::size_t crossings = 0;
    Stage stage = Stage::raw;
};

inline TdEstimate estimate_rr_td(const SignalTrace& t, ThresholdMode mode) {
    TdEstimate e;
    e.threshold = compute_threshold(t, mode);
    e.crossings = count_crossings(t, e.threshold);
    e.stage = t.current_stage();
    const auto n = static_cast<double>(t.samples.size());
    e.rr_bpm = static_cast<double>(e.crossings) / (2.0 * n) * 60.0 * t.frame_rate;
    return e;
}

inline TdEstimate estimate_rr_td(const SignalTrace& t) {
    return estimate_rr_td(t, threshold_mode_for(t.current_stage()));
}

}  // namespace psmrr

#pragma once

// Artifact-suppression pipeline: mean removal, least-squares line removal,
// median smoothing. Each step returns a new trace with its stage tag appended.

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "psmrr/psm_data.hpp"

namespace psmrr {

inline SignalTrace normalize(const SignalTrace& t) {
    if (t.samples.empty()) throw std::invalid_argument("normalize: empty trace");
    double mean = 0.0;
    for (double v : t.samples) mean += v;
    mean /= static_cast<double>(t.samples.size());

    SignalTrace out = t;
    for (double& v : out.samples) v -= mean;
    out.stages.push_back(Stage::normalized);
    return out;
}

inline SignalTrace detrend(const SignalTrace& t) {
    const std::size_t n = t.samples.size();
    if (n < 2) throw std::invalid_argument("detrend: need at least 2 samples");

    const double xbar = static_cast<double>(n - 1) / 2.0;
    double ybar = 0.0;
    for (double v : t.samples) ybar += v;
    ybar /= static_cast<double>(n);

    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = static_cast<double>(i) - xbar;
        sxy += dx * (t.samples[i] - ybar);
        sxx += dx * dx;
    }
    const double slope = sxy / sxx;
    const double intercept = ybar - slope * xbar;

    SignalTrace out = t;
    for (std::size_t i = 0; i < n; ++i)
        out.samples[i] -= intercept + slope * static_cast<double>(i);
    out.stages.push_back(Stage::detrended);
    return out;
}

// Centered window of odd length k; boundary samples are replicated.
inline SignalTrace median_filter(const SignalTrace& t, std::size_t k) {
    const std::size_t n = t.samples.size();
    if (k % 2 == 0) throw std::invalid_argument("median_filter: window length must be odd");
    if (k < 1 || k > n) throw std::invalid_argument("median_filter: window length exceeds trace");

    SignalTrace out = t;
    if (k > 1) {
        const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
        std::vector<double> window(k);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::ptrdiff_t d = -half; d <= half; ++d) {
                auto j = static_cast<std::ptrdiff_t>(i) + d;
                j = std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(n) - 1);
                window[static_cast<std::size_t>(d + half)] = t.samples[static_cast<std::size_t>(j)];
            }
            auto mid = window.begin() + static_cast<std::ptrdiff_t>(k / 2);
            std::nth_element(window.begin(), mid, window.end());
            out.samples[i] = *mid;
        }
    }
    out.stages.push_back(Stage::median_filtered);
    return out;
}

// Cumulative pipeline normalize -> detrend -> median_filter, stopping after
// the requested stage. Stage::raw is a no-op.
inline SignalTrace run_pipeline(const SignalTrace& t, Stage upto, std::size_t median_window = 5) {
    switch (upto) {
        case Stage::raw: return t;
        case Stage::normalized: return normalize(t);
        case Stage::detrended: return detrend(normalize(t));
        case Stage::median_filtered: return median_filter(detrend(normalize(t)), median_window);
        default: throw std::invalid_argument("run_pipeline: not a preprocessing stage");
    }
}

}  // namespace psmrr

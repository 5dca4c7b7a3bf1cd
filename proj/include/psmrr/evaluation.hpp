#pragma once

// Percentage error, RMS aggregation by experimental condition, and the
// time/frequency divergence indicator for grunting.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psmrr/conditions.hpp"
#include "psmrr/fd_estimator.hpp"
#include "psmrr/td_estimator.hpp"

namespace psmrr {

inline double percent_error(double estimate_bpm, double truth_bpm) {
    if (!(truth_bpm > 0.0)) throw std::invalid_argument("percent_error: truth must be positive");
    return 100.0 * std::abs(estimate_bpm - truth_bpm) / truth_bpm;
}

inline double rms(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("rms: empty input");
    double sum_sq = 0.0;
    for (double v : values) sum_sq += v * v;
    return std::sqrt(sum_sq / static_cast<double>(values.size()));
}

// Pipeline stages at which both estimators are evaluated, in table order.
inline constexpr std::array<Stage, 4> kAnalysisStages = {
    Stage::raw, Stage::normalized, Stage::detrended, Stage::median_filtered};

struct TrialResult {
    std::string trial_id;
    Position position = Position::supine;
    Pattern pattern = Pattern::normal;
    Mattress mattress = Mattress::warmer;
    double true_rr_bpm = 0.0;
    std::array<TdEstimate, 4> td;                 // indexed like kAnalysisStages
    std::array<std::optional<FdEstimate>, 4> fd;  // absent when no in-band peak
};

struct ExperimentSummary {
    Condition condition = Condition::position;
    std::string class_label;
    std::size_t trial_count = 0;
    double fd_rms_raw_pct = 0.0;          // frequency-domain error, raw stage only
    std::array<double, 4> td_rms_pct{};   // per stage
    std::array<double, 3> lc_rms{};       // confidence ratio, preprocessed stages
};

namespace detail {

inline std::string class_of(const TrialResult& r, Condition c) {
    switch (c) {
        case Condition::position: return std::string(to_string(r.position));
        case Condition::pattern: return std::string(to_string(r.pattern));
        case Condition::mattress: return std::string(to_string(r.mattress));
    }
    return {};
}

}  // namespace detail

// One summary per condition class, mirroring the aggregate-table layout:
// raw stage reports both estimators' RMS error; preprocessed stages report
// the TD error and the FD confidence ratio.
inline std::vector<ExperimentSummary> aggregate(const std::vector<TrialResult>& results,
                                                Condition condition) {
    if (results.empty()) throw std::invalid_argument("aggregate: no trial results");

    std::vector<std::string> order;
    switch (condition) {
        case Condition::position: order = {"supine", "prone"}; break;
        case Condition::pattern: order = {"normal", "grunting"}; break;
        case Condition::mattress: order = {"warmer", "crib"}; break;
    }

    std::vector<ExperimentSummary> out;
    for (const auto& label : order) {
        std::vector<double> fd_raw_err;
        std::array<std::vector<double>, 4> td_err;
        std::array<std::vector<double>, 3> lc;
        std::size_t count = 0;
        for (const auto& r : results) {
            if (detail::class_of(r, condition) != label) continue;
            if (!(r.true_rr_bpm > 0.0))
                throw std::invalid_argument("aggregate: trial " + r.trial_id + " has no ground truth");
            ++count;
            for (std::size_t s = 0; s < kAnalysisStages.size(); ++s) {
                td_err[s].push_back(percent_error(r.td[s].rr_bpm, r.true_rr_bpm));
                if (s == 0) {
                    if (r.fd[0]) fd_raw_err.push_back(percent_error(r.fd[0]->rr_bpm, r.true_rr_bpm));
                } else if (r.fd[s]) {
                    lc[s - 1].push_back(r.fd[s]->confidence);
                }
            }
        }
        if (count == 0) continue;
        ExperimentSummary sum;
        sum.condition = condition;
        sum.class_label = label;
        sum.trial_count = count;
        sum.fd_rms_raw_pct = fd_raw_err.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : rms(fd_raw_err);
        for (std::size_t s = 0; s < 4; ++s) sum.td_rms_pct[s] = rms(td_err[s]);
        for (std::size_t s = 0; s < 3; ++s)
            sum.lc_rms[s] = lc[s].empty() ? std::numeric_limits<double>::quiet_NaN() : rms(lc[s]);
        out.push_back(std::move(sum));
    }
    return out;
}

struct DivergenceReport {
    double divergence = 0.0;  // |td - fd| / fd
    bool flagged = false;
};

// Large relative disagreement between the two estimators suggests grunting.
inline DivergenceReport grunting_divergence(const TdEstimate& td, const FdEstimate& fd,
                                            double rel_threshold = 0.25) {
    if (!(fd.rr_bpm > 0.0))
        throw std::invalid_argument("grunting_divergence: fd estimate must be positive");
    DivergenceReport rep;
    rep.divergence = std::abs(td.rr_bpm - fd.rr_bpm) / fd.rr_bpm;
    rep.flagged = rep.divergence > rel_threshold;
    return rep;
}

}  // namespace psmrr

#pragma once

// Command-line front end: trial synthesis, estimation, plot-data emission and
// batch evaluation. Kept in a header so the binary and the test suite drive
// the same entry point.
//
// Exit codes: 0 success, 2 usage, 3 input format, 4 no estimate, 5 internal.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psmrr/conditions.hpp"
#include "psmrr/evaluation.hpp"
#include "psmrr/fd_estimator.hpp"
#include "psmrr/preprocess.hpp"
#include "psmrr/psm_data.hpp"
#include "psmrr/synth.hpp"
#include "psmrr/td_estimator.hpp"

namespace psmrr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInputFormat = 3;
inline constexpr int kExitNoEstimate = 4;
inline constexpr int kExitInternal = 5;

struct NoEstimateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// "r0:r1,c0:c1" with inclusive sensel indices.
inline RegionOfInterest parse_roi(const std::string& text) {
    RegionOfInterest roi;
    unsigned long r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    char sep1 = 0, sep2 = 0, sep3 = 0;
    std::istringstream in(text);
    if (!(in >> r0 >> sep1 >> r1 >> sep2 >> c0 >> sep3 >> c1) || sep1 != ':' || sep2 != ',' ||
        sep3 != ':' || !(in >> std::ws).eof())
        throw ParseError("bad ROI '" + text + "', expected r0:r1,c0:c1");
    roi.row_start = r0;
    roi.row_end = r1;
    roi.col_start = c0;
    roi.col_end = c1;
    return roi;
}

inline std::pair<double, double> parse_band(const std::string& text) {
    double lo = 0.0, hi = 0.0;
    char sep = 0;
    std::istringstream in(text);
    if (!(in >> lo >> sep >> hi) || sep != ',' || !(in >> std::ws).eof())
        throw ParseError("bad band '" + text + "', expected low,high");
    return {lo, hi};
}

struct InputOptions {
    std::string path;
    std::string roi_text;
    std::string stage_text = "raw";
    std::size_t median_window = 5;
};

inline void add_input_options(CLI::App& sub, InputOptions& opt) {
    sub.add_option("--in", opt.path, "input PSMREC recording")->required();
    sub.add_option("--roi", opt.roi_text,
                   "thorax region of interest, r0:r1,c0:c1 inclusive (default: full grid)");
    sub.add_option("--stage", opt.stage_text,
                   "pipeline stage: raw|normalized|detrended|median-filtered")
        ->default_str("raw");
    sub.add_option("--median-window", opt.median_window, "median filter window (odd)")
        ->default_val(5);
}

inline SignalTrace load_stage_trace(const InputOptions& opt, Stage stage) {
    const Recording rec = load_recording(opt.path);
    RegionOfInterest roi{0, rec.rows() - 1, 0, rec.cols() - 1};
    if (!opt.roi_text.empty()) roi = parse_roi(opt.roi_text);
    auto extracted = extract_avg_pressure(rec, roi);
    return run_pipeline(extracted.trace, stage, opt.median_window);
}

// ------------------------------------------------------------------ batch --

struct BatchTrial {
    std::string id;
    std::optional<TrialSpec> spec;   // synthesized trial
    std::string input_path;          // or loaded from file
    std::string roi_text;
};

struct BatchConfig {
    std::uint64_t seed = 0;
    double duration_s = 60.0;
    double frame_rate = 20.0;
    std::vector<BatchTrial> trials;
};

// Line-oriented config: global `key=value` lines, then one `trial ...` line
// per trial with key=value pairs (id, rr, position, pattern, mattress and
// optional duration/seed overrides, or input/roi to replay a recording).
inline BatchConfig parse_batch_config(std::istream& in) {
    BatchConfig cfg;
    std::string line;
    std::size_t ordinal = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto toks = psmrr::detail::split_ws(line);
        if (toks.empty() || toks[0].front() == '#') continue;
        if (toks[0] == "trial") {
            BatchTrial trial;
            std::map<std::string, std::string> kv;
            for (std::size_t i = 1; i < toks.size(); ++i) {
                const auto eq = toks[i].find('=');
                if (eq == std::string_view::npos)
                    throw ParseError("batch config: malformed trial token '" + std::string(toks[i]) + "'");
                kv[std::string(toks[i].substr(0, eq))] = std::string(toks[i].substr(eq + 1));
            }
            if (!kv.count("id")) throw ParseError("batch config: trial line missing id");
            trial.id = kv["id"];
            if (kv.count("input")) {
                trial.input_path = kv["input"];
                if (kv.count("roi")) trial.roi_text = kv["roi"];
            } else {
                TrialSpec spec;
                spec.duration_s = cfg.duration_s;
                spec.frame_rate = cfg.frame_rate;
                if (!kv.count("rr") || !kv.count("position") || !kv.count("pattern") ||
                    !kv.count("mattress"))
                    throw ParseError("batch config: trial " + trial.id +
                                     " needs rr, position, pattern and mattress");
                spec.true_rr_bpm = psmrr::detail::parse_number(kv["rr"], "trial rr");
                spec.position = parse_position(kv["position"]);
                spec.pattern = parse_pattern(kv["pattern"]);
                spec.mattress = parse_mattress(kv["mattress"]);
                if (kv.count("duration"))
                    spec.duration_s = psmrr::detail::parse_number(kv["duration"], "trial duration");
                if (kv.count("noise_sigma"))
                    spec.noise_sigma = psmrr::detail::parse_number(kv["noise_sigma"], "noise_sigma");
                if (kv.count("drift_amp"))
                    spec.drift.amplitude = psmrr::detail::parse_number(kv["drift_amp"], "drift_amp");
                if (kv.count("drift_freq"))
                    spec.drift.frequency = psmrr::detail::parse_number(kv["drift_freq"], "drift_freq");
                spec.seed = kv.count("seed")
                                ? static_cast<std::uint64_t>(
                                      psmrr::detail::parse_number(kv["seed"], "trial seed"))
                                : psmrr::detail::splitmix64(cfg.seed + ordinal);
                trial.spec = spec;
            }
            cfg.trials.push_back(std::move(trial));
            ++ordinal;
        } else {
            for (auto tok : toks) {
                const auto eq = tok.find('=');
                if (eq == std::string_view::npos)
                    throw ParseError("batch config: malformed line '" + line + "'");
                const auto key = tok.substr(0, eq);
                const auto val = tok.substr(eq + 1);
                if (key == "seed")
                    cfg.seed = static_cast<std::uint64_t>(psmrr::detail::parse_number(val, "seed"));
                else if (key == "duration_s")
                    cfg.duration_s = psmrr::detail::parse_number(val, "duration_s");
                else if (key == "frame_rate")
                    cfg.frame_rate = psmrr::detail::parse_number(val, "frame_rate");
                else
                    throw ParseError("batch config: unknown key '" + std::string(key) + "'");
            }
        }
    }
    if (cfg.trials.empty()) throw ParseError("batch config: no trials");
    return cfg;
}

struct BatchOptions {
    std::string config_path;
    std::string summary_path;
    std::string detail_path;
    std::size_t median_window = 5;
    int pad_factor = 4;
    std::string band_text = "0.3,1.5";
    double divergence_threshold = 0.25;
};

struct BatchRow {
    TrialResult result;
    DivergenceReport divergence;
};

inline BatchRow evaluate_trial(const SignalTrace& raw_trace, const std::string& trial_id,
                               Position pos, Pattern pat, Mattress mat, double true_rr,
                               const BatchOptions& opt) {
    const auto [band_lo, band_hi] = parse_band(opt.band_text);
    BatchRow row;
    row.result.trial_id = trial_id;
    row.result.position = pos;
    row.result.pattern = pat;
    row.result.mattress = mat;
    row.result.true_rr_bpm = true_rr;
    for (std::size_t s = 0; s < kAnalysisStages.size(); ++s) {
        const auto stage_trace = run_pipeline(raw_trace, kAnalysisStages[s], opt.median_window);
        row.result.td[s] = estimate_rr_td(stage_trace);
        row.result.fd[s] =
            estimate_rr_fd(stage_trace, FdBand{band_lo, band_hi}, opt.pad_factor);
        if (!row.result.fd[s])
            throw NoEstimateError("trial " + trial_id + ": no spectral peak at stage " +
                                  std::string(stage_name(kAnalysisStages[s])));
    }
    // Divergence compares the median-filtered TD estimate against the
    // normalized-stage FD estimate.
    row.divergence =
        grunting_divergence(row.result.td[3], *row.result.fd[1], opt.divergence_threshold);
    return row;
}

inline void write_detail(const std::vector<BatchRow>& rows, std::ostream& out) {
    static constexpr const char* kPrefix[4] = {"raw", "norm", "detr", "medf"};
    out << "trial_id\tposition\tpattern\tmattress\ttrue_rr_bpm";
    for (const auto* p : kPrefix)
        out << '\t' << p << "_td_rr_bpm\t" << p << "_td_err_pct\t" << p << "_fd_rr_bpm\t" << p
            << "_fd_err_pct\t" << p << "_lc";
    out << "\tdivergence\tdivergence_flag\n";
    for (const auto& row : rows) {
        const auto& r = row.result;
        out << r.trial_id << '\t' << to_string(r.position) << '\t' << to_string(r.pattern) << '\t'
            << to_string(r.mattress) << '\t' << fmt(r.true_rr_bpm);
        for (std::size_t s = 0; s < 4; ++s) {
            out << '\t' << fmt(r.td[s].rr_bpm) << '\t'
                << fmt(percent_error(r.td[s].rr_bpm, r.true_rr_bpm)) << '\t'
                << fmt(r.fd[s]->rr_bpm) << '\t'
                << fmt(percent_error(r.fd[s]->rr_bpm, r.true_rr_bpm)) << '\t'
                << fmt(r.fd[s]->confidence);
        }
        out << '\t' << fmt(row.divergence.divergence) << '\t' << (row.divergence.flagged ? 1 : 0)
            << '\n';
    }
}

inline void write_summary(const std::vector<TrialResult>& results, std::ostream& out) {
    out << "condition\tclass\ttrials\traw_fd_rms_pct\traw_td_rms_pct\tnorm_lc_rms\t"
           "norm_td_rms_pct\tdetr_lc_rms\tdetr_td_rms_pct\tmedf_lc_rms\tmedf_td_rms_pct\n";
    for (Condition c : {Condition::position, Condition::pattern, Condition::mattress}) {
        for (const auto& s : aggregate(results, c)) {
            out << to_string(s.condition) << '\t' << s.class_label << '\t' << s.trial_count << '\t'
                << fmt(s.fd_rms_raw_pct) << '\t' << fmt(s.td_rms_pct[0]);
            for (std::size_t i = 0; i < 3; ++i)
                out << '\t' << fmt(s.lc_rms[i]) << '\t' << fmt(s.td_rms_pct[i + 1]);
            out << '\n';
        }
    }
}

inline int cmd_batch(const BatchOptions& opt, std::ostream& out) {
    std::ifstream cfg_in(opt.config_path);
    if (!cfg_in) throw ParseError("cannot open batch config: " + opt.config_path);
    const BatchConfig cfg = parse_batch_config(cfg_in);

    std::vector<BatchRow> rows;
    rows.reserve(cfg.trials.size());
    for (const auto& trial : cfg.trials) {
        if (trial.spec) {
            auto generated = generate_trace(*trial.spec);
            rows.push_back(evaluate_trial(generated.trace, trial.id, trial.spec->position,
                                          trial.spec->pattern, trial.spec->mattress,
                                          trial.spec->true_rr_bpm, opt));
        } else {
            const Recording rec = load_recording(trial.input_path);
            RegionOfInterest roi{0, rec.rows() - 1, 0, rec.cols() - 1};
            if (!trial.roi_text.empty()) roi = parse_roi(trial.roi_text);
            for (const char* key : {"position", "pattern", "mattress", "true_rr_bpm"})
                if (!rec.meta.count(key))
                    throw ParseError("trial " + trial.id + ": recording meta lacks " + key);
            auto extracted = extract_avg_pressure(rec, roi);
            rows.push_back(evaluate_trial(
                extracted.trace, trial.id, parse_position(rec.meta.at("position")),
                parse_pattern(rec.meta.at("pattern")), parse_mattress(rec.meta.at("mattress")),
                psmrr::detail::parse_number(rec.meta.at("true_rr_bpm"), "true_rr_bpm"), opt));
        }
    }
    std::sort(rows.begin(), rows.end(), [](const BatchRow& a, const BatchRow& b) {
        return a.result.trial_id < b.result.trial_id;
    });

    std::ofstream detail_out(opt.detail_path);
    if (!detail_out) throw std::runtime_error("cannot open detail output: " + opt.detail_path);
    write_detail(rows, detail_out);

    std::vector<TrialResult> results;
    results.reserve(rows.size());
    for (const auto& row : rows) results.push_back(row.result);
    std::ofstream summary_out(opt.summary_path);
    if (!summary_out) throw std::runtime_error("cannot open summary output: " + opt.summary_path);
    write_summary(results, summary_out);

    out << "trials=" << rows.size() << " detail=" << opt.detail_path
        << " summary=" << opt.summary_path << "\n";
    return kExitOk;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Respiratory-rate estimation toolkit for pressure-sensitive-mat recordings",
                 "psmrr"};
    app.require_subcommand(1);

    // synth -------------------------------------------------------------
    TrialSpec synth_spec;
    std::string synth_out, synth_grid = "8x8", synth_roi = "2:5,2:5", synth_drift_preset;
    double synth_noise_floor = kDefaultNoiseFloor;
    auto* synth = app.add_subcommand("synth", "generate a synthetic PSMREC trial");
    synth->add_option("--rr", synth_spec.true_rr_bpm, "true respiratory rate, bpm")->default_val(60.0);
    synth->add_option("--duration", synth_spec.duration_s, "trial length, seconds")->default_val(60.0);
    synth->add_option("--rate", synth_spec.frame_rate, "frame rate, frames/second")->default_val(20.0);
    synth->add_option("--pattern", [&synth_spec](const std::vector<std::string>& v) {
        synth_spec.pattern = parse_pattern(v[0]);
        return true;
    }, "normal|grunting");
    synth->add_option("--position", [&synth_spec](const std::vector<std::string>& v) {
        synth_spec.position = parse_position(v[0]);
        return true;
    }, "supine|prone");
    synth->add_option("--mattress", [&synth_spec](const std::vector<std::string>& v) {
        synth_spec.mattress = parse_mattress(v[0]);
        return true;
    }, "warmer|crib");
    synth->add_option("--seed", synth_spec.seed, "deterministic generator seed")->default_val(0);
    synth->add_option("--amplitude", synth_spec.breathing_amplitude, "breathing amplitude, psi");
    synth->add_option("--dc-bias", synth_spec.dc_bias, "static load bias, psi");
    synth->add_option("--harmonic", synth_spec.harmonic_ratio, "second-harmonic ratio");
    synth->add_option("--noise-sigma", synth_spec.noise_sigma, "measurement noise sigma, psi");
    synth->add_option("--drift-amp", synth_spec.drift.amplitude, "drift amplitude, psi");
    synth->add_option("--drift-freq", synth_spec.drift.frequency, "drift frequency, Hz");
    synth->add_option("--drift-preset", synth_drift_preset, "subband|nearband");
    synth->add_option("--grunt-gain", synth_spec.grunt.noise_gain, "expiratory ripple gain");
    synth->add_option("--grunt-jitter", synth_spec.grunt.amplitude_jitter,
                      "per-cycle expiratory amplitude jitter");
    synth->add_option("--grid", synth_grid, "mat grid RxC")->default_str("8x8");
    synth->add_option("--roi", synth_roi, "thorax ROI, r0:r1,c0:c1")->default_str("2:5,2:5");
    synth->add_option("--noise-floor", synth_noise_floor, "recording noise floor, psi");
    synth->add_option("--out", synth_out, "output PSMREC path")->required();

    // estimate ----------------------------------------------------------
    detail::InputOptions est_in;
    std::string est_method = "both", est_band = "0.3,1.5", est_threshold_mode;
    int est_pad = 4;
    auto* estimate = app.add_subcommand("estimate", "estimate respiratory rate from a recording");
    detail::add_input_options(*estimate, est_in);
    estimate->add_option("--method", est_method, "td|fd|both")->default_str("both");
    estimate->add_option("--pad", est_pad, "periodogram zero-pad factor")->default_val(4);
    estimate->add_option("--band", est_band, "bandpass corners low,high in Hz")
        ->default_str("0.3,1.5");
    estimate->add_option("--threshold-mode", est_threshold_mode,
                         "td threshold rule: raw|preprocessed (default: from stage)");

    // trace / spectrum ----------------------------------------------------
    detail::InputOptions trace_in;
    auto* trace = app.add_subcommand("trace", "emit (time_s, value) pairs at a pipeline stage");
    detail::add_input_options(*trace, trace_in);

    detail::InputOptions spec_in;
    std::string spec_band = "0.3,1.5";
    int spec_pad = 4;
    auto* spectrum =
        app.add_subcommand("spectrum", "emit (freq_hz, power) pairs of the bandpassed stage");
    detail::add_input_options(*spectrum, spec_in);
    spectrum->add_option("--pad", spec_pad, "periodogram zero-pad factor")->default_val(4);
    spectrum->add_option("--band", spec_band, "bandpass corners low,high in Hz")
        ->default_str("0.3,1.5");

    // batch ---------------------------------------------------------------
    detail::BatchOptions batch_opt;
    auto* batch = app.add_subcommand("batch", "run an experiment matrix and write summary tables");
    batch->add_option("--config", batch_opt.config_path, "experiment matrix config")->required();
    batch->add_option("--summary", batch_opt.summary_path, "per-condition summary output (tsv)")
        ->required();
    batch->add_option("--detail", batch_opt.detail_path, "per-trial detail output (tsv)")->required();
    batch->add_option("--median-window", batch_opt.median_window, "median filter window (odd)")
        ->default_val(5);
    batch->add_option("--pad", batch_opt.pad_factor, "periodogram zero-pad factor")->default_val(4);
    batch->add_option("--band", batch_opt.band_text, "bandpass corners low,high in Hz")
        ->default_str("0.3,1.5");
    batch->add_option("--divergence-threshold", batch_opt.divergence_threshold,
                      "relative td/fd divergence that flags grunting")
        ->default_val(0.25);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            unsigned long rows = 0, cols = 0;
            char sep = 0;
            std::istringstream grid_in(synth_grid);
            if (!(grid_in >> rows >> sep >> cols) || sep != 'x' || rows == 0 || cols == 0)
                throw ParseError("bad grid '" + synth_grid + "', expected RxC");
            if (!synth_drift_preset.empty()) {
                if (synth_drift_preset == "subband")
                    synth_spec.drift = kSubBandDrift;
                else if (synth_drift_preset == "nearband")
                    synth_spec.drift = kNearBandDrift;
                else
                    throw ParseError("unknown drift preset '" + synth_drift_preset + "'");
            }
            const auto roi = detail::parse_roi(synth_roi);
            auto generated = generate_recording(synth_spec, rows, cols, roi, synth_noise_floor);
            write_recording(generated.recording, synth_out);
            out << "wrote=" << synth_out << " frames=" << generated.recording.frame_count()
                << " true_rr_bpm=" << detail::fmt(generated.truth.true_rr_bpm) << "\n";
            return kExitOk;
        }

        if (estimate->parsed()) {
            if (est_method != "td" && est_method != "fd" && est_method != "both")
                throw CLI::ValidationError("--method must be td, fd or both");
            if (est_method == "fd" && !est_threshold_mode.empty())
                throw CLI::ValidationError("--threshold-mode applies to the td method only");
            const Stage stage = parse_stage(est_in.stage_text);
            const auto stage_trace = detail::load_stage_trace(est_in, stage);
            if (est_method != "fd") {
                ThresholdMode mode = threshold_mode_for(stage);
                if (!est_threshold_mode.empty()) {
                    if (est_threshold_mode == "raw")
                        mode = ThresholdMode::raw;
                    else if (est_threshold_mode == "preprocessed")
                        mode = ThresholdMode::preprocessed;
                    else
                        throw CLI::ValidationError("--threshold-mode must be raw or preprocessed");
                }
                const auto td = estimate_rr_td(stage_trace, mode);
                out << "method=td stage=" << stage_name(stage)
                    << " rr_bpm=" << detail::fmt(td.rr_bpm)
                    << " threshold=" << detail::fmt(td.threshold) << " crossings=" << td.crossings
                    << "\n";
            }
            if (est_method != "td") {
                const auto [lo, hi] = detail::parse_band(est_band);
                const auto fd = estimate_rr_fd(stage_trace, FdBand{lo, hi}, est_pad);
                if (!fd)
                    throw NoEstimateError("no spectral peak inside the band at stage " +
                                          std::string(stage_name(stage)));
                out << "method=fd stage=" << stage_name(stage)
                    << " rr_bpm=" << detail::fmt(fd->rr_bpm) << " f_a=" << detail::fmt(fd->f_a)
                    << " f_b=" << detail::fmt(fd->f_b)
                    << " confidence=" << detail::fmt(fd->confidence) << "\n";
            }
            return kExitOk;
        }

        if (trace->parsed()) {
            const Stage stage = parse_stage(trace_in.stage_text);
            const auto stage_trace = detail::load_stage_trace(trace_in, stage);
            out << "# stage=" << stage_name(stage) << "\n# time_s\tvalue\n";
            for (std::size_t i = 0; i < stage_trace.samples.size(); ++i)
                out << detail::fmt(static_cast<double>(i) / stage_trace.frame_rate) << '\t'
                    << detail::fmt(stage_trace.samples[i]) << "\n";
            return kExitOk;
        }

        if (spectrum->parsed()) {
            const Stage stage = parse_stage(spec_in.stage_text);
            const auto stage_trace = detail::load_stage_trace(spec_in, stage);
            const auto [lo, hi] = detail::parse_band(spec_band);
            const auto filt = design_bandpass(lo, hi, 2, stage_trace.frame_rate);
            const auto spec = periodogram(apply_filter(stage_trace, filt), spec_pad);
            out << "# stage=" << stage_name(stage) << " band=" << detail::fmt(lo) << ","
                << detail::fmt(hi) << "\n# freq_hz\tpower\n";
            for (std::size_t k = 0; k < spec.freqs.size(); ++k)
                out << detail::fmt(spec.freqs[k]) << '\t' << detail::fmt(spec.power[k]) << "\n";
            return kExitOk;
        }

        if (batch->parsed()) return detail::cmd_batch(batch_opt, out);

        err << "no subcommand given\n";
        return kExitUsage;
    } catch (const CLI::ValidationError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NoEstimateError& e) {
        err << "no estimate: " << e.what() << "\n";
        return kExitNoEstimate;
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitInputFormat;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace psmrr::cli

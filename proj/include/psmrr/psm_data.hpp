#pragma once

// Pressure-sensitive-mat data model: frame grids, recordings, regions of
// interest, and the 1D average-pressure trace extracted from them.
//
// Recording file format (PSMREC, text, line-oriented):
//   line 1:  PSMREC 1
//   line 2:  rows=<int> cols=<int> frame_rate=<float> noise_floor=<float>
//   line 3:  meta <key>=<value> ...            (optional)
//   then per frame:
//            frame <index>
//            <rows> lines of <cols> space-separated decimal numbers
// Numbers are serialized with 12 significant digits.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace psmrr {

// Noise floor calibrated for the neonatal load on the reference mat.
inline constexpr double kDefaultNoiseFloor = 0.0773;

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Stage { raw, normalized, detrended, median_filtered, bandpassed };

inline std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::raw: return "raw";
        case Stage::normalized: return "normalized";
        case Stage::detrended: return "detrended";
        case Stage::median_filtered: return "median_filtered";
        case Stage::bandpassed: return "bandpassed";
    }
    return "unknown";
}

// Accepts both "median_filtered" and the CLI spelling "median-filtered".
inline Stage parse_stage(std::string_view name) {
    std::string s(name);
    for (auto& c : s)
        if (c == '-') c = '_';
    if (s == "raw") return Stage::raw;
    if (s == "normalized") return Stage::normalized;
    if (s == "detrended") return Stage::detrended;
    if (s == "median_filtered") return Stage::median_filtered;
    if (s == "bandpassed") return Stage::bandpassed;
    throw std::invalid_argument("unknown stage name: " + std::string(name));
}

struct PressureFrame {
    std::size_t index = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major, rows*cols, finite and >= 0

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

struct RegionOfInterest {
    std::size_t row_start = 0;
    std::size_t row_end = 0;  // inclusive
    std::size_t col_start = 0;
    std::size_t col_end = 0;  // inclusive

    std::size_t rows() const { return row_end - row_start + 1; }
    std::size_t cols() const { return col_end - col_start + 1; }
    std::size_t sensel_count() const { return rows() * cols(); }
};

struct Recording {
    std::vector<PressureFrame> frames;
    double frame_rate = 0.0;   // frames/second
    double noise_floor = kDefaultNoiseFloor;  // psi
    std::map<std::string, std::string> meta;  // position, pattern, mattress, true_rr_bpm

    std::size_t frame_count() const { return frames.size(); }
    std::size_t rows() const { return frames.empty() ? 0 : frames.front().rows; }
    std::size_t cols() const { return frames.empty() ? 0 : frames.front().cols; }
    double duration_s() const { return static_cast<double>(frames.size()) / frame_rate; }
};

struct SignalTrace {
    std::vector<double> samples;
    double frame_rate = 0.0;
    std::vector<Stage> stages;  // applied transforms, append-only

    std::size_t size() const { return samples.size(); }
    Stage current_stage() const { return stages.empty() ? Stage::raw : stages.back(); }
};

inline void validate_roi(const RegionOfInterest& roi, std::size_t rows, std::size_t cols) {
    if (roi.row_end < roi.row_start || roi.col_end < roi.col_start)
        throw std::invalid_argument("region of interest is empty");
    if (roi.row_end >= rows || roi.col_end >= cols)
        throw std::invalid_argument("region of interest exceeds grid bounds");
}

namespace detail {

inline double parse_number(std::string_view tok, const std::string& what) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw ParseError("non-numeric " + what + ": '" + std::string(tok) + "'");
    return v;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace detail

inline Recording parse_recording(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty recording file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "PSMREC 1") throw ParseError("bad magic line, expected 'PSMREC 1'");

    if (!std::getline(in, line)) throw ParseError("missing header line");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::size_t rows = 0, cols = 0;
    bool have_rows = false, have_cols = false, have_rate = false;
    Recording rec;
    for (auto tok : detail::split_ws(line)) {
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) throw ParseError("malformed header token: " + std::string(tok));
        const auto key = tok.substr(0, eq);
        const auto val = tok.substr(eq + 1);
        if (key == "rows") {
            rows = static_cast<std::size_t>(detail::parse_number(val, "rows"));
            have_rows = true;
        } else if (key == "cols") {
            cols = static_cast<std::size_t>(detail::parse_number(val, "cols"));
            have_cols = true;
        } else if (key == "frame_rate") {
            rec.frame_rate = detail::parse_number(val, "frame_rate");
            have_rate = true;
        } else if (key == "noise_floor") {
            rec.noise_floor = detail::parse_number(val, "noise_floor");
        } else {
            throw ParseError("unknown header key: " + std::string(key));
        }
    }
    if (!have_rows || !have_cols || !have_rate)
        throw ParseError("header must define rows, cols and frame_rate");
    if (rows == 0 || cols == 0) throw ParseError("grid dimensions must be positive");
    if (!(rec.frame_rate > 0.0)) throw ParseError("frame_rate must be positive");
    if (rec.noise_floor < 0.0) throw ParseError("noise_floor must be non-negative");

    // Optional meta line, then frame blocks.
    bool pending = false;
    while (pending || std::getline(in, line)) {
        pending = false;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "meta") {
            if (!rec.frames.empty()) throw ParseError("meta line must precede frames");
            for (std::size_t i = 1; i < toks.size(); ++i) {
                const auto eq = toks[i].find('=');
                if (eq == std::string_view::npos)
                    throw ParseError("malformed meta token: " + std::string(toks[i]));
                rec.meta[std::string(toks[i].substr(0, eq))] = std::string(toks[i].substr(eq + 1));
            }
        } else if (toks[0] == "frame") {
            if (toks.size() != 2) throw ParseError("malformed frame line: " + line);
            const auto idx = static_cast<std::size_t>(detail::parse_number(toks[1], "frame index"));
            if (idx != rec.frames.size())
                throw ParseError("frame index " + std::string(toks[1]) + " out of order, expected " +
                                 std::to_string(rec.frames.size()));
            PressureFrame frame;
            frame.index = idx;
            frame.rows = rows;
            frame.cols = cols;
            frame.values.reserve(rows * cols);
            for (std::size_t r = 0; r < rows; ++r) {
                if (!std::getline(in, line))
                    throw ParseError("frame " + std::to_string(idx) + " truncated");
                if (!line.empty() && line.back() == '\r') line.pop_back();
                auto cells = detail::split_ws(line);
                if (cells.size() != cols)
                    throw ParseError("frame " + std::to_string(idx) + " row " + std::to_string(r) +
                                     " has " + std::to_string(cells.size()) + " columns, expected " +
                                     std::to_string(cols));
                for (auto cell : cells) {
                    const double v = detail::parse_number(cell, "pressure cell");
                    if (!std::isfinite(v) || v < 0.0)
                        throw ParseError("pressure cell must be finite and non-negative, got " +
                                         std::string(cell));
                    frame.values.push_back(v);
                }
            }
            rec.frames.push_back(std::move(frame));
        } else {
            throw ParseError("unexpected line: " + line);
        }
    }
    if (rec.frames.empty()) throw ParseError("recording has no frames");
    return rec;
}

inline Recording load_recording(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open recording file: " + path);
    return parse_recording(in);
}

inline void write_recording(const Recording& rec, std::ostream& out) {
    if (rec.frames.empty()) throw std::invalid_argument("recording has no frames");
    out << "PSMREC 1\n";
    out << "rows=" << rec.rows() << " cols=" << rec.cols()
        << " frame_rate=" << detail::format_number(rec.frame_rate)
        << " noise_floor=" << detail::format_number(rec.noise_floor) << "\n";
    if (!rec.meta.empty()) {
        out << "meta";
        for (const auto& [k, v] : rec.meta) out << ' ' << k << '=' << v;
        out << "\n";
    }
    for (const auto& frame : rec.frames) {
        out << "frame " << frame.index << "\n";
        for (std::size_t r = 0; r < frame.rows; ++r) {
            for (std::size_t c = 0; c < frame.cols; ++c) {
                if (c) out << ' ';
                out << detail::format_number(frame.at(r, c));
            }
            out << "\n";
        }
    }
}

inline void write_recording(const Recording& rec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    write_recording(rec, out);
}

struct AvgPressureResult {
    SignalTrace trace;
    std::vector<std::size_t> gated_frames;  // frames where no sensel reached the floor
};

// One sample per frame: mean of ROI sensels at or above the noise floor.
// A frame with no sensel above the floor yields sample 0 and is flagged.
inline AvgPressureResult extract_avg_pressure(const Recording& rec, const RegionOfInterest& roi) {
    if (rec.frames.empty()) throw std::invalid_argument("recording has no frames");
    validate_roi(roi, rec.rows(), rec.cols());

    AvgPressureResult result;
    result.trace.frame_rate = rec.frame_rate;
    result.trace.stages = {Stage::raw};
    result.trace.samples.reserve(rec.frames.size());
    for (const auto& frame : rec.frames) {
        double sum = 0.0;
        std::size_t included = 0;
        for (std::size_t r = roi.row_start; r <= roi.row_end; ++r) {
            for (std::size_t c = roi.col_start; c <= roi.col_end; ++c) {
                const double v = frame.at(r, c);
                if (v >= rec.noise_floor) {
                    sum += v;
                    ++included;
                }
            }
        }
        if (included == 0) {
            result.gated_frames.push_back(frame.index);
            result.trace.samples.push_back(0.0);
        } else {
            result.trace.samples.push_back(sum / static_cast<double>(included));
        }
    }
    return result;
}

}  // namespace psmrr

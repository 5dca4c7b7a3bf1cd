#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "psmrr/cli.hpp"

namespace fs = std::filesystem;
using psmrr::cli::run;

namespace {

struct RunResult {
    int exit_code = 0;
    std::string out;
    std::string err;
};

RunResult invoke(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    RunResult r;
    r.exit_code = run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / "psmrr_cli_tests";
    fs::create_directories(dir);
    return dir;
}

double parse_key(const std::string& text, const std::string& key) {
    const auto pos = text.find(key + "=");
    REQUIRE(pos != std::string::npos);
    return std::stod(text.substr(pos + key.size() + 1));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_flat_recording(const fs::path& p) {
    // 0.5 is exactly representable, so mean subtraction yields exact zeros
    std::ofstream out(p);
    out << "PSMREC 1\nrows=1 cols=2 frame_rate=20 noise_floor=0\n";
    for (int f = 0; f < 300; ++f) out << "frame " << f << "\n0.5 0.5\n";
}

}  // namespace

TEST_CASE("synth then estimate round-trip", "[cli]") {
    const auto file = temp_dir() / "clean60.psmrec";
    auto synth = invoke({"synth", "--rr", "60", "--duration", "60", "--seed", "5", "--out",
                         file.string()});
    REQUIRE(synth.exit_code == 0);
    REQUIRE(fs::exists(file));

    auto est = invoke({"estimate", "--in", file.string(), "--roi", "2:5,2:5", "--stage",
                       "normalized", "--method", "fd"});
    REQUIRE(est.exit_code == 0);
    CHECK(est.out.find("method=fd") != std::string::npos);
    CHECK(est.out.find("stage=normalized") != std::string::npos);
    CHECK(std::abs(parse_key(est.out, "rr_bpm") - 60.0) <= 0.5);
}

TEST_CASE("estimates always carry method and stage labels", "[cli]") {
    const auto file = temp_dir() / "labels.psmrec";
    REQUIRE(invoke({"synth", "--rr", "45", "--duration", "30", "--seed", "2", "--out",
                    file.string()}).exit_code == 0);
    auto both = invoke({"estimate", "--in", file.string(), "--roi", "2:5,2:5", "--stage",
                        "median-filtered"});
    REQUIRE(both.exit_code == 0);
    std::istringstream lines(both.out);
    std::string line;
    int labeled = 0;
    while (std::getline(lines, line)) {
        if (line.find("rr_bpm=") == std::string::npos) continue;
        CHECK(line.find("method=") != std::string::npos);
        CHECK(line.find("stage=median_filtered") != std::string::npos);
        ++labeled;
    }
    CHECK(labeled == 2);
}

TEST_CASE("flat recordings estimate zero in the time domain", "[cli]") {
    const auto file = temp_dir() / "flat.psmrec";
    write_flat_recording(file);
    auto est = invoke({"estimate", "--in", file.string(), "--stage", "raw", "--method", "td"});
    REQUIRE(est.exit_code == 0);
    CHECK(parse_key(est.out, "rr_bpm") == 0.0);
    CHECK(parse_key(est.out, "crossings") == 0.0);
}

TEST_CASE("flat recordings yield no frequency-domain estimate", "[cli]") {
    const auto file = temp_dir() / "flat fd.psmrec";
    write_flat_recording(file);
    auto est = invoke({"estimate", "--in", file.string(), "--stage", "normalized", "--method",
                       "fd"});
    CHECK(est.exit_code == psmrr::cli::kExitNoEstimate);
    CHECK(est.err.find("no estimate") != std::string::npos);
}

TEST_CASE("missing and malformed inputs exit with the format code", "[cli]") {
    auto missing = invoke({"estimate", "--in", (temp_dir() / "nope.psmrec").string()});
    CHECK(missing.exit_code == psmrr::cli::kExitInputFormat);
    CHECK(!missing.err.empty());

    const auto bad = temp_dir() / "bad.psmrec";
    std::ofstream(bad) << "NOTPSM\n";
    CHECK(invoke({"estimate", "--in", bad.string()}).exit_code == psmrr::cli::kExitInputFormat);
}

TEST_CASE("usage errors", "[cli]") {
    CHECK(invoke({"estimate"}).exit_code == psmrr::cli::kExitUsage);  // --in required
    CHECK(invoke({}).exit_code == psmrr::cli::kExitUsage);
    CHECK(invoke({"transmogrify"}).exit_code == psmrr::cli::kExitUsage);

    const auto file = temp_dir() / "usage.psmrec";
    write_flat_recording(file);
    auto fd_thr = invoke({"estimate", "--in", file.string(), "--method", "fd",
                          "--threshold-mode", "raw"});
    CHECK(fd_thr.exit_code == psmrr::cli::kExitUsage);
}

TEST_CASE("trace emits the requested stage", "[cli]") {
    const auto file = temp_dir() / "trace.psmrec";
    write_flat_recording(file);
    auto raw = invoke({"trace", "--in", file.string(), "--stage", "raw"});
    REQUIRE(raw.exit_code == 0);
    std::istringstream lines(raw.out);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        REQUIRE(tab != std::string::npos);
        CHECK(std::stod(line.substr(tab + 1)) == 0.5);
        ++rows;
    }
    CHECK(rows == 300);
}

TEST_CASE("median filtering smooths the emitted trace", "[cli]") {
    const auto file = temp_dir() / "noisy.psmrec";
    REQUIRE(invoke({"synth", "--rr", "60", "--duration", "40", "--seed", "9", "--noise-sigma",
                    "0.012", "--out", file.string()}).exit_code == 0);

    auto lag1 = [&](const std::string& stage) {
        auto r = invoke({"trace", "--in", file.string(), "--roi", "2:5,2:5", "--stage", stage});
        REQUIRE(r.exit_code == 0);
        std::istringstream lines(r.out);
        std::string line;
        std::vector<double> v;
        while (std::getline(lines, line)) {
            if (line.empty() || line[0] == '#') continue;
            v.push_back(std::stod(line.substr(line.find('\t') + 1)));
        }
        double acc = 0.0;
        for (std::size_t i = 1; i < v.size(); ++i) acc += std::abs(v[i] - v[i - 1]);
        return acc / static_cast<double>(v.size() - 1);
    };
    CHECK(lag1("median-filtered") <= lag1("detrended"));
}

TEST_CASE("spectrum peaks at the breathing fundamental", "[cli]") {
    const auto file = temp_dir() / "spec45.psmrec";
    REQUIRE(invoke({"synth", "--rr", "45", "--duration", "60", "--seed", "3", "--out",
                    file.string()}).exit_code == 0);
    auto r = invoke({"spectrum", "--in", file.string(), "--roi", "2:5,2:5", "--stage",
                     "normalized"});
    REQUIRE(r.exit_code == 0);

    std::istringstream lines(r.out);
    std::string line;
    double best_f = 0.0, best_p = -1.0, df = -1.0, prev_f = -1.0;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        const double f = std::stod(line.substr(0, tab));
        const double p = std::stod(line.substr(tab + 1));
        if (df < 0.0 && prev_f >= 0.0) df = f - prev_f;
        prev_f = f;
        if (p > best_p) {
            best_p = p;
            best_f = f;
        }
    }
    REQUIRE(df > 0.0);
    CHECK(std::abs(best_f - 0.75) <= df);
}

TEST_CASE("synthesis is reproducible byte for byte", "[cli]") {
    const auto a = temp_dir() / "repro_a.psmrec";
    const auto b = temp_dir() / "repro_b.psmrec";
    const std::vector<std::string> common = {"synth", "--rr",   "75",   "--duration", "20",
                                             "--seed", "42",    "--pattern", "grunting"};
    auto args_a = common;
    args_a.insert(args_a.end(), {"--out", a.string()});
    auto args_b = common;
    args_b.insert(args_b.end(), {"--out", b.string()});
    REQUIRE(invoke(args_a).exit_code == 0);
    REQUIRE(invoke(args_b).exit_code == 0);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("batch runs a small matrix", "[cli]") {
    const auto dir = temp_dir();
    const auto cfg = dir / "small.cfg";
    std::ofstream(cfg) << "seed=7\nduration_s=30\nframe_rate=20\n"
                       << "trial id=t01 rr=60 position=supine pattern=normal mattress=warmer\n"
                       << "trial id=t02 rr=45 position=prone pattern=grunting mattress=crib\n";
    const auto summary = dir / "summary.tsv";
    const auto detail = dir / "detail.tsv";
    auto r = invoke({"batch", "--config", cfg.string(), "--summary", summary.string(),
                     "--detail", detail.string()});
    REQUIRE(r.exit_code == 0);

    const auto detail_text = slurp(detail);
    CHECK(std::count(detail_text.begin(), detail_text.end(), '\n') == 3);  // header + 2 trials
    CHECK(detail_text.find("t01\tsupine\tnormal\twarmer\t60") != std::string::npos);
    CHECK(detail_text.find("t02\tprone\tgrunting\tcrib\t45") != std::string::npos);

    const auto summary_text = slurp(summary);
    CHECK(summary_text.find("position\tsupine\t1") != std::string::npos);
    CHECK(summary_text.find("position\tprone\t1") != std::string::npos);
    CHECK(summary_text.find("pattern\tnormal\t1") != std::string::npos);
    CHECK(summary_text.find("mattress\tcrib\t1") != std::string::npos);
}

TEST_CASE("a clean matrix gives near-zero fd error at preprocessed stages", "[cli]") {
    const auto dir = temp_dir();
    const auto cfg = dir / "clean.cfg";
    std::ofstream(cfg) << "seed=3\nduration_s=60\n"
                       << "trial id=c1 rr=45 position=supine pattern=normal mattress=warmer"
                          " noise_sigma=0 drift_amp=0\n"
                       << "trial id=c2 rr=60 position=prone pattern=normal mattress=crib"
                          " noise_sigma=0 drift_amp=0\n"
                       << "trial id=c3 rr=75 position=supine pattern=normal mattress=crib"
                          " noise_sigma=0 drift_amp=0\n";
    const auto summary = dir / "clean_summary.tsv";
    const auto detail = dir / "clean_detail.tsv";
    REQUIRE(invoke({"batch", "--config", cfg.string(), "--summary", summary.string(),
                    "--detail", detail.string()}).exit_code == 0);

    // header + rows: columns 6.. are stage blocks of 5; fd_err_pct is the
    // 4th entry of each block, td_err_pct the 2nd
    std::istringstream in(slurp(detail));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream cs(line);
        std::string c;
        while (std::getline(cs, c, '\t')) cells.push_back(c);
        REQUIRE(cells.size() == 27);
        for (std::size_t block = 1; block < 4; ++block) {  // preprocessed stages
            const double fd_err = std::stod(cells[5 + block * 5 + 3]);
            CHECK(fd_err <= 1.1);
            const double td_err = std::stod(cells[5 + block * 5 + 1]);
            CHECK(td_err == 0.0);
        }
    }
}

TEST_CASE("batch replays recorded trials from files", "[cli]") {
    const auto dir = temp_dir();
    const auto rec = dir / "replay.psmrec";
    REQUIRE(invoke({"synth", "--rr", "75", "--duration", "30", "--seed", "21", "--position",
                    "prone", "--mattress", "crib", "--out", rec.string()}).exit_code == 0);

    const auto cfg = dir / "replay.cfg";
    std::ofstream(cfg) << "trial id=r01 input=" << rec.string() << " roi=2:5,2:5\n";
    const auto summary = dir / "replay_summary.tsv";
    const auto detail = dir / "replay_detail.tsv";
    auto r = invoke({"batch", "--config", cfg.string(), "--summary", summary.string(),
                     "--detail", detail.string()});
    REQUIRE(r.exit_code == 0);

    const auto detail_text = slurp(detail);
    CHECK(detail_text.find("r01\tprone\tnormal\tcrib\t75") != std::string::npos);

    SECTION("recordings without condition meta are rejected") {
        const auto bare = dir / "bare.psmrec";
        write_flat_recording(bare);
        std::ofstream(cfg) << "trial id=r02 input=" << bare.string() << "\n";
        auto bad = invoke({"batch", "--config", cfg.string(), "--summary", summary.string(),
                           "--detail", detail.string()});
        CHECK(bad.exit_code == psmrr::cli::kExitInputFormat);
        CHECK(bad.err.find("r02") != std::string::npos);
    }
}

TEST_CASE("batch rejects malformed configs", "[cli]") {
    const auto dir = temp_dir();
    const auto cfg = dir / "broken.cfg";
    std::ofstream(cfg) << "trial id=t01 rr=60 position=supine\n";  // missing keys
    auto r = invoke({"batch", "--config", cfg.string(), "--summary",
                     (dir / "s.tsv").string(), "--detail", (dir / "d.tsv").string()});
    CHECK(r.exit_code == psmrr::cli::kExitInputFormat);
    CHECK(r.err.find("t01") != std::string::npos);
}

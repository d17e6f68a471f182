#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "longimpute/dataset.hpp"
#include "longimpute/simgen.hpp"

namespace fs = std::filesystem;
using longimpute::cli::run;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "longimpute");
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() / ("longimpute_it_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::string strip_timestamp(const std::string& json) {
    return std::regex_replace(json, std::regex("\"timestamp\": \"[^\"]*\""), "\"timestamp\": \"\"");
}

std::string simulated_csv(const TempDir& dir, std::uint64_t seed = 3, std::size_t n_per_arm = 60) {
    longimpute::TrialGeneratorConfig cfg;
    cfg.seed = seed;
    cfg.n_per_arm = n_per_arm;
    const auto path = dir / ("trial" + std::to_string(seed) + ".csv");
    std::ofstream f(path);
    longimpute::write_csv(f, longimpute::generate(cfg).observed);
    return path;
}

}  // namespace

TEST_CASE("describe") {
    TempDir dir;
    const auto input = simulated_csv(dir);
    const auto r = invoke({"describe", "--input", input, "--out", dir / "report"});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "report/retention.csv"));
    CHECK(fs::exists(dir / "report/pattern_means.csv"));

    const auto j = invoke({"describe", "--input", input, "--format", "json"});
    CHECK(j.code == 0);
    const auto doc = nlohmann::json::parse(j.out);
    CHECK(doc["n_subjects"] == 120);

    const auto missing = invoke({"describe", "--input", dir / "nope.csv"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find(dir / "nope.csv") != std::string::npos);
}

TEST_CASE("malformed input reports the line") {
    TempDir dir;
    write_file(dir / "bad.csv", "subject_id,arm,age,month,sqrt_cd4,art\nA,placebo,0,0,1,0\nA,placebo,0,0.5,oops,0\n");
    const auto r = invoke({"describe", "--input", dir / "bad.csv"});
    CHECK(r.code == 2);
    CHECK(r.err.find("line 3") != std::string::npos);
    CHECK(invoke({"describe"}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("diagnose") {
    TempDir dir;
    const auto input = simulated_csv(dir, 5, 150);
    const auto r = invoke({"diagnose", "--input", input, "--format", "json"});
    REQUIRE(r.code == 0);
    const auto doc = nlohmann::json::parse(r.out);
    CHECK(doc["dropout_model"]["ok"] == true);
    CHECK(doc["mcar_test"]["ok"] == true);
    CHECK(doc["pattern_chi2"]["df"] == 3);
    CHECK(invoke({"diagnose", "--input", input, "--out", dir / "d"}).code == 0);
    CHECK(fs::exists(dir / "d/tests.csv"));
}

TEST_CASE("analyze exit codes and layout") {
    TempDir dir;
    const auto input = simulated_csv(dir);
    const auto r = invoke({"analyze", "--input", input, "--methods", "cc,locf,bocf,ml,mi", "--mi-k", "5", "--seed", "7"});
    CHECK(r.code == 0);
    // Table layout: one row per method, an Est/Std/p block per covariate.
    std::istringstream lines(r.out);
    std::string header, line;
    std::getline(lines, header);
    std::vector<std::string> first;
    while (std::getline(lines, line)) first.push_back(line.substr(0, line.find(',')));
    CHECK(first == std::vector<std::string>{"CC", "LOCF", "BOCF", "ML", "MI"});
    for (const char* c : {"prednisolone_est", "month_se", "prednisolone:month_p", "art_est", "prednisolone:art_est", "age_p"})
        CHECK(header.find(c) != std::string::npos);

    CHECK(invoke({"analyze", "--input", input, "--methods", "ml,foo"}).code == 2);
    CHECK(invoke({"analyze", "--input", input, "--methods", "mi", "--mi-k", "1"}).code == 2);

    // Every subject in one arm: each method's design is singular.
    std::string one_arm = slurp(input);
    one_arm = std::regex_replace(one_arm, std::regex(",prednisolone,"), ",placebo,");
    write_file(dir / "one_arm.csv", one_arm);
    const auto failed = invoke({"analyze", "--input", dir / "one_arm.csv", "--mi-k", "3"});
    CHECK(failed.code == 3);
    CHECK(failed.err.find("failed") != std::string::npos);
}

TEST_CASE("complete data makes the single-fit methods coincide") {
    TempDir dir;
    longimpute::TrialGeneratorConfig cfg;
    cfg.n_per_arm = 40;
    cfg.dropout.mechanism = longimpute::DropoutMechanism::None;
    {
        std::ofstream f(dir / "complete.csv");
        longimpute::write_csv(f, longimpute::generate(cfg).observed);
    }
    const auto r = invoke({"analyze", "--input", dir / "complete.csv", "--methods", "cc,locf,bocf,ml", "--format", "json"});
    REQUIRE(r.code == 0);
    const auto doc = nlohmann::json::parse(r.out);
    const auto& methods = doc["methods"];
    REQUIRE(methods.size() == 4);
    for (std::size_t m = 1; m < 4; ++m)
        for (std::size_t k = 0; k < 7; ++k) {
            const double a = methods[0]["coefficients"][k]["estimate"];
            const double b = methods[m]["coefficients"][k]["estimate"];
            CHECK(std::abs(a - b) <= 1e-10);
        }
}

TEST_CASE("analyze is deterministic across runs, thread counts and method subsets") {
    TempDir dir;
    const auto input = simulated_csv(dir, 11);
    const std::vector<std::string> base{"analyze", "--input", input, "--mi-k", "6", "--seed", "9", "--format", "json"};
    const auto first = invoke(base);
    REQUIRE(first.code == 0);
    for (const char* threads : {"1", "2", "8"}) {
        auto args = base;
        args.insert(args.end(), {"--threads", threads});
        CHECK(strip_timestamp(invoke(args).out) == strip_timestamp(first.out));
    }
    const auto full = nlohmann::json::parse(first.out);
    auto args = base;
    args.insert(args.end(), {"--methods", "cc,ml,mi"});
    const auto subset = nlohmann::json::parse(invoke(args).out);
    CHECK(subset["methods"][0] == full["methods"][0]);
    CHECK(subset["methods"][1] == full["methods"][3]);
    CHECK(subset["methods"][2] == full["methods"][4]);

    auto csv = base;
    csv.resize(7);
    CHECK(invoke(csv).out == invoke(csv).out);
}

TEST_CASE("seed fallback from the environment") {
    TempDir dir;
    const auto input = simulated_csv(dir);
    const std::vector<std::string> args{"analyze", "--input", input, "--methods", "mi", "--mi-k", "3", "--format", "json"};
    ::setenv("LONGIMPUTE_SEED", "42", 1);
    const auto env = nlohmann::json::parse(invoke(args).out);
    ::unsetenv("LONGIMPUTE_SEED");
    auto flagged = args;
    flagged.insert(flagged.end(), {"--seed", "42"});
    const auto flag = nlohmann::json::parse(invoke(flagged).out);
    CHECK(env["provenance"]["seed"] == 42);
    CHECK(env["methods"] == flag["methods"]);
    ::setenv("LONGIMPUTE_SEED", "abc", 1);
    CHECK(invoke(args).code == 2);
    ::unsetenv("LONGIMPUTE_SEED");
}

TEST_CASE("simulate") {
    TempDir dir;
    write_file(dir / "default.toml", "n_per_arm = 30\n");
    const auto r = invoke({"simulate", "--config", dir / "default.toml", "--seed", "1", "--out", dir / "sim"});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "sim/full.csv"));
    CHECK(fs::exists(dir / "sim/observed.csv"));
    const auto again = invoke({"simulate", "--config", dir / "default.toml", "--seed", "1", "--out", dir / "sim2"});
    CHECK(slurp(dir / "sim/observed.csv") == slurp(dir / "sim2/observed.csv"));

    write_file(dir / "bad.toml", "[dropout]\nmechanism = \"sometimes\"\n");
    const auto bad = invoke({"simulate", "--config", dir / "bad.toml", "--out", dir / "x"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("dropout.mechanism") != std::string::npos);
}

TEST_CASE("study") {
    TempDir dir;
    write_file(dir / "small.toml", "n_per_arm = 30\n[analysis]\nmi_k = 3\n");
    const auto r = invoke({"study", "--config", dir / "small.toml", "--reps", "4", "--seed", "1"});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 1 + 5 * 7);

    for (const char* threads : {"2", "8"})
        CHECK(invoke({"study", "--config", dir / "small.toml", "--reps", "4", "--seed", "1", "--threads", threads}).out == r.out);

    CHECK(invoke({"study", "--reps", "0"}).code == 2);
    CHECK(invoke({"study", "--config", dir / "missing.toml"}).code == 2);
}

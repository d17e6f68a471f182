#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "longimpute/analysis.hpp"
#include "longimpute/config.hpp"
#include "longimpute/errors.hpp"
#include "longimpute/report.hpp"
#include "longimpute/simgen.hpp"
#include "longimpute/study.hpp"
#include "longimpute/version.hpp"

namespace longimpute::cli {

namespace {

namespace fs = std::filesystem;

struct InputFlags {
    std::string input;
    bool raw_cd4 = false;
    bool allow_intermittent = false;
};

struct OutputFlags {
    std::string out;
    std::string format = "csv";
    std::string layout = "table";
};

struct Settings {
    InputFlags in;
    OutputFlags output;
    std::string methods = "cc,locf,bocf,ml,mi";
    int mi_k = 25;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string config;
    std::optional<int> reps;
};

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// --seed, then LONGIMPUTE_SEED, then the fallback.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (flag) return *flag;
    if (const char* env = std::getenv("LONGIMPUTE_SEED"); env && *env) {
        char* end = nullptr;
        errno = 0;
        const auto v = std::strtoull(env, &end, 10);
        if (errno != 0 || *end != '\0' || env[0] == '-') throw ConfigError("LONGIMPUTE_SEED", "not an unsigned integer");
        return v;
    }
    return fallback;
}

LongitudinalDataset load(const InputFlags& f) {
    CsvOptions opts;
    opts.raw_cd4 = f.raw_cd4;
    opts.dataset.allow_intermittent = f.allow_intermittent;
    return load_csv_file(f.input, VisitSchedule{}, opts);
}

class Sink {
public:
    Sink(const OutputFlags& flags, std::ostream& out) : dir_(flags.out), out_(out) {
        if (!dir_.empty()) fs::create_directories(dir_);
    }

    void emit(const std::string& name, const std::string& content) {
        if (dir_.empty()) {
            out_ << content;
            return;
        }
        const auto path = fs::path(dir_) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error("cannot write " + path.string());
        f << content;
        written_.push_back(path.string());
    }

    void summary(std::ostream& err) const {
        for (const auto& w : written_) err << "wrote " << w << '\n';
    }

private:
    std::string dir_;
    std::ostream& out_;
    std::vector<std::string> written_;
};

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

template <typename Fn>
std::string render(Fn&& fn) {
    std::ostringstream s;
    fn(s);
    return s.str();
}

Json provenance(std::uint64_t seed) {
    return Json{{"tool", "longimpute"}, {"version", kVersion}, {"seed", seed}, {"timestamp", timestamp()}};
}

int cmd_describe(const Settings& s, std::ostream& out, std::ostream& err) {
    const auto ds = load(s.in);
    Sink sink(s.output, out);
    if (s.output.format == "json") {
        sink.emit("describe.json", dump(describe_json(ds)));
    } else {
        sink.emit("retention.csv", render([&](std::ostream& o) { write_retention_csv(o, ds); }));
        sink.emit("pattern_means.csv", render([&](std::ostream& o) { write_pattern_means_csv(o, ds); }));
    }
    sink.summary(err);
    return kExitOk;
}

int cmd_diagnose(const Settings& s, std::ostream& out, std::ostream& err) {
    const auto ds = load(s.in);
    Sink sink(s.output, out);
    const auto report = diagnose_json(ds);
    if (s.output.format == "json") {
        sink.emit("diagnose.json", dump(report));
    } else {
        std::ostringstream o;
        o << "test,statistic,df,p\n";
        for (const char* key : {"mcar_test", "pattern_chi2"}) {
            const auto& r = report[key];
            if (r["ok"].get<bool>())
                o << key << ',' << format_number(r["statistic"].get<double>()) << ',' << r["df"].get<int>() << ','
                  << format_number(r["p"].get<double>()) << '\n';
            else
                o << key << ",NA,NA,NA\n";
        }
        sink.emit("tests.csv", o.str());
        if (report["dropout_model"]["ok"].get<bool>()) {
            std::ostringstream d;
            d << "variable,odds_ratio,se,ci_low,ci_high,p\n";
            for (const auto& r : report["dropout_model"]["odds_ratios"])
                d << r["variable"].get<std::string>() << ',' << format_number(r["odds_ratio"].get<double>()) << ','
                  << format_number(r["se"].get<double>()) << ',' << format_number(r["ci_low"].get<double>()) << ','
                  << format_number(r["ci_high"].get<double>()) << ',' << format_number(r["p"].get<double>()) << '\n';
            sink.emit("dropout_model.csv", d.str());
        }
    }
    for (const char* key : {"dropout_model", "mcar_test", "pattern_chi2"})
        if (!report[key]["ok"].get<bool>()) err << key << ": " << report[key]["error"].get<std::string>() << '\n';
    sink.summary(err);
    return kExitOk;
}

AnalysisOptions analysis_options(const Settings& s, std::uint64_t seed) {
    AnalysisOptions a;
    try {
        a.methods = parse_methods(s.methods);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("--methods", e.what());
    }
    a.mi_k = s.mi_k;
    a.seed = seed;
    a.threads = s.threads;
    a.validate();
    return a;
}

int cmd_analyze(const Settings& s, std::ostream& out, std::ostream& err) {
    const auto seed = resolve_seed(s.seed, 1);
    const auto options = analysis_options(s, seed);
    const auto ds = load(s.in);
    const auto results = run_analysis(ds, options);

    Sink sink(s.output, out);
    if (s.output.format == "json") {
        Json methods = Json::array();
        for (const auto& r : results) methods.push_back(to_json(r));
        Json method_names = Json::array();
        for (auto m : options.methods) method_names.push_back(to_string(m));
        auto prov = provenance(seed);
        prov["methods"] = method_names;
        prov["mi_k"] = options.mi_k;
        const Json report{{"provenance", prov},
                          {"descriptives", describe_json(ds)},
                          {"diagnostics", diagnose_json(ds)},
                          {"methods", methods}};
        sink.emit("analysis.json", dump(report));
    } else if (s.output.layout == "plain") {
        sink.emit("coefficients.csv", render([&](std::ostream& o) { write_coefficients_plain(o, results); }));
    } else {
        sink.emit("coefficients.csv", render([&](std::ostream& o) { write_coefficients_wide(o, results); }));
    }
    bool any = false;
    for (const auto& r : results) {
        any = any || r.ok;
        if (!r.ok) err << to_string(r.method) << " failed: " << r.error << '\n';
    }
    sink.summary(err);
    return any ? kExitOk : kExitAllFailed;
}

RunFileConfig file_config(const Settings& s) {
    return s.config.empty() ? RunFileConfig{} : load_config_file(s.config);
}

int cmd_simulate(const Settings& s, std::ostream& out, std::ostream& err) {
    auto cfg = file_config(s);
    cfg.generator.seed = resolve_seed(s.seed, cfg.generator.seed);
    const auto trial = generate(cfg.generator);
    OutputFlags flags = s.output;
    if (flags.out.empty()) flags.out = ".";
    Sink sink(flags, out);
    sink.emit("full.csv", render([&](std::ostream& o) { write_csv(o, trial.full); }));
    sink.emit("observed.csv", render([&](std::ostream& o) { write_csv(o, trial.observed); }));
    sink.summary(err);
    return kExitOk;
}

int cmd_study(const Settings& s, std::ostream& out, std::ostream& err, const CLI::App& sub) {
    auto cfg = file_config(s);
    cfg.generator.seed = resolve_seed(s.seed, cfg.generator.seed);
    StudyOptions opts;
    opts.n_reps = s.reps.value_or(cfg.reps.value_or(200));
    opts.threads = s.threads;
    if (cfg.level) opts.level = *cfg.level;
    opts.analysis = cfg.analysis;
    if (sub.count("--methods") > 0 || s.config.empty()) {
        try {
            opts.analysis.methods = parse_methods(s.methods);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("--methods", e.what());
        }
    }
    if (sub.count("--mi-k") > 0 || s.config.empty()) opts.analysis.mi_k = s.mi_k;
    opts.analysis.seed = cfg.generator.seed;
    const auto study = replicate_study(cfg.generator, opts);

    Sink sink(s.output, out);
    if (s.output.format == "json") {
        Json report = to_json(study);
        report["provenance"] = provenance(cfg.generator.seed);
        sink.emit("study.json", dump(report));
    } else {
        sink.emit("summary.csv", render([&](std::ostream& o) { write_study_csv(o, study); }));
    }
    sink.summary(err);
    return kExitOk;
}

void add_input(CLI::App* sub, Settings& s) {
    sub->add_option("--input", s.in.input, "Long-format CSV")->required();
    sub->add_flag("--raw-cd4", s.in.raw_cd4, "Outcome column holds raw CD4 counts");
    sub->add_flag("--allow-intermittent", s.in.allow_intermittent, "Accept non-monotone missingness");
}

void add_output(CLI::App* sub, Settings& s, bool layout) {
    sub->add_option("--out", s.output.out, "Output directory (stdout when omitted)");
    sub->add_option("--format", s.output.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    if (layout)
        sub->add_option("--layout", s.output.layout, "table or plain")->check(CLI::IsMember({"table", "plain"}));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Longitudinal trial analysis with dropout"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Settings s;

    auto* describe = app.add_subcommand("describe", "Retention and pattern-mean tables");
    add_input(describe, s);
    add_output(describe, s, false);

    auto* diagnose = app.add_subcommand("diagnose", "Dropout hazard model, Little's test, pattern chi-square");
    add_input(diagnose, s);
    add_output(diagnose, s, false);

    auto* analyze = app.add_subcommand("analyze", "Fit the mixed model under each missing-data method");
    add_input(analyze, s);
    add_output(analyze, s, true);

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic trial");
    simulate->add_option("--config", s.config, "TOML or JSON generator config");
    simulate->add_option("--out", s.output.out, "Output directory");

    auto* study = app.add_subcommand("study", "Monte Carlo comparison of the methods");
    study->add_option("--config", s.config, "TOML or JSON generator config");
    study->add_option("--reps", s.reps, "Number of replicates");
    add_output(study, s, false);

    for (auto* sub : {analyze, study}) {
        sub->add_option("--methods", s.methods, "Comma-separated subset of cc,locf,bocf,ml,mi");
        sub->add_option("--mi-k", s.mi_k, "Number of imputations");
        sub->add_option("--threads", s.threads, "Worker threads");
    }
    for (auto* sub : {analyze, simulate, study}) sub->add_option("--seed", s.seed, "RNG seed (falls back to LONGIMPUTE_SEED)");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (*describe) return cmd_describe(s, out, err);
        if (*diagnose) return cmd_diagnose(s, out, err);
        if (*analyze) return cmd_analyze(s, out, err);
        if (*simulate) return cmd_simulate(s, out, err);
        if (*study) return cmd_study(s, out, err, *study);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    }
    return kExitInputError;
}

}  // namespace longimpute::cli

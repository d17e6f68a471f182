#include <fstream>
#include <sstream>

#include <json.hpp>
#include <tomlplusplus/toml.hpp>

#include "longimpute/config.hpp"
#include "longimpute/errors.hpp"

namespace longimpute {

namespace {

using nlohmann::json;

json from_toml(const toml::node& node) {
    if (const auto* t = node.as_table()) {
        json out = json::object();
        for (const auto& [key, value] : *t) out[std::string(key.str())] = from_toml(value);
        return out;
    }
    if (const auto* a = node.as_array()) {
        json out = json::array();
        for (const auto& value : *a) out.push_back(from_toml(value));
        return out;
    }
    if (const auto* v = node.as_integer()) return v->get();
    if (const auto* v = node.as_floating_point()) return v->get();
    if (const auto* v = node.as_boolean()) return v->get();
    if (const auto* v = node.as_string()) return v->get();
    return nullptr;  // dates and times are not used
}

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected a table");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(join(path, key), "unknown key");
    }
}

double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    return v.get<std::int64_t>();
}

std::uint64_t seed_value(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    const auto s = integer(v, path);
    if (s < 0) throw ConfigError(path, "must be non-negative");
    return static_cast<std::uint64_t>(s);
}

std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

RunFileConfig from_json(const json& root) {
    RunFileConfig cfg;
    auto& g = cfg.generator;
    check_keys(root, "", {"seed", "n_per_arm", "schedule", "sigma_b2", "sigma_e2", "art_probability", "beta", "dropout",
                          "analysis", "study"});
    if (root.contains("seed")) g.seed = seed_value(root["seed"], "seed");
    if (root.contains("n_per_arm")) {
        const auto n = integer(root["n_per_arm"], "n_per_arm");
        if (n < 1) throw ConfigError("n_per_arm", "must be at least 1");
        g.n_per_arm = static_cast<std::size_t>(n);
    }
    if (root.contains("schedule")) {
        try {
            g.schedule = VisitSchedule(number_list(root["schedule"], "schedule"));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("schedule", e.what());
        }
    }
    if (root.contains("sigma_b2")) g.sigma_b2 = number(root["sigma_b2"], "sigma_b2");
    if (root.contains("sigma_e2")) g.sigma_e2 = number(root["sigma_e2"], "sigma_e2");
    if (root.contains("art_probability")) g.art_probability = number_list(root["art_probability"], "art_probability");

    if (root.contains("beta")) {
        const auto& b = root["beta"];
        check_keys(b, "beta", {"intercept", "prednisolone", "month", "prednisolone:month", "art", "prednisolone:art", "age"});
        for (std::size_t k = 0; k < g.beta.size(); ++k) {
            const std::string name(term_name(static_cast<Term>(k)));
            if (b.contains(name)) g.beta[k] = number(b[name], "beta." + name);
        }
    }
    if (root.contains("dropout")) {
        const auto& d = root["dropout"];
        auto& h = g.dropout;
        check_keys(d, "dropout", {"mechanism", "intercept", "coef_month", "coef_art", "coef_delta", "first_visit"});
        if (d.contains("mechanism")) {
            if (!d["mechanism"].is_string()) throw ConfigError("dropout.mechanism", "expected a string");
            const auto m = parse_mechanism(d["mechanism"].get<std::string>());
            if (!m) throw ConfigError("dropout.mechanism", "must be one of none, mcar, mar");
            h.mechanism = *m;
        }
        if (d.contains("intercept")) h.intercept = number(d["intercept"], "dropout.intercept");
        if (d.contains("coef_month")) h.coef_month = number(d["coef_month"], "dropout.coef_month");
        if (d.contains("coef_art")) h.coef_art = number(d["coef_art"], "dropout.coef_art");
        if (d.contains("coef_delta")) h.coef_delta = number(d["coef_delta"], "dropout.coef_delta");
        if (d.contains("first_visit")) {
            const auto v = integer(d["first_visit"], "dropout.first_visit");
            if (v < 2) throw ConfigError("dropout.first_visit", "must be at least 2");
            h.first_visit = static_cast<std::size_t>(v);
        }
    }
    if (root.contains("analysis")) {
        const auto& a = root["analysis"];
        check_keys(a, "analysis", {"methods", "mi_k"});
        if (a.contains("methods")) {
            const auto& m = a["methods"];
            if (!m.is_array()) throw ConfigError("analysis.methods", "expected an array of method names");
            std::string list;
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (!m[i].is_string()) throw ConfigError("analysis.methods[" + std::to_string(i) + "]", "expected a string");
                list += (i ? "," : "") + m[i].get<std::string>();
            }
            try {
                cfg.analysis.methods = m.empty() ? std::vector<Method>{} : parse_methods(list);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("analysis.methods", e.what());
            }
        }
        if (a.contains("mi_k")) cfg.analysis.mi_k = static_cast<int>(integer(a["mi_k"], "analysis.mi_k"));
    }
    if (root.contains("study")) {
        const auto& s = root["study"];
        check_keys(s, "study", {"reps", "level"});
        if (s.contains("reps")) cfg.reps = static_cast<int>(integer(s["reps"], "study.reps"));
        if (s.contains("level")) cfg.level = number(s["level"], "study.level");
    }
    g.validate();
    try {
        cfg.analysis.validate();
    } catch (const ConfigError& e) {
        throw ConfigError("analysis." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
    return cfg;
}

}  // namespace

RunFileConfig parse_config(std::string_view text, ConfigFormat format) {
    json root;
    if (format == ConfigFormat::Json) {
        try {
            root = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError("<file>", e.what());
        }
    } else {
        try {
            root = from_toml(toml::parse(text));
        } catch (const toml::parse_error& e) {
            std::ostringstream msg;
            msg << e.description() << " at line " << e.source().begin.line;
            throw ConfigError("<file>", msg.str());
        }
    }
    return from_json(root);
}

RunFileConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path, "cannot open config file");
    std::ostringstream buf;
    buf << in.rdbuf();
    const bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    return parse_config(buf.str(), is_json ? ConfigFormat::Json : ConfigFormat::Toml);
}

}  // namespace longimpute

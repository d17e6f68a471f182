#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "longimpute/analysis.hpp"
#include "longimpute/errors.hpp"
#include "longimpute/parallel.hpp"
#include "longimpute/stats.hpp"

namespace longimpute {

std::string_view to_string(Method method) {
    switch (method) {
        case Method::Cc: return "cc";
        case Method::Locf: return "locf";
        case Method::Bocf: return "bocf";
        case Method::Ml: return "ml";
        case Method::Mi: return "mi";
    }
    return "?";
}

std::string_view display_name(Method method) {
    switch (method) {
        case Method::Cc: return "CC";
        case Method::Locf: return "LOCF";
        case Method::Bocf: return "BOCF";
        case Method::Ml: return "ML";
        case Method::Mi: return "MI";
    }
    return "?";
}

std::optional<Method> parse_method(std::string_view token) {
    for (auto m : kAllMethods)
        if (token == to_string(m)) return m;
    return std::nullopt;
}

std::vector<Method> parse_methods(std::string_view list) {
    std::vector<Method> out;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        const auto comma = std::min(list.find(',', pos), list.size());
        const auto token = list.substr(pos, comma - pos);
        const auto m = parse_method(token);
        if (!m) throw std::invalid_argument("unknown method '" + std::string(token) + "'");
        if (std::find(out.begin(), out.end(), *m) != out.end())
            throw std::invalid_argument("method '" + std::string(token) + "' listed twice");
        out.push_back(*m);
        pos = comma + 1;
    }
    return out;
}

void AnalysisOptions::validate() const {
    if (methods.empty()) throw ConfigError("methods", "at least one method is required");
    const bool has_mi = std::find(methods.begin(), methods.end(), Method::Mi) != methods.end();
    if (has_mi && mi_k < 2) throw ConfigError("mi_k", "must be at least 2 when mi is selected");
    if (threads < 1) throw ConfigError("threads", "must be at least 1");
    try {
        model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("model", e.what());
    }
}

std::pair<double, double> MethodResult::interval(Eigen::Index k, double level) const {
    const double alpha = 1.0 - level;
    const double q = std::isfinite(df(k)) ? stats::student_t_quantile(1.0 - alpha / 2.0, df(k))
                                          : stats::normal_quantile(1.0 - alpha / 2.0);
    return {estimate(k) - q * se(k), estimate(k) + q * se(k)};
}

namespace {

MethodResult from_fit(Method method, const LmmFit& fit) {
    MethodResult r;
    r.method = method;
    r.ok = true;
    r.names = fit.names;
    r.estimate = fit.beta;
    r.se = fit.beta_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    r.p.resize(r.se.size());
    for (Eigen::Index k = 0; k < r.se.size(); ++k)
        r.p(k) = r.se(k) > 0.0 ? stats::normal_two_sided_p(r.estimate(k) / r.se(k))
                               : std::numeric_limits<double>::quiet_NaN();
    r.df = Eigen::VectorXd::Constant(r.se.size(), std::numeric_limits<double>::infinity());
    r.vc = fit.vc;
    r.loglik = fit.loglik;
    r.n_subjects = fit.n_subjects;
    return r;
}

MethodResult run_mi(const LongitudinalDataset& ds, const AnalysisOptions& options) {
    const auto completed = multiple_impute(ds, options.mi_k, options.imputation, options.seed);
    std::vector<CoefficientEstimates> estimates(completed.size());
    parallel_for(completed.size(), options.threads, [&](std::size_t k) {
        estimates[k] = CoefficientEstimates::from_fit(fit_ml(completed[k].data, options.model, options.fit));
    });
    const auto pooled = pool(estimates);
    MethodResult r;
    r.method = Method::Mi;
    r.ok = true;
    r.names = pooled.names;
    r.estimate = pooled.point;
    r.se = pooled.total.cwiseMax(0.0).cwiseSqrt();
    r.df = pooled.df;
    r.p.resize(r.se.size());
    for (Eigen::Index k = 0; k < r.se.size(); ++k)
        r.p(k) = r.se(k) > 0.0 ? pooled.p_value(k) : std::numeric_limits<double>::quiet_NaN();
    r.n_subjects = ds.size();
    return r;
}

}  // namespace

MethodResult run_method(const LongitudinalDataset& ds, Method method, const AnalysisOptions& options) {
    try {
        switch (method) {
            case Method::Cc: return from_fit(method, fit_ml(complete_case(ds).data, options.model, options.fit));
            case Method::Locf: return from_fit(method, fit_ml(locf(ds).data, options.model, options.fit));
            case Method::Bocf: return from_fit(method, fit_ml(bocf(ds).data, options.model, options.fit));
            case Method::Ml: return from_fit(method, fit_ml(ds, options.model, options.fit));
            case Method::Mi: return run_mi(ds, options);
        }
    } catch (const std::exception& e) {
        MethodResult r;
        r.method = method;
        r.ok = false;
        r.error = e.what();
        return r;
    }
    throw std::logic_error("unknown method");
}

std::vector<MethodResult> run_analysis(const LongitudinalDataset& ds, const AnalysisOptions& options) {
    options.validate();
    std::vector<MethodResult> out;
    for (auto m : options.methods) out.push_back(run_method(ds, m, options));
    return out;
}

}  // namespace longimpute

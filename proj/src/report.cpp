#include <cmath>
#include <ostream>

#include "longimpute/report.hpp"
#include "longimpute/stats.hpp"

namespace longimpute {

namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string csv_number(double v) { return std::isfinite(v) ? format_number(v) : "NA"; }

std::string indicator_string(const std::vector<std::uint8_t>& r) {
    std::string s;
    for (auto v : r) s += v ? '1' : '0';
    return s;
}

template <typename Fn>
Json guarded(Fn&& fn) {
    try {
        Json out = fn();
        out["ok"] = true;
        return out;
    } catch (const std::exception& e) {
        return Json{{"ok", false}, {"error", e.what()}};
    }
}

}  // namespace

Json to_json(const LmmFit& fit) {
    Json beta = Json::object(), se = Json::object(), p = Json::object();
    for (std::size_t k = 0; k < fit.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const double s = std::sqrt(std::max(fit.beta_cov(i, i), 0.0));
        beta[fit.names[k]] = fit.beta(i);
        se[fit.names[k]] = s;
        p[fit.names[k]] = s > 0.0 ? number_or_null(stats::normal_two_sided_p(fit.beta(i) / s))
                                  : Json(nullptr);
    }
    return Json{{"beta", beta},
                {"se", se},
                {"p", p},
                {"sigma_b2", fit.vc.sigma_b2},
                {"sigma_e2", fit.vc.sigma_e2},
                {"loglik", fit.loglik},
                {"converged", fit.converged},
                {"boundary", fit.boundary}};
}

Json to_json(const PooledEstimate& pooled) {
    Json rows = Json::array();
    for (std::size_t k = 0; k < pooled.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        rows.push_back(Json{{"coef", pooled.names[k]},
                            {"estimate", pooled.point(i)},
                            {"within", pooled.within(i)},
                            {"between", pooled.between(i)},
                            {"total", pooled.total(i)},
                            {"df", pooled.df(i)},
                            {"p", pooled.total(i) > 0.0 ? number_or_null(pooled.p_value(i)) : Json(nullptr)}});
    }
    return rows;
}

Json to_json(const DropoutFit& fit) {
    Json rows = Json::array();
    for (const auto& r : fit.odds_ratios)
        rows.push_back(Json{{"variable", r.variable},
                            {"odds_ratio", r.odds_ratio},
                            {"se", r.se},
                            {"ci_low", r.ci_low},
                            {"ci_high", r.ci_high},
                            {"p", r.p}});
    return Json{{"odds_ratios", rows},
                {"intercept", fit.intercept},
                {"sigma_b", fit.sigma_b},
                {"loglik", fit.loglik},
                {"converged", fit.converged},
                {"n_records", fit.n_records},
                {"n_events", fit.n_events},
                {"n_subjects", fit.n_subjects}};
}

Json to_json(const McarTestResult& r) {
    return Json{{"statistic", r.statistic}, {"df", r.df}, {"p", r.p}, {"n_patterns", r.n_patterns}};
}

Json to_json(const ChiSquareResult& r) {
    return Json{{"statistic", r.statistic},
                {"df", r.df},
                {"p", r.p},
                {"min_expected", r.min_expected},
                {"small_cell_warning", r.small_cell_warning}};
}

Json to_json(const MethodResult& r) {
    Json out{{"method", to_string(r.method)}, {"status", r.ok ? "ok" : "failed"}};
    if (!r.ok) {
        out["error"] = r.error;
        return out;
    }
    Json rows = Json::array();
    for (std::size_t k = 0; k < r.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        rows.push_back(Json{{"coef", r.names[k]},
                            {"estimate", r.estimate(i)},
                            {"se", number_or_null(r.se(i))},
                            {"p", number_or_null(r.p(i))},
                            {"df", number_or_null(r.df(i))}});
    }
    out["coefficients"] = rows;
    if (r.vc) {
        out["sigma_b2"] = r.vc->sigma_b2;
        out["sigma_e2"] = r.vc->sigma_e2;
    }
    if (r.loglik) out["loglik"] = *r.loglik;
    out["n_subjects"] = r.n_subjects;
    return out;
}

Json to_json(const StudyResult& study) {
    Json methods = Json::array();
    for (const auto& s : study.summaries) {
        Json rows = Json::array();
        for (std::size_t k = 0; k < study.names.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            rows.push_back(Json{{"coef", study.names[k]},
                                {"truth", study.truth(i)},
                                {"mean_bias", number_or_null(s.mean_bias(i))},
                                {"bias_mcse", number_or_null(s.bias_mcse(i))},
                                {"empirical_se", number_or_null(s.empirical_se(i))},
                                {"mean_se", number_or_null(s.mean_se(i))},
                                {"coverage", number_or_null(s.coverage(i))}});
        }
        methods.push_back(
            Json{{"method", to_string(s.method)}, {"n_ok", s.n_ok}, {"n_failed", s.n_failed}, {"coefficients", rows}});
    }
    return Json{{"n_reps", study.replicates.size()}, {"methods", methods}};
}

Json describe_json(const LongitudinalDataset& ds) {
    Json retention = Json::array();
    for (const auto& r : retention_table(ds)) {
        Json visits = Json::array();
        for (std::size_t j = 0; j < r.count.size(); ++j)
            visits.push_back(Json{{"month", ds.schedule().month(j)}, {"n", r.count[j]}, {"percent", r.percent[j]}});
        retention.push_back(Json{{"arm", to_string(r.arm)}, {"n", r.arm_total}, {"visits", visits}});
    }
    const auto pm = pattern_means(ds);
    Json rows = Json::array();
    for (const auto& r : pm.rows) {
        Json mean = Json::array();
        for (const auto& m : r.mean) mean.push_back(m ? Json(*m) : Json(nullptr));
        rows.push_back(Json{{"arm", to_string(r.arm)},
                            {"pattern", r.pattern},
                            {"indicators", indicator_string(r.indicators)},
                            {"n", r.count},
                            {"percent", r.percent},
                            {"mean", mean}});
    }
    Json overall = Json::array();
    for (const auto& v : pm.overall) {
        Json mean = Json::array(), sd = Json::array(), n = Json::array();
        for (std::size_t j = 0; j < v.n.size(); ++j) {
            n.push_back(v.n[j]);
            mean.push_back(number_or_null(v.mean[j]));
            sd.push_back(number_or_null(v.sd[j]));
        }
        overall.push_back(Json{{"arm", to_string(v.arm)}, {"n", n}, {"mean", mean}, {"sd", sd}});
    }
    return Json{{"n_subjects", ds.size()},
                {"months", ds.schedule().months()},
                {"retention", retention},
                {"pattern_means", Json{{"rows", rows}, {"overall", overall}}}};
}

Json diagnose_json(const LongitudinalDataset& ds, const DropoutModelSpec& spec) {
    return Json{{"dropout_model", guarded([&] { return to_json(fit_dropout_logistic(dropout_design(ds, spec.start_visit), spec)); })},
                {"mcar_test", guarded([&] { return to_json(little_mcar_test(ds)); })},
                {"pattern_chi2", guarded([&] { return to_json(pattern_chi2(ds)); })}};
}

void write_retention_csv(std::ostream& out, const LongitudinalDataset& ds) {
    out << "arm,month,n,percent\n";
    for (const auto& r : retention_table(ds))
        for (std::size_t j = 0; j < r.count.size(); ++j)
            out << to_string(r.arm) << ',' << format_number(ds.schedule().month(j)) << ',' << r.count[j] << ','
                << csv_number(r.percent[j]) << '\n';
}

void write_pattern_means_csv(std::ostream& out, const LongitudinalDataset& ds) {
    out << "arm,pattern,indicators,n,percent";
    for (double m : ds.schedule().months()) out << ",month_" << format_number(m);
    out << '\n';
    for (const auto& r : pattern_means(ds).rows) {
        out << to_string(r.arm) << ',' << r.pattern << ',' << indicator_string(r.indicators) << ',' << r.count << ','
            << csv_number(r.percent);
        for (const auto& m : r.mean) out << ',' << (m ? format_number(*m) : "NA");
        out << '\n';
    }
}

void write_dropout_csv(std::ostream& out, const DropoutFit& fit) {
    out << "variable,odds_ratio,se,ci_low,ci_high,p\n";
    for (const auto& r : fit.odds_ratios)
        out << r.variable << ',' << csv_number(r.odds_ratio) << ',' << csv_number(r.se) << ',' << csv_number(r.ci_low)
            << ',' << csv_number(r.ci_high) << ',' << csv_number(r.p) << '\n';
}

void write_coefficients_wide(std::ostream& out, std::span<const MethodResult> results) {
    std::vector<std::string> names;
    for (const auto& r : results)
        if (r.ok) {
            names = r.names;
            break;
        }
    out << "method";
    for (const auto& n : names) out << ',' << n << "_est," << n << "_se," << n << "_p";
    out << ",status\n";
    for (const auto& r : results) {
        out << display_name(r.method);
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (!r.ok) {
                out << ",NA,NA,NA";
                continue;
            }
            const auto i = static_cast<Eigen::Index>(k);
            out << ',' << csv_number(r.estimate(i)) << ',' << csv_number(r.se(i)) << ','
                << (std::isfinite(r.p(i)) ? format_p_value(r.p(i)) : "NA");
        }
        out << ',' << (r.ok ? "ok" : "failed") << '\n';
    }
}

void write_coefficients_plain(std::ostream& out, std::span<const MethodResult> results) {
    out << "method,coefficient,estimate,se,p,df,status\n";
    for (const auto& r : results) {
        if (!r.ok) {
            out << to_string(r.method) << ",NA,NA,NA,NA,NA,failed\n";
            continue;
        }
        for (std::size_t k = 0; k < r.names.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            out << to_string(r.method) << ',' << r.names[k] << ',' << csv_number(r.estimate(i)) << ','
                << csv_number(r.se(i)) << ',' << csv_number(r.p(i)) << ',' << csv_number(r.df(i)) << ",ok\n";
        }
    }
}

void write_study_csv(std::ostream& out, const StudyResult& study) {
    out << "method,coefficient,truth,mean_bias,bias_mcse,empirical_se,mean_se,coverage,n_ok,n_failed\n";
    for (const auto& s : study.summaries)
        for (std::size_t k = 0; k < study.names.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            out << to_string(s.method) << ',' << study.names[k] << ',' << csv_number(study.truth(i)) << ','
                << csv_number(s.mean_bias(i)) << ',' << csv_number(s.bias_mcse(i)) << ','
                << csv_number(s.empirical_se(i)) << ',' << csv_number(s.mean_se(i)) << ','
                << csv_number(s.coverage(i)) << ',' << s.n_ok << ',' << s.n_failed << '\n';
        }
}

}  // namespace longimpute

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "longimpute/errors.hpp"
#include "longimpute/parallel.hpp"
#include "longimpute/rng.hpp"
#include "longimpute/study.hpp"

namespace longimpute {

void StudyOptions::validate() const {
    if (n_reps < 2) throw ConfigError("reps", "must be at least 2");
    if (threads < 1) throw ConfigError("threads", "must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("level", "must lie in (0, 1)");
    analysis.validate();
}

const MethodSummary& StudyResult::summary(Method method) const {
    for (const auto& s : summaries)
        if (s.method == method) return s;
    throw std::out_of_range("method not part of the study");
}

Eigen::VectorXd generator_truth(const TrialGeneratorConfig& config, const ModelSpec& spec) {
    Eigen::VectorXd truth(static_cast<Eigen::Index>(spec.n_fixed()));
    for (std::size_t k = 0; k < spec.n_fixed(); ++k)
        truth(static_cast<Eigen::Index>(k)) = config.beta[static_cast<std::size_t>(spec.fixed_terms[k])];
    return truth;
}

StudyResult replicate_study(const TrialGeneratorConfig& config, const StudyOptions& options) {
    options.validate();
    config.validate();
    StudyResult study;
    study.names = options.analysis.model.coefficient_names();
    study.truth = generator_truth(config, options.analysis.model);
    study.methods = options.analysis.methods;
    const auto p = study.truth.size();

    study.replicates.resize(static_cast<std::size_t>(options.n_reps));
    parallel_for(study.replicates.size(), options.threads, [&](std::size_t r) {
        auto& rec = study.replicates[r];
        rec.index = static_cast<int>(r);
        rec.data_seed = derive_seed(config.seed, r);
        rec.analysis_seed = derive_seed(options.analysis.seed, r);
        auto cfg = config;
        cfg.seed = rec.data_seed;
        auto opts = options.analysis;
        opts.seed = rec.analysis_seed;
        opts.threads = 1;
        const auto trial = generate(cfg);
        for (auto m : study.methods) {
            const auto res = run_method(trial.observed, m, opts);
            ReplicateOutcome out;
            out.ok = res.ok;
            out.error = res.error;
            if (res.ok) {
                out.estimate = res.estimate;
                out.se = res.se;
                for (Eigen::Index k = 0; k < p; ++k) {
                    const auto [lo, hi] = res.interval(k, options.level);
                    out.covered.push_back(lo <= study.truth(k) && study.truth(k) <= hi);
                }
            }
            rec.methods.push_back(std::move(out));
        }
    });

    for (std::size_t mi = 0; mi < study.methods.size(); ++mi) {
        MethodSummary s;
        s.method = study.methods[mi];
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(p), sum_se = Eigen::VectorXd::Zero(p),
                        covered = Eigen::VectorXd::Zero(p);
        for (const auto& rec : study.replicates) {
            const auto& o = rec.methods[mi];
            if (!o.ok) {
                ++s.n_failed;
                continue;
            }
            ++s.n_ok;
            sum += o.estimate - study.truth;
            sum_se += o.se;
            for (Eigen::Index k = 0; k < p; ++k) covered(k) += o.covered[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        }
        const double n = s.n_ok;
        s.mean_bias = Eigen::VectorXd::Constant(p, std::nan(""));
        s.empirical_se = s.mean_bias;
        s.bias_mcse = s.mean_bias;
        s.mean_se = s.mean_bias;
        s.coverage = s.mean_bias;
        if (s.n_ok > 0) {
            s.mean_bias = sum / n;
            s.mean_se = sum_se / n;
            s.coverage = covered / n;
        }
        if (s.n_ok > 1) {
            Eigen::VectorXd ss = Eigen::VectorXd::Zero(p);
            for (const auto& rec : study.replicates) {
                const auto& o = rec.methods[mi];
                if (o.ok) ss += (o.estimate - study.truth - s.mean_bias).array().square().matrix();
            }
            s.empirical_se = (ss / (n - 1.0)).cwiseSqrt();
            s.bias_mcse = s.empirical_se / std::sqrt(n);
        }
        study.summaries.push_back(std::move(s));
    }
    return study;
}

PairedDifference paired_difference(const StudyResult& study, Method a, Method b, Eigen::Index coefficient) {
    const auto ia = std::find(study.methods.begin(), study.methods.end(), a) - study.methods.begin();
    const auto ib = std::find(study.methods.begin(), study.methods.end(), b) - study.methods.begin();
    if (static_cast<std::size_t>(ia) == study.methods.size() || static_cast<std::size_t>(ib) == study.methods.size())
        throw std::out_of_range("method not part of the study");
    std::vector<double> diffs;
    for (const auto& rec : study.replicates) {
        const auto& oa = rec.methods[static_cast<std::size_t>(ia)];
        const auto& ob = rec.methods[static_cast<std::size_t>(ib)];
        if (oa.ok && ob.ok) diffs.push_back(oa.estimate(coefficient) - ob.estimate(coefficient));
    }
    PairedDifference out;
    out.n = static_cast<int>(diffs.size());
    if (diffs.empty()) return out;
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= out.n;
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    out.mean = mean;
    out.mcse = out.n > 1 ? std::sqrt(ss / (out.n - 1) / out.n) : std::nan("");
    return out;
}

}  // namespace longimpute

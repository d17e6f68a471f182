#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "longimpute/analysis.hpp"
#include "longimpute/dataset.hpp"
#include "longimpute/diagnostics.hpp"
#include "longimpute/impute.hpp"
#include "longimpute/lmm.hpp"
#include "longimpute/study.hpp"

namespace longimpute {

using Json = nlohmann::ordered_json;

Json to_json(const LmmFit& fit);                 // beta, se, p, sigma_b2, sigma_e2, loglik, converged, boundary
Json to_json(const PooledEstimate& pooled);      // one row per coefficient
Json to_json(const DropoutFit& fit);             // odds-ratio rows plus model summary
Json to_json(const McarTestResult& result);
Json to_json(const ChiSquareResult& result);
Json to_json(const MethodResult& result);
Json to_json(const StudyResult& study);

Json describe_json(const LongitudinalDataset& ds);  // retention, pattern_means
Json diagnose_json(const LongitudinalDataset& ds, const DropoutModelSpec& spec = {});

// Retention per arm and visit.
void write_retention_csv(std::ostream& out, const LongitudinalDataset& ds);
// Mean sqrt(CD4) per arm, dropout pattern and visit.
void write_pattern_means_csv(std::ostream& out, const LongitudinalDataset& ds);
void write_dropout_csv(std::ostream& out, const DropoutFit& fit);

// Wide layout: one row per method, est/se/p triples per coefficient.
void write_coefficients_wide(std::ostream& out, std::span<const MethodResult> results);
// Long layout: method, coefficient, estimate, se, p, df, status.
void write_coefficients_plain(std::ostream& out, std::span<const MethodResult> results);
// One row per method and coefficient.
void write_study_csv(std::ostream& out, const StudyResult& study);

}  // namespace longimpute

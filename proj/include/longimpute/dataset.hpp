#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace longimpute {

enum class Arm : std::uint8_t { Placebo = 0, Prednisolone = 1 };

std::string_view to_string(Arm arm);
std::optional<Arm> parse_arm(std::string_view token);

// Ordered visit times in months; the first visit is baseline (month 0).
class VisitSchedule {
public:
    VisitSchedule();  // baseline, week 2, months 1, 3, 6
    explicit VisitSchedule(std::vector<double> months);

    std::size_t size() const noexcept { return months_.size(); }
    double month(std::size_t visit) const { return months_.at(visit); }
    const std::vector<double>& months() const noexcept { return months_; }
    std::optional<std::size_t> index_of(double month) const;

    bool operator==(const VisitSchedule&) const = default;

private:
    std::vector<double> months_;
};

struct SubjectRecord {
    std::string id;
    Arm arm = Arm::Placebo;
    double age = 0.0;
    std::vector<std::optional<double>> outcomes;  // sqrt(CD4) per visit
    std::vector<std::uint8_t> art;                // on ART at each visit

    std::size_t n_observed() const;
    bool operator==(const SubjectRecord&) const = default;
};

// Per-subject response indicators. Visits are 0-based in code; the dropout
// occasion keeps the 1-based convention D = 1 + (1-based index of the last
// observed visit), so a subject seen at visits 1 and 2 only has D = 3.
struct MissingnessPattern {
    std::vector<std::uint8_t> observed;
    std::optional<int> dropout_occasion;  // empty for completers

    bool is_completer() const noexcept { return !dropout_occasion.has_value(); }
    std::size_t n_observed() const;
    bool is_monotone() const;
    // 1-based index of the last observed visit (0 when nothing is observed).
    std::size_t last_observed() const;

    static MissingnessPattern from_indicators(std::vector<std::uint8_t> observed);
    // Rebuilds a monotone indicator vector of length n_visits.
    static MissingnessPattern from_dropout(std::optional<int> dropout_occasion,
                                           std::size_t n_visits);
    bool operator==(const MissingnessPattern&) const = default;
};

enum class Monotonicity { Monotone, Intermittent };

Monotonicity classify_monotonicity(std::span<const std::vector<std::uint8_t>> indicators);

struct DatasetOptions {
    bool allow_intermittent = false;
    std::size_t min_observed = 2;
    bool nonnegative = true;  // imputed datasets may hold negative draws
};

// Immutable long-format trial data. Subjects are kept sorted by id.
class LongitudinalDataset {
public:
    LongitudinalDataset(VisitSchedule schedule, std::vector<SubjectRecord> subjects,
                        DatasetOptions options = {});

    const VisitSchedule& schedule() const noexcept { return schedule_; }
    const std::vector<SubjectRecord>& subjects() const noexcept { return subjects_; }
    const std::vector<MissingnessPattern>& patterns() const noexcept { return patterns_; }
    const DatasetOptions& options() const noexcept { return options_; }
    std::size_t size() const noexcept { return subjects_.size(); }
    std::size_t n_visits() const noexcept { return schedule_.size(); }
    std::size_t n_observed_cells() const;
    std::size_t n_missing_cells() const;

    Monotonicity monotonicity() const;
    bool is_monotone() const { return monotonicity() == Monotonicity::Monotone; }

    bool operator==(const LongitudinalDataset& other) const {
        return schedule_ == other.schedule_ && subjects_ == other.subjects_;
    }

private:
    VisitSchedule schedule_;
    std::vector<SubjectRecord> subjects_;
    std::vector<MissingnessPattern> patterns_;
    DatasetOptions options_;
};

Monotonicity is_monotone(const LongitudinalDataset& ds);

struct CsvOptions {
    bool raw_cd4 = false;  // input column holds CD4 counts; take the square root
    DatasetOptions dataset;
};

// Header: subject_id,arm,age,month,sqrt_cd4,art. Extra trailing columns
// (strategy, imputation_index) are accepted and ignored.
LongitudinalDataset load_csv(std::istream& in, const VisitSchedule& schedule = {},
                             const CsvOptions& options = {});
LongitudinalDataset load_csv_file(const std::string& path, const VisitSchedule& schedule = {},
                                  const CsvOptions& options = {});

// Canonical long format: one row per subject and scheduled visit, missing as NA.
void write_csv(std::ostream& out, const LongitudinalDataset& ds);

std::string format_number(double value);

// ---------------------------------------------------------------------------
// Descriptive summaries
// ---------------------------------------------------------------------------

struct RetentionRow {
    Arm arm;
    std::size_t arm_total = 0;
    std::vector<std::size_t> count;    // per visit, subjects with R = 1
    std::vector<double> percent;       // per visit, 100 * count / arm_total
};

std::vector<RetentionRow> retention_table(const LongitudinalDataset& ds);

struct PatternMeansRow {
    Arm arm;
    std::vector<std::uint8_t> indicators;
    std::size_t pattern = 0;  // number of observed visits - 1
    std::size_t count = 0;
    double percent = 0.0;
    std::vector<std::optional<double>> mean;  // per visit; empty where unobserved
};

struct VisitSummary {
    Arm arm;
    std::vector<std::size_t> n;
    std::vector<double> mean;
    std::vector<double> sd;  // sample sd (n - 1); NaN when n < 2
};

struct PatternMeans {
    std::vector<PatternMeansRow> rows;  // by arm, then pattern descending
    std::vector<VisitSummary> overall;  // one per arm
};

PatternMeans pattern_means(const LongitudinalDataset& ds);

}  // namespace longimpute

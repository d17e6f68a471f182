#include "longimpute/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "longimpute/errors.hpp"

namespace longimpute {

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_double(std::string_view token) {
    if (token.empty()) return std::nullopt;
    if (token.front() == '+') token.remove_prefix(1);
    double value = 0.0;
    const auto* end = token.data() + token.size();
    const auto res = std::from_chars(token.data(), end, value);
    if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(value)) return std::nullopt;
    return value;
}

bool is_missing_token(std::string_view token) { return token.empty() || token == "NA"; }

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

constexpr std::string_view kHeader[] = {"subject_id", "arm", "age", "month", "sqrt_cd4", "art"};

}  // namespace

std::string_view to_string(Arm arm) {
    return arm == Arm::Placebo ? "placebo" : "prednisolone";
}

std::optional<Arm> parse_arm(std::string_view token) {
    const auto t = lower(token);
    if (t == "placebo" || t == "0") return Arm::Placebo;
    if (t == "prednisolone" || t == "1") return Arm::Prednisolone;
    return std::nullopt;
}

// ---------------------------------------------------------------------------

VisitSchedule::VisitSchedule() : months_{0.0, 0.5, 1.0, 3.0, 6.0} {}

VisitSchedule::VisitSchedule(std::vector<double> months) : months_(std::move(months)) {
    if (months_.size() < 2) throw ScheduleError("visit schedule needs at least two visits");
    if (months_.front() != 0.0) throw ScheduleError("first visit must be baseline (month 0)");
    for (std::size_t j = 1; j < months_.size(); ++j) {
        if (!std::isfinite(months_[j]) || !(months_[j] > months_[j - 1]))
            throw ScheduleError("visit months must be strictly increasing");
    }
}

std::optional<std::size_t> VisitSchedule::index_of(double month) const {
    for (std::size_t j = 0; j < months_.size(); ++j) {
        if (std::abs(months_[j] - month) < 1e-9) return j;
    }
    return std::nullopt;
}

std::size_t SubjectRecord::n_observed() const {
    return static_cast<std::size_t>(
        std::count_if(outcomes.begin(), outcomes.end(), [](const auto& y) { return y.has_value(); }));
}

// ---------------------------------------------------------------------------

std::size_t MissingnessPattern::n_observed() const {
    return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), std::uint8_t{1}));
}

std::size_t MissingnessPattern::last_observed() const {
    for (std::size_t j = observed.size(); j > 0; --j) {
        if (observed[j - 1]) return j;
    }
    return 0;
}

bool MissingnessPattern::is_monotone() const {
    bool seen_missing = false;
    for (auto r : observed) {
        if (!r) seen_missing = true;
        else if (seen_missing) return false;
    }
    return true;
}

MissingnessPattern MissingnessPattern::from_indicators(std::vector<std::uint8_t> observed) {
    MissingnessPattern p;
    p.observed = std::move(observed);
    const auto last = p.last_observed();
    if (last < p.observed.size()) p.dropout_occasion = static_cast<int>(last) + 1;
    return p;
}

MissingnessPattern MissingnessPattern::from_dropout(std::optional<int> dropout_occasion,
                                                    std::size_t n_visits) {
    std::vector<std::uint8_t> r(n_visits, 1);
    if (dropout_occasion) {
        const auto first_missing = static_cast<std::size_t>(std::max(*dropout_occasion - 1, 0));
        for (std::size_t j = first_missing; j < n_visits; ++j) r[j] = 0;
    }
    return from_indicators(std::move(r));
}

Monotonicity classify_monotonicity(std::span<const std::vector<std::uint8_t>> indicators) {
    for (const auto& row : indicators) {
        bool seen_missing = false;
        for (auto r : row) {
            if (!r) seen_missing = true;
            else if (seen_missing) return Monotonicity::Intermittent;
        }
    }
    return Monotonicity::Monotone;
}

// ---------------------------------------------------------------------------

LongitudinalDataset::LongitudinalDataset(VisitSchedule schedule, std::vector<SubjectRecord> subjects,
                                         DatasetOptions options)
    : schedule_(std::move(schedule)), subjects_(std::move(subjects)), options_(options) {
    const auto n = schedule_.size();
    std::sort(subjects_.begin(), subjects_.end(),
              [](const SubjectRecord& a, const SubjectRecord& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < subjects_.size(); ++i) {
        if (subjects_[i].id == subjects_[i - 1].id)
            throw DuplicationError("duplicate subject_id '" + subjects_[i].id + "'");
    }
    patterns_.reserve(subjects_.size());
    for (const auto& s : subjects_) {
        if (s.outcomes.size() != n || s.art.size() != n)
            throw ShapeError("subject '" + s.id + "' does not match the visit schedule length");
        std::vector<std::uint8_t> r(n, 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (s.outcomes[j]) {
                if (!std::isfinite(*s.outcomes[j]) || (options_.nonnegative && *s.outcomes[j] < 0.0))
                    throw DomainError("subject '" + s.id + "': sqrt_cd4 must be finite and >= 0");
                r[j] = 1;
            }
            if (s.art[j] > 1) throw DomainError("subject '" + s.id + "': art must be 0 or 1");
        }
        if (!r[0]) throw EligibilityError("subject '" + s.id + "': baseline outcome is missing");
        auto pattern = MissingnessPattern::from_indicators(std::move(r));
        if (pattern.n_observed() < options_.min_observed)
            throw EligibilityError("subject '" + s.id + "' has " +
                                   std::to_string(pattern.n_observed()) + " observed outcomes (need " +
                                   std::to_string(options_.min_observed) + ")");
        if (!options_.allow_intermittent && !pattern.is_monotone())
            throw IntermittentMissingnessError("subject '" + s.id + "' has intermittent missing outcomes");
        patterns_.push_back(std::move(pattern));
    }
}

std::size_t LongitudinalDataset::n_observed_cells() const {
    return std::accumulate(patterns_.begin(), patterns_.end(), std::size_t{0},
                           [](std::size_t acc, const auto& p) { return acc + p.n_observed(); });
}

std::size_t LongitudinalDataset::n_missing_cells() const {
    return subjects_.size() * n_visits() - n_observed_cells();
}

Monotonicity LongitudinalDataset::monotonicity() const {
    for (const auto& p : patterns_) {
        if (!p.is_monotone()) return Monotonicity::Intermittent;
    }
    return Monotonicity::Monotone;
}

Monotonicity is_monotone(const LongitudinalDataset& ds) { return ds.monotonicity(); }

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

LongitudinalDataset load_csv(std::istream& in, const VisitSchedule& schedule, const CsvOptions& options) {
    struct Pending {
        SubjectRecord record;
        std::vector<std::optional<std::uint8_t>> art;
        std::vector<std::uint8_t> seen;
        std::size_t first_line = 0;
    };
    std::map<std::string, Pending> by_id;
    const auto n = schedule.size();

    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (!have_header) {
            if (fields.size() < 6) throw ParseError(line_no, "header must start with subject_id,arm,age,month,sqrt_cd4,art");
            for (std::size_t c = 0; c < 6; ++c) {
                if (fields[c] != kHeader[c])
                    throw ParseError(line_no, "expected header column '" + std::string(kHeader[c]) + "', got '" +
                                                  std::string(fields[c]) + "'");
            }
            have_header = true;
            continue;
        }
        if (fields.size() < 6) throw ParseError(line_no, "expected at least 6 fields, got " + std::to_string(fields.size()));

        const std::string id(fields[0]);
        if (id.empty()) throw ParseError(line_no, "empty subject_id");
        const auto arm = parse_arm(fields[1]);
        if (!arm) throw ParseError(line_no, "unrecognised arm '" + std::string(fields[1]) + "'");
        const auto age = parse_double(fields[2]);
        if (!age) throw ParseError(line_no, "age is not numeric: '" + std::string(fields[2]) + "'");
        const auto month = parse_double(fields[3]);
        if (!month) throw ParseError(line_no, "month is not numeric: '" + std::string(fields[3]) + "'");
        const auto visit = schedule.index_of(*month);
        if (!visit) throw ParseError(line_no, "month " + std::string(fields[3]) + " is not in the visit schedule");

        std::optional<double> y;
        if (!is_missing_token(fields[4])) {
            y = parse_double(fields[4]);
            if (!y) throw ParseError(line_no, "sqrt_cd4 is not numeric: '" + std::string(fields[4]) + "'");
            if (*y < 0.0) throw ParseError(line_no, "negative outcome value");
            if (options.raw_cd4) y = std::sqrt(*y);
        }
        std::optional<std::uint8_t> art;
        if (!is_missing_token(fields[5])) {
            if (fields[5] == "1") art = 1;
            else if (fields[5] == "0") art = 0;
            else throw ParseError(line_no, "art must be 0 or 1, got '" + std::string(fields[5]) + "'");
        } else if (y) {
            throw ParseError(line_no, "art is missing at an observed visit");
        }

        auto [it, inserted] = by_id.try_emplace(id);
        auto& p = it->second;
        if (inserted) {
            p.record.id = id;
            p.record.arm = *arm;
            p.record.age = *age;
            p.record.outcomes.assign(n, std::nullopt);
            p.art.assign(n, std::nullopt);
            p.seen.assign(n, 0);
            p.first_line = line_no;
        } else {
            if (p.record.arm != *arm) throw ParseError(line_no, "arm changes within subject '" + id + "'");
            if (p.record.age != *age) throw ParseError(line_no, "age changes within subject '" + id + "'");
        }
        if (p.seen[*visit])
            throw DuplicationError(line_no, "duplicate row for subject '" + id + "' at month " + std::string(fields[3]));
        p.seen[*visit] = 1;
        p.record.outcomes[*visit] = y;
        p.art[*visit] = art;
    }
    if (!have_header) throw ParseError(line_no + 1, "missing header");

    std::vector<SubjectRecord> subjects;
    subjects.reserve(by_id.size());
    for (auto& [id, p] : by_id) {
        p.record.art.assign(n, 0);
        std::optional<std::uint8_t> last;
        for (std::size_t j = 0; j < n; ++j) {
            if (p.art[j]) last = p.art[j];
            if (!last)
                throw ParseError(p.first_line, "subject '" + id + "': art undefined at baseline");
            p.record.art[j] = *last;  // carried forward past dropout
        }
        subjects.push_back(std::move(p.record));
    }
    return LongitudinalDataset(schedule, std::move(subjects), options.dataset);
}

LongitudinalDataset load_csv_file(const std::string& path, const VisitSchedule& schedule,
                                  const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open input file '" + path + "'");
    return load_csv(in, schedule, options);
}

std::string format_number(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

void write_csv(std::ostream& out, const LongitudinalDataset& ds) {
    out << "subject_id,arm,age,month,sqrt_cd4,art\n";
    for (const auto& s : ds.subjects()) {
        for (std::size_t j = 0; j < ds.n_visits(); ++j) {
            out << s.id << ',' << to_string(s.arm) << ',' << format_number(s.age) << ','
                << format_number(ds.schedule().month(j)) << ','
                << (s.outcomes[j] ? format_number(*s.outcomes[j]) : std::string("NA")) << ','
                << static_cast<int>(s.art[j]) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

std::vector<RetentionRow> retention_table(const LongitudinalDataset& ds) {
    std::vector<RetentionRow> rows;
    for (Arm arm : {Arm::Placebo, Arm::Prednisolone}) {
        RetentionRow row{arm, 0, {}, {}};
        std::vector<std::size_t> count(ds.n_visits(), 0);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.subjects()[i].arm != arm) continue;
            ++row.arm_total;
            for (std::size_t j = 0; j < ds.n_visits(); ++j) count[j] += ds.patterns()[i].observed[j];
        }
        if (row.arm_total > 0) {
            row.count = std::move(count);
            for (auto c : row.count)
                row.percent.push_back(100.0 * static_cast<double>(c) / static_cast<double>(row.arm_total));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

PatternMeans pattern_means(const LongitudinalDataset& ds) {
    const auto n = ds.n_visits();
    PatternMeans result;
    for (Arm arm : {Arm::Placebo, Arm::Prednisolone}) {
        // Descending indicator order puts completers first for monotone data.
        std::map<std::vector<std::uint8_t>, std::vector<std::size_t>, std::greater<>> groups;
        std::size_t arm_total = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.subjects()[i].arm != arm) continue;
            ++arm_total;
            groups[ds.patterns()[i].observed].push_back(i);
        }
        for (const auto& [indicators, members] : groups) {
            PatternMeansRow row;
            row.arm = arm;
            row.indicators = indicators;
            row.pattern = ds.patterns()[members.front()].n_observed() - 1;
            row.count = members.size();
            row.percent = 100.0 * static_cast<double>(members.size()) / static_cast<double>(arm_total);
            row.mean.assign(n, std::nullopt);
            for (std::size_t j = 0; j < n; ++j) {
                if (!indicators[j]) continue;
                double sum = 0.0;
                for (auto i : members) sum += *ds.subjects()[i].outcomes[j];
                row.mean[j] = sum / static_cast<double>(members.size());
            }
            result.rows.push_back(std::move(row));
        }

        VisitSummary summary{arm, std::vector<std::size_t>(n, 0), std::vector<double>(n, 0.0),
                             std::vector<double>(n, std::numeric_limits<double>::quiet_NaN())};
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            std::size_t count = 0;
            for (const auto& s : ds.subjects()) {
                if (s.arm == arm && s.outcomes[j]) {
                    sum += *s.outcomes[j];
                    ++count;
                }
            }
            summary.n[j] = count;
            if (count == 0) {
                summary.mean[j] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const double mean = sum / static_cast<double>(count);
            summary.mean[j] = mean;
            if (count > 1) {
                double ss = 0.0;
                for (const auto& s : ds.subjects()) {
                    if (s.arm == arm && s.outcomes[j]) ss += (*s.outcomes[j] - mean) * (*s.outcomes[j] - mean);
                }
                summary.sd[j] = std::sqrt(ss / static_cast<double>(count - 1));
            }
        }
        result.overall.push_back(std::move(summary));
    }
    return result;
}

}  // namespace longimpute

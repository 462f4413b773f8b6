#pragma once
// Tables from run records: metric x method, per-seed values, PR curves,
// distance-binned rates and their differences, paired significance tests.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tls/experiment.hpp"
#include "tls/io.hpp"

namespace tls {

struct PairedTTest {
    std::size_t n = 0;
    double mean_diff = 0.0;
    double sd_diff = 0.0;
    double t = 0.0;
    double p_one_sided = 0.5;  // alternative: treatment > control
};

inline PairedTTest paired_t_test(const std::vector<double>& treatment, const std::vector<double>& control) {
    detail::require(treatment.size() == control.size(), "paired samples differ in length");
    detail::require(treatment.size() >= 2, "a paired t-test needs at least two pairs");
    PairedTTest r;
    r.n = treatment.size();
    std::vector<double> d(r.n);
    for (std::size_t i = 0; i < r.n; ++i) d[i] = treatment[i] - control[i];
    const double n = static_cast<double>(r.n);
    for (double v : d) r.mean_diff += v / n;
    double ss = 0.0;
    for (double v : d) ss += (v - r.mean_diff) * (v - r.mean_diff);
    r.sd_diff = std::sqrt(ss / (n - 1.0));
    if (r.sd_diff == 0.0) {
        r.t = r.mean_diff > 0 ? INFINITY : (r.mean_diff < 0 ? -INFINITY : 0.0);
        r.p_one_sided = r.mean_diff > 0 ? 0.0 : (r.mean_diff < 0 ? 1.0 : 0.5);
        return r;
    }
    r.t = r.mean_diff / (r.sd_diff / std::sqrt(n));
    const boost::math::students_t dist(n - 1.0);
    r.p_one_sided = boost::math::cdf(boost::math::complement(dist, r.t));
    return r;
}

/// Metric values of two arms matched by seed.
inline std::pair<std::vector<double>, std::vector<double>> paired_values(const RunRecord& r, const std::string& arm,
                                                                        const std::string& baseline,
                                                                        const std::string& metric) {
    std::pair<std::vector<double>, std::vector<double>> out;
    for (auto seed : r.seeds) {
        const SeedEntry* a = r.find(arm, seed);
        const SeedEntry* b = r.find(baseline, seed);
        if (!a || !b) continue;
        const auto va = metric_value(a->report, metric), vb = metric_value(b->report, metric);
        if (!va || !vb) continue;
        out.first.push_back(*va);
        out.second.push_back(*vb);
    }
    return out;
}

/// Every record.json below `dir`, in path order.
inline std::vector<RunRecord> load_records(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> paths;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() == "record.json") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    std::vector<RunRecord> out;
    for (const auto& p : paths) out.push_back(run_record_from_json(read_json(p)));
    return out;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

inline std::string csv_number(std::optional<double> v) { return v ? format_number(*v) : std::string(); }

class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) { row(header); }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_field(fields[i]);
        out_ << "\n";
    }

    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

inline std::string recall_column(double floor) {
    return "recall_at_" + format_number(floor * 100.0) + "pct_precision";
}

}  // namespace detail

/// Writes metrics.csv, per_seed.csv, pr_curves.csv, binned_rates.csv,
/// binned_deltas.csv and significance.csv into `out`.
inline void write_report(const std::vector<RunRecord>& records, const fs::path& out) {
    using detail::csv_number;
    const double floor = records.empty() ? 0.5 : records.front().eval.precision_floor;
    for (const auto& r : records)
        detail::require(r.eval.precision_floor == floor, "run records use different precision floors");
    const std::string rc = detail::recall_column(floor);
    auto method = [](const RunRecord& r, const std::string& arm) { return r.name + "/" + arm; };
    auto hours = [](const RunRecord& r, double steps) { return steps * r.step_minutes / 60.0; };

    detail::Csv metrics({"method", "n_seeds", "auprc_mean", "auprc_ci95", "auroc_mean", "auroc_ci95", rc + "_mean",
                         rc + "_ci95", "event_recall_mean", "event_recall_ci95"});
    detail::Csv per_seed({"method", "seed", "gamma", "auprc", "auroc", rc, "threshold", "event_recall"});
    detail::Csv pr({"method", "seed", "threshold", "precision", "recall"});
    detail::Csv binned({"method", "seed", "bin_lo_hours", "bin_hi_hours", "positives", "negatives", "tpr", "tnr"});
    detail::Csv deltas({"method", "baseline", "seed", "bin_lo_hours", "bin_hi_hours", "delta_tpr", "delta_tnr"});
    detail::Csv sig({"method", "baseline", "metric", "n", "mean_diff", "t", "p_one_sided"});

    for (const auto& r : records) {
        RunRecord fresh = r;
        compute_aggregates(fresh);
        for (const auto& arm : r.arms) {
            const auto& aggs = fresh.aggregates[arm];
            std::vector<std::string> row{method(r, arm), std::to_string(r.values(arm, "auprc").size())};
            for (const char* m : {"auprc", "auroc", "recall_at_precision", "event_recall"}) {
                const auto it = aggs.find(m);
                row.push_back(it == aggs.end() ? "" : format_number(it->second.mean));
                row.push_back(it == aggs.end() ? "" : format_number(it->second.half_width));
            }
            metrics.row(row);

            for (const auto& e : r.entries) {
                if (e.arm != arm) continue;
                const auto& rep = e.report;
                per_seed.row({method(r, arm), std::to_string(e.seed), csv_number(e.gamma), format_number(rep.auprc),
                              format_number(rep.auroc), format_number(rep.recall_at_precision),
                              format_number(rep.threshold), csv_number(rep.event_recall)});
                for (const auto& p : rep.pr_points)
                    pr.row({method(r, arm), std::to_string(e.seed), format_number(p.threshold), format_number(p.precision),
                            format_number(p.recall)});
                for (const auto& b : rep.binned.bins)
                    binned.row({method(r, arm), std::to_string(e.seed), format_number(hours(r, b.lo)),
                                format_number(hours(r, b.hi)), std::to_string(b.positives), std::to_string(b.negatives),
                                csv_number(b.tpr), csv_number(b.tnr)});
            }

            if (arm == r.baseline) continue;
            // Per-seed bin differences, then their mean over seeds.
            const SeedEntry* any = nullptr;
            std::vector<std::vector<double>> dtpr, dtnr;
            for (auto seed : r.seeds) {
                const SeedEntry* a = r.find(arm, seed);
                const SeedEntry* b = r.find(r.baseline, seed);
                if (!a || !b) continue;
                any = a;
                const auto& ba = a->report.binned.bins;
                const auto& bb = b->report.binned.bins;
                detail::require(ba.size() == bb.size(), "binned rates disagree in bin count");
                dtpr.resize(ba.size());
                dtnr.resize(ba.size());
                for (std::size_t k = 0; k < ba.size(); ++k) {
                    std::optional<double> t, n;
                    if (ba[k].tpr && bb[k].tpr) dtpr[k].push_back(*(t = *ba[k].tpr - *bb[k].tpr));
                    if (ba[k].tnr && bb[k].tnr) dtnr[k].push_back(*(n = *ba[k].tnr - *bb[k].tnr));
                    deltas.row({method(r, arm), method(r, r.baseline), std::to_string(seed), format_number(hours(r, ba[k].lo)),
                                format_number(hours(r, ba[k].hi)), csv_number(t), csv_number(n)});
                }
            }
            if (any) {
                const auto& bins = any->report.binned.bins;
                for (std::size_t k = 0; k < bins.size(); ++k) {
                    auto mean = [](const std::vector<double>& v) -> std::optional<double> {
                        if (v.empty()) return std::nullopt;
                        return aggregate(v).mean;
                    };
                    deltas.row({method(r, arm), method(r, r.baseline), "mean", format_number(hours(r, bins[k].lo)),
                                format_number(hours(r, bins[k].hi)), csv_number(mean(dtpr[k])), csv_number(mean(dtnr[k]))});
                }
            }
            for (const char* m : {"auprc", "auroc", "recall_at_precision"}) {
                const auto [a, b] = paired_values(r, arm, r.baseline, m);
                if (a.size() < 2) continue;
                const auto t = paired_t_test(a, b);
                sig.row({method(r, arm), method(r, r.baseline), m == std::string("recall_at_precision") ? rc : m,
                         std::to_string(t.n), format_number(t.mean_diff), format_number(t.t), format_number(t.p_one_sided)});
            }
        }
    }
    write_atomic(out / "metrics.csv", metrics.str());
    write_atomic(out / "per_seed.csv", per_seed.str());
    write_atomic(out / "pr_curves.csv", pr.str());
    write_atomic(out / "binned_rates.csv", binned.str());
    write_atomic(out / "binned_deltas.csv", deltas.str());
    write_atomic(out / "significance.csv", sig.str());
}

}  // namespace tls

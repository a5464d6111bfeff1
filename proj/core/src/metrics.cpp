#include "weatherlpr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "weatherlpr/error.hpp"

namespace wlpr::metrics {

RetrievalRecord make_record(std::uint64_t query_id, Position query_pose, std::span<const lpr::Ranked> ranked,
                            const lpr::PlaceDatabase& db, const lpr::Exclusion& exclude) {
    RetrievalRecord rec;
    rec.query_id = query_id;
    rec.query_pose = query_pose;
    for (const lpr::Ranked& r : ranked) {
        if (exclude && exclude(r.id)) continue;
        rec.matches.push_back({r.id, r.distance, db.find(r.id).pose});
    }
    rec.nearest_positive = std::numeric_limits<double>::infinity();
    for (const lpr::Entry& e : db.entries()) {
        if (exclude && exclude(e.id)) continue;
        rec.nearest_positive = std::min(rec.nearest_positive, lpr::distance(query_pose, e.pose));
    }
    return rec;
}

namespace {

bool correct(const RetrievalRecord& r, const Match& m, double radius) {
    return lpr::distance(r.query_pose, m.pose) <= radius;
}

/// Rank (1-based) of the first geometrically correct match, 0 if none.
std::size_t first_hit(const RetrievalRecord& r, double radius) {
    for (std::size_t k = 0; k < r.matches.size(); ++k)
        if (correct(r, r.matches[k], radius)) return k + 1;
    return 0;
}

void check_radius(double pos_radius) {
    if (!(pos_radius > 0.0)) throw ConfigError("metrics: positive radius must be > 0");
}

}  // namespace

RecallResult recall_at_n(std::span<const RetrievalRecord> records, std::size_t n, double pos_radius, RecallMode mode) {
    if (records.empty()) throw DataError("recall: empty record set");
    if (n < 1) throw ConfigError("recall: n must be >= 1");
    check_radius(pos_radius);
    RecallResult out;
    std::size_t hits = 0;
    for (const RetrievalRecord& r : records) {
        if (!r.has_positive(pos_radius)) {
            if (mode == RecallMode::Strict)
                throw DataError("recall: query " + std::to_string(r.query_id) + " has no positive in the database");
            ++out.excluded;
            continue;
        }
        ++out.counted;
        const std::size_t h = first_hit(r, pos_radius);
        if (h != 0 && h <= n) ++hits;
    }
    if (out.counted > 0) out.recall = static_cast<double>(hits) / static_cast<double>(out.counted);
    return out;
}

std::vector<double> recall_curve(std::span<const RetrievalRecord> records, std::size_t max_n, double pos_radius) {
    check_radius(pos_radius);
    std::vector<double> hist(max_n, 0.0);
    std::size_t counted = 0;
    for (const RetrievalRecord& r : records) {
        if (!r.has_positive(pos_radius)) continue;
        ++counted;
        const std::size_t h = first_hit(r, pos_radius);
        if (h != 0 && h <= max_n) hist[h - 1] += 1.0;
    }
    double acc = 0.0;
    for (double& v : hist) {
        acc += v;
        v = counted ? acc / static_cast<double>(counted) : 0.0;
    }
    return hist;
}

std::vector<double> distinct_thresholds(std::span<const RetrievalRecord> records) {
    std::vector<double> t;
    for (const RetrievalRecord& r : records)
        if (!r.matches.empty()) t.push_back(r.matches.front().distance);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

AucF1 auc_f1(std::span<const RetrievalRecord> records, double pos_radius, std::span<const double> thresholds) {
    if (records.empty()) throw DataError("auc/f1: empty record set");
    if (thresholds.empty()) throw ConfigError("auc/f1: at least one threshold is required");
    check_radius(pos_radius);
    bool any_positive = false;
    for (const RetrievalRecord& r : records) any_positive = any_positive || r.has_positive(pos_radius);
    if (!any_positive) throw NumericError("auc/f1: no query has a positive in the database; AUC is undefined");

    std::vector<double> sorted(thresholds.begin(), thresholds.end());
    std::sort(sorted.begin(), sorted.end());
    AucF1 out;
    double prev_r = 0.0, prev_p = 0.0;
    bool first = true;
    for (double t : sorted) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (const RetrievalRecord& r : records) {
            const bool accepted = !r.matches.empty() && r.matches.front().distance <= t;
            if (accepted) {
                if (correct(r, r.matches.front(), pos_radius))
                    ++tp;
                else
                    ++fp;
            } else if (r.has_positive(pos_radius)) {
                ++fn;
            }
        }
        const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
        const double rc = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        if (first) {
            prev_p = p;
            first = false;
        }
        out.auc += (rc - prev_r) * (p + prev_p) / 2.0;
        prev_r = rc;
        prev_p = p;
        if (p + rc > 0.0) out.f1 = std::max(out.f1, 2.0 * p * rc / (p + rc));
    }
    out.auc = std::clamp(out.auc, 0.0, 1.0);
    return out;
}

AucF1 auc_f1(std::span<const RetrievalRecord> records, double pos_radius) {
    const std::vector<double> t = distinct_thresholds(records);
    if (t.empty()) return auc_f1(records, pos_radius, std::vector<double>{0.0});
    return auc_f1(records, pos_radius, t);
}

std::string to_string(Protocol p) { return p == Protocol::Kitti ? "kitti" : "nclt"; }

Protocol parse_protocol(const std::string& s) {
    if (s == "kitti") return Protocol::Kitti;
    if (s == "nclt") return Protocol::Nclt;
    throw ConfigError("unknown metric protocol '" + s + "' (expected kitti or nclt)");
}

MetricRow score(std::span<const RetrievalRecord> records, double pos_radius) {
    MetricRow row;
    const RecallResult r1 = recall_at_n(records, 1, pos_radius);
    row.queries = r1.counted;
    row.excluded = r1.excluded;
    row.r1 = r1.recall.value_or(0.0);
    row.r5 = recall_at_n(records, 5, pos_radius).recall.value_or(0.0);
    row.r20 = recall_at_n(records, 20, pos_radius).recall.value_or(0.0);
    const AucF1 af = auc_f1(records, pos_radius);
    row.auc = af.auc;
    row.f1 = af.f1;
    return row;
}

double alp(const MetricRow& row, Protocol protocol) {
    return protocol == Protocol::Kitti ? row.auc + row.f1 + row.r1 + row.r5 : row.r1 + row.r5 + row.r20;
}

double stability_rate(std::span<const double> per_severity, double alp_clean) {
    if (per_severity.size() != 3)
        throw DataError("stability rate: expected 3 severity values, got " + std::to_string(per_severity.size()));
    if (!(alp_clean > 0.0)) throw NumericError("stability rate: clean Alp must be > 0");
    return (per_severity[0] + per_severity[1] + per_severity[2]) / (3.0 * alp_clean);
}

double msr(std::span<const double> srs) {
    if (srs.size() != 3) throw DataError("mSR: expected 3 corruption types, got " + std::to_string(srs.size()));
    return (srs[0] + srs[1] + srs[2]) / 3.0;
}

}  // namespace wlpr::metrics

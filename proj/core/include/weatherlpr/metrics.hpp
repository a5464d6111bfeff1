#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weatherlpr/lpr.hpp"

namespace wlpr::metrics {

using lpr::Position;

struct Match {
    std::uint64_t id = 0;
    double distance = 0.0;  ///< descriptor distance
    Position pose;          ///< database pose of the match
};

/// One query's retrieval outcome. `nearest_positive` is the geometric
/// distance from the query to the closest database pose it was allowed to
/// retrieve; it decides whether the query has any achievable positive.
struct RetrievalRecord {
    std::uint64_t query_id = 0;
    Position query_pose;
    std::vector<Match> matches;  ///< ascending descriptor distance
    double nearest_positive = 0.0;

    bool has_positive(double pos_radius) const noexcept { return nearest_positive <= pos_radius; }
};

/// Builds a record from a ranked list. Database poses are looked up in `db`;
/// excluded ids count neither as matches nor as achievable positives.
RetrievalRecord make_record(std::uint64_t query_id, Position query_pose, std::span<const lpr::Ranked> ranked,
                            const lpr::PlaceDatabase& db, const lpr::Exclusion& exclude = {});

enum class RecallMode {
    Lenient,  ///< queries without an achievable positive leave the denominator
    Strict,   ///< any such query is an error
};

struct RecallResult {
    std::optional<double> recall;  ///< empty when every query was excluded
    std::size_t counted = 0;
    std::size_t excluded = 0;
};

RecallResult recall_at_n(std::span<const RetrievalRecord> records, std::size_t n, double pos_radius = 5.0,
                         RecallMode mode = RecallMode::Lenient);

/// Recall@1..max_n in one pass; entry k is Recall@(k+1). Values are 0 when
/// every query was excluded.
std::vector<double> recall_curve(std::span<const RetrievalRecord> records, std::size_t max_n, double pos_radius = 5.0);

struct AucF1 {
    double auc = 0.0;
    double f1 = 0.0;
};

/// Every distinct top-1 descriptor distance, ascending.
std::vector<double> distinct_thresholds(std::span<const RetrievalRecord> records);

/// Threshold sweep over top-1 matches. A query is accepted when its top-1
/// distance is <= the threshold: accepted and within pos_radius is TP,
/// accepted otherwise FP, rejected with an achievable positive FN, rejected
/// without one TN. Precision is 1 when nothing is accepted. The precision-
/// recall points, in threshold order and starting from (recall 0, first
/// precision), are integrated with the trapezoid rule.
AucF1 auc_f1(std::span<const RetrievalRecord> records, double pos_radius, std::span<const double> thresholds);
AucF1 auc_f1(std::span<const RetrievalRecord> records, double pos_radius = 5.0);

enum class Protocol {
    Kitti,  ///< Alp = AUC + F1 + R@1 + R@5
    Nclt,   ///< Alp = R@1 + R@5 + R@20
};

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& s);

struct MetricRow {
    std::string kind;    ///< "clean", "fog", "snow" or "rain"
    int level = 0;       ///< 0 for clean
    std::string method;  ///< preprocessing label
    double auc = 0.0;
    double f1 = 0.0;
    double r1 = 0.0;
    double r5 = 0.0;
    double r20 = 0.0;
    std::size_t queries = 0;
    std::size_t excluded = 0;
};

/// Scores a record set. Recall uses lenient mode; AUC/F1 errors propagate.
MetricRow score(std::span<const RetrievalRecord> records, double pos_radius);

double alp(const MetricRow& row, Protocol protocol);

/// SR = sum of the three severity Alp values / (3 * Alp_clean).
double stability_rate(std::span<const double> per_severity, double alp_clean);

/// Mean of exactly three per-corruption stability rates.
double msr(std::span<const double> srs);

}  // namespace wlpr::metrics

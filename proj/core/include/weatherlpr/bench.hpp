#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "weatherlpr/config.hpp"
#include "weatherlpr/lpr.hpp"
#include "weatherlpr/metrics.hpp"
#include "weatherlpr/restorenet.hpp"
#include "weatherlpr/weathersim.hpp"
#include "weatherlpr/world.hpp"

namespace wlpr::bench {

/// Dataset roles. Loaded from a key/value file:
///   name, protocol, database.dir, query.dir, train.dir (optional) and
///   optional <role>.poses overriding <dir>/poses.txt. Relative paths are
///   resolved against the manifest's directory.
struct Manifest {
    std::string name = "dataset";
    metrics::Protocol protocol = metrics::Protocol::Kitti;
    std::filesystem::path database_dir, database_poses;
    std::filesystem::path query_dir, query_poses;
    std::filesystem::path train_dir, train_poses;

    /// Throws DataError when a referenced path is missing or when query and
    /// database name the same sequence.
    void validate() const;
    static Manifest load(const std::filesystem::path& path);
};

enum class Method { None, RestoreNet };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct RunConfig {
    std::vector<weather::Kind> kinds{weather::Kind::Fog, weather::Kind::Snow, weather::Kind::Rain};
    std::vector<int> levels{1, 2, 3};
    std::vector<Method> methods{Method::None, Method::RestoreNet};
    std::optional<metrics::Protocol> protocol;  ///< defaults to the manifest's
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;  ///< nothing is written when empty
    double pos_radius = 5.0;
    int exclude_recent = 50;  ///< only applied when queries come from the database sequence
    int top_n = 25;
    lpr::ScParams sc;
    ProjectionSpec projection = world::synthetic_sensor();
    double min_valid_distance = 0.02;  ///< restored pixels at or below this normalized distance are dropped
    restore::NetConfig net;
    restore::TrainOptions train;
    std::vector<weather::Kind> train_kinds;  ///< defaults to kinds
    std::filesystem::path checkpoint;        ///< load instead of training when set

    void validate() const;
    /// Reads the keys documented in the README; unknown keys are rejected by
    /// the caller through Config::reject_unused.
    static RunConfig from_config(const Config& cfg);
    /// Every setting as key/value text, for report echo.
    Config echo() const;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct StabilityEntry {
    std::string kind;
    std::string method;
    double sr = 0.0;
};

struct ImageL1 {
    std::string kind;
    int level = 0;
    double corrupted = 0.0;  ///< mean L1 of corrupted vs clean query images
    double restored = 0.0;   ///< mean L1 of restored vs clean query images
};

struct BenchReport {
    std::string dataset;
    metrics::Protocol protocol = metrics::Protocol::Kitti;
    Config config;
    std::vector<metrics::MetricRow> rows;  ///< clean rows first, then kind x level x method
    std::vector<std::vector<double>> recall_curves;  ///< Recall@1..top_n per row
    double alp_clean = 0.0;  ///< Alp of the unprocessed clean queries
    std::vector<StabilityEntry> stability;
    std::vector<std::pair<std::string, double>> msr;  ///< per method, mean SR over the evaluated kinds
    std::vector<ImageL1> image_l1;
    std::vector<double> train_losses;
    std::vector<StageTiming> timings;
};

/// Stage helpers; the CLI subcommands call the same functions.

/// Quantizes to the on-disk float32 layout.
PointCloud as_stored(const PointCloud& cloud);

/// Corrupts every scan with the (kind, level) preset. Scan ids select the
/// per-scan random streams.
std::vector<world::Scan> corrupt_sequence(const std::vector<world::Scan>& scans, weather::Kind kind, int level,
                                          std::uint64_t seed, std::vector<weather::Annotation>* annotations = nullptr);

/// Project -> restore -> back-project.
std::vector<world::Scan> restore_sequence(const restore::RestoreNet& net, const std::vector<world::Scan>& scans,
                                          const ProjectionSpec& spec, double min_valid_distance);

/// Training pairs: every training scan under every kind and level 1..3.
std::vector<restore::TrainingPair> make_training_pairs(const std::vector<world::Scan>& scans,
                                                       const std::vector<weather::Kind>& kinds,
                                                       const ProjectionSpec& spec, std::uint64_t seed);

lpr::PlaceDatabase build_database(const std::vector<world::Scan>& scans, const lpr::ScParams& sc);

/// Queries every scan against the database. With same_sequence, database ids
/// within exclude_recent frames of the query id are not retrievable.
std::vector<metrics::RetrievalRecord> retrieve(const lpr::PlaceDatabase& db, const std::vector<world::Scan>& queries,
                                               std::size_t top_n, bool same_sequence = false, int exclude_recent = 0);

/// Text form of retrieval records: one line per query,
///   query_id qx qy nearest_positive n id:distance:x:y ...
void write_records(const std::filesystem::path& path, const std::vector<metrics::RetrievalRecord>& records);
std::vector<metrics::RetrievalRecord> read_records(const std::filesystem::path& path);

/// Full run. When config.out_dir is set, writes report.json, metrics.csv,
/// recall_curves.csv, timings.json, checkpoint.bin (if trained) and one
/// runs/<kind>-<level>-<method>/ directory per metric row.
BenchReport run_benchmark(const Manifest& manifest, const RunConfig& config);

/// Deterministic report (no timings).
std::string report_json(const BenchReport& r);
std::string metrics_csv(const BenchReport& r);
std::string recall_curves_csv(const BenchReport& r);
std::string timings_json(const BenchReport& r);

}  // namespace wlpr::bench

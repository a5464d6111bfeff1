#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "weatherlpr/pointcloud.hpp"

namespace wlpr::lpr {

struct Position {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Position&, const Position&) = default;
};

double distance(const Position& a, const Position& b) noexcept;

struct ScParams {
    int rings = 20;
    int sectors = 60;
    double max_radius = 80.0;  ///< meters, horizontal
    void validate() const;
};

/// Polar max-height grid. cells are ring-major: cells[ring * sectors + sector].
class ScanContext {
public:
    ScanContext() = default;
    ScanContext(int rings, int sectors);
    ScanContext(int rings, int sectors, std::vector<double> cells, std::vector<double> ring_key);

    int rings() const noexcept { return rings_; }
    int sectors() const noexcept { return sectors_; }
    double cell(int ring, int sector) const { return cells_[static_cast<std::size_t>(ring) * sectors_ + sector]; }
    const std::vector<double>& cells() const noexcept { return cells_; }
    /// Occupied fraction of each ring, in [0, 1].
    const std::vector<double>& ring_key() const noexcept { return ring_key_; }

    /// Columns rotated so that out[:, (j + k) % S] == this[:, j].
    ScanContext shifted(int k) const;

    friend bool operator==(const ScanContext&, const ScanContext&) = default;

private:
    friend ScanContext make_descriptor(const PointCloud&, const ScParams&);
    int rings_ = 0;
    int sectors_ = 0;
    std::vector<double> cells_;
    std::vector<double> ring_key_;
};

/// Bins points by horizontal range and azimuth (atan2(y, x) in [0, 2pi)).
/// Points at or beyond max_radius are ignored; empty bins hold 0.
ScanContext make_descriptor(const PointCloud& cloud, const ScParams& params = {});

struct ScMatch {
    double distance = 1.0;  ///< in [0, 1]
    int shift = 0;
};

/// Column-shift cosine distance. For each shift k, column j of `a` is paired
/// with column (j + k) % S of `b`; pairs where either column is all zero are
/// skipped. Per-pair distance is (1 - cos) / 2. With no usable pair the
/// distance is 1. Ties pick the smallest shift.
ScMatch sc_distance(const ScanContext& a, const ScanContext& b);

struct Entry {
    std::uint64_t id = 0;
    Position pose;
    ScanContext descriptor;
};

struct Ranked {
    std::uint64_t id = 0;
    double distance = 0.0;
    friend bool operator==(const Ranked&, const Ranked&) = default;
};

/// Returns true for database ids that must not be retrieved.
using Exclusion = std::function<bool(std::uint64_t)>;

class PlaceDatabase {
public:
    explicit PlaceDatabase(ScParams params = {});

    const ScParams& params() const noexcept { return params_; }
    void add(std::uint64_t id, Position pose, ScanContext descriptor);
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    const Entry& find(std::uint64_t id) const;

    /// Ring-key pre-selection: the `count` entries nearest in ring-key L2
    /// distance, ties by id. Indices into entries().
    std::vector<std::size_t> candidates(const ScanContext& q, std::size_t count, const Exclusion& exclude = {}) const;

    /// Ranks 10 * top_n pre-selected candidates by sc_distance, ties by id.
    std::vector<Ranked> query(const ScanContext& q, std::size_t top_n, const Exclusion& exclude = {}) const;

    /// Exact ranking over every (non-excluded) entry.
    std::vector<Ranked> query_exhaustive(const ScanContext& q, std::size_t top_n, const Exclusion& exclude = {}) const;

    /// Binary layout, little-endian:
    ///   "WLPRSCDB", u32 version, u32 R, u32 S, f64 max_radius, u64 count,
    ///   then per entry: u64 id, f64 x, f64 y, f64 ring_key[R], f64 cells[R*S].
    void save(const std::filesystem::path& path) const;
    static PlaceDatabase load(const std::filesystem::path& path);

private:
    std::vector<Ranked> rank(const ScanContext& q, std::span<const std::size_t> idx, std::size_t top_n) const;

    ScParams params_;
    std::vector<Entry> entries_;
};

inline constexpr std::size_t kCandidateFactor = 10;

}  // namespace wlpr::lpr

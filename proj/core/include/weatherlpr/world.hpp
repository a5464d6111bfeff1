#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "weatherlpr/lpr.hpp"
#include "weatherlpr/pointcloud.hpp"

namespace wlpr::world {

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;  ///< radians, sensor heading in the world frame
    lpr::Position position() const noexcept { return {x, y}; }
    friend bool operator==(const Pose&, const Pose&) = default;
};

struct Scan {
    std::uint64_t id = 0;
    Pose pose;
    PointCloud cloud;
};

/// Synthetic sensor: the default is a 32-beam ring with 256 columns.
ProjectionSpec synthetic_sensor();

struct WorldOptions {
    std::uint64_t seed = 0;
    int n_places = 200;           ///< database scans along the main loop
    int n_queries = -1;           ///< defaults to n_places
    double revisit_fraction = 1.0;
    int n_train = 40;             ///< scans along a separate training loop
    double spacing = 3.0;         ///< meters between consecutive database poses
    double query_offset = 2.0;    ///< lateral offset of revisiting queries
    double yaw_jitter = std::numbers::pi;  ///< radians, uniform +- for query headings
    double sensor_height = 1.73;
    double range_noise = 0.01;    ///< meters, Gaussian
    ProjectionSpec sensor = synthetic_sensor();

    void validate() const;
};

/// Database, query and training traversals through procedurally generated
/// scenes (ground plane, boxes, poles). The first
/// round(revisit_fraction * n_queries) queries drive the database loop again
/// with a lateral offset and heading jitter; the rest drive a separate loop
/// with its own scenery, so they have no positive in the database.
struct World {
    std::vector<Scan> database;
    std::vector<Scan> queries;
    std::vector<Scan> train;
};

World make_synthetic_world(const WorldOptions& opts);
World make_synthetic_world(std::uint64_t seed, int n_places, double revisit_fraction);

/// Pose file: one "id x y yaw" line per scan. Lines with twelve numbers are
/// read as 3x4 row-major pose matrices (KITTI layout), taking the
/// translation's first and third components as the ground-plane position and
/// the line index as the id.
std::vector<std::pair<std::uint64_t, Pose>> read_poses(const std::filesystem::path& path);
void write_poses(const std::filesystem::path& path, const std::vector<Scan>& scans);

/// A directory of scans named by zero-padded id ("000042.bin") plus
/// poses.txt.
void write_sequence(const std::filesystem::path& dir, const std::vector<Scan>& scans);
/// Reads every .bin file in name order and pairs it with the pose file
/// (defaults to dir/poses.txt). Counts must agree.
std::vector<Scan> read_sequence(const std::filesystem::path& dir, const std::filesystem::path& poses = {});

/// Writes database/, query/ and train/ sequences and a manifest.cfg.
void write_world(const std::filesystem::path& dir, const World& world, const std::string& name = "synthetic");

}  // namespace wlpr::world

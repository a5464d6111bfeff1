#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "weatherlpr/tensor.hpp"

namespace wlpr {

struct Point {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double intensity = 0.0;

    double range() const noexcept;
    friend bool operator==(const Point&, const Point&) = default;
};

/// Ordered set of LiDAR returns. Coordinates are meters in the sensor
/// frame, intensity is unitless. The constructor rejects non-finite values.
class PointCloud {
public:
    PointCloud() = default;
    explicit PointCloud(std::vector<Point> points, std::string frame_id = {});

    const std::vector<Point>& points() const noexcept { return points_; }
    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    const Point& operator[](std::size_t i) const noexcept { return points_[i]; }
    auto begin() const noexcept { return points_.begin(); }
    auto end() const noexcept { return points_.end(); }
    const std::string& frame_id() const noexcept { return frame_id_; }

    friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.points_ == b.points_; }

private:
    std::vector<Point> points_;
    std::string frame_id_;
};

/// Scales raw intensities into [0, 1]: divides by 255 when any raw value
/// exceeds 1, then clamps.
void normalize_intensity(std::vector<Point>& points);

/// Reads a KITTI-layout scan (x, y, z, i as little-endian float32, 16 bytes
/// per point). Throws ParseError naming the byte offset on malformed input.
PointCloud read_scan(const std::filesystem::path& path);
PointCloud parse_scan(const std::vector<std::uint8_t>& bytes, std::string frame_id = {});

void write_scan(const std::filesystem::path& path, const PointCloud& cloud);
std::vector<std::uint8_t> encode_scan(const PointCloud& cloud);

/// Spherical projection geometry. Angles are radians.
struct ProjectionSpec {
    int height = 64;
    int width = 1920;
    double fov_up = 3.0 * 0.017453292519943295;
    double fov_down = -25.0 * 0.017453292519943295;
    double max_range = 80.0;

    static ProjectionSpec kitti();
    static ProjectionSpec nclt();

    /// Throws ConfigError unless H, W >= 1, fov_up > fov_down and max_range > 0.
    void validate() const;

    friend bool operator==(const ProjectionSpec&, const ProjectionSpec&) = default;
};

/// H x W grid of (normalized distance, intensity) with a validity mask.
/// Invalid pixels always hold (0, 0).
class RangeImage {
public:
    explicit RangeImage(const ProjectionSpec& spec);

    int height() const noexcept { return spec_.height; }
    int width() const noexcept { return spec_.width; }
    const ProjectionSpec& spec() const noexcept { return spec_; }

    bool valid(int row, int col) const noexcept { return mask_[index(row, col)] != 0; }
    double distance(int row, int col) const noexcept { return values_[2 * index(row, col)]; }
    double intensity(int row, int col) const noexcept { return values_[2 * index(row, col) + 1]; }

    /// Marks the pixel valid; d and i are clamped into [0, 1].
    void set(int row, int col, double d, double i);
    void clear(int row, int col);

    std::size_t valid_count() const noexcept;

    /// (1, H, W, 2) tensor; channel 0 is distance, channel 1 intensity.
    Tensor to_tensor() const;

    /// Inverse of to_tensor. A pixel is valid when its distance exceeds
    /// `min_valid_distance`; values are clamped into [0, 1].
    static RangeImage from_tensor(const Tensor& t, const ProjectionSpec& spec, double min_valid_distance = 0.0);

    friend bool operator==(const RangeImage& a, const RangeImage& b) {
        return a.spec_ == b.spec_ && a.mask_ == b.mask_ && a.values_ == b.values_;
    }

private:
    std::size_t index(int row, int col) const noexcept { return static_cast<std::size_t>(row) * spec_.width + col; }

    ProjectionSpec spec_;
    std::vector<std::uint8_t> mask_;
    std::vector<double> values_;
};

/// Why each input point did or did not land in the image.
struct ProjectionStats {
    std::size_t placed = 0;
    std::size_t zero_range = 0;
    std::size_t beyond_max_range = 0;
    std::size_t occluded = 0;  ///< lost a pixel collision to a nearer point

    std::size_t total() const noexcept { return placed + zero_range + beyond_max_range + occluded; }
};

/// Pixel of a direction under the spherical model, floored and clamped.
struct PixelIndex {
    int row;
    int col;
};
PixelIndex pixel_of(const Point& p, const ProjectionSpec& spec);

/// Projects a cloud; when two points share a pixel the nearer one wins
/// (ties broken by coordinates, so the result is independent of input order).
RangeImage project(const PointCloud& cloud, const ProjectionSpec& spec, ProjectionStats* stats = nullptr);

/// One point per valid pixel on the pixel-center ray.
PointCloud back_project(const RangeImage& img);

/// Unit direction of the ray through the center of (row, col).
Point pixel_center_direction(int row, int col, const ProjectionSpec& spec);

/// Range image file, little-endian:
///   "WLPRRIMG", u32 version (1), u32 H, u32 W, f64 fov_up, f64 fov_down,
///   f64 max_range, then H*W u8 validity flags (row-major), then H*W pairs of
///   f64 (distance, intensity).
void write_range_image(const std::filesystem::path& path, const RangeImage& img);
RangeImage read_range_image(const std::filesystem::path& path);

}  // namespace wlpr

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "weatherlpr/pointcloud.hpp"

namespace wlpr::weather {

enum class Kind { Snow, Fog, Rain };

std::string to_string(Kind kind);
/// Parses "snow" / "fog" / "rain"; throws ConfigError otherwise.
Kind parse_kind(const std::string& s);

enum class Label : std::uint8_t { Clean, Noise };

/// Per-output-point provenance of a corruption run.
struct Annotation {
    std::vector<Label> labels;            ///< one per output point
    std::vector<std::size_t> source;      ///< input index each output point came from
    std::vector<double> particle_range;   ///< R* for particle returns, 0 otherwise
    std::vector<std::size_t> dropped;     ///< input indices lost to the corruption

    std::size_t noise_count() const noexcept;
};

struct Result {
    PointCloud cloud;
    Annotation annotation;
};

/// Fog: each return is compared against a soft-target (backscatter) response
///   i_hard = i * exp(-2 alpha R0),   i_soft = i * R0^2 * beta * it_max
/// and relocated onto a scatter range in [scatter_min_range, R0) when the
/// soft response dominates.
struct FogParams {
    double alpha = 0.01;
    double beta = 0.0;
    double it_max = 0.05;
    double scatter_min_range = 1.5;
    double detect_floor = 0.005;  ///< attenuated returns below this are lost
    std::uint64_t seed = 0;

    void validate() const;
};

/// Intensity model shared by snow and rain particle returns:
///   i = T_R + i_max * f_s * |f_o - (1 - R*/R_max)|^2
struct ParticleResponse {
    double t_r = 0.05;
    double i_max = 1.0;
    double focal_slope = 0.8;
    double focal_offset = 0.2;
    double r_max = 80.0;

    double intensity(double particle_range) const noexcept;
};

struct SnowParams {
    double rate = 0.0;             ///< snowfall rate r_s (mm/h)
    double gamma = 5.0;            ///< differential reflectivity coefficient
    ParticleResponse response;
    double density_per_rate = 0.004;  ///< particles per meter of beam per mm/h
    double min_range = 1.0;        ///< particles closer than this are not sampled
    int occlusion_hits = 3;        ///< beams crossing this many particles are lost
    std::uint64_t seed = 0;

    void validate() const;
};

/// Rain uses the snow particle machinery with Marshall-Palmer drop sizes:
/// candidates arrive at N0/Lambda * pi*beam_radius^2 per meter and register
/// when the sampled diameter reaches `min_diameter_mm`.
struct RainParams {
    double rate = 0.0;             ///< rain rate r_r (mm/h)
    double gamma = 100.0;
    ParticleResponse response{0.02, 0.6, 0.8, 0.2, 80.0};
    double n0 = 8000.0;            ///< drop size distribution intercept (m^-3 mm^-1)
    double beam_radius = 0.01;     ///< meters
    double min_diameter_mm = 2.5;
    double min_range = 1.0;
    int occlusion_hits = 3;
    std::uint64_t seed = 0;

    void validate() const;
    /// Marshall-Palmer slope Lambda (1/mm) for this rate.
    double slope() const;
};

using Params = std::variant<FogParams, SnowParams, RainParams>;

Kind kind_of(const Params& p);

/// `scan_id` selects the RNG stream so scans can be processed in any order.
Result corrupt_fog(const PointCloud& cloud, const FogParams& p, std::uint64_t scan_id = 0);
Result corrupt_snow(const PointCloud& cloud, const SnowParams& p, std::uint64_t scan_id = 0);
Result corrupt_rain(const PointCloud& cloud, const RainParams& p, std::uint64_t scan_id = 0);
Result corrupt(const PointCloud& cloud, const Params& p, std::uint64_t scan_id = 0);

/// Documented severity table (levels 1..3):
///   fog beta {0.008, 0.02, 0.05}; snow r_s {0.5, 1.5, 2.5}; rain r_r {10, 25, 50}.
/// Throws ConfigError for other levels.
Params severity_preset(Kind kind, int level);

/// Returns a copy of `p` with its seed replaced.
Params with_seed(Params p, std::uint64_t seed);

/// Sidecar line: "<scan_id>\tnoise=<i,j,...>\tdropped=<a,b,...>" where noise
/// lists output indices and dropped lists input indices.
void write_annotation_line(std::ostream& os, const std::string& scan_id, const Annotation& a);

struct AnnotationRecord {
    std::string scan_id;
    std::vector<std::size_t> noise;
    std::vector<std::size_t> dropped;
};
AnnotationRecord parse_annotation_line(const std::string& line);

}  // namespace wlpr::weather

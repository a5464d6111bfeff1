#include "weatherlpr/weathersim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "weatherlpr/error.hpp"
#include "weatherlpr/rng.hpp"

namespace wlpr::weather {

namespace {

// Stream tags keep the three corruptions on unrelated RNG streams.
constexpr std::uint64_t kFogStream = 0xF06;
constexpr std::uint64_t kSnowStream = 0x5A0;
constexpr std::uint64_t kRainStream = 0x7A1;

}  // namespace

std::string to_string(Kind kind) {
    switch (kind) {
        case Kind::Snow: return "snow";
        case Kind::Fog: return "fog";
        case Kind::Rain: return "rain";
    }
    return "?";
}

Kind parse_kind(const std::string& s) {
    if (s == "snow") return Kind::Snow;
    if (s == "fog") return Kind::Fog;
    if (s == "rain") return Kind::Rain;
    throw ConfigError("unknown corruption kind '" + s + "' (expected snow, fog or rain)");
}

std::size_t Annotation::noise_count() const noexcept {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Noise));
}

void FogParams::validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("fog: alpha must be >= 0");
    if (!(beta >= 0.0)) throw ConfigError("fog: beta must be >= 0");
    if (!(it_max > 0.0 && it_max <= 1.0)) throw ConfigError("fog: it_max must be in (0, 1]");
    if (!(scatter_min_range >= 0.0)) throw ConfigError("fog: scatter_min_range must be >= 0");
}

double ParticleResponse::intensity(double particle_range) const noexcept {
    const double t = focal_offset - (1.0 - particle_range / r_max);
    return std::clamp(t_r + i_max * focal_slope * t * t, 0.0, 1.0);
}

void SnowParams::validate() const {
    if (!(rate >= 0.0)) throw ConfigError("snow: rate must be >= 0");
    if (!(gamma > 0.0)) throw ConfigError("snow: gamma must be > 0");
    if (!(response.r_max > 0.0)) throw ConfigError("snow: R_max must be > 0");
    if (!(density_per_rate >= 0.0)) throw ConfigError("snow: density_per_rate must be >= 0");
    if (occlusion_hits < 1) throw ConfigError("snow: occlusion_hits must be >= 1");
}

void RainParams::validate() const {
    if (!(rate >= 0.0)) throw ConfigError("rain: rate must be >= 0");
    if (!(gamma > 0.0)) throw ConfigError("rain: gamma must be > 0");
    if (!(response.r_max > 0.0)) throw ConfigError("rain: R_max must be > 0");
    if (!(beam_radius > 0.0) || !(n0 > 0.0)) throw ConfigError("rain: n0 and beam_radius must be > 0");
    if (occlusion_hits < 1) throw ConfigError("rain: occlusion_hits must be >= 1");
}

double RainParams::slope() const { return 4.1 * std::pow(rate, -0.21); }

Kind kind_of(const Params& p) {
    if (std::holds_alternative<FogParams>(p)) return Kind::Fog;
    if (std::holds_alternative<SnowParams>(p)) return Kind::Snow;
    return Kind::Rain;
}

Result corrupt_fog(const PointCloud& cloud, const FogParams& p, std::uint64_t scan_id) {
    p.validate();
    std::vector<Point> out;
    Annotation ann;
    out.reserve(cloud.size());
    for (std::size_t k = 0; k < cloud.size(); ++k) {
        const Point& pt = cloud[k];
        const double r0 = pt.range();
        if (r0 == 0.0) {
            out.push_back(pt);
            ann.labels.push_back(Label::Clean);
            ann.source.push_back(k);
            ann.particle_range.push_back(0.0);
            continue;
        }
        const double i_hard = pt.intensity * std::exp(-2.0 * p.alpha * r0);
        const double i_soft = pt.intensity * r0 * r0 * p.beta * p.it_max;
        if (i_soft > i_hard) {
            Rng rng(derive_seed(p.seed, {kFogStream, scan_id, k}));
            const double lo = std::min(p.scatter_min_range, 0.5 * r0);
            const double s = rng.uniform(lo, r0) / r0;
            out.push_back({s * pt.x, s * pt.y, s * pt.z, std::clamp(i_soft, 0.0, 1.0)});
            ann.labels.push_back(Label::Noise);
            ann.source.push_back(k);
            ann.particle_range.push_back(0.0);
        } else if (i_hard < pt.intensity && i_hard < p.detect_floor) {
            ann.dropped.push_back(k);
        } else {
            out.push_back({pt.x, pt.y, pt.z, std::clamp(i_hard, 0.0, 1.0)});
            ann.labels.push_back(Label::Clean);
            ann.source.push_back(k);
            ann.particle_range.push_back(0.0);
        }
    }
    return {PointCloud(std::move(out), cloud.frame_id()), std::move(ann)};
}

namespace {

struct ParticleModel {
    double rate;
    double gamma;
    const ParticleResponse* response;
    double candidates_per_meter;
    double accept_probability;
    double min_range;
    int occlusion_hits;
    std::uint64_t seed;
    std::uint64_t stream;
};

struct BeamHits {
    int count = 0;
    double nearest = 0.0;
};

// Candidates along the beam form a Poisson process built from a fixed
// sequence of unit-exponential gaps, so raising the density only pulls the
// same candidates closer: hit counts are monotone in the rate for a fixed seed.
BeamHits trace_beam(const ParticleModel& m, double r0, std::uint64_t scan_id, std::size_t k) {
    BeamHits hits;
    if (m.candidates_per_meter <= 0.0 || r0 <= m.min_range) return hits;
    Rng rng(derive_seed(m.seed, {m.stream, scan_id, k}));
    double pos = 0.0;
    const double span = r0 - m.min_range;
    for (;;) {
        pos += rng.exponential() / m.candidates_per_meter;
        const double u = rng.uniform();
        if (pos >= span) break;
        if (u < m.accept_probability) {
            if (hits.count == 0) hits.nearest = m.min_range + pos;
            if (++hits.count >= m.occlusion_hits) break;
        }
    }
    return hits;
}

Result corrupt_particles(const PointCloud& cloud, const ParticleModel& m, std::uint64_t scan_id) {
    std::vector<Point> out;
    Annotation ann;
    out.reserve(cloud.size());
    const double scale = m.rate / m.gamma;
    for (std::size_t k = 0; k < cloud.size(); ++k) {
        const Point& pt = cloud[k];
        const BeamHits hits = trace_beam(m, pt.range(), scan_id, k);
        if (hits.count == 0) {
            out.push_back(pt);
            ann.labels.push_back(Label::Clean);
            ann.source.push_back(k);
            ann.particle_range.push_back(0.0);
        } else if (hits.count >= m.occlusion_hits) {
            ann.dropped.push_back(k);
        } else {
            out.push_back({scale * pt.x, scale * pt.y, scale * pt.z, m.response->intensity(hits.nearest)});
            ann.labels.push_back(Label::Noise);
            ann.source.push_back(k);
            ann.particle_range.push_back(hits.nearest);
        }
    }
    return {PointCloud(std::move(out), cloud.frame_id()), std::move(ann)};
}

}  // namespace

Result corrupt_snow(const PointCloud& cloud, const SnowParams& p, std::uint64_t scan_id) {
    p.validate();
    const ParticleModel m{p.rate,      p.gamma,          &p.response, p.density_per_rate * p.rate, 1.0,
                          p.min_range, p.occlusion_hits, p.seed,      kSnowStream};
    return corrupt_particles(cloud, m, scan_id);
}

Result corrupt_rain(const PointCloud& cloud, const RainParams& p, std::uint64_t scan_id) {
    p.validate();
    double candidates = 0.0, accept = 0.0;
    if (p.rate > 0.0) {
        const double lambda = p.slope();
        candidates = p.n0 / lambda * std::numbers::pi * p.beam_radius * p.beam_radius;
        accept = std::exp(-lambda * p.min_diameter_mm);
    }
    const ParticleModel m{p.rate, p.gamma, &p.response, candidates, accept, p.min_range, p.occlusion_hits, p.seed,
                          kRainStream};
    return corrupt_particles(cloud, m, scan_id);
}

Result corrupt(const PointCloud& cloud, const Params& p, std::uint64_t scan_id) {
    return std::visit(
        [&](const auto& params) -> Result {
            using T = std::decay_t<decltype(params)>;
            if constexpr (std::is_same_v<T, FogParams>) return corrupt_fog(cloud, params, scan_id);
            else if constexpr (std::is_same_v<T, SnowParams>) return corrupt_snow(cloud, params, scan_id);
            else return corrupt_rain(cloud, params, scan_id);
        },
        p);
}

Params severity_preset(Kind kind, int level) {
    if (level < 1 || level > 3)
        throw ConfigError("severity level must be 1, 2 or 3, got " + std::to_string(level));
    const int i = level - 1;
    switch (kind) {
        case Kind::Fog: {
            static constexpr double kBeta[3] = {0.008, 0.02, 0.05};
            FogParams p;
            p.beta = kBeta[i];
            return p;
        }
        case Kind::Snow: {
            static constexpr double kRate[3] = {0.5, 1.5, 2.5};
            SnowParams p;
            p.rate = kRate[i];
            return p;
        }
        case Kind::Rain: {
            static constexpr double kRate[3] = {10.0, 25.0, 50.0};
            RainParams p;
            p.rate = kRate[i];
            return p;
        }
    }
    throw ConfigError("unknown corruption kind");
}

Params with_seed(Params p, std::uint64_t seed) {
    std::visit([seed](auto& params) { params.seed = seed; }, p);
    return p;
}

namespace {

void write_list(std::ostream& os, const std::vector<std::size_t>& v) {
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) os << ',';
        os << v[k];
    }
}

std::vector<std::size_t> parse_list(const std::string& s, const std::string& line) {
    std::vector<std::size_t> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw DataError("bad index '" + tok + "' in annotation line: " + line);
        }
    }
    return out;
}

}  // namespace

void write_annotation_line(std::ostream& os, const std::string& scan_id, const Annotation& a) {
    std::vector<std::size_t> noise;
    for (std::size_t k = 0; k < a.labels.size(); ++k)
        if (a.labels[k] == Label::Noise) noise.push_back(k);
    os << scan_id << "\tnoise=";
    write_list(os, noise);
    os << "\tdropped=";
    write_list(os, a.dropped);
    os << '\n';
}

AnnotationRecord parse_annotation_line(const std::string& line) {
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.compare(t1 + 1, 6, "noise=") != 0 || line.compare(t2 + 1, 8, "dropped=") != 0)
        throw DataError("malformed annotation line: " + line);
    AnnotationRecord rec;
    rec.scan_id = line.substr(0, t1);
    rec.noise = parse_list(line.substr(t1 + 7, t2 - t1 - 7), line);
    rec.dropped = parse_list(line.substr(t2 + 9), line);
    return rec;
}

}  // namespace wlpr::weather

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "weatherlpr/error.hpp"
#include "weatherlpr/rng.hpp"
#include "weatherlpr/weathersim.hpp"
#include "weatherlpr/world.hpp"

using namespace wlpr;
using namespace wlpr::weather;
using wlpr::world::make_synthetic_world;
using wlpr::world::Scan;
using wlpr::world::World;
using wlpr::world::WorldOptions;
using namespace wlpr::testing;

TEST(Fog, BranchAgreesWithIndependentEvaluation) {
    for (int scan = 0; scan < 10; ++scan) {
        const PointCloud in = random_cloud(100 + scan);
        for (int level = 1; level <= 3; ++level) {
            auto p = std::get<FogParams>(severity_preset(Kind::Fog, level));
            p.seed = 7;
            const Result res = corrupt_fog(in, p, scan);
            std::size_t mismatches = 0;
            for (std::size_t j = 0; j < res.cloud.size(); ++j) {
                const Point& src = in[res.annotation.source[j]];
                const FogBranch b = fog_branch(src, p);
                const FogBranch recorded = res.annotation.labels[j] == Label::Noise ? FogBranch::Soft : FogBranch::Hard;
                if (b != recorded) ++mismatches;
                const double r0 = src.range();
                if (recorded == FogBranch::Soft) {
                    EXPECT_LT(res.cloud[j].range(), r0);
                    EXPECT_NEAR(res.cloud[j].intensity, std::min(1.0, src.intensity * r0 * r0 * p.beta * p.it_max), 1e-12);
                } else {
                    EXPECT_EQ(res.cloud[j].x, src.x);
                    EXPECT_NEAR(res.cloud[j].intensity, src.intensity * std::exp(-2.0 * p.alpha * r0), 1e-12);
                }
            }
            for (std::size_t k : res.annotation.dropped)
                if (fog_branch(in[k], p) != FogBranch::Lost) ++mismatches;
            EXPECT_EQ(mismatches, 0u);
            EXPECT_EQ(res.cloud.size() + res.annotation.dropped.size(), in.size());
        }
    }
}

TEST(Fog, ScatterPreservesDirection) {
    const PointCloud in = random_cloud(3);
    const Result res = corrupt(in, severity_preset(Kind::Fog, 3));
    for (std::size_t j = 0; j < res.cloud.size(); ++j) {
        if (res.annotation.labels[j] != Label::Noise) continue;
        const Point& a = res.cloud[j];
        const Point& b = in[res.annotation.source[j]];
        const double cross = std::abs(a.x * b.y - a.y * b.x);
        EXPECT_LT(cross, 1e-9 * b.range() * b.range());
        EXPECT_GT(a.x * b.x + a.y * b.y + a.z * b.z, 0.0);
    }
}

TEST(Corruption, ZeroSeverityIsIdentity) {
    const PointCloud in = random_cloud(4);
    FogParams fog;
    fog.alpha = 0.0;
    fog.beta = 0.0;
    SnowParams snow;
    RainParams rain;
    for (const Params& p : {Params(fog), Params(snow), Params(rain)}) {
        const Result res = corrupt(in, p, 11);
        EXPECT_EQ(res.cloud, in) << to_string(kind_of(p));
        EXPECT_EQ(res.annotation.noise_count(), 0u);
        EXPECT_TRUE(res.annotation.dropped.empty());
    }
}

TEST(Corruption, NoiseMonotoneAcrossPresets) {
    WorldOptions opt;
    opt.n_places = 20;
    opt.n_train = 1;
    const World world = make_synthetic_world(opt);
    for (Kind kind : {Kind::Fog, Kind::Snow, Kind::Rain}) {
        for (const Scan& scan : world.database) {
            std::size_t prev = 0;
            for (int level = 1; level <= 3; ++level) {
                const Result res = corrupt(scan.cloud, with_seed(severity_preset(kind, level), 99), scan.id);
                const std::size_t n = res.annotation.noise_count();
                EXPECT_GE(n, prev) << to_string(kind) << " scan " << scan.id << " level " << level;
                prev = n;
            }
            EXPECT_GT(prev, 0u) << to_string(kind);
        }
    }
}

TEST(Corruption, DeterministicAndOrderIndependent) {
    const PointCloud in = random_cloud(5);
    for (Kind kind : {Kind::Fog, Kind::Snow, Kind::Rain}) {
        const Params p = with_seed(severity_preset(kind, 2), 1234);
        const Result a = corrupt(in, p, 42), b = corrupt(in, p, 42);
        EXPECT_EQ(a.cloud, b.cloud);
        EXPECT_EQ(a.annotation.labels, b.annotation.labels);
        const Result other = corrupt(in, with_seed(p, 1235), 42);
        if (kind != Kind::Fog || a.annotation.noise_count() > 0) EXPECT_FALSE(other.cloud == a.cloud);
    }
}

TEST(Particles, NoiseShrinksByRateOverGamma) {
    const PointCloud in = random_cloud(6);
    auto p = std::get<SnowParams>(severity_preset(Kind::Snow, 3));
    const Result res = corrupt_snow(in, p, 0);
    const double scale = p.rate / p.gamma;
    std::size_t checked = 0;
    for (std::size_t j = 0; j < res.cloud.size(); ++j) {
        if (res.annotation.labels[j] != Label::Noise) continue;
        const Point& src = in[res.annotation.source[j]];
        EXPECT_DOUBLE_EQ(res.cloud[j].x, scale * src.x);
        EXPECT_DOUBLE_EQ(res.cloud[j].intensity, p.response.intensity(res.annotation.particle_range[j]));
        EXPECT_GE(res.annotation.particle_range[j], p.min_range);
        EXPECT_LT(res.annotation.particle_range[j], src.range());
        ++checked;
    }
    EXPECT_GT(checked, 0u);
}

TEST(Particles, ResponseFormula) {
    ParticleResponse r;
    const double rs = 20.0;
    const double t = r.focal_offset - (1.0 - rs / r.r_max);
    EXPECT_DOUBLE_EQ(r.intensity(rs), r.t_r + r.i_max * r.focal_slope * t * t);
}

TEST(Rain, MarshallPalmerSlope) {
    RainParams p;
    p.rate = 25.0;
    EXPECT_NEAR(p.slope(), 4.1 * std::pow(25.0, -0.21), 1e-15);
}

TEST(Presets, TableAndErrors) {
    EXPECT_DOUBLE_EQ(std::get<FogParams>(severity_preset(Kind::Fog, 2)).beta, 0.02);
    EXPECT_DOUBLE_EQ(std::get<SnowParams>(severity_preset(Kind::Snow, 1)).rate, 0.5);
    EXPECT_DOUBLE_EQ(std::get<RainParams>(severity_preset(Kind::Rain, 3)).rate, 50.0);
    EXPECT_THROW(severity_preset(Kind::Fog, 0), ConfigError);
    EXPECT_THROW(severity_preset(Kind::Rain, 4), ConfigError);
    EXPECT_THROW(parse_kind("hail"), ConfigError);
    EXPECT_EQ(parse_kind("rain"), Kind::Rain);
    FogParams bad;
    bad.beta = -1.0;
    EXPECT_THROW(corrupt_fog(PointCloud(), bad), ConfigError);
}

TEST(Annotation, LineRoundTrip) {
    Annotation a;
    a.labels = {Label::Clean, Label::Noise, Label::Noise, Label::Clean};
    a.dropped = {3, 9};
    std::ostringstream os;
    write_annotation_line(os, "000007", a);
    EXPECT_EQ(os.str(), "000007\tnoise=1,2\tdropped=3,9\n");
    std::string line = os.str();
    line.pop_back();
    const AnnotationRecord rec = parse_annotation_line(line);
    EXPECT_EQ(rec.scan_id, "000007");
    EXPECT_EQ(rec.noise, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(rec.dropped, (std::vector<std::size_t>{3, 9}));
    EXPECT_TRUE(parse_annotation_line("x\tnoise=\tdropped=").noise.empty());
    EXPECT_THROW(parse_annotation_line("x\tnoise=a\tdropped="), DataError);
    EXPECT_THROW(parse_annotation_line("garbage"), DataError);
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include "weatherlpr/error.hpp"
#include "weatherlpr/pointcloud.hpp"
#include "weatherlpr/rng.hpp"

using namespace wlpr;

namespace {

std::vector<std::uint8_t> encode(std::initializer_list<float> values) {
    std::vector<std::uint8_t> b(values.size() * 4);
    std::size_t off = 0;
    for (float v : values) {
        std::memcpy(b.data() + off, &v, 4);  // host is little-endian
        off += 4;
    }
    return b;
}

ProjectionSpec symmetric_spec() {
    ProjectionSpec s;
    s.height = 16;
    s.width = 64;
    s.fov_up = 10.0 * std::numbers::pi / 180.0;
    s.fov_down = -10.0 * std::numbers::pi / 180.0;
    s.max_range = 50.0;
    return s;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("wlpr_pc_" + name);
}

}  // namespace

TEST(ReadScan, TwoPoints) {
    const PointCloud c = parse_scan(encode({1, 0, 0, 0.5f, 0, 2, 0, 0.25f}));
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[0], (Point{1, 0, 0, 0.5}));
    EXPECT_EQ(c[1], (Point{0, 2, 0, 0.25}));
}

TEST(ReadScan, EmptyFile) { EXPECT_TRUE(parse_scan({}).empty()); }

TEST(ReadScan, BadLengthReportsOffset) {
    try {
        parse_scan(std::vector<std::uint8_t>(17, 0));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 16u);
    }
}

TEST(ReadScan, NonFiniteRejectedAtRecord) {
    auto bytes = encode({1, 1, 1, 0.1f, 1, NAN, 1, 0.1f});
    try {
        parse_scan(bytes);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 16u);
    }
}

TEST(ReadScan, EightBitIntensityNormalized) {
    const PointCloud c = parse_scan(encode({1, 0, 0, 255, 2, 0, 0, 51}));
    EXPECT_DOUBLE_EQ(c[0].intensity, 1.0);
    EXPECT_NEAR(c[1].intensity, 0.2, 1e-12);
}

TEST(ReadScan, FileRoundTrip) {
    const PointCloud c({{1.5, -2.25, 0.5, 0.75}, {10, 20, -1, 0.0}});
    const auto path = temp_file("roundtrip.bin");
    write_scan(path, c);
    EXPECT_EQ(read_scan(path), c);
    EXPECT_EQ(std::filesystem::file_size(path), 32u);
    std::filesystem::remove(path);
    EXPECT_THROW(read_scan(path), DataError);
}

TEST(PointCloud, RejectsNonFinite) { EXPECT_THROW(PointCloud({{0, std::nan(""), 0, 0}}), DataError); }

TEST(Project, ForwardPointLandsInCenter) {
    const ProjectionSpec s = symmetric_spec();
    const RangeImage img = project(PointCloud({{s.max_range, 0, 0, 1.0}}), s);
    EXPECT_EQ(img.valid_count(), 1u);
    EXPECT_TRUE(img.valid(s.height / 2, s.width / 2));
    EXPECT_DOUBLE_EQ(img.distance(s.height / 2, s.width / 2), 1.0);
    EXPECT_DOUBLE_EQ(img.intensity(s.height / 2, s.width / 2), 1.0);
}

TEST(Project, NearerPointWins) {
    const ProjectionSpec s = symmetric_spec();
    const PointCloud c({{9, 0, 0, 0.9}, {5, 0, 0, 0.5}});
    ProjectionStats stats;
    const RangeImage img = project(c, s, &stats);
    EXPECT_DOUBLE_EQ(img.distance(s.height / 2, s.width / 2), 5.0 / s.max_range);
    EXPECT_DOUBLE_EQ(img.intensity(s.height / 2, s.width / 2), 0.5);
    EXPECT_EQ(stats.occluded, 1u);
}

TEST(Project, SkipReasonsAreCounted) {
    const ProjectionSpec s = symmetric_spec();
    ProjectionStats stats;
    project(PointCloud({{0, 0, 0, 0.1}, {100, 0, 0, 0.1}, {3, 1, 0, 0.1}}), s, &stats);
    EXPECT_EQ(stats.zero_range, 1u);
    EXPECT_EQ(stats.beyond_max_range, 1u);
    EXPECT_EQ(stats.placed, 1u);
    EXPECT_EQ(stats.total(), 3u);
}

TEST(Project, PixelMinimumMatchesBruteForce) {
    const ProjectionSpec s = symmetric_spec();
    Rng rng(51);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Point> pts;
        for (int i = 0; i < 100; ++i) {
            // Few distinct directions so collisions are common.
            const double yaw = (static_cast<int>(rng.below(8)) - 4) * 0.05;
            const double pitch = (static_cast<int>(rng.below(4)) - 2) * 0.03;
            const double r = rng.uniform(1.0, 45.0);
            pts.push_back({r * std::cos(pitch) * std::cos(yaw), r * std::cos(pitch) * std::sin(yaw), r * std::sin(pitch),
                           rng.uniform()});
        }
        std::map<std::pair<int, int>, double> best;
        for (const Point& p : pts) {
            const PixelIndex px = pixel_of(p, s);
            auto [it, fresh] = best.try_emplace({px.row, px.col}, p.range());
            if (!fresh) it->second = std::min(it->second, p.range());
        }
        ProjectionStats stats;
        const RangeImage img = project(PointCloud(pts), s, &stats);
        EXPECT_EQ(img.valid_count(), best.size());
        EXPECT_EQ(stats.total(), pts.size());
        for (const auto& [px, r] : best) EXPECT_DOUBLE_EQ(img.distance(px.first, px.second), r / s.max_range);
    }
}

TEST(Project, IndependentOfPointOrder) {
    const ProjectionSpec s = symmetric_spec();
    Rng rng(52);
    std::vector<Point> pts;
    for (int i = 0; i < 300; ++i)
        pts.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-2, 2), rng.uniform()});
    // Exact duplicates in range but different intensity exercise the tie rule.
    pts.push_back({pts[0].x, pts[0].y, pts[0].z, 0.123});
    const RangeImage a = project(PointCloud(pts), s);
    std::reverse(pts.begin(), pts.end());
    const RangeImage b = project(PointCloud(pts), s);
    EXPECT_TRUE(a == b);
}

TEST(BackProject, EmptyMaskGivesEmptyCloud) { EXPECT_TRUE(back_project(RangeImage(symmetric_spec())).empty()); }

TEST(BackProject, CenterColumnFacesForward) {
    const ProjectionSpec s = symmetric_spec();
    RangeImage img(s);
    img.set(s.height / 2, s.width / 2, 0.5, 0.3);
    const PointCloud c = back_project(img);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_NEAR(c[0].range(), 0.5 * s.max_range, 1e-9);
    EXPECT_GT(c[0].x, 0.0);
    // Pixel centers sit half a pixel off the axis.
    EXPECT_NEAR(std::atan2(c[0].y, c[0].x), -std::numbers::pi / s.width, 1e-12);
}

TEST(BackProject, ColumnZeroFacesBackward) {
    const ProjectionSpec s = symmetric_spec();
    RangeImage img(s);
    img.set(s.height / 2, 0, 0.5, 0.3);
    const PointCloud c = back_project(img);
    EXPECT_LT(c[0].x, 0.0);
    EXPECT_NEAR(std::abs(c[0].y), 0.5 * s.max_range * std::sin(std::numbers::pi / s.width) *
                                       std::cos(std::asin(c[0].z / c[0].range())),
                1e-9);
}

TEST(BackProject, ReprojectionIsIdentityOnValidPixels) {
    const ProjectionSpec s = symmetric_spec();
    Rng rng(53);
    RangeImage img(s);
    for (int r = 0; r < s.height; ++r)
        for (int c = 0; c < s.width; ++c)
            if (rng.uniform() < 0.4) img.set(r, c, rng.uniform(0.01, 1.0), rng.uniform());
    const RangeImage back = project(back_project(img), s);
    for (int r = 0; r < s.height; ++r)
        for (int c = 0; c < s.width; ++c) {
            ASSERT_EQ(back.valid(r, c), img.valid(r, c)) << r << "," << c;
            EXPECT_NEAR(back.distance(r, c), img.distance(r, c), 1e-12);
            EXPECT_EQ(back.intensity(r, c), img.intensity(r, c));
        }
}

TEST(BackProject, PixelCenterCloudsRoundTrip) {
    const ProjectionSpec s = ProjectionSpec::kitti();
    Rng rng(54);
    std::vector<Point> pts;
    for (int i = 0; i < 200; ++i) {
        const int row = static_cast<int>(rng.below(s.height)), col = static_cast<int>(rng.below(s.width));
        const Point d = pixel_center_direction(row, col, s);
        const double r = rng.uniform(1.0, 79.0);
        pts.push_back({d.x * r, d.y * r, d.z * r, rng.uniform()});
    }
    // Keep one point per pixel so nothing is occluded.
    std::map<std::pair<int, int>, Point> unique;
    for (const Point& p : pts) unique.emplace(std::pair{pixel_of(p, s).row, pixel_of(p, s).col}, p);
    std::vector<Point> in;
    for (const auto& [k, p] : unique) in.push_back(p);
    const PointCloud out = back_project(project(PointCloud(in), s));
    ASSERT_EQ(out.size(), in.size());
    for (const Point& q : out) {
        const auto it = unique.find({pixel_of(q, s).row, pixel_of(q, s).col});
        ASSERT_NE(it, unique.end());
        EXPECT_NEAR(q.x, it->second.x, 1e-5);
        EXPECT_NEAR(q.y, it->second.y, 1e-5);
        EXPECT_NEAR(q.z, it->second.z, 1e-5);
    }
}

TEST(RangeImage, TensorRoundTripAndThreshold) {
    const ProjectionSpec s = symmetric_spec();
    RangeImage img(s);
    img.set(1, 2, 0.4, 0.6);
    img.set(3, 4, 0.01, 0.2);
    const Tensor t = img.to_tensor();
    EXPECT_EQ(t.shape(), (Shape{1, s.height, s.width, 2}));
    EXPECT_TRUE(RangeImage::from_tensor(t, s) == img);
    const RangeImage thresholded = RangeImage::from_tensor(t, s, 0.02);
    EXPECT_TRUE(thresholded.valid(1, 2));
    EXPECT_FALSE(thresholded.valid(3, 4));
    EXPECT_EQ(thresholded.intensity(3, 4), 0.0);
}

TEST(ProjectionSpec, Validation) {
    ProjectionSpec s;
    s.fov_up = s.fov_down;
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(project(PointCloud(), s), ConfigError);
    EXPECT_NO_THROW(ProjectionSpec::nclt().validate());
    EXPECT_EQ(ProjectionSpec::nclt().height, 32);
    EXPECT_EQ(ProjectionSpec::kitti().width, 1920);
}

TEST(RangeImageFile, RoundTripIsExact) {
    Rng rng(17);
    RangeImage img(symmetric_spec());
    for (int k = 0; k < 300; ++k) img.set(static_cast<int>(rng.below(16)), static_cast<int>(rng.below(64)), rng.uniform(), rng.uniform());
    const auto path = temp_file("img.rimg");
    write_range_image(path, img);
    EXPECT_EQ(std::filesystem::file_size(path), 8 + 12 + 24 + 16u * 64 * 17);
    EXPECT_TRUE(read_range_image(path) == img);
}

TEST(RangeImageFile, CorruptFilesRejected) {
    const auto path = temp_file("bad.rimg");
    EXPECT_THROW(read_range_image(temp_file("absent.rimg")), DataError);
    write_range_image(path, RangeImage(symmetric_spec()));
    std::vector<char> bytes(std::filesystem::file_size(path));
    std::ifstream(path, std::ios::binary).read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    const auto rewrite = [&](const std::vector<char>& b) {
        std::ofstream(path, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    auto b = bytes;
    b[0] = 'X';
    rewrite(b);
    EXPECT_THROW(read_range_image(path), ParseError);
    b = bytes;
    b.pop_back();
    rewrite(b);
    EXPECT_THROW(read_range_image(path), ParseError);
    b = bytes;
    b[44] = 2;  // first validity flag
    rewrite(b);
    EXPECT_THROW(read_range_image(path), ParseError);
    b = bytes;
    b[44 + 16 * 64 + 7] = 0x3f;  // invalid pixel with a nonzero distance
    rewrite(b);
    EXPECT_THROW(read_range_image(path), ParseError);
}

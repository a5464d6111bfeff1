#include "weatherlpr/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <tuple>

#include "weatherlpr/error.hpp"

namespace wlpr {

double Point::range() const noexcept { return std::sqrt(x * x + y * y + z * z); }

PointCloud::PointCloud(std::vector<Point> points, std::string frame_id)
    : points_(std::move(points)), frame_id_(std::move(frame_id)) {
    for (std::size_t k = 0; k < points_.size(); ++k) {
        const Point& p = points_[k];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.intensity))
            throw DataError("point " + std::to_string(k) + " has a non-finite component");
    }
}

void normalize_intensity(std::vector<Point>& points) {
    double raw_max = 0.0;
    for (const Point& p : points) raw_max = std::max(raw_max, p.intensity);
    const double scale = raw_max > 1.0 ? 1.0 / 255.0 : 1.0;
    for (Point& p : points) p.intensity = std::clamp(p.intensity * scale, 0.0, 1.0);
}

namespace {

float load_f32_le(const std::uint8_t* b) {
    std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return std::bit_cast<float>(u);
}

void store_f32_le(std::uint8_t* b, float f) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    b[0] = static_cast<std::uint8_t>(u);
    b[1] = static_cast<std::uint8_t>(u >> 8);
    b[2] = static_cast<std::uint8_t>(u >> 16);
    b[3] = static_cast<std::uint8_t>(u >> 24);
}

}  // namespace

PointCloud parse_scan(const std::vector<std::uint8_t>& bytes, std::string frame_id) {
    constexpr std::size_t kStride = 16;
    if (bytes.size() % kStride != 0)
        throw ParseError("scan length " + std::to_string(bytes.size()) + " is not a multiple of 16",
                         bytes.size() / kStride * kStride);
    std::vector<Point> pts;
    pts.reserve(bytes.size() / kStride);
    for (std::size_t off = 0; off < bytes.size(); off += kStride) {
        const std::uint8_t* b = bytes.data() + off;
        Point p{load_f32_le(b), load_f32_le(b + 4), load_f32_le(b + 8), load_f32_le(b + 12)};
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.intensity))
            throw ParseError("non-finite value in point record", off);
        pts.push_back(p);
    }
    normalize_intensity(pts);
    return PointCloud(std::move(pts), std::move(frame_id));
}

PointCloud read_scan(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open scan " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw DataError("read failure on " + path.string());
    try {
        return parse_scan(bytes, path.stem().string());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": scan length or content invalid", e.offset());
    }
}

std::vector<std::uint8_t> encode_scan(const PointCloud& cloud) {
    std::vector<std::uint8_t> bytes(cloud.size() * 16);
    for (std::size_t k = 0; k < cloud.size(); ++k) {
        const Point& p = cloud[k];
        std::uint8_t* b = bytes.data() + 16 * k;
        store_f32_le(b, static_cast<float>(p.x));
        store_f32_le(b + 4, static_cast<float>(p.y));
        store_f32_le(b + 8, static_cast<float>(p.z));
        store_f32_le(b + 12, static_cast<float>(p.intensity));
    }
    return bytes;
}

void write_scan(const std::filesystem::path& path, const PointCloud& cloud) {
    const auto bytes = encode_scan(cloud);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write scan " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failure on " + path.string());
}

ProjectionSpec ProjectionSpec::kitti() { return ProjectionSpec{}; }

ProjectionSpec ProjectionSpec::nclt() {
    constexpr double kDeg = std::numbers::pi / 180.0;
    return ProjectionSpec{32, 1440, 10.67 * kDeg, -30.67 * kDeg, 80.0};
}

void ProjectionSpec::validate() const {
    if (height < 1 || width < 1)
        throw ConfigError("projection: H and W must be >= 1, got H=" + std::to_string(height) +
                          " W=" + std::to_string(width));
    if (!(fov_up > fov_down)) throw ConfigError("projection: fov_up must exceed fov_down");
    if (!(max_range > 0.0)) throw ConfigError("projection: max_range must be > 0");
}

RangeImage::RangeImage(const ProjectionSpec& spec)
    : spec_(spec),
      mask_(static_cast<std::size_t>(spec.height) * spec.width, 0),
      values_(2 * static_cast<std::size_t>(spec.height) * spec.width, 0.0) {
    spec.validate();
}

void RangeImage::set(int row, int col, double d, double i) {
    const std::size_t k = index(row, col);
    mask_[k] = 1;
    values_[2 * k] = std::clamp(d, 0.0, 1.0);
    values_[2 * k + 1] = std::clamp(i, 0.0, 1.0);
}

void RangeImage::clear(int row, int col) {
    const std::size_t k = index(row, col);
    mask_[k] = 0;
    values_[2 * k] = 0.0;
    values_[2 * k + 1] = 0.0;
}

std::size_t RangeImage::valid_count() const noexcept {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

Tensor RangeImage::to_tensor() const {
    return Tensor(Shape{1, spec_.height, spec_.width, 2}, values_);
}

RangeImage RangeImage::from_tensor(const Tensor& t, const ProjectionSpec& spec, double min_valid_distance) {
    if (!(t.shape() == Shape{1, spec.height, spec.width, 2}))
        throw ShapeError("range image tensor must be (1, " + std::to_string(spec.height) + ", " +
                         std::to_string(spec.width) + ", 2), got " + t.shape().str());
    RangeImage img(spec);
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c) {
            const double d = t.at(0, r, c, 0);
            if (d > min_valid_distance) img.set(r, c, d, t.at(0, r, c, 1));
        }
    return img;
}

PixelIndex pixel_of(const Point& p, const ProjectionSpec& spec) {
    const double r = p.range();
    const double yaw = std::atan2(p.y, p.x);
    const double pitch = std::asin(std::clamp(p.z / r, -1.0, 1.0));
    const double u = 0.5 * (1.0 - yaw / std::numbers::pi) * spec.width;
    const double v = (1.0 - (pitch - spec.fov_down) / (spec.fov_up - spec.fov_down)) * spec.height;
    const int col = std::clamp(static_cast<int>(std::floor(u)), 0, spec.width - 1);
    const int row = std::clamp(static_cast<int>(std::floor(v)), 0, spec.height - 1);
    return {row, col};
}

RangeImage project(const PointCloud& cloud, const ProjectionSpec& spec, ProjectionStats* stats) {
    spec.validate();
    RangeImage img(spec);
    ProjectionStats st;
    const std::size_t npix = static_cast<std::size_t>(spec.height) * spec.width;
    std::vector<std::int64_t> winner(npix, -1);
    auto nearer = [&](const Point& a, const Point& b) {
        const double ra = a.range(), rb = b.range();
        if (ra != rb) return ra < rb;
        return std::tie(a.x, a.y, a.z, a.intensity) < std::tie(b.x, b.y, b.z, b.intensity);
    };
    for (std::size_t k = 0; k < cloud.size(); ++k) {
        const Point& p = cloud[k];
        const double r = p.range();
        if (r == 0.0) {
            ++st.zero_range;
            continue;
        }
        if (r > spec.max_range) {
            ++st.beyond_max_range;
            continue;
        }
        const PixelIndex px = pixel_of(p, spec);
        const std::size_t idx = static_cast<std::size_t>(px.row) * spec.width + px.col;
        if (winner[idx] < 0) {
            winner[idx] = static_cast<std::int64_t>(k);
            ++st.placed;
        } else {
            ++st.occluded;
            if (nearer(p, cloud[static_cast<std::size_t>(winner[idx])])) winner[idx] = static_cast<std::int64_t>(k);
        }
    }
    for (std::size_t idx = 0; idx < npix; ++idx) {
        if (winner[idx] < 0) continue;
        const Point& p = cloud[static_cast<std::size_t>(winner[idx])];
        img.set(static_cast<int>(idx / spec.width), static_cast<int>(idx % spec.width), p.range() / spec.max_range,
                p.intensity);
    }
    if (stats) *stats = st;
    return img;
}

Point pixel_center_direction(int row, int col, const ProjectionSpec& spec) {
    const double uc = col + 0.5;
    const double vc = row + 0.5;
    const double yaw = std::numbers::pi * (1.0 - 2.0 * uc / spec.width);
    const double pitch = spec.fov_down + (1.0 - vc / spec.height) * (spec.fov_up - spec.fov_down);
    return {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch), 0.0};
}

PointCloud back_project(const RangeImage& img) {
    const ProjectionSpec& spec = img.spec();
    std::vector<Point> pts;
    pts.reserve(img.valid_count());
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c) {
            if (!img.valid(r, c)) continue;
            const Point dir = pixel_center_direction(r, c, spec);
            const double range = img.distance(r, c) * spec.max_range;
            pts.push_back({dir.x * range, dir.y * range, dir.z * range, img.intensity(r, c)});
        }
    return PointCloud(std::move(pts));
}

namespace {

constexpr char kImageMagic[8] = {'W', 'L', 'P', 'R', 'R', 'I', 'M', 'G'};
constexpr std::uint32_t kImageVersion = 1;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    const auto bits = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(v);
    for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
}

template <class T>
T get_le(const std::vector<std::uint8_t>& b, std::size_t& pos, const std::string& what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    if (b.size() - pos < sizeof(T)) throw ParseError(what + ": truncated", pos);
    U v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<U>(b[pos + k]) << (8 * k);
    pos += sizeof(T);
    return std::bit_cast<T>(v);
}

}  // namespace

void write_range_image(const std::filesystem::path& path, const RangeImage& img) {
    const ProjectionSpec& s = img.spec();
    std::vector<std::uint8_t> out(std::begin(kImageMagic), std::end(kImageMagic));
    put_le(out, kImageVersion);
    put_le(out, static_cast<std::uint32_t>(s.height));
    put_le(out, static_cast<std::uint32_t>(s.width));
    put_le(out, s.fov_up);
    put_le(out, s.fov_down);
    put_le(out, s.max_range);
    for (int r = 0; r < s.height; ++r)
        for (int c = 0; c < s.width; ++c) out.push_back(img.valid(r, c) ? 1 : 0);
    for (int r = 0; r < s.height; ++r)
        for (int c = 0; c < s.width; ++c) {
            put_le(out, img.distance(r, c));
            put_le(out, img.intensity(r, c));
        }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write range image " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

RangeImage read_range_image(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open range image " + path.string());
    const std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const std::string what = "range image " + path.string();
    if (b.size() < 8 || !std::equal(std::begin(kImageMagic), std::end(kImageMagic), b.begin()))
        throw ParseError(what + ": bad magic", 0);
    std::size_t pos = 8;
    if (get_le<std::uint32_t>(b, pos, what) != kImageVersion) throw ParseError(what + ": unsupported version", 8);
    ProjectionSpec s;
    s.height = static_cast<int>(get_le<std::uint32_t>(b, pos, what));
    s.width = static_cast<int>(get_le<std::uint32_t>(b, pos, what));
    s.fov_up = get_le<double>(b, pos, what);
    s.fov_down = get_le<double>(b, pos, what);
    s.max_range = get_le<double>(b, pos, what);
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ParseError(what + ": " + e.what(), 12);
    }
    const std::size_t n = static_cast<std::size_t>(s.height) * s.width;
    if (b.size() != pos + n * 17) throw ParseError(what + ": size does not match " + std::to_string(s.height) + "x" +
                                                   std::to_string(s.width), std::min(b.size(), pos + n * 17));
    RangeImage img(s);
    const std::size_t flags = pos;
    pos += n;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = get_le<double>(b, pos, what);
        const double i = get_le<double>(b, pos, what);
        const int r = static_cast<int>(k / s.width), c = static_cast<int>(k % s.width);
        if (b[flags + k] > 1) throw ParseError(what + ": bad validity flag", flags + k);
        if (b[flags + k]) {
            if (!(d >= 0.0 && d <= 1.0 && i >= 0.0 && i <= 1.0)) throw ParseError(what + ": value outside [0, 1]", pos - 16);
            img.set(r, c, d, i);
        } else if (d != 0.0 || i != 0.0) {
            throw ParseError(what + ": invalid pixel holds a value", pos - 16);
        }
    }
    return img;
}

}  // namespace wlpr

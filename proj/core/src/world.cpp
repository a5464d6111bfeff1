#include "weatherlpr/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "weatherlpr/error.hpp"
#include "weatherlpr/rng.hpp"

namespace wlpr::world {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Box {
    double x0, y0, x1, y1, height, reflectivity;
};

struct Pole {
    double x, y, radius, height, reflectivity;
};

struct Scene {
    std::vector<Box> boxes;
    std::vector<Pole> poles;
};

struct Loop {
    double cx, cy, radius;
    Pose at(double arc, double lateral) const {
        const double a = arc / radius;
        const double r = radius + lateral;
        // Counter-clockwise travel: heading is the tangent direction.
        return {cx + r * std::cos(a), cy + r * std::sin(a), a + kPi / 2.0};
    }
};

Loop make_loop(double cx, double length) { return {cx, 0.0, std::max(20.0, length / (2.0 * kPi))}; }

/// Objects scattered along both sides of the loop, clear of the driving
/// corridor.
Scene make_scene(const Loop& loop, std::uint64_t seed) {
    Rng rng(seed);
    Scene s;
    const double length = 2.0 * kPi * loop.radius;
    for (double arc = 0.0; arc < length; arc += rng.uniform(5.0, 11.0)) {
        for (int side : {-1, 1}) {
            if (rng.uniform() < 0.25) continue;
            const double w = rng.uniform(3.0, 12.0), d = rng.uniform(3.0, 10.0);
            const double off = side * (rng.uniform(6.0, 22.0) + std::max(w, d) / 2.0);
            const Pose c = loop.at(arc, off);
            s.boxes.push_back({c.x - w / 2, c.y - d / 2, c.x + w / 2, c.y + d / 2, rng.uniform(2.5, 16.0),
                               rng.uniform(0.2, 0.9)});
        }
        if (rng.uniform() < 0.6) {
            const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
            const Pose c = loop.at(arc + rng.uniform(0.0, 4.0), side * rng.uniform(3.5, 5.5));
            s.poles.push_back({c.x, c.y, rng.uniform(0.12, 0.35), rng.uniform(4.0, 9.0), rng.uniform(0.4, 0.9)});
        }
    }
    return s;
}

struct Hit {
    double t = kInf;
    double reflectivity = 0.0;
    double cos_incidence = 1.0;
};

void hit_box(const Box& b, double ox, double oy, double ground, const double d[3], Hit& best) {
    double t0 = 0.0, t1 = best.t;
    int axis = -1;
    const double lo[3] = {b.x0 - ox, b.y0 - oy, ground};
    const double hi[3] = {b.x1 - ox, b.y1 - oy, ground + b.height};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (lo[a] > 0.0 || hi[a] < 0.0) return;
            continue;
        }
        double ta = lo[a] / d[a], tb = hi[a] / d[a];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) {
            t0 = ta;
            axis = a;
        }
        t1 = std::min(t1, tb);
        if (t0 > t1) return;
    }
    if (axis < 0 || t0 <= 0.0 || t0 >= best.t) return;
    best = {t0, b.reflectivity, std::abs(d[axis])};
}

void hit_pole(const Pole& p, double ox, double oy, double ground, const double d[3], Hit& best) {
    const double px = ox - p.x, py = oy - p.y;
    const double a = d[0] * d[0] + d[1] * d[1];
    if (a < 1e-12) return;
    const double b = px * d[0] + py * d[1];
    const double c = px * px + py * py - p.radius * p.radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return;
    const double t = (-b - std::sqrt(disc)) / a;
    if (t <= 0.0 || t >= best.t) return;
    const double z = t * d[2];
    if (z < ground || z > ground + p.height) return;
    const double nx = (px + t * d[0]) / p.radius, ny = (py + t * d[1]) / p.radius;
    best = {t, p.reflectivity, std::abs(nx * d[0] + ny * d[1])};
}

PointCloud render(const Scene& scene, const Pose& pose, const WorldOptions& opts, std::uint64_t stream) {
    const ProjectionSpec& spec = opts.sensor;
    const double ground = -opts.sensor_height;
    const double reach = spec.max_range;
    std::vector<const Box*> boxes;
    std::vector<const Pole*> poles;
    for (const Box& b : scene.boxes) {
        const double cx = std::clamp(pose.x, b.x0, b.x1), cy = std::clamp(pose.y, b.y0, b.y1);
        if (std::hypot(cx - pose.x, cy - pose.y) < reach) boxes.push_back(&b);
    }
    for (const Pole& p : scene.poles)
        if (std::hypot(p.x - pose.x, p.y - pose.y) < reach + p.radius) poles.push_back(&p);

    Rng rng(stream);
    const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(spec.height) * spec.width);
    for (int row = 0; row < spec.height; ++row)
        for (int col = 0; col < spec.width; ++col) {
            const Point local = pixel_center_direction(row, col, spec);
            const double d[3] = {cy * local.x - sy * local.y, sy * local.x + cy * local.y, local.z};
            Hit best;
            best.t = reach;
            if (d[2] < 0.0) {
                const double t = ground / d[2];
                if (t < best.t) best = {t, 0.3, -d[2]};
            }
            for (const Box* b : boxes) hit_box(*b, pose.x, pose.y, ground, d, best);
            for (const Pole* p : poles) hit_pole(*p, pose.x, pose.y, ground, d, best);
            const double noise = rng.normal(0.0, opts.range_noise);
            if (best.t >= reach) continue;
            const double t = std::clamp(best.t + noise, 0.1, reach - 1e-6);
            const double inten = std::clamp(best.reflectivity * (0.4 + 0.6 * best.cos_incidence), 0.0, 1.0);
            pts.push_back({t * local.x, t * local.y, t * local.z, inten});
        }
    // Round-trip through the file encoding so in-memory scans equal their
    // files. Plain float casts here were folded away by the SLP vectorizer
    // at -O3 on GCC 11.
    return parse_scan(encode_scan(PointCloud(std::move(pts))));
}

std::string scan_name(std::uint64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06llu.bin", static_cast<unsigned long long>(id));
    return buf;
}

}  // namespace

ProjectionSpec synthetic_sensor() {
    ProjectionSpec s;
    s.height = 32;
    s.width = 256;
    return s;
}

void WorldOptions::validate() const {
    if (n_places < 2) throw ConfigError("world: n_places must be >= 2");
    if (!(revisit_fraction >= 0.0 && revisit_fraction <= 1.0)) throw ConfigError("world: revisit_fraction must be in [0, 1]");
    if (n_train < 0) throw ConfigError("world: n_train must be >= 0");
    if (!(spacing > 0.0)) throw ConfigError("world: spacing must be > 0");
    sensor.validate();
}

World make_synthetic_world(const WorldOptions& opts) {
    opts.validate();
    const int n_queries = opts.n_queries < 0 ? opts.n_places : opts.n_queries;
    const double length = opts.n_places * opts.spacing;
    const Loop main = make_loop(0.0, length);
    const Loop other = make_loop(5000.0, length);
    const Loop training = make_loop(10000.0, std::max(opts.n_train, 2) * opts.spacing * 2.0);
    const Scene main_scene = make_scene(main, derive_seed(opts.seed, {1}));
    const Scene other_scene = make_scene(other, derive_seed(opts.seed, {2}));
    const Scene train_scene = make_scene(training, derive_seed(opts.seed, {3}));

    World w;
    for (int i = 0; i < opts.n_places; ++i) {
        const Pose p = main.at(i * opts.spacing, 0.0);
        w.database.push_back({static_cast<std::uint64_t>(i), p, render(main_scene, p, opts, derive_seed(opts.seed, {10, std::uint64_t(i)}))});
    }
    const int revisits = static_cast<int>(std::lround(opts.revisit_fraction * n_queries));
    Rng jitter(derive_seed(opts.seed, {4}));
    for (int i = 0; i < n_queries; ++i) {
        const bool revisit = i < revisits;
        const Loop& loop = revisit ? main : other;
        const double qspacing = length / std::max(1, revisit ? revisits : n_queries - revisits);
        const int k = revisit ? i : i - revisits;
        const double side = (k % 2 == 0) ? 1.0 : -1.0;
        Pose p = loop.at((k + 0.5) * qspacing, side * opts.query_offset);
        p.yaw += jitter.uniform(-opts.yaw_jitter, opts.yaw_jitter);
        const Scene& scene = revisit ? main_scene : other_scene;
        w.queries.push_back({static_cast<std::uint64_t>(i), p, render(scene, p, opts, derive_seed(opts.seed, {11, std::uint64_t(i)}))});
    }
    for (int i = 0; i < opts.n_train; ++i) {
        const Pose p = training.at(i * opts.spacing * 2.0, 0.0);
        w.train.push_back({static_cast<std::uint64_t>(i), p, render(train_scene, p, opts, derive_seed(opts.seed, {12, std::uint64_t(i)}))});
    }
    return w;
}

World make_synthetic_world(std::uint64_t seed, int n_places, double revisit_fraction) {
    WorldOptions o;
    o.seed = seed;
    o.n_places = n_places;
    o.revisit_fraction = revisit_fraction;
    return make_synthetic_world(o);
}

std::vector<std::pair<std::uint64_t, Pose>> read_poses(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open pose file " + path.string());
    std::vector<std::pair<std::uint64_t, Pose>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream in(line);
        std::vector<double> v;
        double x;
        while (in >> x) v.push_back(x);
        if (!in.eof()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric pose field");
        for (double e : v)
            if (!std::isfinite(e)) throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-finite pose");
        if (v.size() == 4) {
            if (v[0] < 0 || v[0] != std::floor(v[0]))
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad scan id");
            out.push_back({static_cast<std::uint64_t>(v[0]), Pose{v[1], v[2], v[3]}});
        } else if (v.size() == 12) {
            out.push_back({static_cast<std::uint64_t>(out.size()), Pose{v[3], v[11], std::atan2(v[2], v[0])}});
        } else {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 4 or 12 numbers, got " +
                            std::to_string(v.size()));
        }
    }
    return out;
}

void write_poses(const std::filesystem::path& path, const std::vector<Scan>& scans) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write pose file " + path.string());
    char buf[160];
    for (const Scan& s : scans) {
        std::snprintf(buf, sizeof buf, "%llu %.17g %.17g %.17g\n", static_cast<unsigned long long>(s.id), s.pose.x,
                      s.pose.y, s.pose.yaw);
        f << buf;
    }
}

void write_sequence(const std::filesystem::path& dir, const std::vector<Scan>& scans) {
    std::filesystem::create_directories(dir);
    for (const Scan& s : scans) write_scan(dir / scan_name(s.id), s.cloud);
    write_poses(dir / "poses.txt", scans);
}

std::vector<Scan> read_sequence(const std::filesystem::path& dir, const std::filesystem::path& poses) {
    if (!std::filesystem::is_directory(dir)) throw DataError("scan directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".bin") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    const auto pose_list = read_poses(poses.empty() ? dir / "poses.txt" : poses);
    if (pose_list.size() != files.size())
        throw DataError(dir.string() + ": " + std::to_string(files.size()) + " scans but " +
                        std::to_string(pose_list.size()) + " poses");
    std::vector<Scan> out;
    for (std::size_t i = 0; i < files.size(); ++i) {
        PointCloud c = read_scan(files[i]);
        out.push_back({pose_list[i].first, pose_list[i].second, std::move(c)});
    }
    return out;
}

void write_world(const std::filesystem::path& dir, const World& world, const std::string& name) {
    write_sequence(dir / "database", world.database);
    write_sequence(dir / "query", world.queries);
    write_sequence(dir / "train", world.train);
    std::ofstream f(dir / "manifest.cfg");
    f << "name = " << name << "\n"
      << "protocol = kitti\n"
      << "database.dir = database\n"
      << "query.dir = query\n"
      << "train.dir = train\n";
}

}  // namespace wlpr::world

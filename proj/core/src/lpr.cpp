#include "weatherlpr/lpr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "weatherlpr/error.hpp"

namespace wlpr::lpr {

double distance(const Position& a, const Position& b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

void ScParams::validate() const {
    if (rings < 1 || sectors < 1) throw ConfigError("scan context: rings and sectors must be >= 1");
    if (!(max_radius > 0.0) || !std::isfinite(max_radius)) throw ConfigError("scan context: max_radius must be > 0");
}

ScanContext::ScanContext(int rings, int sectors)
    : rings_(rings), sectors_(sectors), cells_(static_cast<std::size_t>(rings) * sectors, 0.0), ring_key_(rings, 0.0) {
    if (rings < 1 || sectors < 1) throw ShapeError("scan context: rings and sectors must be >= 1");
}

ScanContext::ScanContext(int rings, int sectors, std::vector<double> cells, std::vector<double> ring_key)
    : rings_(rings), sectors_(sectors), cells_(std::move(cells)), ring_key_(std::move(ring_key)) {
    if (rings < 1 || sectors < 1) throw ShapeError("scan context: rings and sectors must be >= 1");
    if (cells_.size() != static_cast<std::size_t>(rings) * sectors || ring_key_.size() != static_cast<std::size_t>(rings))
        throw ShapeError("scan context: storage does not match " + std::to_string(rings) + "x" + std::to_string(sectors));
    for (double v : cells_)
        if (!std::isfinite(v)) throw DataError("scan context: non-finite cell");
    for (double v : ring_key_)
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("scan context: ring key outside [0, 1]");
}

ScanContext ScanContext::shifted(int k) const {
    ScanContext out = *this;
    const int s = sectors_;
    k = ((k % s) + s) % s;
    for (int r = 0; r < rings_; ++r)
        for (int j = 0; j < s; ++j)
            out.cells_[static_cast<std::size_t>(r) * s + (j + k) % s] = cells_[static_cast<std::size_t>(r) * s + j];
    return out;
}

ScanContext make_descriptor(const PointCloud& cloud, const ScParams& params) {
    params.validate();
    const int R = params.rings, S = params.sectors;
    ScanContext sc(R, S);
    std::vector<char> occupied(sc.cells_.size(), 0);
    for (const Point& p : cloud) {
        const double rho = std::hypot(p.x, p.y);
        if (rho >= params.max_radius) continue;
        double theta = std::atan2(p.y, p.x);
        if (theta < 0.0) theta += 2.0 * std::numbers::pi;
        const int ring = std::min(R - 1, static_cast<int>(rho / params.max_radius * R));
        const int sector = std::min(S - 1, static_cast<int>(theta / (2.0 * std::numbers::pi) * S));
        const std::size_t k = static_cast<std::size_t>(ring) * S + sector;
        if (!occupied[k] || p.z > sc.cells_[k]) sc.cells_[k] = p.z;
        occupied[k] = 1;
    }
    for (int r = 0; r < R; ++r) {
        int n = 0;
        for (int j = 0; j < S; ++j) n += occupied[static_cast<std::size_t>(r) * S + j];
        sc.ring_key_[r] = static_cast<double>(n) / S;
    }
    return sc;
}

namespace {

// Columns scaled to unit length, stored column-major; zero columns stay zero
// and are flagged in `empty`.
struct UnitColumns {
    std::vector<double> v;
    std::vector<char> empty;
};

UnitColumns unit_columns(const ScanContext& sc) {
    const int R = sc.rings(), S = sc.sectors();
    UnitColumns u{std::vector<double>(static_cast<std::size_t>(R) * S, 0.0), std::vector<char>(S, 1)};
    for (int j = 0; j < S; ++j) {
        double s = 0.0;
        for (int r = 0; r < R; ++r) s += sc.cell(r, j) * sc.cell(r, j);
        if (s == 0.0) continue;
        u.empty[j] = 0;
        const double n = std::sqrt(s);
        for (int r = 0; r < R; ++r) u.v[static_cast<std::size_t>(j) * R + r] = sc.cell(r, j) / n;
    }
    return u;
}

}  // namespace

ScMatch sc_distance(const ScanContext& a, const ScanContext& b) {
    if (a.rings() != b.rings() || a.sectors() != b.sectors())
        throw ShapeError("sc_distance: descriptor shapes differ (" + std::to_string(a.rings()) + "x" +
                         std::to_string(a.sectors()) + " vs " + std::to_string(b.rings()) + "x" +
                         std::to_string(b.sectors()) + ")");
    const int R = a.rings(), S = a.sectors();
    const UnitColumns ua = unit_columns(a), ub = unit_columns(b);
    ScMatch best;
    std::vector<double> terms;
    terms.reserve(S);
    for (int k = 0; k < S; ++k) {
        terms.clear();
        for (int j = 0; j < S; ++j) {
            const int jb = (j + k) % S;
            if (ua.empty[j] || ub.empty[jb]) continue;
            // (1 - cos) / 2 == |a/|a| - b/|b||^2 / 4, which is exactly zero
            // for identical columns.
            const double* pa = ua.v.data() + static_cast<std::size_t>(j) * R;
            const double* pb = ub.v.data() + static_cast<std::size_t>(jb) * R;
            double d = 0.0;
            for (int r = 0; r < R; ++r) d += (pa[r] - pb[r]) * (pa[r] - pb[r]);
            terms.push_back(std::min(0.25 * d, 1.0));
        }
        if (terms.empty()) continue;
        // Sorted summation keeps d(a, b) and d(b, a) bit-identical.
        std::sort(terms.begin(), terms.end());
        double s = 0.0;
        for (double t : terms) s += t;
        const double dist = s / static_cast<double>(terms.size());
        if (dist < best.distance) best = {dist, k};
    }
    return best;
}

PlaceDatabase::PlaceDatabase(ScParams params) : params_(params) { params_.validate(); }

void PlaceDatabase::add(std::uint64_t id, Position pose, ScanContext descriptor) {
    if (!std::isfinite(pose.x) || !std::isfinite(pose.y)) throw DataError("database: non-finite pose for scan " + std::to_string(id));
    if (descriptor.rings() != params_.rings || descriptor.sectors() != params_.sectors)
        throw ShapeError("database: descriptor shape does not match database parameters for scan " + std::to_string(id));
    for (const Entry& e : entries_)
        if (e.id == id) throw DataError("database: duplicate scan id " + std::to_string(id));
    entries_.push_back({id, pose, std::move(descriptor)});
}

const Entry& PlaceDatabase::find(std::uint64_t id) const {
    for (const Entry& e : entries_)
        if (e.id == id) return e;
    throw DataError("database: unknown scan id " + std::to_string(id));
}

std::vector<std::size_t> PlaceDatabase::candidates(const ScanContext& q, std::size_t count, const Exclusion& exclude) const {
    struct Key {
        double d;
        std::uint64_t id;
        std::size_t idx;
    };
    std::vector<Key> keys;
    keys.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (exclude && exclude(entries_[i].id)) continue;
        const auto& rk = entries_[i].descriptor.ring_key();
        double d = 0.0;
        for (std::size_t r = 0; r < rk.size(); ++r) d += (rk[r] - q.ring_key()[r]) * (rk[r] - q.ring_key()[r]);
        keys.push_back({d, entries_[i].id, i});
    }
    const auto less = [](const Key& x, const Key& y) { return x.d != y.d ? x.d < y.d : x.id < y.id; };
    count = std::min(count, keys.size());
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(), less);
    std::vector<std::size_t> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = keys[i].idx;
    return out;
}

std::vector<Ranked> PlaceDatabase::rank(const ScanContext& q, std::span<const std::size_t> idx, std::size_t top_n) const {
    std::vector<Ranked> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back({entries_[i].id, sc_distance(q, entries_[i].descriptor).distance});
    std::sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    if (out.size() > top_n) out.resize(top_n);
    return out;
}

std::vector<Ranked> PlaceDatabase::query(const ScanContext& q, std::size_t top_n, const Exclusion& exclude) const {
    if (entries_.empty()) throw DataError("query: database is empty");
    if (top_n < 1) throw ConfigError("query: top_n must be >= 1");
    const std::vector<std::size_t> idx = candidates(q, kCandidateFactor * top_n, exclude);
    return rank(q, idx, top_n);
}

std::vector<Ranked> PlaceDatabase::query_exhaustive(const ScanContext& q, std::size_t top_n, const Exclusion& exclude) const {
    if (entries_.empty()) throw DataError("query: database is empty");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (!exclude || !exclude(entries_[i].id)) idx.push_back(i);
    return rank(q, idx, top_n);
}

namespace {

constexpr char kDbMagic[8] = {'W', 'L', 'P', 'R', 'S', 'C', 'D', 'B'};
constexpr std::uint32_t kDbVersion = 1;

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto bits = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(v);
    for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    template <class T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        if (b_.size() - pos_ < sizeof(T)) throw ParseError("database file truncated", pos_);
        U v = 0;
        for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<U>(b_[pos_ + k]) << (8 * k);
        pos_ += sizeof(T);
        return std::bit_cast<T>(v);
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == b_.size(); }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace

void PlaceDatabase::save(const std::filesystem::path& path) const {
    std::vector<std::uint8_t> out(std::begin(kDbMagic), std::end(kDbMagic));
    put(out, kDbVersion);
    put(out, static_cast<std::uint32_t>(params_.rings));
    put(out, static_cast<std::uint32_t>(params_.sectors));
    put(out, params_.max_radius);
    put(out, static_cast<std::uint64_t>(entries_.size()));
    for (const Entry& e : entries_) {
        put(out, e.id);
        put(out, e.pose.x);
        put(out, e.pose.y);
        for (double v : e.descriptor.ring_key()) put(out, v);
        for (double v : e.descriptor.cells()) put(out, v);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write database " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

PlaceDatabase PlaceDatabase::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open database " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || !std::equal(std::begin(kDbMagic), std::end(kDbMagic), bytes.begin()))
        throw ParseError("database " + path.string() + ": bad magic", 0);
    Reader r(bytes);
    for (int k = 0; k < 2; ++k) r.get<std::uint32_t>();  // magic
    if (r.get<std::uint32_t>() != kDbVersion) throw ParseError("database " + path.string() + ": unsupported version", 8);
    ScParams p;
    p.rings = static_cast<int>(r.get<std::uint32_t>());
    p.sectors = static_cast<int>(r.get<std::uint32_t>());
    p.max_radius = r.get<double>();
    PlaceDatabase db(p);
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t n = 0; n < count; ++n) {
        const auto id = r.get<std::uint64_t>();
        Position pose{r.get<double>(), 0.0};
        pose.y = r.get<double>();
        std::vector<double> key(p.rings), cells(static_cast<std::size_t>(p.rings) * p.sectors);
        for (double& v : key) v = r.get<double>();
        for (double& v : cells) v = r.get<double>();
        db.add(id, pose, ScanContext(p.rings, p.sectors, std::move(cells), std::move(key)));
    }
    if (!r.done()) throw ParseError("database " + path.string() + ": trailing bytes", r.pos());
    return db;
}

}  // namespace wlpr::lpr

#include "weatherlpr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "weatherlpr/error.hpp"
#include "weatherlpr/rng.hpp"

namespace wlpr::bench {

namespace fs = std::filesystem;
using weather::Kind;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
}

/// Re-raises a library error with the failing stage and scan attached.
template <class Fn>
auto in_stage(const std::string& stage, std::uint64_t scan_id, Fn&& fn) {
    const std::string where = stage + " (scan " + std::to_string(scan_id) + "): ";
    try {
        return fn();
    } catch (const NumericError& e) {
        throw NumericError(where + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
    } catch (const DataError& e) {
        throw DataError(where + e.what());
    } catch (const ShapeError& e) {
        throw ShapeError(where + e.what());
    }
}

class Stopwatch {
public:
    explicit Stopwatch(std::vector<StageTiming>& out) : out_(out) {}
    template <class Fn>
    auto time(const std::string& stage, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        struct Record {
            Stopwatch* self;
            const std::string& stage;
            std::chrono::steady_clock::time_point t0;
            ~Record() {
                const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                self->add(stage, s);
            }
        } rec{this, stage, t0};
        return fn();
    }

private:
    void add(const std::string& stage, double s) {
        for (auto& t : out_)
            if (t.stage == stage) {
                t.seconds += s;
                return;
            }
        out_.push_back({stage, s});
    }
    std::vector<StageTiming>& out_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::uint64_t kind_tag(Kind k) { return static_cast<std::uint64_t>(k) + 1; }

RangeImage restore_one(const restore::RestoreNet& net, const PointCloud& cloud, const ProjectionSpec& spec,
                       double min_valid_distance) {
    return net.restore(project(cloud, spec), min_valid_distance);
}

}  // namespace

void Manifest::validate() const {
    const auto need_dir = [](const fs::path& p, const char* role) {
        if (p.empty() || !fs::is_directory(p)) throw DataError(std::string("manifest: ") + role + " directory not found: " + p.string());
    };
    const auto need_file = [](const fs::path& p, const char* role) {
        if (!fs::is_regular_file(p)) throw DataError(std::string("manifest: ") + role + " pose file not found: " + p.string());
    };
    need_dir(database_dir, "database");
    need_dir(query_dir, "query");
    need_file(database_poses, "database");
    need_file(query_poses, "query");
    if (fs::weakly_canonical(database_dir) == fs::weakly_canonical(query_dir))
        throw DataError("manifest: query and database sequences must be disjoint");
    if (!train_dir.empty()) {
        need_dir(train_dir, "train");
        need_file(train_poses, "train");
    }
}

Manifest Manifest::load(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw DataError("manifest not found: " + path.string());
    const Config cfg = Config::load(path);
    const fs::path base = path.parent_path();
    Manifest m;
    m.name = cfg.get("name", m.name);
    m.protocol = metrics::parse_protocol(cfg.get("protocol", "kitti"));
    m.database_dir = resolve(base, cfg.require("database.dir"));
    m.query_dir = resolve(base, cfg.require("query.dir"));
    m.train_dir = resolve(base, cfg.get("train.dir", ""));
    m.database_poses = resolve(base, cfg.get("database.poses", (m.database_dir / "poses.txt").string()));
    m.query_poses = resolve(base, cfg.get("query.poses", (m.query_dir / "poses.txt").string()));
    if (!m.train_dir.empty()) m.train_poses = resolve(base, cfg.get("train.poses", (m.train_dir / "poses.txt").string()));
    cfg.reject_unused();
    m.validate();
    return m;
}

std::string to_string(Method m) { return m == Method::None ? "none" : "restorenet"; }

Method parse_method(const std::string& s) {
    if (s == "none") return Method::None;
    if (s == "restorenet") return Method::RestoreNet;
    throw ConfigError("unknown preprocessing method '" + s + "' (expected none or restorenet)");
}

void RunConfig::validate() const {
    if (kinds.empty()) throw ConfigError("bench: at least one corruption kind is required");
    if (levels.empty()) throw ConfigError("bench: at least one severity level is required");
    for (int l : levels)
        if (l < 1 || l > 3) throw ConfigError("bench: severity levels must be 1, 2 or 3");
    if (methods.empty()) throw ConfigError("bench: at least one preprocessing method is required");
    if (!(pos_radius > 0.0)) throw ConfigError("bench: positive_radius must be > 0");
    if (exclude_recent < 0) throw ConfigError("bench: exclude_recent must be >= 0");
    if (top_n < 1) throw ConfigError("bench: top_n must be >= 1");
    if (!(min_valid_distance >= 0.0 && min_valid_distance < 1.0)) throw ConfigError("bench: restore.min_valid must be in [0, 1)");
    sc.validate();
    projection.validate();
    net.validate();
}

RunConfig RunConfig::from_config(const Config& cfg) {
    RunConfig rc;
    rc.seed = cfg.get_u64("seed", rc.seed);
    rc.out_dir = cfg.get("out", "");
    rc.kinds.clear();
    for (const auto& k : cfg.get_list("kinds", {"fog", "snow", "rain"})) rc.kinds.push_back(weather::parse_kind(k));
    rc.levels.clear();
    for (const auto& l : cfg.get_list("levels", {"1", "2", "3"})) {
        Config one;
        one.set("level", l);
        rc.levels.push_back(static_cast<int>(one.get_int("level", 0)));
    }
    rc.methods.clear();
    for (const auto& m : cfg.get_list("methods", {"none", "restorenet"})) rc.methods.push_back(parse_method(m));
    if (cfg.get("lpr", "scan_context") != "scan_context")
        throw ConfigError("bench: only the scan_context LPR method is available");
    if (cfg.has("protocol")) rc.protocol = metrics::parse_protocol(cfg.get("protocol", ""));
    rc.pos_radius = cfg.get_double("positive_radius", rc.pos_radius);
    rc.exclude_recent = static_cast<int>(cfg.get_int("exclude_recent", rc.exclude_recent));
    rc.top_n = static_cast<int>(cfg.get_int("top_n", rc.top_n));
    rc.sc.rings = static_cast<int>(cfg.get_int("sc.rings", rc.sc.rings));
    rc.sc.sectors = static_cast<int>(cfg.get_int("sc.sectors", rc.sc.sectors));
    rc.sc.max_radius = cfg.get_double("sc.max_radius", rc.sc.max_radius);
    rc.projection.height = static_cast<int>(cfg.get_int("projection.height", rc.projection.height));
    rc.projection.width = static_cast<int>(cfg.get_int("projection.width", rc.projection.width));
    rc.projection.fov_up = cfg.get_double("projection.fov_up_deg", rc.projection.fov_up / kDeg) * kDeg;
    rc.projection.fov_down = cfg.get_double("projection.fov_down_deg", rc.projection.fov_down / kDeg) * kDeg;
    rc.projection.max_range = cfg.get_double("projection.max_range", rc.projection.max_range);
    rc.min_valid_distance = cfg.get_double("restore.min_valid", rc.min_valid_distance);
    rc.checkpoint = cfg.get("restore.checkpoint", "");
    rc.net.base_channels = static_cast<int>(cfg.get_int("net.base_channels", rc.net.base_channels));
    rc.net.contexts = static_cast<int>(cfg.get_int("net.contexts", rc.net.contexts));
    rc.net.heads = static_cast<int>(cfg.get_int("net.heads", rc.net.heads));
    rc.net.token_cap = static_cast<int>(cfg.get_int("net.token_cap", rc.net.token_cap));
    rc.train.lr = cfg.get_double("train.lr", rc.train.lr);
    rc.train.epochs = static_cast<int>(cfg.get_int("train.epochs", rc.train.epochs));
    rc.train.patch_h = static_cast<int>(cfg.get_int("train.patch_h", rc.train.patch_h));
    rc.train.patch_w = static_cast<int>(cfg.get_int("train.patch_w", rc.train.patch_w));
    rc.train.flips = cfg.get_bool("train.flips", rc.train.flips);
    std::vector<std::string> kind_names;
    for (Kind k : rc.kinds) kind_names.push_back(weather::to_string(k));
    for (const auto& k : cfg.get_list("train.kinds", kind_names)) rc.train_kinds.push_back(weather::parse_kind(k));
    rc.net.seed = derive_seed(rc.seed, {0x6E6574});
    rc.train.seed = derive_seed(rc.seed, {0x747261});
    rc.validate();
    return rc;
}

Config RunConfig::echo() const {
    Config c;
    std::vector<std::string> names;
    for (Kind k : kinds) names.push_back(weather::to_string(k));
    c.set("kinds", join(names));
    names.clear();
    for (int l : levels) names.push_back(std::to_string(l));
    c.set("levels", join(names));
    names.clear();
    for (Method m : methods) names.push_back(to_string(m));
    c.set("methods", join(names));
    names.clear();
    for (Kind k : train_kinds.empty() ? kinds : train_kinds) names.push_back(weather::to_string(k));
    c.set("train.kinds", join(names));
    c.set("lpr", "scan_context");
    if (protocol) c.set("protocol", metrics::to_string(*protocol));
    c.set("seed", std::to_string(seed));
    c.set("positive_radius", fmt(pos_radius));
    c.set("exclude_recent", std::to_string(exclude_recent));
    c.set("top_n", std::to_string(top_n));
    c.set("sc.rings", std::to_string(sc.rings));
    c.set("sc.sectors", std::to_string(sc.sectors));
    c.set("sc.max_radius", fmt(sc.max_radius));
    c.set("projection.height", std::to_string(projection.height));
    c.set("projection.width", std::to_string(projection.width));
    c.set("projection.fov_up_deg", fmt(projection.fov_up / kDeg));
    c.set("projection.fov_down_deg", fmt(projection.fov_down / kDeg));
    c.set("projection.max_range", fmt(projection.max_range));
    c.set("restore.min_valid", fmt(min_valid_distance));
    if (!checkpoint.empty()) c.set("restore.checkpoint", checkpoint.filename().string());
    c.set("net.base_channels", std::to_string(net.base_channels));
    c.set("net.contexts", std::to_string(net.contexts));
    c.set("net.heads", std::to_string(net.heads));
    c.set("net.token_cap", std::to_string(net.token_cap));
    c.set("train.lr", fmt(train.lr));
    c.set("train.epochs", std::to_string(train.epochs));
    c.set("train.patch_h", std::to_string(train.patch_h));
    c.set("train.patch_w", std::to_string(train.patch_w));
    c.set("train.flips", train.flips ? "true" : "false");
    return c;
}

PointCloud as_stored(const PointCloud& cloud) { return parse_scan(encode_scan(cloud), cloud.frame_id()); }

std::vector<world::Scan> corrupt_sequence(const std::vector<world::Scan>& scans, Kind kind, int level,
                                          std::uint64_t seed, std::vector<weather::Annotation>* annotations) {
    const weather::Params params =
        weather::with_seed(weather::severity_preset(kind, level), derive_seed(seed, {0x77, kind_tag(kind), std::uint64_t(level)}));
    std::vector<world::Scan> out;
    out.reserve(scans.size());
    if (annotations) annotations->clear();
    for (const world::Scan& s : scans) {
        weather::Result r = in_stage("corrupt", s.id, [&] { return weather::corrupt(s.cloud, params, s.id); });
        out.push_back({s.id, s.pose, as_stored(r.cloud)});
        if (annotations) annotations->push_back(std::move(r.annotation));
    }
    return out;
}

std::vector<world::Scan> restore_sequence(const restore::RestoreNet& net, const std::vector<world::Scan>& scans,
                                          const ProjectionSpec& spec, double min_valid_distance) {
    std::vector<world::Scan> out;
    out.reserve(scans.size());
    for (const world::Scan& s : scans) {
        PointCloud c = in_stage("restore", s.id, [&] {
            return as_stored(back_project(restore_one(net, s.cloud, spec, min_valid_distance)));
        });
        out.push_back({s.id, s.pose, std::move(c)});
    }
    return out;
}

std::vector<restore::TrainingPair> make_training_pairs(const std::vector<world::Scan>& scans,
                                                       const std::vector<Kind>& kinds, const ProjectionSpec& spec,
                                                       std::uint64_t seed) {
    std::vector<restore::TrainingPair> pairs;
    for (Kind k : kinds)
        for (int level = 1; level <= 3; ++level) {
            const weather::Params params = weather::with_seed(
                weather::severity_preset(k, level), derive_seed(seed, {0x7472, kind_tag(k), std::uint64_t(level)}));
            for (const world::Scan& s : scans) {
                const PointCloud corrupted =
                    in_stage("train-corrupt", s.id, [&] { return as_stored(weather::corrupt(s.cloud, params, s.id).cloud); });
                pairs.push_back({project(corrupted, spec).to_tensor(), project(s.cloud, spec).to_tensor()});
            }
        }
    return pairs;
}

lpr::PlaceDatabase build_database(const std::vector<world::Scan>& scans, const lpr::ScParams& sc) {
    lpr::PlaceDatabase db(sc);
    for (const world::Scan& s : scans)
        in_stage("index", s.id, [&] {
            db.add(s.id, s.pose.position(), lpr::make_descriptor(s.cloud, sc));
            return 0;
        });
    return db;
}

std::vector<metrics::RetrievalRecord> retrieve(const lpr::PlaceDatabase& db, const std::vector<world::Scan>& queries,
                                               std::size_t top_n, bool same_sequence, int exclude_recent) {
    std::vector<metrics::RetrievalRecord> out;
    out.reserve(queries.size());
    for (const world::Scan& q : queries) {
        lpr::Exclusion exclude;
        if (same_sequence && exclude_recent > 0) {
            const std::uint64_t qid = q.id;
            const auto k = static_cast<std::uint64_t>(exclude_recent);
            exclude = [qid, k](std::uint64_t id) { return (id > qid ? id - qid : qid - id) < k; };
        }
        out.push_back(in_stage("retrieve", q.id, [&] {
            const lpr::ScanContext sc = lpr::make_descriptor(q.cloud, db.params());
            const auto ranked = db.query(sc, top_n, exclude);
            return metrics::make_record(q.id, q.pose.position(), ranked, db, exclude);
        }));
    }
    return out;
}

void write_records(const fs::path& path, const std::vector<metrics::RetrievalRecord>& records) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write retrieval file " + path.string());
    for (const auto& r : records) {
        f << r.query_id << ' ' << fmt(r.query_pose.x) << ' ' << fmt(r.query_pose.y) << ' ' << fmt(r.nearest_positive)
          << ' ' << r.matches.size();
        for (const auto& m : r.matches)
            f << ' ' << m.id << ':' << fmt(m.distance) << ':' << fmt(m.pose.x) << ':' << fmt(m.pose.y);
        f << '\n';
    }
}

std::vector<metrics::RetrievalRecord> read_records(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open retrieval file " + path.string());
    std::vector<metrics::RetrievalRecord> out;
    std::string line;
    std::size_t lineno = 0;
    const auto bad = [&](const std::string& why) {
        return DataError(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream in(line);
        metrics::RetrievalRecord r;
        std::string qx, qy, near;
        std::size_t n = 0;
        if (!(in >> r.query_id >> qx >> qy >> near >> n)) throw bad("malformed record header");
        r.query_pose = {std::strtod(qx.c_str(), nullptr), std::strtod(qy.c_str(), nullptr)};
        r.nearest_positive = std::strtod(near.c_str(), nullptr);
        for (std::size_t k = 0; k < n; ++k) {
            std::string tok;
            if (!(in >> tok)) throw bad("expected " + std::to_string(n) + " matches");
            metrics::Match m;
            char* p = tok.data();
            m.id = std::strtoull(p, &p, 10);
            if (*p != ':') throw bad("malformed match '" + tok + "'");
            m.distance = std::strtod(p + 1, &p);
            if (*p != ':') throw bad("malformed match '" + tok + "'");
            m.pose.x = std::strtod(p + 1, &p);
            if (*p != ':') throw bad("malformed match '" + tok + "'");
            m.pose.y = std::strtod(p + 1, &p);
            if (*p != '\0') throw bad("malformed match '" + tok + "'");
            r.matches.push_back(m);
        }
        out.push_back(std::move(r));
    }
    return out;
}

BenchReport run_benchmark(const Manifest& manifest, const RunConfig& config) {
    config.validate();
    manifest.validate();
    const metrics::Protocol protocol = config.protocol.value_or(manifest.protocol);
    if (protocol != manifest.protocol)
        throw ConfigError("bench: protocol " + metrics::to_string(protocol) + " does not match dataset " + manifest.name +
                          " (" + metrics::to_string(manifest.protocol) + ")");

    BenchReport report;
    report.dataset = manifest.name;
    report.protocol = protocol;
    report.config = config.echo();
    Stopwatch sw(report.timings);
    const fs::path& out = config.out_dir;
    if (!out.empty()) fs::create_directories(out / "runs");

    const auto database = sw.time("load", [&] { return world::read_sequence(manifest.database_dir, manifest.database_poses); });
    const auto queries = sw.time("load", [&] { return world::read_sequence(manifest.query_dir, manifest.query_poses); });
    const lpr::PlaceDatabase db = sw.time("index", [&] { return build_database(database, config.sc); });
    if (!out.empty()) db.save(out / "database.scdb");

    const bool use_net = std::find(config.methods.begin(), config.methods.end(), Method::RestoreNet) != config.methods.end();
    std::optional<restore::RestoreNet> net;
    if (use_net) {
        if (!config.checkpoint.empty()) {
            net = restore::load_checkpoint(config.checkpoint);
        } else {
            if (manifest.train_dir.empty()) throw ConfigError("bench: restorenet needs a train sequence or restore.checkpoint");
            const auto train_scans = sw.time("load", [&] { return world::read_sequence(manifest.train_dir, manifest.train_poses); });
            const auto pairs = sw.time("train", [&] {
                return make_training_pairs(train_scans, config.train_kinds.empty() ? config.kinds : config.train_kinds,
                                           config.projection, config.seed);
            });
            net.emplace(config.net);
            report.train_losses = sw.time("train", [&] { return restore::train(*net, pairs, config.train).losses; });
            restore::quantize_params(*net);
            if (!out.empty()) restore::save_checkpoint(out / "checkpoint.bin", *net);
        }
    }

    const auto evaluate_row = [&](const std::string& kind, int level, Method method,
                                  const std::vector<world::Scan>& input) {
        const auto processed = method == Method::None
                                    ? input
                                    : sw.time("restore", [&] {
                                          return restore_sequence(*net, input, config.projection, config.min_valid_distance);
                                      });
        const auto records = sw.time("retrieve", [&] { return retrieve(db, processed, static_cast<std::size_t>(config.top_n)); });
        metrics::MetricRow row = sw.time("metrics", [&] { return metrics::score(records, config.pos_radius); });
        row.kind = kind;
        row.level = level;
        row.method = to_string(method);
        report.rows.push_back(row);
        report.recall_curves.push_back(metrics::recall_curve(records, static_cast<std::size_t>(config.top_n), config.pos_radius));
        if (!out.empty()) {
            const fs::path dir = out / "runs" / (kind + "-" + std::to_string(level) + "-" + row.method);
            fs::create_directories(dir);
            std::ofstream f(dir / "inputs.txt");
            f << "kind = " << kind << "\nlevel = " << level << "\nmethod = " << row.method << "\nseed = " << config.seed
              << "\ndatabase = " << manifest.database_dir.string() << " (" << db.size() << " scans)\nqueries =";
            for (const auto& q : input) f << ' ' << q.id;
            f << '\n';
            write_records(dir / "retrieval.txt", records);
        }
        return row;
    };

    std::vector<Method> clean_methods = config.methods;
    if (std::find(clean_methods.begin(), clean_methods.end(), Method::None) == clean_methods.end())
        clean_methods.insert(clean_methods.begin(), Method::None);
    for (Method m : clean_methods) {
        const auto row = evaluate_row("clean", 0, m, queries);
        if (m == Method::None) report.alp_clean = metrics::alp(row, protocol);
    }

    // alps[kind][method] across levels
    std::vector<std::vector<std::vector<double>>> alps(config.kinds.size(),
                                                       std::vector<std::vector<double>>(config.methods.size()));
    for (std::size_t ki = 0; ki < config.kinds.size(); ++ki) {
        const Kind kind = config.kinds[ki];
        for (int level : config.levels) {
            const auto corrupted = sw.time("corrupt", [&] { return corrupt_sequence(queries, kind, level, config.seed); });
            for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
                const auto row = evaluate_row(weather::to_string(kind), level, config.methods[mi], corrupted);
                alps[ki][mi].push_back(metrics::alp(row, protocol));
            }
            if (use_net) {
                ImageL1 l1{weather::to_string(kind), level, 0.0, 0.0};
                sw.time("restore", [&] {
                    for (std::size_t q = 0; q < queries.size(); ++q) {
                        const RangeImage clean = project(queries[q].cloud, config.projection);
                        const RangeImage corr = project(corrupted[q].cloud, config.projection);
                        const RangeImage rest = net->restore(corr, config.min_valid_distance);
                        l1.corrupted += restore::l1_loss(corr, clean);
                        l1.restored += restore::l1_loss(rest, clean);
                    }
                    return 0;
                });
                l1.corrupted /= static_cast<double>(queries.size());
                l1.restored /= static_cast<double>(queries.size());
                report.image_l1.push_back(l1);
            }
        }
    }

    std::vector<int> sorted_levels = config.levels;
    std::sort(sorted_levels.begin(), sorted_levels.end());
    if (sorted_levels == std::vector<int>{1, 2, 3} && report.alp_clean > 0.0) {
        for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
            std::vector<double> srs;
            for (std::size_t ki = 0; ki < config.kinds.size(); ++ki) {
                const double sr = metrics::stability_rate(alps[ki][mi], report.alp_clean);
                report.stability.push_back({weather::to_string(config.kinds[ki]), to_string(config.methods[mi]), sr});
                srs.push_back(sr);
            }
            double m = 0.0;
            if (srs.size() == 3) {
                m = metrics::msr(srs);
            } else {
                for (double s : srs) m += s;
                m /= static_cast<double>(srs.size());
            }
            report.msr.push_back({to_string(config.methods[mi]), m});
        }
    }

    if (!out.empty()) {
        const auto write = [&](const char* name, const std::string& text) {
            std::ofstream f(out / name, std::ios::binary);
            if (!f) throw DataError(std::string("cannot write ") + (out / name).string());
            f << text;
        };
        write("report.json", report_json(report));
        write("metrics.csv", metrics_csv(report));
        write("recall_curves.csv", recall_curves_csv(report));
        write("timings.json", timings_json(report));
    }
    return report;
}

std::string report_json(const BenchReport& r) {
    nlohmann::ordered_json j;
    j["dataset"] = r.dataset;
    j["protocol"] = metrics::to_string(r.protocol);
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.config.values()) cfg[k] = v;
    j["config"] = cfg;
    j["alp_clean"] = r.alp_clean;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"kind", row.kind},
                        {"level", row.level},
                        {"method", row.method},
                        {"auc", row.auc},
                        {"f1", row.f1},
                        {"recall@1", row.r1},
                        {"recall@5", row.r5},
                        {"recall@20", row.r20},
                        {"alp", metrics::alp(row, r.protocol)},
                        {"queries", row.queries},
                        {"excluded_queries", row.excluded}});
    j["rows"] = rows;
    nlohmann::ordered_json sr = nlohmann::ordered_json::array();
    for (const auto& s : r.stability) sr.push_back({{"kind", s.kind}, {"method", s.method}, {"sr", s.sr}});
    j["stability"] = sr;
    nlohmann::ordered_json msr = nlohmann::ordered_json::object();
    for (const auto& [m, v] : r.msr) msr[m] = v;
    j["msr"] = msr;
    nlohmann::ordered_json l1 = nlohmann::ordered_json::array();
    for (const auto& e : r.image_l1)
        l1.push_back({{"kind", e.kind}, {"level", e.level}, {"corrupted_l1", e.corrupted}, {"restored_l1", e.restored}});
    j["image_l1"] = l1;
    j["train_steps"] = r.train_losses.size();
    if (!r.train_losses.empty()) j["train_final_loss"] = r.train_losses.back();
    return j.dump(2) + "\n";
}

std::string metrics_csv(const BenchReport& r) {
    std::string s = "kind,level,method,auc,f1,recall@1,recall@5,recall@20,alp,queries,excluded_queries\n";
    char buf[256];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%zu,%zu\n", row.kind.c_str(), row.level,
                      row.method.c_str(), row.auc, row.f1, row.r1, row.r5, row.r20, metrics::alp(row, r.protocol),
                      row.queries, row.excluded);
        s += buf;
    }
    return s;
}

std::string recall_curves_csv(const BenchReport& r) {
    std::string s = "kind,level,method,n,recall\n";
    char buf[160];
    for (std::size_t i = 0; i < r.rows.size(); ++i)
        for (std::size_t n = 0; n < r.recall_curves[i].size(); ++n) {
            std::snprintf(buf, sizeof buf, "%s,%d,%s,%zu,%.9g\n", r.rows[i].kind.c_str(), r.rows[i].level,
                          r.rows[i].method.c_str(), n + 1, r.recall_curves[i][n]);
            s += buf;
        }
    return s;
}

std::string timings_json(const BenchReport& r) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& t : r.timings) j[t.stage] = t.seconds;
    return j.dump(2) + "\n";
}

}  // namespace wlpr::bench

// weatherlpr command line: one subcommand per pipeline stage plus the full
// benchmark. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
// failure, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "weatherlpr/bench.hpp"
#include "weatherlpr/error.hpp"

namespace fs = std::filesystem;
using namespace wlpr;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
    cmd->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "run seed (overrides the config)");
    auto* out = cmd->add_option("--out", c.out, "output path");
    if (out_required) out->required();
}

// Every subcommand reads the same run settings, so a config file that drives
// `bench` drives the individual stages identically.
bench::RunConfig run_config(const Common& c) {
    Config cfg = c.config.empty() ? Config{} : Config::load(c.config);
    if (c.seed) cfg.set("seed", std::to_string(*c.seed));
    bench::RunConfig rc = bench::RunConfig::from_config(cfg);
    cfg.reject_unused();
    return rc;
}

std::string scan_name(std::uint64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(id));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
}

int cmd_synth(const Common& c, int places, int queries, int train, double offset, double revisit) {
    world::WorldOptions o;
    o.seed = c.seed.value_or(0);
    o.n_places = places;
    o.n_queries = queries;
    o.n_train = train;
    o.query_offset = offset;
    o.revisit_fraction = revisit;
    fs::create_directories(c.out);
    world::write_world(c.out, world::make_synthetic_world(o));
    std::cout << "wrote " << places << " places to " << c.out << "\n";
    return 0;
}

int cmd_corrupt(const Common& c, const std::string& in, const std::string& kind, int level) {
    const bench::RunConfig rc = run_config(c);
    const auto scans = world::read_sequence(in);
    std::vector<weather::Annotation> notes;
    const auto out = bench::corrupt_sequence(scans, weather::parse_kind(kind), level, rc.seed, &notes);
    world::write_sequence(c.out, out);
    std::ofstream f(fs::path(c.out) / "annotations.txt");
    if (!f) throw DataError("cannot write annotations in " + c.out);
    std::size_t noise = 0, dropped = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        weather::write_annotation_line(f, scan_name(out[i].id), notes[i]);
        noise += notes[i].noise_count();
        dropped += notes[i].dropped.size();
    }
    std::cout << "corrupted " << out.size() << " scans (" << kind << " level " << level << "): " << noise
              << " noise points, " << dropped << " dropped\n";
    return 0;
}

int cmd_project(const Common& c, const std::string& in) {
    const bench::RunConfig rc = run_config(c);
    const auto scans = world::read_sequence(in);
    fs::create_directories(c.out);
    for (const auto& s : scans) write_range_image(fs::path(c.out) / (scan_name(s.id) + ".rimg"), project(s.cloud, rc.projection));
    std::cout << "projected " << scans.size() << " scans to " << rc.projection.height << "x" << rc.projection.width
              << " range images\n";
    return 0;
}

int cmd_train(const Common& c, const std::string& in) {
    const bench::RunConfig rc = run_config(c);
    const auto scans = world::read_sequence(in);
    const auto pairs = bench::make_training_pairs(scans, rc.train_kinds.empty() ? rc.kinds : rc.train_kinds,
                                                  rc.projection, rc.seed);
    restore::RestoreNet net(rc.net);
    const auto report = restore::train(net, pairs, rc.train);
    restore::save_checkpoint(c.out, net);
    std::cout << "trained " << report.losses.size() << " steps on " << pairs.size() << " pairs";
    if (!report.losses.empty()) std::cout << ", final loss " << report.losses.back();
    std::cout << "\n";
    return 0;
}

int cmd_restore(const Common& c, const std::string& in, std::string checkpoint) {
    const bench::RunConfig rc = run_config(c);
    if (checkpoint.empty()) checkpoint = rc.checkpoint.string();
    if (checkpoint.empty()) throw ConfigError("restore: --checkpoint or restore.checkpoint is required");
    const auto net = restore::load_checkpoint(checkpoint);
    const auto out = bench::restore_sequence(net, world::read_sequence(in), rc.projection, rc.min_valid_distance);
    world::write_sequence(c.out, out);
    std::cout << "restored " << out.size() << " scans\n";
    return 0;
}

int cmd_index(const Common& c, const std::string& in) {
    const bench::RunConfig rc = run_config(c);
    const auto db = bench::build_database(world::read_sequence(in), rc.sc);
    db.save(c.out);
    std::cout << "indexed " << db.size() << " scans\n";
    return 0;
}

int cmd_retrieve(const Common& c, const std::string& db_path, const std::string& in, bool same_sequence) {
    const bench::RunConfig rc = run_config(c);
    const auto db = lpr::PlaceDatabase::load(db_path);
    const auto records =
        bench::retrieve(db, world::read_sequence(in), static_cast<std::size_t>(rc.top_n), same_sequence, rc.exclude_recent);
    bench::write_records(c.out, records);
    std::cout << "retrieved " << records.size() << " queries\n";
    return 0;
}

int cmd_evaluate(const Common& c, const std::string& in) {
    const bench::RunConfig rc = run_config(c);
    const metrics::Protocol protocol = rc.protocol.value_or(metrics::Protocol::Kitti);
    const auto records = bench::read_records(in);
    const metrics::MetricRow row = metrics::score(records, rc.pos_radius);
    nlohmann::ordered_json j{{"protocol", metrics::to_string(protocol)},
                             {"auc", row.auc},
                             {"f1", row.f1},
                             {"recall@1", row.r1},
                             {"recall@5", row.r5},
                             {"recall@20", row.r20},
                             {"alp", metrics::alp(row, protocol)},
                             {"queries", row.queries},
                             {"excluded_queries", row.excluded},
                             {"recall_curve", metrics::recall_curve(records, static_cast<std::size_t>(rc.top_n), rc.pos_radius)}};
    const std::string text = j.dump(2) + "\n";
    if (c.out.empty() || c.out == "-")
        std::cout << text;
    else
        write_text(c.out, text);
    return 0;
}

int cmd_bench(const Common& c, const std::string& manifest_path) {
    bench::RunConfig rc = run_config(c);
    rc.out_dir = c.out;
    const auto manifest = bench::Manifest::load(manifest_path);
    const auto report = bench::run_benchmark(manifest, rc);
    std::printf("%-6s %-5s %-11s %8s %8s %8s %8s %8s %8s\n", "kind", "level", "method", "AUC", "F1", "R@1", "R@5",
                "R@20", "Alp");
    for (const auto& row : report.rows)
        std::printf("%-6s %-5d %-11s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", row.kind.c_str(), row.level,
                    row.method.c_str(), row.auc, row.f1, row.r1, row.r5, row.r20, metrics::alp(row, report.protocol));
    for (const auto& s : report.stability) std::printf("SR  %-6s %-11s %.4f\n", s.kind.c_str(), s.method.c_str(), s.sr);
    for (const auto& [m, v] : report.msr) std::printf("mSR %-11s %.4f\n", m.c_str(), v);
    std::cout << "report written to " << c.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LiDAR place recognition under simulated adverse weather"};
    app.require_subcommand(1);
    Common common;
    std::string in, kind, db, checkpoint, manifest;
    int level = 1;
    bool same_sequence = false;
    int places = 200, queries = -1, train = 40;
    double offset = 2.0, revisit = 1.0;

    auto* synth = app.add_subcommand("synth", "write a synthetic world (database, query, train, manifest.cfg)");
    add_common(synth, common);
    synth->add_option("--places", places, "database scans")->check(CLI::Range(2, 1000000));
    synth->add_option("--queries", queries, "query scans (default: one per place)");
    synth->add_option("--train", train, "training scans")->check(CLI::NonNegativeNumber);
    synth->add_option("--offset", offset, "lateral offset of revisits in meters");
    synth->add_option("--revisit", revisit, "fraction of queries that revisit a mapped place")->check(CLI::Range(0.0, 1.0));

    auto* corrupt = app.add_subcommand("corrupt", "apply a weather preset to a scan directory");
    add_common(corrupt, common);
    corrupt->add_option("--in", in, "input scan directory")->required();
    corrupt->add_option("--kind", kind, "snow, fog or rain")->required();
    corrupt->add_option("--level", level, "severity 1..3")->required();

    auto* proj = app.add_subcommand("project", "write range images for a scan directory");
    add_common(proj, common);
    proj->add_option("--in", in, "input scan directory")->required();

    auto* tr = app.add_subcommand("train", "train the restoration network and write a checkpoint");
    add_common(tr, common);
    tr->add_option("--in", in, "clean training scan directory")->required();

    auto* rest = app.add_subcommand("restore", "restore a scan directory with a trained checkpoint");
    add_common(rest, common);
    rest->add_option("--in", in, "input scan directory")->required();
    rest->add_option("--checkpoint", checkpoint, "checkpoint file");

    auto* idx = app.add_subcommand("index", "build a place database from a scan directory");
    add_common(idx, common);
    idx->add_option("--in", in, "database scan directory")->required();

    auto* ret = app.add_subcommand("retrieve", "query a place database and write retrieval records");
    add_common(ret, common);
    ret->add_option("--db", db, "database file from index")->required();
    ret->add_option("--in", in, "query scan directory")->required();
    ret->add_flag("--same-sequence", same_sequence, "queries come from the database sequence (applies exclude_recent)");

    auto* eval = app.add_subcommand("evaluate", "score retrieval records");
    add_common(eval, common, false);
    eval->add_option("--in", in, "retrieval records")->required();

    auto* be = app.add_subcommand("bench", "run the full benchmark");
    add_common(be, common);
    be->add_option("--manifest", manifest, "dataset manifest")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) return cmd_synth(common, places, queries, train, offset, revisit);
        if (*corrupt) return cmd_corrupt(common, in, kind, level);
        if (*proj) return cmd_project(common, in);
        if (*tr) return cmd_train(common, in);
        if (*rest) return cmd_restore(common, in, checkpoint);
        if (*idx) return cmd_index(common, in);
        if (*ret) return cmd_retrieve(common, db, in, same_sequence);
        if (*eval) return cmd_evaluate(common, in);
        if (*be) return cmd_bench(common, manifest);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

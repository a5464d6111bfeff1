#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "weatherlpr/bench.hpp"
#include "weatherlpr/error.hpp"

namespace fs = std::filesystem;
using namespace wlpr;
using bench::Method;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("wlpr_bench_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// Small world shared by the suite; written once.
const fs::path& small_world() {
    static const fs::path dir = [] {
        fs::path d = temp_dir("world");
        world::WorldOptions o;
        o.seed = 11;
        o.n_places = 30;
        o.n_train = 4;
        o.query_offset = 1.0;
        world::write_world(d, world::make_synthetic_world(o), "tiny");
        return d;
    }();
    return dir;
}

bench::RunConfig tiny_config() {
    bench::RunConfig rc;
    rc.kinds = {weather::Kind::Fog};
    rc.levels = {1, 2, 3};
    rc.methods = {Method::None, Method::RestoreNet};
    rc.seed = 3;
    rc.top_n = 5;
    rc.net.base_channels = 4;
    rc.net.token_cap = 64;
    rc.net.seed = 1;
    rc.train.epochs = 1;
    rc.train.lr = 1e-3;
    rc.train.patch_w = 64;
    rc.train.seed = 2;
    return rc;
}

bool same_row(const metrics::MetricRow& a, const metrics::MetricRow& b) {
    return a.auc == b.auc && a.f1 == b.f1 && a.r1 == b.r1 && a.r5 == b.r5 && a.r20 == b.r20 &&
           a.queries == b.queries && a.excluded == b.excluded;
}

}  // namespace

TEST(Manifest, LoadsWrittenWorld) {
    const auto m = bench::Manifest::load(small_world() / "manifest.cfg");
    EXPECT_EQ(m.name, "tiny");
    EXPECT_EQ(m.protocol, metrics::Protocol::Kitti);
    EXPECT_EQ(m.database_dir, small_world() / "database");
    EXPECT_EQ(m.query_poses, small_world() / "query" / "poses.txt");
    EXPECT_NO_THROW(m.validate());
}

TEST(Manifest, Errors) {
    const fs::path d = temp_dir("manifest");
    const auto write = [&](const std::string& text) {
        std::ofstream(d / "m.cfg") << text;
        return d / "m.cfg";
    };
    EXPECT_THROW(bench::Manifest::load(d / "absent.cfg"), DataError);
    const std::string base = "database.dir = " + (small_world() / "database").string() +
                             "\nquery.dir = " + (small_world() / "query").string() + "\n";
    EXPECT_NO_THROW(bench::Manifest::load(write(base)));
    EXPECT_THROW(bench::Manifest::load(write(base + "colour = blue\n")), ConfigError);
    EXPECT_THROW(bench::Manifest::load(write(base + "protocol = imagenet\n")), ConfigError);
    EXPECT_THROW(bench::Manifest::load(write("query.dir = " + (small_world() / "query").string() + "\n")), ConfigError);

    auto m = bench::Manifest::load(write(base));
    m.query_dir = m.database_dir;
    m.query_poses = m.database_poses;
    EXPECT_THROW(m.validate(), DataError);
    m = bench::Manifest::load(write(base));
    m.database_dir = d / "nowhere";
    EXPECT_THROW(m.validate(), DataError);
}

TEST(RunConfig, FromConfigReadsKeys) {
    auto cfg = Config::parse(
        "seed = 9\nkinds = fog, rain\nlevels = 1, 3\nmethods = none\ntop_n = 7\n"
        "positive_radius = 4\nnet.base_channels = 4\ntrain.epochs = 2\ntrain.kinds = snow\n");
    const auto rc = bench::RunConfig::from_config(cfg);
    cfg.reject_unused();
    EXPECT_EQ(rc.seed, 9u);
    ASSERT_EQ(rc.kinds.size(), 2u);
    EXPECT_EQ(rc.kinds[1], weather::Kind::Rain);
    EXPECT_EQ(rc.levels, (std::vector<int>{1, 3}));
    EXPECT_EQ(rc.methods, (std::vector<Method>{Method::None}));
    EXPECT_EQ(rc.top_n, 7);
    EXPECT_EQ(rc.pos_radius, 4.0);
    EXPECT_EQ(rc.net.base_channels, 4);
    EXPECT_EQ(rc.train.epochs, 2);
    EXPECT_EQ(rc.train_kinds, (std::vector<weather::Kind>{weather::Kind::Snow}));
    // seeds for net and training follow the run seed
    auto other = Config::parse("seed = 10\n");
    const auto rc2 = bench::RunConfig::from_config(other);
    EXPECT_NE(rc.net.seed, rc2.net.seed);
    EXPECT_NE(rc.train.seed, rc2.train.seed);
}

TEST(RunConfig, Rejections) {
    const auto load = [](const std::string& text) {
        auto cfg = Config::parse(text);
        auto rc = bench::RunConfig::from_config(cfg);
        cfg.reject_unused();
        return rc;
    };
    EXPECT_THROW(load("kinds = hail\n"), ConfigError);
    EXPECT_THROW(load("levels = 4\n"), ConfigError);
    EXPECT_THROW(load("methods = magic\n"), ConfigError);
    EXPECT_THROW(load("lpr = pointnetvlad\n"), ConfigError);
    EXPECT_THROW(load("top_n = 0\n"), ConfigError);
    EXPECT_THROW(load("positive_radius = -1\n"), ConfigError);
    EXPECT_THROW(load("train.lr = fast\n"), ConfigError);
    EXPECT_THROW(load("unknown.key = 1\n"), ConfigError);
}

TEST(Records, RoundTrip) {
    const auto m = bench::Manifest::load(small_world() / "manifest.cfg");
    const auto db_scans = world::read_sequence(m.database_dir, m.database_poses);
    const auto queries = world::read_sequence(m.query_dir, m.query_poses);
    const auto db = bench::build_database(db_scans, lpr::ScParams{});
    const auto records = bench::retrieve(db, queries, 5);
    ASSERT_EQ(records.size(), queries.size());

    const fs::path p = temp_dir("records") / "r.txt";
    bench::write_records(p, records);
    const auto back = bench::read_records(p);
    ASSERT_EQ(back.size(), records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(back[i].query_id, records[i].query_id);
        EXPECT_EQ(back[i].query_pose, records[i].query_pose);
        EXPECT_EQ(back[i].nearest_positive, records[i].nearest_positive);
        ASSERT_EQ(back[i].matches.size(), records[i].matches.size());
        for (std::size_t k = 0; k < records[i].matches.size(); ++k) {
            EXPECT_EQ(back[i].matches[k].id, records[i].matches[k].id);
            EXPECT_EQ(back[i].matches[k].distance, records[i].matches[k].distance);
            EXPECT_EQ(back[i].matches[k].pose, records[i].matches[k].pose);
        }
    }
    EXPECT_EQ(metrics::score(back, 5.0).r1, metrics::score(records, 5.0).r1);

    std::ofstream(p, std::ios::app) << "17 0 0\n";
    EXPECT_THROW(bench::read_records(p), DataError);
    EXPECT_THROW(bench::read_records(p.parent_path() / "absent.txt"), DataError);
}

TEST(Retrieve, SameSequenceExclusion) {
    const auto m = bench::Manifest::load(small_world() / "manifest.cfg");
    const auto db_scans = world::read_sequence(m.database_dir, m.database_poses);
    const auto db = bench::build_database(db_scans, lpr::ScParams{});
    const auto records = bench::retrieve(db, db_scans, 5, true, 3);
    for (const auto& r : records)
        for (const auto& match : r.matches) {
            const auto gap = match.id > r.query_id ? match.id - r.query_id : r.query_id - match.id;
            EXPECT_GE(gap, 3u);
        }
}

TEST(Bench, SelfRetrievalIsPerfect) {
    // a query sequence identical to the database retrieves itself at rank 1
    const fs::path d = temp_dir("self");
    fs::copy(small_world() / "database", d / "database", fs::copy_options::recursive);
    fs::copy(small_world() / "database", d / "copy", fs::copy_options::recursive);
    std::ofstream(d / "manifest.cfg") << "name = self\ndatabase.dir = database\nquery.dir = copy\n";
    auto rc = tiny_config();
    rc.methods = {Method::None};
    rc.levels = {1};
    const auto report = bench::run_benchmark(bench::Manifest::load(d / "manifest.cfg"), rc);
    ASSERT_FALSE(report.rows.empty());
    EXPECT_EQ(report.rows[0].kind, "clean");
    EXPECT_EQ(report.rows[0].r1, 1.0);
    EXPECT_EQ(report.rows[0].auc, 1.0);
}

TEST(Bench, CompositionMatchesStages) {
    const auto m = bench::Manifest::load(small_world() / "manifest.cfg");
    auto rc = tiny_config();
    const fs::path out = temp_dir("compose");
    rc.out_dir = out;
    const auto report = bench::run_benchmark(m, rc);

    // clean none, clean restorenet, then fog x 3 levels x 2 methods
    ASSERT_EQ(report.rows.size(), 8u);
    EXPECT_EQ(report.image_l1.size(), 3u);
    EXPECT_FALSE(report.train_losses.empty());
    ASSERT_EQ(report.stability.size(), 2u);
    ASSERT_EQ(report.msr.size(), 2u);

    const auto db_scans = world::read_sequence(m.database_dir, m.database_poses);
    const auto queries = world::read_sequence(m.query_dir, m.query_poses);
    const auto db = bench::build_database(db_scans, rc.sc);
    const auto net = restore::load_checkpoint(out / "checkpoint.bin");

    const auto clean = metrics::score(bench::retrieve(db, queries, 5), rc.pos_radius);
    EXPECT_TRUE(same_row(report.rows[0], clean));
    EXPECT_DOUBLE_EQ(report.alp_clean, metrics::alp(clean, metrics::Protocol::Kitti));

    std::vector<double> none_alps;
    for (int level = 1; level <= 3; ++level) {
        const auto corrupted = bench::corrupt_sequence(queries, weather::Kind::Fog, level, rc.seed);
        const auto none = metrics::score(bench::retrieve(db, corrupted, 5), rc.pos_radius);
        const auto restored_scans = bench::restore_sequence(net, corrupted, rc.projection, rc.min_valid_distance);
        const auto restored = metrics::score(bench::retrieve(db, restored_scans, 5), rc.pos_radius);
        const auto& rn = report.rows[2 + 2 * (level - 1)];
        const auto& rr = report.rows[3 + 2 * (level - 1)];
        EXPECT_EQ(rn.kind, "fog");
        EXPECT_EQ(rn.level, level);
        EXPECT_EQ(rn.method, "none");
        EXPECT_EQ(rr.method, "restorenet");
        EXPECT_TRUE(same_row(rn, none)) << "level " << level;
        EXPECT_TRUE(same_row(rr, restored)) << "level " << level;
        none_alps.push_back(metrics::alp(none, metrics::Protocol::Kitti));

        // stored retrieval file reproduces the row
        const auto stored = bench::read_records(out / "runs" / ("fog-" + std::to_string(level) + "-restorenet") / "retrieval.txt");
        EXPECT_TRUE(same_row(metrics::score(stored, rc.pos_radius), restored));
    }
    EXPECT_EQ(report.stability[0].method, "none");
    EXPECT_DOUBLE_EQ(report.stability[0].sr, metrics::stability_rate(none_alps, report.alp_clean));
}

TEST(Bench, OutputFilesAndDeterminism) {
    const auto m = bench::Manifest::load(small_world() / "manifest.cfg");
    auto rc = tiny_config();
    rc.out_dir = temp_dir("det_a");
    const auto a = bench::run_benchmark(m, rc);
    rc.out_dir = temp_dir("det_b");
    const auto b = bench::run_benchmark(m, rc);

    for (const char* f : {"report.json", "metrics.csv", "recall_curves.csv", "timings.json", "checkpoint.bin",
                          "database.scdb"})
        EXPECT_TRUE(fs::exists(rc.out_dir / f)) << f;
    for (const auto& row : b.rows) {
        const fs::path run = rc.out_dir / "runs" / (row.kind + "-" + std::to_string(row.level) + "-" + row.method);
        EXPECT_TRUE(fs::exists(run / "inputs.txt")) << run;
        EXPECT_TRUE(fs::exists(run / "retrieval.txt")) << run;
    }
    EXPECT_EQ(bench::report_json(a), bench::report_json(b));
    EXPECT_EQ(slurp(rc.out_dir / "report.json"), bench::report_json(b));
    EXPECT_EQ(bench::metrics_csv(a), bench::metrics_csv(b));

    // a different seed changes the corruption and the trained network
    rc.seed = 4;
    rc.out_dir.clear();
    EXPECT_NE(bench::report_json(bench::run_benchmark(m, rc)), bench::report_json(a));
}

TEST(Bench, CheckpointSkipsTraining) {
    const auto m = bench::Manifest::load(small_world() / "manifest.cfg");
    auto rc = tiny_config();
    rc.levels = {2};
    const fs::path d = temp_dir("ckpt");
    restore::RestoreNet identity(rc.net);
    restore::save_checkpoint(d / "net.bin", identity);
    rc.checkpoint = d / "net.bin";
    const auto report = bench::run_benchmark(m, rc);
    EXPECT_TRUE(report.train_losses.empty());
    // an untrained net is the identity map; only pixels under the validity
    // floor are dropped
    EXPECT_TRUE(report.stability.empty());
    ASSERT_EQ(report.image_l1.size(), 1u);
    EXPECT_NEAR(report.image_l1[0].restored, report.image_l1[0].corrupted, 1e-3);
}

TEST(Bench, ProtocolMismatchAndMissingTrain) {
    auto m = bench::Manifest::load(small_world() / "manifest.cfg");
    auto rc = tiny_config();
    rc.protocol = metrics::Protocol::Nclt;
    EXPECT_THROW(bench::run_benchmark(m, rc), ConfigError);
    rc.protocol.reset();
    m.train_dir.clear();
    m.train_poses.clear();
    EXPECT_THROW(bench::run_benchmark(m, rc), ConfigError);
}

TEST(Bench, SeverityOrdering) {
    // on a 100-place loop heavier fog never helps unprocessed retrieval
    const fs::path d = temp_dir("severity");
    world::WorldOptions o;
    o.seed = 21;
    o.n_places = 100;
    o.n_train = 2;
    world::write_world(d, world::make_synthetic_world(o), "loop");
    auto rc = tiny_config();
    rc.methods = {Method::None};
    rc.top_n = 25;
    const auto report = bench::run_benchmark(bench::Manifest::load(d / "manifest.cfg"), rc);
    ASSERT_EQ(report.rows.size(), 4u);
    const double l1 = metrics::alp(report.rows[1], metrics::Protocol::Kitti);
    const double l3 = metrics::alp(report.rows[3], metrics::Protocol::Kitti);
    EXPECT_GE(l1, l3);
    EXPECT_GT(report.alp_clean, l3);
}

#include <benchmark/benchmark.h>

#include "weatherlpr/lpr.hpp"
#include "weatherlpr/ops.hpp"
#include "weatherlpr/restorenet.hpp"
#include "weatherlpr/wavelet.hpp"
#include "weatherlpr/weathersim.hpp"
#include "weatherlpr/world.hpp"

using namespace wlpr;

namespace {

Tensor random(Shape s, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(s);
    for (double& v : t.data()) v = rng.normal();
    return t;
}

const world::World& small_world() {
    static const world::World w = [] {
        world::WorldOptions o;
        o.seed = 1;
        o.n_places = 200;
        o.n_train = 1;
        return world::make_synthetic_world(o);
    }();
    return w;
}

}  // namespace

static void BM_Conv3x3(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const Tensor x = random(Shape{1, 32, 256, c}, 1), w = random(Shape{3, 3, c, c}, 2), b = random(Shape{c}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, {}));
}
BENCHMARK(BM_Conv3x3)->Arg(4)->Arg(8)->Arg(16);

static void BM_Attention(benchmark::State& state) {
    const int t = static_cast<int>(state.range(0));
    const Tensor q = random(Shape{1, t, 32}, 1), k = random(Shape{1, 64, 32}, 2), v = random(Shape{1, 64, 32}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(ops::attention(q, k, v, nullptr));
}
BENCHMARK(BM_Attention)->Arg(256)->Arg(1024);

static void BM_Haar(benchmark::State& state) {
    const Tensor x = random(Shape{1, 64, 1024, 8}, 1);
    for (auto _ : state) benchmark::DoNotOptimize(wavelet::idwt2(wavelet::dwt2(x)));
}
BENCHMARK(BM_Haar);

static void BM_RestoreForward(benchmark::State& state) {
    restore::NetConfig cfg;
    cfg.base_channels = 8;
    const restore::RestoreNet net(cfg);
    const Tensor x = random(Shape{1, 64, static_cast<int>(state.range(0)), 2}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(net.restore(x));
}
BENCHMARK(BM_RestoreForward)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

static void BM_Project(benchmark::State& state) {
    const PointCloud& cloud = small_world().database.front().cloud;
    for (auto _ : state) benchmark::DoNotOptimize(project(cloud, world::synthetic_sensor()));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cloud.size()));
}
BENCHMARK(BM_Project);

static void BM_Fog(benchmark::State& state) {
    const PointCloud& cloud = small_world().database.front().cloud;
    const auto p = weather::severity_preset(weather::Kind::Fog, 3);
    for (auto _ : state) benchmark::DoNotOptimize(weather::corrupt(cloud, p, 0));
}
BENCHMARK(BM_Fog);

static void BM_ScDescriptor(benchmark::State& state) {
    const PointCloud& cloud = small_world().database.front().cloud;
    for (auto _ : state) benchmark::DoNotOptimize(lpr::make_descriptor(cloud, lpr::ScParams{}));
}
BENCHMARK(BM_ScDescriptor);

static void BM_ScQuery(benchmark::State& state) {
    const auto& w = small_world();
    lpr::PlaceDatabase db;
    for (const auto& s : w.database) db.add(s.id, {s.pose.x, s.pose.y}, lpr::make_descriptor(s.cloud, db.params()));
    const auto q = lpr::make_descriptor(w.queries.front().cloud, db.params());
    const bool exhaustive = state.range(0) != 0;
    for (auto _ : state) benchmark::DoNotOptimize(exhaustive ? db.query_exhaustive(q, 1) : db.query(q, 1));
}
BENCHMARK(BM_ScQuery)->Arg(0)->Arg(1)->ArgName("exhaustive");

BENCHMARK_MAIN();

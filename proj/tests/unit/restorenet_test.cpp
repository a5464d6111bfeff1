#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "grad_suite.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "weatherlpr/error.hpp"
#include "weatherlpr/restorenet.hpp"

using namespace wlpr;
using namespace wlpr::restore;
using namespace wlpr::testing;

namespace {

NetConfig toy(int c = 2, std::uint64_t seed = 1) {
    NetConfig cfg;
    cfg.base_channels = c;
    cfg.token_cap = 64;
    cfg.seed = seed;
    return cfg;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("wlpr_rn_" + name);
}

}  // namespace

class ShapeContract : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(ShapeContract, EncoderAndDecoder) {
    const auto [h, w] = GetParam();
    const int c = 2;
    RestoreNet net(toy(c));
    Rng rng(3);
    const Tensor x = random_uniform(Shape{1, h, w, 2}, rng);
    EXPECT_EQ(net.encode(x).shape(), (Shape{1, h / 8, w / 8, 8 * c}));
    RestoreNet::Tape tape;
    const Tensor y = net.forward_raw(x, &tape);
    // The head sees the decoder output at full resolution with C channels.
    EXPECT_EQ(tape.head.x.shape(), (Shape{1, h, w, c}));
    EXPECT_EQ(y.shape(), x.shape());
}

INSTANTIATE_TEST_SUITE_P(Sizes, ShapeContract,
                         ::testing::Values(std::pair{32, 480}, std::pair{32, 1920}, std::pair{64, 480},
                                           std::pair{64, 1920}));

TEST(RestoreNet, ZeroHeadStartsAsIdentity) {
    RestoreNet net(toy());
    Rng rng(4);
    const Tensor x = random_uniform(Shape{1, 8, 16, 2}, rng);
    EXPECT_EQ(max_abs_diff(net.forward_raw(x), x), 0.0);
}

TEST(RestoreNet, RejectsBadShapesAndConfig) {
    RestoreNet net(toy());
    EXPECT_THROW(net.forward_raw(Tensor(Shape{1, 12, 16, 2})), ShapeError);
    EXPECT_THROW(net.forward_raw(Tensor(Shape{1, 8, 16, 3})), ShapeError);
    NetConfig odd = toy(3);
    EXPECT_THROW(RestoreNet{odd}, ConfigError);
    NetConfig heads = toy();
    heads.heads = 2;
    EXPECT_THROW(RestoreNet{heads}, ConfigError);
}

TEST(RestoreNet, SeedDeterminesWeights) {
    RestoreNet a(toy(2, 9)), b(toy(2, 9)), c(toy(2, 10));
    auto pa = a.params(), pb = b.params(), pc = c.params();
    ASSERT_EQ(pa.size(), pb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(max_abs_diff(pa[i]->value, pb[i]->value), 0.0) << pa[i]->name;
        if (max_abs_diff(pa[i]->value, pc[i]->value) > 0.0) any_diff = true;
    }
    EXPECT_TRUE(any_diff);
}

TEST(RestoreNet, EndToEndGradient) {
    Rng rng(5);
    for (int t = 0; t < 1; ++t) {
        // C = 4 keeps every layer norm at least four channels wide.
        RestoreNet net(toy(4, 20 + t));
        // A non-zero head lets gradients reach every layer.
        for (nn::Param* p : net.params())
            for (double& v : p->value.data()) v += rng.normal(0.0, 0.05);
        // 32x32 leaves the deepest batch norm 16 samples per channel.
        Tensor x = random_uniform(Shape{1, 32, 32, 2}, rng);
        // A smooth objective; the L1 kinks are checked separately.
        const Tensor r = random_tensor(x.shape(), rng);
        auto objective = [&] { return dot(net.forward_raw(x), r); };
        net.zero_grad();
        RestoreNet::Tape tape;
        net.forward_raw(x, &tape);
        const Tensor dx = net.backward(tape, r);
        EXPECT_LT(rel_error(dx, numeric_grad(objective, x)), kGradTol);
        // A few sampled coordinates per parameter tensor.
        for (nn::Param* p : net.params()) {
            const int m = static_cast<int>(std::min<std::size_t>(4, p->value.numel()));
            Tensor an(Shape{m}), num(Shape{m});
            for (int j = 0; j < m; ++j) {
                const std::size_t i = rng.below(p->value.numel());
                const double saved = p->value[i];
                p->value[i] = saved + kGradStep;
                const double up = objective();
                p->value[i] = saved - kGradStep;
                const double down = objective();
                p->value[i] = saved;
                an[j] = p->grad[i];
                num[j] = (up - down) / (2.0 * kGradStep);
            }
            EXPECT_LT(rel_error(an, num), kGradTol) << p->name;
        }
    }
}

TEST(Loss, MatchesBruteForce) {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
        const Shape s{1 + t % 2, 1 + static_cast<int>(rng.below(9)), 1 + static_cast<int>(rng.below(17)), 2};
        const Tensor a = random_uniform(s, rng), b = random_uniform(s, rng);
        EXPECT_NEAR(l1_loss(a, b), brute_l1(a, b), 1e-7);
    }
    EXPECT_EQ(l1_loss(Tensor(Shape{1, 2, 2, 2}, 0.3), Tensor(Shape{1, 2, 2, 2}, 0.3)), 0.0);
    EXPECT_THROW(l1_loss(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1, 2, 3, 2})), ShapeError);
}

TEST(Loss, GradientMatchesFiniteDifference) {
    const GradResult r = grad_l1_loss(20);
    EXPECT_TRUE(r.ok()) << r.worst << " at " << r.worst_at;
}

TEST(Loss, RangeImageOverload) {
    ProjectionSpec s;
    s.height = 4;
    s.width = 8;
    RangeImage a(s), b(s);
    a.set(1, 1, 0.5, 0.2);
    b.set(1, 1, 0.25, 0.4);
    EXPECT_NEAR(l1_loss(a, b), (0.25 + 0.2) / 32.0, 1e-15);
}

TEST(Restore, AnySizeIsClampedAndCropped) {
    RestoreNet net(toy());
    for (nn::Param* p : net.params())
        if (p->name == "head.w") p->value.fill(0.5);
    Rng rng(8);
    const Tensor x = random_uniform(Shape{1, 13, 21, 2}, rng);
    const Tensor y = net.restore(x);
    EXPECT_EQ(y.shape(), x.shape());
    for (double v : y.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Restore, RangeImageThreshold) {
    RestoreNet net(toy());
    ProjectionSpec s;
    s.height = 8;
    s.width = 16;
    RangeImage img(s);
    img.set(2, 3, 0.5, 0.5);
    img.set(4, 5, 0.01, 0.5);
    const RangeImage out = net.restore(img, 0.02);
    EXPECT_TRUE(out.valid(2, 3));
    EXPECT_FALSE(out.valid(4, 5));
    EXPECT_EQ(out.valid_count(), 1u);
}

TEST(Train, OverfitsSinglePair) {
    Rng rng(9);
    TrainingPair pair{random_uniform(Shape{1, 32, 32, 2}, rng), Tensor()};
    pair.clean = pair.corrupt * 0.5;
    // At C = 2 the per-pixel layer norms reduce features to a sign, which
    // cannot carry the magnitude this target needs.
    RestoreNet net(toy(4));
    TrainOptions opts;
    opts.lr = 3e-3;
    opts.epochs = 150;
    opts.patch_h = 32;
    opts.patch_w = 32;
    opts.flips = false;
    int calls = 0;
    opts.on_step = [&](int, double) { ++calls; };
    const TrainReport rep = train(net, std::span(&pair, 1), opts);
    ASSERT_EQ(rep.losses.size(), 150u);
    EXPECT_EQ(calls, 150);
    EXPECT_NEAR(rep.losses.front(), l1_loss(pair.corrupt, pair.clean), 1e-12);
    EXPECT_LT(rep.losses.back(), 0.4 * rep.losses.front());
    EXPECT_LT(l1_loss(net.forward_raw(pair.corrupt), pair.clean), 0.4 * l1_loss(pair.corrupt, pair.clean));
}

TEST(Train, DeterministicForSeed) {
    Rng rng(10);
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 3; ++i)
        pairs.push_back({random_uniform(Shape{1, 16, 32, 2}, rng), random_uniform(Shape{1, 16, 32, 2}, rng)});
    TrainOptions opts;
    opts.lr = 1e-3;
    opts.patch_h = 8;
    opts.patch_w = 16;
    opts.seed = 4;
    RestoreNet a(toy()), b(toy());
    EXPECT_EQ(train(a, pairs, opts).losses, train(b, pairs, opts).losses);
}

TEST(Train, NonFiniteLossNamesStep) {
    Rng rng(11);
    TrainingPair pair{random_uniform(Shape{1, 8, 8, 2}, rng), random_uniform(Shape{1, 8, 8, 2}, rng)};
    pair.clean[5] = std::nan("");
    RestoreNet net(toy());
    TrainOptions opts;
    opts.patch_h = opts.patch_w = 8;
    try {
        train(net, std::span(&pair, 1), opts);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
    }
}

TEST(Train, RejectsBadOptions) {
    TrainingPair pair{Tensor(Shape{1, 8, 8, 2}), Tensor(Shape{1, 8, 8, 2})};
    RestoreNet net(toy());
    TrainOptions opts;
    opts.patch_h = 12;
    EXPECT_THROW(train(net, std::span(&pair, 1), opts), ConfigError);
    EXPECT_THROW(train(net, std::span<const TrainingPair>(), TrainOptions{}), ConfigError);
    for (double lr : {0.0, -1e-3, std::numeric_limits<double>::infinity()}) {
        TrainOptions bad;
        bad.lr = lr;
        EXPECT_THROW(train(net, std::span(&pair, 1), bad), ConfigError) << lr;
    }
}

TEST(Checkpoint, RoundTripIsFloat32Exact) {
    Rng rng(12);
    RestoreNet net(toy(2, 3));
    for (nn::Param* p : net.params())
        for (double& v : p->value.data()) v += rng.normal(0.0, 0.1);
    const auto path = temp_path("ckpt.bin");
    save_checkpoint(path, net);
    RestoreNet loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.config().base_channels, 2);
    EXPECT_EQ(loaded.config().token_cap, 64);
    auto a = net.params(), b = loaded.params();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i]->name, b[i]->name);
        for (std::size_t k = 0; k < a[i]->value.numel(); ++k)
            ASSERT_EQ(static_cast<double>(static_cast<float>(a[i]->value[k])), b[i]->value[k]);
    }
    // A second save of the loaded weights is byte-identical.
    const auto again = temp_path("ckpt2.bin");
    save_checkpoint(again, loaded);
    std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    EXPECT_EQ(s1, s2);
    std::filesystem::remove(path);
    std::filesystem::remove(again);
}

TEST(Checkpoint, QuantizedNetMatchesSavedCopy) {
    Rng rng(13);
    RestoreNet net(toy(4, 3));
    for (nn::Param* p : net.params())
        for (double& v : p->value.data()) v += rng.normal(0.0, 0.1);
    const auto path = temp_path("quant.bin");
    save_checkpoint(path, net);
    quantize_params(net);
    RestoreNet loaded = load_checkpoint(path);
    auto a = net.params(), b = loaded.params();
    ASSERT_EQ(a.size(), b.size());
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i]->value.numel(); ++k) mismatches += a[i]->value[k] != b[i]->value[k];
    EXPECT_EQ(mismatches, 0u);
    const Tensor x = random_tensor(Shape{1, 32, 32, 2}, rng);
    const Tensor ya = net.restore(x), yb = loaded.restore(x);
    EXPECT_TRUE(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin(), yb.data().end()));
    std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFilesRejected) {
    RestoreNet net(toy());
    const auto path = temp_path("bad.bin");
    save_checkpoint(path, net);
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)), {});
    }
    auto write = [&](const std::string& s) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << s;
    };
    write("NOTACKPT" + bytes.substr(8));
    EXPECT_THROW(load_checkpoint(path), ParseError);
    write(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(load_checkpoint(path), ParseError);
    write(bytes + "x");
    EXPECT_THROW(load_checkpoint(path), ParseError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), DataError);
}

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "weatherlpr/layers.hpp"
#include "weatherlpr/pointcloud.hpp"

namespace wlpr::restore {

/// Encoder/decoder depth is fixed at three levels.
inline constexpr int kDepth = 3;

struct NetConfig {
    int base_channels = 8;   ///< C; must be even and >= 2
    int contexts = 3;        ///< K rows of the context embedding (one per weather type)
    int heads = 1;           ///< attention heads; only single-head attention is implemented
    int token_cap = 512;     ///< attention key/value grids are pooled down to this many tokens
    std::uint64_t seed = 0;

    void validate() const;
};

/// Range-image restoration network:
///   embed -> 3 x encoder WAT -> bottleneck transformer ->
///   3 x (decoder WAT + ContextGuide) -> 3x3 head, added to the input.
class RestoreNet {
public:
    struct Tape {
        nn::Conv2d::Cache embed;
        std::array<nn::EncoderBlock::Cache, kDepth> enc;
        nn::TransformerFuse::Cache bottleneck;
        std::array<nn::DecoderBlock::Cache, kDepth> dec;
        std::array<nn::ContextGuide::Cache, kDepth> ctg;
        nn::Conv2d::Cache head;
    };

    explicit RestoreNet(const NetConfig& config = {});

    const NetConfig& config() const noexcept { return config_; }

    /// Input plus predicted residual, before clamping. x is (N, H, W, 2) with
    /// H and W divisible by 8.
    Tensor forward_raw(const Tensor& x, Tape* tape = nullptr) const;

    /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
    Tensor backward(const Tape& tape, const Tensor& dy);

    /// Inference on any (N, H, W, 2) tensor: reflect-pads H and W up to a
    /// multiple of 8, clamps into [0, 1] and crops back.
    Tensor restore(const Tensor& x) const;

    /// Pixels whose restored distance does not exceed `min_valid_distance`
    /// come back invalid.
    RangeImage restore(const RangeImage& img, double min_valid_distance = 0.0) const;

    /// Encoder features (the (H/8, W/8, 8C) bottleneck input) for shape checks.
    Tensor encode(const Tensor& x) const;

    nn::ParamRefs params();
    void zero_grad();
    std::size_t parameter_count();

    nn::Conv2d embed;
    std::array<nn::EncoderBlock, kDepth> encoders;
    nn::TransformerFuse bottleneck;
    std::array<nn::DecoderBlock, kDepth> decoders;
    std::array<nn::ContextGuide, kDepth> guides;
    nn::Conv2d head;

private:
    NetConfig config_;
};

/// Mean over pixels of |d - d_hat| + |i - i_hat| for (N, H, W, 2) tensors.
double l1_loss(const Tensor& pred, const Tensor& clean);
double l1_loss(const RangeImage& pred, const RangeImage& clean);
/// d loss / d pred (subgradient 0 where pred == clean).
Tensor l1_loss_grad(const Tensor& pred, const Tensor& clean);

class Adam {
public:
    Adam(nn::ParamRefs params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step();
    double lr() const noexcept { return lr_; }

private:
    nn::ParamRefs params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
};

struct TrainingPair {
    Tensor corrupt;  ///< (1, H, W, 2)
    Tensor clean;    ///< (1, H, W, 2)
};

struct TrainOptions {
    double lr = 1e-4;
    int epochs = 1;
    int patch_h = 32;
    int patch_w = 480;
    bool flips = true;
    std::uint64_t seed = 0;
    /// Called after every step with (step, loss).
    std::function<void(int, double)> on_step;
};

struct TrainReport {
    std::vector<double> losses;  ///< one entry per optimizer step
};

/// Adam on random patches with random horizontal/vertical flips. Every
/// epoch visits each pair once in a seeded shuffled order. The loss is taken
/// on the unclamped prediction so the output clamp never zeroes gradients.
/// Throws NumericError naming the step on a non-finite loss.
TrainReport train(RestoreNet& net, std::span<const TrainingPair> pairs, const TrainOptions& opts);

/// Flat little-endian checkpoint:
///   magic "WLPRCKPT", u32 version, u32 C, u32 K, u32 token_cap, u32 count,
///   then per tensor: u32 name length, name bytes, u32 rank, u32 extents[rank],
///   float32 values.
void save_checkpoint(const std::filesystem::path& path, RestoreNet& net);
RestoreNet load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to float32, the precision a checkpoint keeps, so an
/// in-memory net behaves exactly like its saved copy.
void quantize_params(RestoreNet& net);

}  // namespace wlpr::restore

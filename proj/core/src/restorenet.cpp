#include "weatherlpr/restorenet.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "weatherlpr/error.hpp"
#include "weatherlpr/wavelet.hpp"

namespace wlpr::restore {

void NetConfig::validate() const {
    if (base_channels < 2 || base_channels % 2 != 0)
        throw ConfigError("net: base_channels must be an even number >= 2, got " + std::to_string(base_channels));
    if (contexts < 1) throw ConfigError("net: contexts must be >= 1");
    if (heads != 1) throw ConfigError("net: only single-head attention is supported");
    if (token_cap < 1) throw ConfigError("net: token_cap must be >= 1");
}

namespace {

ops::ConvSpec reflect3x3() { return ops::ConvSpec{1, ops::Padding::Reflect, 1}; }

}  // namespace

RestoreNet::RestoreNet(const NetConfig& config) : config_(config) {
    config.validate();
    Rng rng(derive_seed(config.seed, {0x4E45}));
    const int c = config.base_channels;
    embed = nn::Conv2d("embed", 3, 2, c, reflect3x3(), rng);
    for (int l = 0; l < kDepth; ++l)
        encoders[l] = nn::EncoderBlock("enc" + std::to_string(l + 1), c << l, config.token_cap, rng);
    bottleneck = nn::TransformerFuse("bottleneck", 8 * c, config.token_cap, rng);
    for (int l = 0; l < kDepth; ++l) {
        const int in_ch = (8 * c) >> l;
        decoders[l] = nn::DecoderBlock("dec" + std::to_string(l + 1), in_ch, config.token_cap, rng);
        guides[l] = nn::ContextGuide("ctg" + std::to_string(l + 1), in_ch / 2, config.contexts, rng);
    }
    // Zero head: the untrained network reproduces its input exactly.
    head = nn::Conv2d("head", 3, c, 2, reflect3x3(), rng);
    head.w.value.fill(0.0);
}

Tensor RestoreNet::encode(const Tensor& x) const {
    Tensor f = embed.forward(x, nullptr);
    for (const auto& e : encoders) f = e.forward(f, nullptr);
    return f;
}

Tensor RestoreNet::forward_raw(const Tensor& x, Tape* tape) const {
    if (x.rank() != 4 || x.dim(3) != 2) throw ShapeError("restore net: input must be (N, H, W, 2), got " + x.shape().str());
    if (x.dim(1) % 8 != 0 || x.dim(2) % 8 != 0)
        throw ShapeError("restore net: H and W must be divisible by 8, got " + x.shape().str());
    std::array<Tensor, kDepth + 1> skips;
    skips[0] = embed.forward(x, tape ? &tape->embed : nullptr);
    for (int l = 0; l < kDepth; ++l) skips[l + 1] = encoders[l].forward(skips[l], tape ? &tape->enc[l] : nullptr);
    Tensor f = bottleneck.forward(skips[kDepth], skips[kDepth], tape ? &tape->bottleneck : nullptr);
    for (int l = 0; l < kDepth; ++l) {
        f = decoders[l].forward(f, skips[kDepth - 1 - l], tape ? &tape->dec[l] : nullptr);
        f = guides[l].forward(f, tape ? &tape->ctg[l] : nullptr);
    }
    return x + head.forward(f, tape ? &tape->head : nullptr);
}

Tensor RestoreNet::backward(const Tape& tape, const Tensor& dy) {
    Tensor df = head.backward(tape.head, dy);
    std::array<Tensor, kDepth + 1> dskips;
    for (int l = kDepth - 1; l >= 0; --l) {
        df = guides[l].backward(tape.ctg[l], df);
        auto [dx, dskip] = decoders[l].backward(tape.dec[l], df);
        df = std::move(dx);
        dskips[kDepth - 1 - l] = std::move(dskip);
    }
    auto [dfw, dfc] = bottleneck.backward(tape.bottleneck, df);
    df = dfw + dfc;
    for (int l = kDepth - 1; l >= 0; --l) {
        df = encoders[l].backward(tape.enc[l], df);
        df += dskips[l];
    }
    return embed.backward(tape.embed, df) + dy;
}

Tensor RestoreNet::restore(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(3) != 2) throw ShapeError("restore: input must be (N, H, W, 2), got " + x.shape().str());
    const int h = x.dim(1), w = x.dim(2);
    Tensor padded = x;
    while (padded.dim(1) % 8 != 0 || padded.dim(2) % 8 != 0) {
        // pad_to_even adds at most one row/column per call; repeat until aligned.
        const int th = padded.dim(1) % 8 ? padded.dim(1) + 1 : padded.dim(1);
        const int tw = padded.dim(2) % 8 ? padded.dim(2) + 1 : padded.dim(2);
        Tensor next(Shape{x.dim(0), th, tw, 2});
        for (int b = 0; b < x.dim(0); ++b)
            for (int r = 0; r < th; ++r)
                for (int c = 0; c < tw; ++c) {
                    const int sr = r < padded.dim(1) ? r : std::max(0, 2 * padded.dim(1) - 2 - r);
                    const int sc = c < padded.dim(2) ? c : std::max(0, 2 * padded.dim(2) - 2 - c);
                    for (int k = 0; k < 2; ++k) next.at(b, r, c, k) = padded.at(b, sr, sc, k);
                }
        padded = std::move(next);
    }
    Tensor y = forward_raw(padded, nullptr);
    for (double& v : y.data()) v = std::clamp(v, 0.0, 1.0);
    return (y.dim(1) == h && y.dim(2) == w) ? y : wavelet::crop(y, h, w);
}

RangeImage RestoreNet::restore(const RangeImage& img, double min_valid_distance) const {
    return RangeImage::from_tensor(restore(img.to_tensor()), img.spec(), min_valid_distance);
}

nn::ParamRefs RestoreNet::params() {
    nn::ParamRefs out;
    embed.collect(out);
    for (auto& e : encoders) e.collect(out);
    bottleneck.collect(out);
    for (int l = 0; l < kDepth; ++l) {
        decoders[l].collect(out);
        guides[l].collect(out);
    }
    head.collect(out);
    return out;
}

void RestoreNet::zero_grad() {
    for (nn::Param* p : params()) p->zero_grad();
}

std::size_t RestoreNet::parameter_count() {
    std::size_t n = 0;
    for (nn::Param* p : params()) n += p->value.numel();
    return n;
}

double l1_loss(const Tensor& pred, const Tensor& clean) {
    require_same_shape(pred, clean, "l1_loss");
    if (pred.rank() != 4 || pred.dim(3) != 2) throw ShapeError("l1_loss: expected (N, H, W, 2), got " + pred.shape().str());
    double s = 0.0;
    for (std::size_t k = 0; k < pred.numel(); ++k) s += std::abs(clean[k] - pred[k]);
    return s / static_cast<double>(pred.numel() / 2);
}

double l1_loss(const RangeImage& pred, const RangeImage& clean) {
    if (pred.height() != clean.height() || pred.width() != clean.width())
        throw ShapeError("l1_loss: range images differ in size");
    return l1_loss(pred.to_tensor(), clean.to_tensor());
}

Tensor l1_loss_grad(const Tensor& pred, const Tensor& clean) {
    require_same_shape(pred, clean, "l1_loss_grad");
    Tensor g(pred.shape());
    const double inv = 1.0 / static_cast<double>(pred.numel() / 2);
    for (std::size_t k = 0; k < pred.numel(); ++k) {
        const double d = pred[k] - clean[k];
        g[k] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
    }
    return g;
}

Adam::Adam(nn::ParamRefs params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const nn::Param* p : params_) {
        m_.push_back(Tensor::zeros_like(p->value));
        v_.push_back(Tensor::zeros_like(p->value));
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        nn::Param& p = *params_[k];
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

namespace {

Tensor crop_and_flip(const Tensor& t, int top, int left, int ph, int pw, bool flip_h, bool flip_v) {
    Tensor out(Shape{1, ph, pw, 2});
    for (int r = 0; r < ph; ++r)
        for (int c = 0; c < pw; ++c) {
            const int sr = top + (flip_v ? ph - 1 - r : r);
            const int sc = left + (flip_h ? pw - 1 - c : c);
            out.at(0, r, c, 0) = t.at(0, sr, sc, 0);
            out.at(0, r, c, 1) = t.at(0, sr, sc, 1);
        }
    return out;
}

}  // namespace

TrainReport train(RestoreNet& net, std::span<const TrainingPair> pairs, const TrainOptions& opts) {
    if (pairs.empty()) throw ConfigError("train: dataset is empty");
    if (opts.patch_h % 8 != 0 || opts.patch_w % 8 != 0 || opts.patch_h < 8 || opts.patch_w < 8)
        throw ConfigError("train: patch dimensions must be positive multiples of 8");
    if (opts.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(opts.lr > 0.0) || !std::isfinite(opts.lr)) throw ConfigError("train: lr must be positive and finite");
    for (const auto& p : pairs) {
        require_same_shape(p.corrupt, p.clean, "training pair");
        if (p.corrupt.rank() != 4 || p.corrupt.dim(0) != 1 || p.corrupt.dim(3) != 2)
            throw ShapeError("training pair must be (1, H, W, 2), got " + p.corrupt.shape().str());
    }
    Rng rng(derive_seed(opts.seed, {0x7241}));
    Adam adam(net.params(), opts.lr);
    TrainReport report;
    std::vector<std::size_t> order(pairs.size());
    int step = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
        for (std::size_t idx : order) {
            const TrainingPair& pair = pairs[idx];
            const int h = pair.corrupt.dim(1), w = pair.corrupt.dim(2);
            const int ph = std::min(opts.patch_h, h / 8 * 8), pw = std::min(opts.patch_w, w / 8 * 8);
            if (ph < 8 || pw < 8) throw ShapeError("train: image smaller than 8x8: " + pair.corrupt.shape().str());
            const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - ph + 1)));
            const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - pw + 1)));
            const bool flip_h = opts.flips && (rng.next_u64() & 1);
            const bool flip_v = opts.flips && (rng.next_u64() & 1);
            const Tensor x = crop_and_flip(pair.corrupt, top, left, ph, pw, flip_h, flip_v);
            const Tensor target = crop_and_flip(pair.clean, top, left, ph, pw, flip_h, flip_v);

            RestoreNet::Tape tape;
            const Tensor pred = net.forward_raw(x, &tape);
            const double loss = l1_loss(pred, target);
            if (!std::isfinite(loss))
                throw NumericError("train: non-finite loss at step " + std::to_string(step));
            net.zero_grad();
            net.backward(tape, l1_loss_grad(pred, target));
            adam.step();
            report.losses.push_back(loss);
            if (opts.on_step) opts.on_step(step, loss);
            ++step;
        }
    }
    return report;
}

namespace {

constexpr char kMagic[8] = {'W', 'L', 'P', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

class Reader {
public:
    Reader(std::vector<std::uint8_t> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
        pos_ += 4;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ParseError("checkpoint " + path_ + ": truncated", pos_);
    }
    std::vector<std::uint8_t> bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, RestoreNet& net) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(net.config().base_channels));
    put_u32(out, static_cast<std::uint32_t>(net.config().contexts));
    put_u32(out, static_cast<std::uint32_t>(net.config().token_cap));
    const nn::ParamRefs params = net.params();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const nn::Param* p : params) {
        put_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.insert(out.end(), p->name.begin(), p->name.end());
        const Shape& s = p->value.shape();
        put_u32(out, static_cast<std::uint32_t>(s.rank()));
        for (int a = 0; a < s.rank(); ++a) put_u32(out, static_cast<std::uint32_t>(s[a]));
        for (double v : p->value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("failed writing checkpoint " + path.string());
}

void quantize_params(RestoreNet& net) {
    for (nn::Param* p : net.params())
        for (double& v : p->value.data()) v = static_cast<double>(static_cast<float>(v));
}

RestoreNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes), path.string());
    if (r.str(8) != std::string(kMagic, 8)) throw ParseError("checkpoint " + path.string() + ": bad magic", 0);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw ParseError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version), 8);
    NetConfig cfg;
    cfg.base_channels = static_cast<int>(r.u32());
    cfg.contexts = static_cast<int>(r.u32());
    cfg.token_cap = static_cast<int>(r.u32());
    RestoreNet net(cfg);
    nn::ParamRefs params = net.params();
    const std::uint32_t count = r.u32();
    if (count != params.size())
        throw ParseError("checkpoint " + path.string() + ": expected " + std::to_string(params.size()) +
                             " tensors, found " + std::to_string(count), r.pos());
    for (nn::Param* p : params) {
        const std::size_t at = r.pos();
        const std::string name = r.str(r.u32());
        if (name != p->name) throw ParseError("checkpoint: expected tensor " + p->name + ", found " + name, at);
        const std::uint32_t rank = r.u32();
        if (rank != static_cast<std::uint32_t>(p->value.rank()))
            throw ParseError("checkpoint: rank mismatch for " + name, at);
        for (std::uint32_t a = 0; a < rank; ++a)
            if (r.u32() != static_cast<std::uint32_t>(p->value.dim(static_cast<int>(a))))
                throw ParseError("checkpoint: shape mismatch for " + name, at);
        for (double& v : p->value.data()) v = static_cast<double>(r.f32());
    }
    if (!r.done()) throw ParseError("checkpoint " + path.string() + ": trailing bytes", r.pos());
    return net;
}

}  // namespace wlpr::restore

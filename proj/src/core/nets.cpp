#include "core/nets.hpp"

#include <algorithm>

#include "core/errors.hpp"

namespace mrct {

int UNetGenerator::width(int level) const { return std::min(base_ << level, 8 * base_); }

UNetGenerator::UNetGenerator(int in_channels, int out_channels, int base_width, int depth,
                             std::uint64_t seed)
    : in_ch_(in_channels), out_ch_(out_channels), base_(base_width), depth_(depth) {
    if (in_channels < 1 || out_channels < 1) throw_invalid_argument("generator: channels must be >= 1");
    if (base_width < 1) throw_invalid_argument("generator: base_width must be >= 1");
    if (depth < 2 || depth > 8) throw_invalid_argument("generator: depth must be in [2, 8]");

    Rng rng(Rng::derive(seed, "unet-init"));
    enc_.reserve(depth);
    for (int i = 0; i < depth; ++i) {
        int ci = i == 0 ? in_channels : width(i - 1);
        enc_.emplace_back(ci, width(i), 4, 2, 1, rng);
    }
    dec_.reserve(depth);
    for (int j = 0; j < depth; ++j) {
        int level = depth - 1 - j;
        if (level >= 1) {
            int ci = level == depth - 1 ? width(level) : 2 * width(level);
            dec_.emplace_back(ci, width(level - 1), 4, 2, 1, rng);
        } else {
            dec_.emplace_back(2 * width(0), out_channels, 4, 2, 1, rng);
        }
    }
    enc_norm_.assign(depth, InstanceNorm2d());
    dec_norm_.assign(depth - 1, InstanceNorm2d());
    enc_act_.assign(depth - 1, LeakyReLU(0.2));
    dec_act_.assign(depth, ReLU());
}

Tensor UNetGenerator::forward(const Tensor& x) {
    if (x.h() != x.w()) throw_invalid_argument("generator: input must be square, got " + x.shape_str());
    if (x.h() % (1 << depth_) != 0)
        throw_invalid_argument("generator: input size " + std::to_string(x.h()) +
                               " not divisible by 2^depth");
    skips_.clear();
    Tensor a = x;
    for (int i = 0; i < depth_; ++i) {
        if (i > 0) a = enc_act_[i - 1].forward(a);
        a = enc_[i].forward(a);
        if (i >= 1 && i <= depth_ - 2) a = enc_norm_[i].forward(a);
        if (i < depth_ - 1) skips_.push_back(a);
    }
    Tensor h = a;
    for (int j = 0; j < depth_; ++j) {
        int level = depth_ - 1 - j;
        h = dec_act_[j].forward(h);
        h = dec_[j].forward(h);
        if (level >= 1) {
            h = dec_norm_[j].forward(h);
            h = concat_channels(skips_[level - 1], h);
        }
    }
    return out_act_.forward(h);
}

Tensor UNetGenerator::backward(const Tensor& dy) {
    std::vector<Tensor> dskips(depth_ - 1);
    Tensor d = out_act_.backward(dy);
    for (int j = depth_ - 1; j >= 0; --j) {
        int level = depth_ - 1 - j;
        if (level >= 1) {
            Tensor dh;
            split_channels(d, skips_[level - 1].c(), dskips[level - 1], dh);
            d = dec_norm_[j].backward(dh);
        }
        d = dec_[j].backward(d);
        d = dec_act_[j].backward(d);
    }
    for (int i = depth_ - 1; i >= 0; --i) {
        if (i < depth_ - 1)
            for (std::size_t k = 0; k < d.data.size(); ++k) d.data[k] += dskips[i].data[k];
        if (i >= 1 && i <= depth_ - 2) d = enc_norm_[i].backward(d);
        d = enc_[i].backward(d);
        if (i > 0) d = enc_act_[i - 1].backward(d);
    }
    return d;
}

std::vector<Tensor*> UNetGenerator::parameters() {
    std::vector<Tensor*> p, g;
    for (Conv2d& l : enc_) l.collect(p, g);
    for (ConvTranspose2d& l : dec_) l.collect(p, g);
    return p;
}

std::vector<Tensor*> UNetGenerator::gradients() {
    std::vector<Tensor*> p, g;
    for (Conv2d& l : enc_) l.collect(p, g);
    for (ConvTranspose2d& l : dec_) l.collect(p, g);
    return g;
}

PatchDiscriminator::PatchDiscriminator(int in_channels, int base_width, int n_layers,
                                       std::uint64_t seed)
    : in_ch_(in_channels), base_(base_width), n_layers_(n_layers) {
    if (in_channels < 1) throw_invalid_argument("discriminator: in_channels must be >= 1");
    if (base_width < 1) throw_invalid_argument("discriminator: base_width must be >= 1");
    if (n_layers < 1 || n_layers > 6) throw_invalid_argument("discriminator: n_layers must be in [1, 6]");

    Rng rng(Rng::derive(seed, "patchgan-init"));
    auto w = [&](int i) { return std::min(base_width << i, 8 * base_width); };
    seq_.push_back(std::make_unique<Conv2d>(in_channels, w(0), 4, 2, 1, rng));
    seq_.push_back(std::make_unique<LeakyReLU>(0.2));
    for (int i = 1; i < n_layers; ++i) {
        seq_.push_back(std::make_unique<Conv2d>(w(i - 1), w(i), 4, 2, 1, rng));
        seq_.push_back(std::make_unique<InstanceNorm2d>());
        seq_.push_back(std::make_unique<LeakyReLU>(0.2));
    }
    seq_.push_back(std::make_unique<Conv2d>(w(n_layers - 1), w(n_layers), 4, 1, 1, rng));
    seq_.push_back(std::make_unique<InstanceNorm2d>());
    seq_.push_back(std::make_unique<LeakyReLU>(0.2));
    seq_.push_back(std::make_unique<Conv2d>(w(n_layers), 1, 4, 1, 1, rng));
}

Tensor PatchDiscriminator::forward(const Tensor& x) {
    Tensor a = x;
    for (auto& l : seq_) a = l->forward(a);
    return a;
}

Tensor PatchDiscriminator::backward(const Tensor& dy) {
    Tensor d = dy;
    for (auto it = seq_.rbegin(); it != seq_.rend(); ++it) d = (*it)->backward(d);
    return d;
}

std::vector<Tensor*> PatchDiscriminator::parameters() {
    std::vector<Tensor*> p, g;
    for (auto& l : seq_) l->collect(p, g);
    return p;
}

std::vector<Tensor*> PatchDiscriminator::gradients() {
    std::vector<Tensor*> p, g;
    for (auto& l : seq_) l->collect(p, g);
    return g;
}

int receptive_field(int n_layers) {
    if (n_layers < 1 || n_layers > 6)
        throw_invalid_argument("receptive_field: n_layers must be in [1, 6]");
    int r = 1;
    r = (r - 1) * 1 + 4; // final logit conv
    r = (r - 1) * 1 + 4; // penultimate stride-1 conv
    for (int i = 0; i < n_layers; ++i) r = (r - 1) * 2 + 4;
    return r;
}

std::unique_ptr<UNetGenerator> build_generator(int in_channels, int out_channels, int base_width,
                                               int depth, std::uint64_t seed) {
    return std::make_unique<UNetGenerator>(in_channels, out_channels, base_width, depth, seed);
}

std::unique_ptr<PatchDiscriminator> build_discriminator(int in_channels, int base_width, int n_layers,
                                                        std::uint64_t seed) {
    return std::make_unique<PatchDiscriminator>(in_channels, base_width, n_layers, seed);
}

} // namespace mrct

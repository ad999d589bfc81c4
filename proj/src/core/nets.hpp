#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "core/nn.hpp"

namespace mrct {

// Encoder/decoder with skip connections. Encoder: stride-2 4x4 convs, widths
// min(base*2^i, 8*base); LeakyReLU(0.2) between blocks; instance norm on all
// but the first and innermost block. Decoder: ReLU + stride-2 4x4 transpose
// convs + instance norm, each output concatenated with the matching encoder
// skip; the last transpose conv maps to out_channels and ends in tanh.
class UNetGenerator : public Net {
public:
    UNetGenerator(int in_channels, int out_channels, int base_width, int depth, std::uint64_t seed);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Tensor*> parameters() override;
    std::vector<Tensor*> gradients() override;

    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }
    int base_width() const { return base_; }
    int depth() const { return depth_; }

private:
    int width(int level) const;

    int in_ch_, out_ch_, base_, depth_;
    std::vector<Conv2d> enc_;
    std::vector<InstanceNorm2d> enc_norm_; // for levels 1..depth-2
    std::vector<LeakyReLU> enc_act_;       // before enc blocks 1..depth-1
    // decoders in execution order: index j handles level depth-1-j
    std::vector<ConvTranspose2d> dec_;
    std::vector<InstanceNorm2d> dec_norm_; // all but the last decoder
    std::vector<ReLU> dec_act_;
    Tanh out_act_;
    std::vector<Tensor> skips_;
};

// PatchGAN: n_layers stride-2 4x4 convs (instance norm on all but the first),
// then two stride-1 4x4 convs, the last mapping to a 1-channel logit map.
class PatchDiscriminator : public Net {
public:
    PatchDiscriminator(int in_channels, int base_width, int n_layers, std::uint64_t seed);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Tensor*> parameters() override;
    std::vector<Tensor*> gradients() override;

    int in_channels() const { return in_ch_; }
    int base_width() const { return base_; }
    int n_layers() const { return n_layers_; }

private:
    int in_ch_, base_, n_layers_;
    std::vector<std::unique_ptr<Layer>> seq_;
};

// Receptive field of one output logit: fold r <- (r-1)*stride + kernel over
// the conv stack, last layer first.
int receptive_field(int n_layers);

std::unique_ptr<UNetGenerator> build_generator(int in_channels, int out_channels, int base_width,
                                               int depth, std::uint64_t seed);
std::unique_ptr<PatchDiscriminator> build_discriminator(int in_channels, int base_width, int n_layers,
                                                        std::uint64_t seed);

} // namespace mrct

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace mrct {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unfold one image (C,H,W) into a (C*K*K) x (OH*OW) patch matrix.
RowMat im2col(const double* img, int C, int H, int W, int K, int S, int P);
// Adjoint of im2col: scatter-add patch columns back into the image.
void col2im_add(const RowMat& cols, double* img, int C, int H, int W, int K, int S, int P);

inline int conv_out_size(int in, int K, int S, int P) { return (in + 2 * P - K) / S + 1; }
inline int convt_out_size(int in, int K, int S, int P) { return (in - 1) * S - 2 * P + K; }

// Layers cache whatever backward needs during forward. The contract is
// strictly LIFO per layer object: each forward must be consumed by exactly one
// backward before the same object runs forward again.
struct Layer {
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    // Appends parameter/gradient tensors in a stable order.
    virtual void collect(std::vector<Tensor*>& params, std::vector<Tensor*>& grads) {}
};

class Conv2d : public Layer {
public:
    // weight (out,in,K,K) ~ N(0, 0.02), bias 0
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void collect(std::vector<Tensor*>& params, std::vector<Tensor*>& grads) override;

    Tensor weight, bias, dweight, dbias;
    int in_ch, out_ch, kernel, stride, pad;

private:
    Tensor x_;
};

class ConvTranspose2d : public Layer {
public:
    // weight (in,out,K,K) ~ N(0, 0.02), bias 0
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void collect(std::vector<Tensor*>& params, std::vector<Tensor*>& grads) override;

    Tensor weight, bias, dweight, dbias;
    int in_ch, out_ch, kernel, stride, pad;

private:
    Tensor x_;
};

// Normalizes each (sample, channel) plane to zero mean / unit variance.
// No learnable affine.
class InstanceNorm2d : public Layer {
public:
    explicit InstanceNorm2d(double eps = 1e-5) : eps(eps) {}
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    double eps;

private:
    Tensor xhat_;
    std::vector<double> inv_std_;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(double slope = 0.2) : slope(slope) {}
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    double slope;

private:
    Tensor x_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;

private:
    Tensor x_;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;

private:
    Tensor y_;
};

// A trainable network: forward/backward plus flat parameter access in a
// stable, documented order (used for optimizer state and checkpoints).
class Net {
public:
    virtual ~Net() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual std::vector<Tensor*> parameters() = 0;
    virtual std::vector<Tensor*> gradients() = 0;
    void zero_grad();
    std::size_t parameter_count();
};

struct AdamConfig {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction; lr is supplied per step so an external
// schedule can drive it.
class Adam {
public:
    Adam(Net& net, AdamConfig cfg = {});
    void step(double lr);

    std::uint64_t t() const { return t_; }
    std::vector<Tensor>& m() { return m_; }
    std::vector<Tensor>& v() { return v_; }
    void set_t(std::uint64_t t) { t_ = t; }
    const AdamConfig& config() const { return cfg_; }

private:
    Net& net_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::uint64_t t_ = 0;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits dy of concat_channels(a,b) back into the two channel groups.
void split_channels(const Tensor& dy, int ca, Tensor& da, Tensor& db);

} // namespace mrct

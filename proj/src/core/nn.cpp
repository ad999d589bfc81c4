#include "core/nn.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace mrct {

RowMat im2col(const double* img, int C, int H, int W, int K, int S, int P) {
    int OH = conv_out_size(H, K, S, P), OW = conv_out_size(W, K, S, P);
    RowMat cols(C * K * K, OH * OW);
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx) {
                int row = (c * K + ky) * K + kx;
                for (int oy = 0; oy < OH; ++oy) {
                    int iy = oy * S + ky - P;
                    for (int ox = 0; ox < OW; ++ox) {
                        int ix = ox * S + kx - P;
                        double v = 0.0;
                        if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                            v = img[(static_cast<std::size_t>(c) * H + iy) * W + ix];
                        cols(row, oy * OW + ox) = v;
                    }
                }
            }
    return cols;
}

void col2im_add(const RowMat& cols, double* img, int C, int H, int W, int K, int S, int P) {
    int OH = conv_out_size(H, K, S, P), OW = conv_out_size(W, K, S, P);
    if (cols.rows() != C * K * K || cols.cols() != static_cast<long>(OH) * OW)
        throw_internal("col2im_add: column matrix does not match geometry");
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx) {
                int row = (c * K + ky) * K + kx;
                for (int oy = 0; oy < OH; ++oy) {
                    int iy = oy * S + ky - P;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < OW; ++ox) {
                        int ix = ox * S + kx - P;
                        if (ix < 0 || ix >= W) continue;
                        img[(static_cast<std::size_t>(c) * H + iy) * W + ix] += cols(row, oy * OW + ox);
                    }
                }
            }
}

namespace {

void init_gaussian(Tensor& t, Rng& rng, double stddev) {
    for (double& v : t.data) v = rng.normal(0.0, stddev);
}

using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

} // namespace

Conv2d::Conv2d(int in_ch_, int out_ch_, int kernel_, int stride_, int pad_, Rng& rng)
    : weight(out_ch_, in_ch_, kernel_, kernel_),
      bias(1, out_ch_, 1, 1),
      dweight(out_ch_, in_ch_, kernel_, kernel_),
      dbias(1, out_ch_, 1, 1),
      in_ch(in_ch_), out_ch(out_ch_), kernel(kernel_), stride(stride_), pad(pad_) {
    if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride < 1 || pad < 0)
        throw_invalid_argument("Conv2d: bad layer geometry");
    init_gaussian(weight, rng, 0.02);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.c() != in_ch) throw_invalid_argument("Conv2d: expected " + std::to_string(in_ch) +
                                               " input channels, got " + x.shape_str());
    int OH = conv_out_size(x.h(), kernel, stride, pad), OW = conv_out_size(x.w(), kernel, stride, pad);
    if (OH < 1 || OW < 1) throw_invalid_argument("Conv2d: input " + x.shape_str() + " too small");
    x_ = x;
    Tensor y(x.b(), out_ch, OH, OW);
    ConstMap wmat(weight.data.data(), out_ch, in_ch * kernel * kernel);
    std::size_t in_plane = static_cast<std::size_t>(in_ch) * x.h() * x.w();
    std::size_t out_plane = static_cast<std::size_t>(out_ch) * OH * OW;
    for (int b = 0; b < x.b(); ++b) {
        RowMat cols = im2col(x.data.data() + b * in_plane, in_ch, x.h(), x.w(), kernel, stride, pad);
        MutMap ymat(y.data.data() + b * out_plane, out_ch, OH * OW);
        ymat.noalias() = wmat * cols;
        for (int co = 0; co < out_ch; ++co) ymat.row(co).array() += bias.data[co];
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    int OH = dy.h(), OW = dy.w();
    Tensor dx(x_.b(), in_ch, x_.h(), x_.w());
    ConstMap wmat(weight.data.data(), out_ch, in_ch * kernel * kernel);
    MutMap dwmat(dweight.data.data(), out_ch, in_ch * kernel * kernel);
    std::size_t in_plane = static_cast<std::size_t>(in_ch) * x_.h() * x_.w();
    std::size_t out_plane = static_cast<std::size_t>(out_ch) * OH * OW;
    for (int b = 0; b < x_.b(); ++b) {
        ConstMap dymat(dy.data.data() + b * out_plane, out_ch, OH * OW);
        RowMat cols = im2col(x_.data.data() + b * in_plane, in_ch, x_.h(), x_.w(), kernel, stride, pad);
        dwmat.noalias() += dymat * cols.transpose();
        for (int co = 0; co < out_ch; ++co) dbias.data[co] += dymat.row(co).sum();
        RowMat dcols = wmat.transpose() * dymat;
        col2im_add(dcols, dx.data.data() + b * in_plane, in_ch, x_.h(), x_.w(), kernel, stride, pad);
    }
    return dx;
}

void Conv2d::collect(std::vector<Tensor*>& params, std::vector<Tensor*>& grads) {
    params.push_back(&weight);
    params.push_back(&bias);
    grads.push_back(&dweight);
    grads.push_back(&dbias);
}

ConvTranspose2d::ConvTranspose2d(int in_ch_, int out_ch_, int kernel_, int stride_, int pad_, Rng& rng)
    : weight(in_ch_, out_ch_, kernel_, kernel_),
      bias(1, out_ch_, 1, 1),
      dweight(in_ch_, out_ch_, kernel_, kernel_),
      dbias(1, out_ch_, 1, 1),
      in_ch(in_ch_), out_ch(out_ch_), kernel(kernel_), stride(stride_), pad(pad_) {
    if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride < 1 || pad < 0)
        throw_invalid_argument("ConvTranspose2d: bad layer geometry");
    init_gaussian(weight, rng, 0.02);
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
    if (x.c() != in_ch) throw_invalid_argument("ConvTranspose2d: expected " + std::to_string(in_ch) +
                                               " input channels, got " + x.shape_str());
    int OH = convt_out_size(x.h(), kernel, stride, pad), OW = convt_out_size(x.w(), kernel, stride, pad);
    if (OH < 1 || OW < 1) throw_invalid_argument("ConvTranspose2d: input " + x.shape_str() + " too small");
    x_ = x;
    Tensor y(x.b(), out_ch, OH, OW);
    ConstMap wmat(weight.data.data(), in_ch, out_ch * kernel * kernel);
    std::size_t in_plane = static_cast<std::size_t>(in_ch) * x.h() * x.w();
    std::size_t out_plane = static_cast<std::size_t>(out_ch) * OH * OW;
    for (int b = 0; b < x.b(); ++b) {
        ConstMap xmat(x.data.data() + b * in_plane, in_ch, x.h() * x.w());
        RowMat cols = wmat.transpose() * xmat; // (out*K*K) x (H*W)
        double* out = y.data.data() + b * out_plane;
        col2im_add(cols, out, out_ch, OH, OW, kernel, stride, pad);
        MutMap ymat(out, out_ch, OH * OW);
        for (int co = 0; co < out_ch; ++co) ymat.row(co).array() += bias.data[co];
    }
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
    Tensor dx(x_.b(), in_ch, x_.h(), x_.w());
    ConstMap wmat(weight.data.data(), in_ch, out_ch * kernel * kernel);
    MutMap dwmat(dweight.data.data(), in_ch, out_ch * kernel * kernel);
    std::size_t in_plane = static_cast<std::size_t>(in_ch) * x_.h() * x_.w();
    std::size_t out_plane = static_cast<std::size_t>(out_ch) * dy.h() * dy.w();
    for (int b = 0; b < x_.b(); ++b) {
        // unfolding dy over the input grid turns the transpose conv backward
        // into the plain conv forward recipe
        RowMat dcols = im2col(dy.data.data() + b * out_plane, out_ch, dy.h(), dy.w(), kernel, stride, pad);
        ConstMap xmat(x_.data.data() + b * in_plane, in_ch, x_.h() * x_.w());
        MutMap dxmat(dx.data.data() + b * in_plane, in_ch, x_.h() * x_.w());
        dxmat.noalias() = wmat * dcols;
        dwmat.noalias() += xmat * dcols.transpose();
        ConstMap dymat(dy.data.data() + b * out_plane, out_ch, dy.h() * dy.w());
        for (int co = 0; co < out_ch; ++co) dbias.data[co] += dymat.row(co).sum();
    }
    return dx;
}

void ConvTranspose2d::collect(std::vector<Tensor*>& params, std::vector<Tensor*>& grads) {
    params.push_back(&weight);
    params.push_back(&bias);
    grads.push_back(&dweight);
    grads.push_back(&dbias);
}

Tensor InstanceNorm2d::forward(const Tensor& x) {
    int plane = x.h() * x.w();
    if (plane < 2) throw_invalid_argument("InstanceNorm2d: spatial plane too small: " + x.shape_str());
    xhat_ = Tensor(x.b(), x.c(), x.h(), x.w());
    inv_std_.assign(static_cast<std::size_t>(x.b()) * x.c(), 0.0);
    for (int b = 0; b < x.b(); ++b)
        for (int c = 0; c < x.c(); ++c) {
            const double* src = x.data.data() + (static_cast<std::size_t>(b) * x.c() + c) * plane;
            double mean = 0;
            for (int i = 0; i < plane; ++i) mean += src[i];
            mean /= plane;
            double var = 0;
            for (int i = 0; i < plane; ++i) var += (src[i] - mean) * (src[i] - mean);
            var /= plane;
            double is = 1.0 / std::sqrt(var + eps);
            inv_std_[static_cast<std::size_t>(b) * x.c() + c] = is;
            double* dst = xhat_.data.data() + (static_cast<std::size_t>(b) * x.c() + c) * plane;
            for (int i = 0; i < plane; ++i) dst[i] = (src[i] - mean) * is;
        }
    return xhat_;
}

Tensor InstanceNorm2d::backward(const Tensor& dy) {
    check_same_shape(dy, xhat_, "InstanceNorm2d::backward");
    int plane = dy.h() * dy.w();
    Tensor dx = Tensor(dy.b(), dy.c(), dy.h(), dy.w());
    for (int b = 0; b < dy.b(); ++b)
        for (int c = 0; c < dy.c(); ++c) {
            std::size_t off = (static_cast<std::size_t>(b) * dy.c() + c) * plane;
            const double* g = dy.data.data() + off;
            const double* xh = xhat_.data.data() + off;
            double gmean = 0, gxmean = 0;
            for (int i = 0; i < plane; ++i) {
                gmean += g[i];
                gxmean += g[i] * xh[i];
            }
            gmean /= plane;
            gxmean /= plane;
            double is = inv_std_[static_cast<std::size_t>(b) * dy.c() + c];
            double* d = dx.data.data() + off;
            for (int i = 0; i < plane; ++i) d[i] = is * (g[i] - gmean - xh[i] * gxmean);
        }
    return dx;
}

Tensor LeakyReLU::forward(const Tensor& x) {
    x_ = x;
    Tensor y = x;
    for (double& v : y.data)
        if (v < 0) v *= slope;
    return y;
}

Tensor LeakyReLU::backward(const Tensor& dy) {
    check_same_shape(dy, x_, "LeakyReLU::backward");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (x_.data[i] < 0) dx.data[i] *= slope;
    return dx;
}

Tensor ReLU::forward(const Tensor& x) {
    x_ = x;
    Tensor y = x;
    for (double& v : y.data)
        if (v < 0) v = 0;
    return y;
}

Tensor ReLU::backward(const Tensor& dy) {
    check_same_shape(dy, x_, "ReLU::backward");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (x_.data[i] < 0) dx.data[i] = 0;
    return dx;
}

Tensor Tanh::forward(const Tensor& x) {
    y_ = x;
    for (double& v : y_.data) v = std::tanh(v);
    return y_;
}

Tensor Tanh::backward(const Tensor& dy) {
    check_same_shape(dy, y_, "Tanh::backward");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= 1.0 - y_.data[i] * y_.data[i];
    return dx;
}

void Net::zero_grad() {
    for (Tensor* g : gradients()) std::fill(g->data.begin(), g->data.end(), 0.0);
}

std::size_t Net::parameter_count() {
    std::size_t n = 0;
    for (Tensor* p : parameters()) n += p->data.size();
    return n;
}

Adam::Adam(Net& net, AdamConfig cfg) : net_(net), cfg_(cfg) {
    for (Tensor* p : net.parameters()) {
        m_.push_back(Tensor::zeros_like(*p));
        v_.push_back(Tensor::zeros_like(*p));
    }
}

void Adam::step(double lr) {
    auto params = net_.parameters();
    auto grads = net_.gradients();
    if (params.size() != m_.size()) throw_internal("Adam: parameter list changed size");
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        Tensor& g = *grads[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.data.size(); ++j) {
            m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * g.data[j];
            v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * g.data[j] * g.data[j];
            double mhat = m.data[j] / bc1;
            double vhat = v.data[j] / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.b() != b.b() || a.h() != b.h() || a.w() != b.w())
        throw_invalid_argument("concat_channels: " + a.shape_str() + " vs " + b.shape_str());
    Tensor y(a.b(), a.c() + b.c(), a.h(), a.w());
    int plane = a.h() * a.w();
    for (int bi = 0; bi < a.b(); ++bi) {
        double* dst = y.data.data() + static_cast<std::size_t>(bi) * y.c() * plane;
        const double* pa = a.data.data() + static_cast<std::size_t>(bi) * a.c() * plane;
        const double* pb = b.data.data() + static_cast<std::size_t>(bi) * b.c() * plane;
        std::copy(pa, pa + static_cast<std::size_t>(a.c()) * plane, dst);
        std::copy(pb, pb + static_cast<std::size_t>(b.c()) * plane, dst + static_cast<std::size_t>(a.c()) * plane);
    }
    return y;
}

void split_channels(const Tensor& dy, int ca, Tensor& da, Tensor& db) {
    int cb = dy.c() - ca;
    if (ca < 1 || cb < 1) throw_invalid_argument("split_channels: bad split point");
    da = Tensor(dy.b(), ca, dy.h(), dy.w());
    db = Tensor(dy.b(), cb, dy.h(), dy.w());
    int plane = dy.h() * dy.w();
    for (int bi = 0; bi < dy.b(); ++bi) {
        const double* src = dy.data.data() + static_cast<std::size_t>(bi) * dy.c() * plane;
        std::copy(src, src + static_cast<std::size_t>(ca) * plane,
                  da.data.data() + static_cast<std::size_t>(bi) * ca * plane);
        std::copy(src + static_cast<std::size_t>(ca) * plane, src + static_cast<std::size_t>(dy.c()) * plane,
                  db.data.data() + static_cast<std::size_t>(bi) * cb * plane);
    }
}

} // namespace mrct

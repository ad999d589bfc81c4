#include "core/datapipe.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace mrct {

namespace {

void fill_draw_sizes(AugmentDraw& d, const AugmentConfig& cfg, int src_size) {
    d.src_size = src_size;
    d.crop_size = cfg.crop_size;
    d.zoomed_size = std::max(1, static_cast<int>(std::lround(src_size * d.zoom)));
    d.padded_size = std::max(d.zoomed_size, cfg.crop_size);
}

} // namespace

AugmentDraw draw_augment(Rng& rng, const AugmentConfig& cfg, int src_size) {
    if (src_size < 1) throw_invalid_argument("draw_augment: empty source image");
    if (cfg.crop_size < 1) throw_invalid_argument("draw_augment: crop_size must be >= 1");
    if (cfg.zoom_min <= 0.0 || cfg.zoom_max < cfg.zoom_min)
        throw_invalid_argument("draw_augment: bad zoom range");

    AugmentDraw d;
    if (!cfg.enabled) {
        // still burn no rng here: disabled augmentation is fully deterministic
        d = identity_augment(src_size, cfg.crop_size);
        return d;
    }
    d.flip = rng.uniform01() < cfg.hflip_prob;
    d.zoom = rng.uniform(cfg.zoom_min, cfg.zoom_max);
    fill_draw_sizes(d, cfg, src_size);
    int slack = d.padded_size - d.crop_size;
    d.off_x = slack > 0 ? static_cast<int>(rng.uniform_int(0, slack)) : 0;
    d.off_y = slack > 0 ? static_cast<int>(rng.uniform_int(0, slack)) : 0;
    return d;
}

AugmentDraw identity_augment(int src_size, int crop_size) {
    AugmentDraw d;
    d.zoom = 1.0;
    d.src_size = src_size;
    d.crop_size = crop_size;
    d.zoomed_size = src_size;
    d.padded_size = std::max(src_size, crop_size);
    d.off_x = (d.padded_size - crop_size) / 2;
    d.off_y = (d.padded_size - crop_size) / 2;
    return d;
}

namespace {

// Maps an output pixel of the final crop back to continuous source
// coordinates (before the flip).
struct BackMap {
    const AugmentDraw& d;
    double pad_off;
    explicit BackMap(const AugmentDraw& d_)
        : d(d_), pad_off((d_.padded_size - d_.zoomed_size) / 2.0) {}
    double src_x(int xo) const { return (xo + d.off_x - pad_off + 0.5) / d.zoom - 0.5; }
    double src_y(int yo) const { return (yo + d.off_y - pad_off + 0.5) / d.zoom - 0.5; }
    bool in_zoomed(int xo, int yo) const {
        int zx = xo + d.off_x - static_cast<int>(pad_off);
        int zy = yo + d.off_y - static_cast<int>(pad_off);
        return zx >= 0 && zx < d.zoomed_size && zy >= 0 && zy < d.zoomed_size;
    }
};

} // namespace

Tensor apply_augment(const Tensor& image, const AugmentDraw& d) {
    if (image.h() != d.src_size || image.w() != d.src_size)
        throw_invalid_argument("apply_augment: image size does not match draw (" + image.shape_str() + ")");
    int S = d.src_size, C = d.crop_size;
    Tensor out(image.b(), image.c(), C, C);
    BackMap bm(d);
    for (int b = 0; b < image.b(); ++b)
        for (int c = 0; c < image.c(); ++c)
            for (int yo = 0; yo < C; ++yo)
                for (int xo = 0; xo < C; ++xo) {
                    double v = -1.0; // pad region is air
                    if (bm.in_zoomed(xo, yo)) {
                        double sx = bm.src_x(xo), sy = bm.src_y(yo);
                        if (d.flip) sx = (S - 1) - sx;
                        sx = std::clamp(sx, 0.0, S - 1.0);
                        sy = std::clamp(sy, 0.0, S - 1.0);
                        int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
                        int x1 = std::min(x0 + 1, S - 1), y1 = std::min(y0 + 1, S - 1);
                        double fx = sx - x0, fy = sy - y0;
                        v = (1 - fy) * ((1 - fx) * image.at(b, c, y0, x0) + fx * image.at(b, c, y0, x1)) +
                            fy * ((1 - fx) * image.at(b, c, y1, x0) + fx * image.at(b, c, y1, x1));
                    }
                    out.at(b, c, yo, xo) = v;
                }
    return out;
}

LabelMap apply_augment(const LabelMap& mask, const AugmentDraw& d) {
    if (mask.h != d.src_size || mask.w != d.src_size)
        throw_invalid_argument("apply_augment: mask size does not match draw");
    int S = d.src_size, C = d.crop_size;
    LabelMap out(C, C);
    BackMap bm(d);
    for (int yo = 0; yo < C; ++yo)
        for (int xo = 0; xo < C; ++xo) {
            std::uint8_t v = labels::background;
            if (bm.in_zoomed(xo, yo)) {
                double sx = bm.src_x(xo), sy = bm.src_y(yo);
                if (d.flip) sx = (S - 1) - sx;
                int xi = std::clamp(static_cast<int>(std::lround(sx)), 0, S - 1);
                int yi = std::clamp(static_cast<int>(std::lround(sy)), 0, S - 1);
                v = mask.at(yi, xi);
            }
            out.at(yo, xo) = v;
        }
    return out;
}

DataLoader::DataLoader(const DatasetManifest& manifest, const LoaderConfig& cfg)
    : cfg_(cfg), rng_(cfg.seed) {
    if (cfg.batch_size < 1) throw_invalid_argument("loader: batch_size must be >= 1");
    if (cfg.iterations_per_epoch < 1) throw_invalid_argument("loader: iterations_per_epoch must be >= 1");
    if (cfg.split != "train" && cfg.split != "eval" && cfg.split != "all")
        throw_invalid_argument("loader: split must be train, eval or all");

    for (const CaseEntry& e : manifest.cases) {
        if (cfg.split != "all" && e.split != cfg.split) continue;
        if (e.paired) {
            paired_mr_.push_back(load_image(manifest, e, Modality::MR).pixels);
            paired_mrcat_.push_back(load_image(manifest, e, Modality::MRCAT).pixels);
            paired_ids_.push_back(e.case_id);
        } else {
            ct_.push_back(load_image(manifest, e, Modality::CT).pixels);
            ct_ids_.push_back(e.case_id);
        }
    }
    bool need_paired = cfg.regime != LoaderRegime::ct_only;
    bool need_ct = cfg.regime != LoaderRegime::paired_only;
    if (need_paired && paired_mr_.empty())
        throw_invalid_argument("loader: no paired cases in split '" + cfg.split + "'");
    if (need_ct && ct_.empty())
        throw_invalid_argument("loader: no CT cases in split '" + cfg.split + "'");
    start_epoch(0);
}

void DataLoader::start_epoch(int epoch) {
    rng_ = Rng(Rng::derive(cfg_.seed, "loader-epoch", static_cast<std::uint64_t>(epoch)));
    iter_ = 0;
}

Batch DataLoader::sample_paired() {
    Batch b;
    int B = cfg_.batch_size, C = cfg_.augment.crop_size;
    b.input = Tensor(B, 1, C, C);
    b.target = Tensor(B, 1, C, C);
    for (int i = 0; i < B; ++i) {
        int idx = static_cast<int>(rng_.uniform_int(0, static_cast<std::uint64_t>(paired_mr_.size()) - 1));
        AugmentDraw d = draw_augment(rng_, cfg_.augment, paired_mr_[idx].h());
        Tensor mr = apply_augment(paired_mr_[idx], d);
        Tensor mrcat = apply_augment(paired_mrcat_[idx], d);
        std::copy(mr.data.begin(), mr.data.end(),
                  b.input.data.begin() + static_cast<std::ptrdiff_t>(i) * C * C);
        std::copy(mrcat.data.begin(), mrcat.data.end(),
                  b.target.data.begin() + static_cast<std::ptrdiff_t>(i) * C * C);
        b.case_ids.push_back(paired_ids_[idx]);
    }
    return b;
}

Batch DataLoader::sample_ct() {
    Batch b;
    int B = cfg_.batch_size, C = cfg_.augment.crop_size;
    b.input = Tensor(B, 1, C, C);
    for (int i = 0; i < B; ++i) {
        int idx = static_cast<int>(rng_.uniform_int(0, static_cast<std::uint64_t>(ct_.size()) - 1));
        AugmentDraw d = draw_augment(rng_, cfg_.augment, ct_[idx].h());
        Tensor ct = apply_augment(ct_[idx], d);
        std::copy(ct.data.begin(), ct.data.end(),
                  b.input.data.begin() + static_cast<std::ptrdiff_t>(i) * C * C);
        b.case_ids.push_back(ct_ids_[idx]);
    }
    return b;
}

MixedBatch DataLoader::next() {
    if (!has_next()) throw_invalid_argument("loader: epoch exhausted; call start_epoch first");
    MixedBatch mb;
    mb.iteration = iter_++;
    if (cfg_.regime != LoaderRegime::ct_only) mb.paired = sample_paired();
    if (cfg_.regime != LoaderRegime::paired_only) mb.ct = sample_ct();
    return mb;
}

DataLoader make_loader(const DatasetManifest& manifest, const LoaderConfig& cfg) {
    return DataLoader(manifest, cfg);
}

} // namespace mrct

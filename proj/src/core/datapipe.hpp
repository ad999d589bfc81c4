#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/phantom.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace mrct {

// Geometric augmentation: horizontal flip, isotropic zoom, pad, random crop.
// One draw is applied identically to every image/mask belonging to a case so
// paired slices stay aligned.
struct AugmentConfig {
    bool enabled = true;
    double hflip_prob = 0.5;
    double zoom_min = 0.6;
    double zoom_max = 1.4;
    int crop_size = 128;
};

struct AugmentDraw {
    bool flip = false;
    double zoom = 1.0;
    int src_size = 0;
    int zoomed_size = 0;
    int padded_size = 0;
    int crop_size = 0;
    int off_x = 0;
    int off_y = 0;
};

// Consumes a fixed number of rng draws regardless of outcome.
AugmentDraw draw_augment(Rng& rng, const AugmentConfig& cfg, int src_size);
AugmentDraw identity_augment(int src_size, int crop_size);

// Images resample bilinearly and pad with -1 (air); masks use nearest
// neighbour and pad with the background label.
Tensor apply_augment(const Tensor& image, const AugmentDraw& d);
LabelMap apply_augment(const LabelMap& mask, const AugmentDraw& d);

enum class LoaderRegime { paired_only, ct_only, mixed };

struct Batch {
    Tensor input;                      // paired: MR, ct: CT
    Tensor target;                     // paired: MRCAT, ct: unused (b == 0)
    std::vector<std::string> case_ids; // one per batch row of `input`
    bool empty() const { return input.b() == 0; }
};

// One training step's worth of data. Regimes that do not use a stream leave
// its batch empty.
struct MixedBatch {
    Batch paired;
    Batch ct;
    int iteration = 0;
};

struct LoaderConfig {
    LoaderRegime regime = LoaderRegime::mixed;
    std::string split = "train";
    int batch_size = 16;
    int iterations_per_epoch = 200;
    std::uint64_t seed = 1;
    AugmentConfig augment;
};

// Samples cases with replacement; an epoch is a fixed iteration budget, not a
// permutation pass. start_epoch(e) derives an independent stream per epoch so
// a resumed run replays the identical batches.
class DataLoader {
public:
    DataLoader(const DatasetManifest& manifest, const LoaderConfig& cfg);

    void start_epoch(int epoch);
    bool has_next() const { return iter_ < cfg_.iterations_per_epoch; }
    MixedBatch next();

    // mid-epoch resume support
    std::uint64_t rng_state() const { return rng_.state(); }
    void set_rng_state(std::uint64_t s) { rng_.set_state(s); }
    int iteration() const { return iter_; }
    void set_iteration(int it) { iter_ = it; }

    int iterations_per_epoch() const { return cfg_.iterations_per_epoch; }
    int n_paired_cases() const { return static_cast<int>(paired_mr_.size()); }
    int n_ct_cases() const { return static_cast<int>(ct_.size()); }
    const LoaderConfig& config() const { return cfg_; }

private:
    Batch sample_paired();
    Batch sample_ct();

    LoaderConfig cfg_;
    std::vector<Tensor> paired_mr_, paired_mrcat_;
    std::vector<std::string> paired_ids_;
    std::vector<Tensor> ct_;
    std::vector<std::string> ct_ids_;
    Rng rng_;
    int iter_ = 0;
};

DataLoader make_loader(const DatasetManifest& manifest, const LoaderConfig& cfg);

} // namespace mrct

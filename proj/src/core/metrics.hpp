#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core/nn.hpp"
#include "core/phantom.hpp"

namespace mrct {

// Frozen, seeded random-conv embedding. Absolute FID/KID values under it are
// only meaningful relative to each other (orderings), never against numbers
// computed with other embeddings. `weights_file` optionally loads external
// weights (flat 1xN f32 npy; layout documented in the README).
struct EmbeddingSpec {
    std::uint64_t seed = 17;
    int dim = 64;
    std::optional<std::filesystem::path> weights_file;
};

struct FeatureSet {
    Eigen::MatrixXd features; // one row per image
    std::string extractor_id;
    std::string source; // real | translated
};

// conv(1->8,k3,s2) ReLU, conv(8->16,k3,s2) ReLU, conv(16->32,k3,s2) ReLU,
// 4x4 average pool, flatten(512), linear to `dim`. He-scaled weights, zero
// biases, everything drawn from one derived stream.
class FeatureExtractor {
public:
    explicit FeatureExtractor(const EmbeddingSpec& spec);
    Eigen::VectorXd extract(const SliceImage& image);
    const std::string& id() const { return id_; }
    int dim() const { return dim_; }
    std::size_t weight_count() const;

private:
    int dim_;
    std::string id_;
    Conv2d c1_, c2_, c3_;
    Eigen::MatrixXd lin_w_; // dim x 512
    Eigen::VectorXd lin_b_;
};

FeatureSet extract_features(const std::vector<SliceImage>& images, const EmbeddingSpec& spec,
                            const std::string& source = "real");

struct MomentStats {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma; // sample covariance plus jitter
};
MomentStats moment_stats(const FeatureSet& f, double jitter = 1e-6);

// Frechet distance between Gaussian moment fits; the covariance square root
// uses a symmetric eigendecomposition with 1e-6 diagonal jitter, and small
// negative results (within -1e-6) clamp to zero.
double fid(const FeatureSet& a, const FeatureSet& b);

// Unbiased squared MMD with kernel (x.y/d + 1)^3, averaged over disjoint
// row blocks of size block_size (remainders dropped, rows taken in order).
double kid(const FeatureSet& a, const FeatureSet& b, int block_size = 100);

// 2|A∩B| / (|A|+|B|) over pixels carrying `label`; 1.0 when both sides empty.
double dice(const LabelMap& a, const LabelMap& b, int label);

struct HuDifResult {
    double value = 0;                // mean over included labels
    std::map<int, double> per_label; // |population mean HU difference|
    std::vector<int> excluded;       // labels missing from all cases on a side
};

// Population-level per-label mean HU comparison between two segmented CT-like
// image sets. The intensity-to-HU map is affine (slope, intercept).
HuDifResult hu_dif_detail(const std::vector<std::pair<SliceImage, LabelMap>>& real_cts,
                          const std::vector<std::pair<SliceImage, LabelMap>>& trans_cts,
                          const std::vector<int>& labels, double hu_slope = kHuSlope,
                          double hu_intercept = kHuIntercept);
double hu_dif(const std::vector<std::pair<SliceImage, LabelMap>>& real_cts,
              const std::vector<std::pair<SliceImage, LabelMap>>& trans_cts,
              const std::vector<int>& labels, double hu_slope = kHuSlope,
              double hu_intercept = kHuIntercept);

struct EvalConfig {
    std::string split = "eval";
    EmbeddingSpec embedding;
    int kid_block_size = 100;
    std::vector<int> labels = {labels::body, labels::bone, labels::bladder, labels::prostate};
};

struct MetricReport {
    std::string model;
    std::string config_hash;
    std::string extractor_id;
    double fid = 0;
    double kid = 0;
    double dice_mean = 0;
    double dice_std = 0;
    std::map<int, double> dice_per_label;
    std::optional<double> hu_dif;
    std::map<int, double> hu_dif_per_label;
    std::vector<int> hu_dif_excluded;
    int n_reference = 0;
    int n_translated = 0;
    // mean L1 between translation and its paired target over the eval split;
    // absent when the eval inputs have no paired target
    std::optional<double> paired_l1;
};

// Core comparison: distribution distances between `reference` and
// `translations`, plus per-case anatomical overlap between each input's
// segmentation and its translation's segmentation.
MetricReport evaluate_sets(const std::vector<SliceImage>& reference,
                           const std::vector<SliceImage>& inputs,
                           const std::vector<SliceImage>& translations, bool with_hu,
                           const EvalConfig& cfg);

// Translates the eval split of `manifest` with the checkpoint's generator and
// scores it; writes metric_report.json, metrics.csv and the translated images
// under out_dir.
MetricReport evaluate(const std::filesystem::path& checkpoint_path, const DatasetManifest& manifest,
                      const EvalConfig& cfg, const std::filesystem::path& out_dir,
                      const std::string& config_hash = "");

// Pipeline self-check: scores the identity translator on the eval split
// (translation == input), so fid ~ 0, dice == 1 and, when CT cases exist,
// hu_dif == 0. Catches metric plumbing regressions without training anything.
MetricReport evaluate_identity(const DatasetManifest& manifest, const EvalConfig& cfg,
                               const std::filesystem::path& out_dir,
                               const std::string& config_hash = "");

void write_metric_report(const MetricReport& rep, const std::filesystem::path& json_path,
                         const std::filesystem::path& csv_path);

} // namespace mrct

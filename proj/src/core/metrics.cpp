#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "core/checkpoint.hpp"
#include "core/errors.hpp"
#include "core/hashutil.hpp"
#include "core/npy.hpp"
#include "core/objectives.hpp"
#include "core/rng.hpp"
#include "core/trainer.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace mrct {

namespace {

Rng throwaway_rng() { return Rng(0); }

void he_fill(Tensor& w, Rng& rng, int fan_in) {
    double s = std::sqrt(2.0 / fan_in);
    for (double& v : w.data) v = rng.normal(0.0, s);
}

} // namespace

FeatureExtractor::FeatureExtractor(const EmbeddingSpec& spec)
    : dim_(spec.dim),
      c1_([] { auto r = throwaway_rng(); return Conv2d(1, 8, 3, 2, 1, r); }()),
      c2_([] { auto r = throwaway_rng(); return Conv2d(8, 16, 3, 2, 1, r); }()),
      c3_([] { auto r = throwaway_rng(); return Conv2d(16, 32, 3, 2, 1, r); }()) {
    if (dim_ < 1) throw_invalid_argument("embedding: dim must be >= 1");
    lin_w_.resize(dim_, 512);
    lin_b_ = Eigen::VectorXd::Zero(dim_);

    if (spec.weights_file) {
        int rows = 0, cols = 0;
        std::vector<double> flat = npy::read_f32(*spec.weights_file, rows, cols);
        if (static_cast<std::size_t>(rows) * cols != weight_count())
            throw_invalid_argument("embedding: weight file holds " +
                                   std::to_string(static_cast<std::size_t>(rows) * cols) +
                                   " values, expected " + std::to_string(weight_count()));
        std::size_t off = 0;
        auto take = [&](double* dst, std::size_t n) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.begin() + static_cast<std::ptrdiff_t>(off + n), dst);
            off += n;
        };
        take(c1_.weight.data.data(), c1_.weight.data.size());
        take(c1_.bias.data.data(), c1_.bias.data.size());
        take(c2_.weight.data.data(), c2_.weight.data.size());
        take(c2_.bias.data.data(), c2_.bias.data.size());
        take(c3_.weight.data.data(), c3_.weight.data.size());
        take(c3_.bias.data.data(), c3_.bias.data.size());
        std::vector<double> lw(static_cast<std::size_t>(dim_) * 512);
        take(lw.data(), lw.size());
        for (int r = 0; r < dim_; ++r)
            for (int c = 0; c < 512; ++c) lin_w_(r, c) = lw[static_cast<std::size_t>(r) * 512 + c];
        std::vector<double> lb(dim_);
        take(lb.data(), lb.size());
        for (int r = 0; r < dim_; ++r) lin_b_(r) = lb[r];
        std::string bytes(reinterpret_cast<const char*>(flat.data()), flat.size() * sizeof(double));
        id_ = "rconv" + std::to_string(dim_) + "-v1-file-" + fnv1a64_hex(bytes);
        return;
    }

    Rng rng(Rng::derive(spec.seed, "rconv-v1"));
    he_fill(c1_.weight, rng, 1 * 9);
    he_fill(c2_.weight, rng, 8 * 9);
    he_fill(c3_.weight, rng, 16 * 9);
    for (int r = 0; r < dim_; ++r)
        for (int c = 0; c < 512; ++c) lin_w_(r, c) = rng.normal(0.0, std::sqrt(2.0 / 512.0));
    id_ = "rconv" + std::to_string(dim_) + "-v1-seed" + std::to_string(spec.seed);
}

std::size_t FeatureExtractor::weight_count() const {
    return c1_.weight.data.size() + c1_.bias.data.size() + c2_.weight.data.size() +
           c2_.bias.data.size() + c3_.weight.data.size() + c3_.bias.data.size() +
           static_cast<std::size_t>(dim_) * 512 + dim_;
}

Eigen::VectorXd FeatureExtractor::extract(const SliceImage& image) {
    if (image.channels() != 1) throw_invalid_argument("embedding: expects single-channel images");
    if (image.height() < 8 || image.width() < 8)
        throw_invalid_argument("embedding: image too small: " + image.pixels.shape_str());
    auto relu = [](Tensor& t) {
        for (double& v : t.data)
            if (v < 0) v = 0;
    };
    Tensor a = c1_.forward(image.pixels);
    relu(a);
    a = c2_.forward(a);
    relu(a);
    a = c3_.forward(a);
    relu(a);

    // average pool each channel onto a fixed 4x4 grid
    Eigen::VectorXd pooled(512);
    int H = a.h(), W = a.w();
    for (int c = 0; c < 32; ++c)
        for (int gy = 0; gy < 4; ++gy)
            for (int gx = 0; gx < 4; ++gx) {
                int y0 = gy * H / 4, y1 = (gy + 1) * H / 4;
                int x0 = gx * W / 4, x1 = (gx + 1) * W / 4;
                double s = 0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) s += a.at(0, c, y, x);
                pooled((c * 4 + gy) * 4 + gx) = s / std::max(1, (y1 - y0) * (x1 - x0));
            }
    return lin_w_ * pooled + lin_b_;
}

FeatureSet extract_features(const std::vector<SliceImage>& images, const EmbeddingSpec& spec,
                            const std::string& source) {
    if (images.size() < 2) throw_invalid_argument("extract_features: need at least 2 images");
    FeatureExtractor ex(spec);
    FeatureSet fs;
    fs.extractor_id = ex.id();
    fs.source = source;
    fs.features.resize(static_cast<Eigen::Index>(images.size()), ex.dim());
    for (std::size_t i = 0; i < images.size(); ++i)
        fs.features.row(static_cast<Eigen::Index>(i)) = ex.extract(images[i]).transpose();
    if (!fs.features.allFinite()) throw_numeric_error("extract_features: non-finite features");
    return fs;
}

MomentStats moment_stats(const FeatureSet& f, double jitter) {
    Eigen::Index n = f.features.rows(), d = f.features.cols();
    if (n < 2) throw_invalid_argument("moment_stats: need at least 2 rows");
    MomentStats m;
    m.mu = f.features.colwise().mean();
    Eigen::MatrixXd centered = f.features.rowwise() - m.mu.transpose();
    m.sigma = centered.transpose() * centered / static_cast<double>(n - 1);
    m.sigma = 0.5 * (m.sigma + m.sigma.transpose());
    m.sigma += jitter * Eigen::MatrixXd::Identity(d, d);
    return m;
}

namespace {

void check_compatible(const FeatureSet& a, const FeatureSet& b, const char* what) {
    if (a.extractor_id != b.extractor_id)
        throw_invalid_argument(std::string(what) + ": feature sets from different extractors (" +
                               a.extractor_id + " vs " + b.extractor_id + ")");
    if (a.features.cols() != b.features.cols())
        throw_invalid_argument(std::string(what) + ": feature dimensions differ");
}

// symmetric PSD square root, eigenvalues clamped at zero
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    if (es.info() != Eigen::Success) throw_numeric_error("fid: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace

double fid(const FeatureSet& a, const FeatureSet& b) {
    check_compatible(a, b, "fid");
    MomentStats ma = moment_stats(a), mb = moment_stats(b);

    Eigen::MatrixXd sa_half = psd_sqrt(ma.sigma);
    Eigen::MatrixXd m = sa_half * mb.sigma * sa_half;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw_numeric_error("fid: eigendecomposition failed");
    double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double val = (ma.mu - mb.mu).squaredNorm() + ma.sigma.trace() + mb.sigma.trace() - 2.0 * tr_sqrt;
    if (val < -1e-6) throw_numeric_error("fid: distance " + std::to_string(val) + " below clamp window");
    return val < 0.0 ? 0.0 : val;
}

double kid(const FeatureSet& a, const FeatureSet& b, int block_size) {
    check_compatible(a, b, "kid");
    Eigen::Index na = a.features.rows(), nb = b.features.rows();
    if (na < 2 || nb < 2) throw_invalid_argument("kid: need at least 2 rows per set");
    if (block_size < 2) throw_invalid_argument("kid: block_size must be >= 2");
    double d = static_cast<double>(a.features.cols());
    Eigen::Index n = std::min(na, nb);
    Eigen::Index m = std::min<Eigen::Index>(block_size, n);
    Eigen::Index n_blocks = n / m;

    auto kernel = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) -> Eigen::MatrixXd {
        Eigen::MatrixXd g = (x * y.transpose()) / d;
        return (g.array() + 1.0).cube().matrix();
    };

    double acc = 0;
    for (Eigen::Index blk = 0; blk < n_blocks; ++blk) {
        Eigen::MatrixXd x = a.features.middleRows(blk * m, m);
        Eigen::MatrixXd y = b.features.middleRows(blk * m, m);
        Eigen::MatrixXd kxx = kernel(x, x), kyy = kernel(y, y), kxy = kernel(x, y);
        double mm = static_cast<double>(m);
        double sxx = (kxx.sum() - kxx.trace()) / (mm * (mm - 1.0));
        double syy = (kyy.sum() - kyy.trace()) / (mm * (mm - 1.0));
        double sxy = kxy.sum() / (mm * mm);
        acc += sxx + syy - 2.0 * sxy;
    }
    return acc / static_cast<double>(n_blocks);
}

double dice(const LabelMap& a, const LabelMap& b, int label) {
    if (a.h != b.h || a.w != b.w) throw_invalid_argument("dice: mask shapes differ");
    std::size_t ca = 0, cb = 0, inter = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        bool ia = a.values[i] == label, ib = b.values[i] == label;
        ca += ia;
        cb += ib;
        inter += ia && ib;
    }
    if (ca + cb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

HuDifResult hu_dif_detail(const std::vector<std::pair<SliceImage, LabelMap>>& real_cts,
                          const std::vector<std::pair<SliceImage, LabelMap>>& trans_cts,
                          const std::vector<int>& labels, double hu_slope, double hu_intercept) {
    if (real_cts.empty() || trans_cts.empty()) throw_invalid_argument("hu_dif: empty image list");
    if (labels.empty()) throw_invalid_argument("hu_dif: empty label set");

    auto label_mean = [&](const std::vector<std::pair<SliceImage, LabelMap>>& set, int label,
                          bool& any) {
        double sum = 0;
        std::size_t n = 0;
        for (const auto& [img, mask] : set) {
            if (img.height() != mask.h || img.width() != mask.w)
                throw_invalid_argument("hu_dif: image/mask shape mismatch");
            for (int y = 0; y < mask.h; ++y)
                for (int x = 0; x < mask.w; ++x)
                    if (mask.at(y, x) == label) {
                        sum += hu_slope * img.pixels.at(0, 0, y, x) + hu_intercept;
                        ++n;
                    }
        }
        any = n > 0;
        return n > 0 ? sum / static_cast<double>(n) : 0.0;
    };

    HuDifResult out;
    double acc = 0;
    int included = 0;
    for (int label : labels) {
        bool any_r = false, any_t = false;
        double mr = label_mean(real_cts, label, any_r);
        double mt = label_mean(trans_cts, label, any_t);
        if (!any_r || !any_t) {
            out.excluded.push_back(label);
            continue;
        }
        out.per_label[label] = std::abs(mr - mt);
        acc += out.per_label[label];
        ++included;
    }
    if (included == 0) throw_invalid_argument("hu_dif: no label present on both sides");
    out.value = acc / included;
    return out;
}

double hu_dif(const std::vector<std::pair<SliceImage, LabelMap>>& real_cts,
              const std::vector<std::pair<SliceImage, LabelMap>>& trans_cts,
              const std::vector<int>& labels, double hu_slope, double hu_intercept) {
    return hu_dif_detail(real_cts, trans_cts, labels, hu_slope, hu_intercept).value;
}

MetricReport evaluate_sets(const std::vector<SliceImage>& reference,
                           const std::vector<SliceImage>& inputs,
                           const std::vector<SliceImage>& translations, bool with_hu,
                           const EvalConfig& cfg) {
    if (inputs.size() != translations.size())
        throw_invalid_argument("evaluate: inputs and translations differ in count");
    if (inputs.empty()) throw_invalid_argument("evaluate: empty eval set");

    MetricReport rep;
    rep.n_reference = static_cast<int>(reference.size());
    rep.n_translated = static_cast<int>(translations.size());

    FeatureSet fr = extract_features(reference, cfg.embedding, "real");
    FeatureSet ft = extract_features(translations, cfg.embedding, "translated");
    rep.extractor_id = fr.extractor_id;
    rep.fid = fid(fr, ft);
    rep.kid = kid(fr, ft, cfg.kid_block_size);

    std::vector<LabelMap> in_masks, tr_masks;
    in_masks.reserve(inputs.size());
    tr_masks.reserve(translations.size());
    for (const SliceImage& s : inputs) in_masks.push_back(segment_rule_based(s));
    for (const SliceImage& s : translations) tr_masks.push_back(segment_rule_based(s));

    std::vector<double> dices;
    std::map<int, std::pair<double, int>> per_label_acc;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (int label : cfg.labels) {
            double d = dice(in_masks[i], tr_masks[i], label);
            dices.push_back(d);
            per_label_acc[label].first += d;
            per_label_acc[label].second += 1;
        }
    double mean = 0;
    for (double d : dices) mean += d;
    mean /= static_cast<double>(dices.size());
    double var = 0;
    for (double d : dices) var += (d - mean) * (d - mean);
    rep.dice_mean = mean;
    rep.dice_std = dices.size() > 1 ? std::sqrt(var / static_cast<double>(dices.size() - 1)) : 0.0;
    for (auto& [label, acc] : per_label_acc) rep.dice_per_label[label] = acc.first / acc.second;

    if (with_hu) {
        std::vector<std::pair<SliceImage, LabelMap>> real_set, trans_set;
        for (const SliceImage& s : reference) real_set.emplace_back(s, segment_rule_based(s));
        for (std::size_t i = 0; i < translations.size(); ++i)
            trans_set.emplace_back(translations[i], tr_masks[i]);
        HuDifResult h = hu_dif_detail(real_set, trans_set, cfg.labels);
        rep.hu_dif = h.value;
        rep.hu_dif_per_label = h.per_label;
        rep.hu_dif_excluded = h.excluded;
    }
    return rep;
}

MetricReport evaluate(const fs::path& checkpoint_path, const DatasetManifest& manifest,
                      const EvalConfig& cfg, const fs::path& out_dir,
                      const std::string& config_hash) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    auto g = generator_from_checkpoint(ckpt);

    std::vector<SliceImage> reference, inputs;
    std::vector<const CaseEntry*> input_cases;
    for (const CaseEntry& e : manifest.cases) {
        if (e.split != cfg.split) continue;
        switch (ckpt.model) {
            case ModelKind::pixmc:
                if (e.paired) {
                    inputs.push_back(load_image(manifest, e, Modality::MR));
                    input_cases.push_back(&e);
                } else {
                    reference.push_back(load_image(manifest, e, Modality::CT));
                }
                break;
            case ModelKind::pixcm:
                if (e.paired) {
                    reference.push_back(load_image(manifest, e, Modality::MR));
                } else {
                    inputs.push_back(load_image(manifest, e, Modality::CT));
                    input_cases.push_back(&e);
                }
                break;
            case ModelKind::baseline_pix2pix:
                if (e.paired) {
                    inputs.push_back(load_image(manifest, e, Modality::MRCAT));
                    input_cases.push_back(&e);
                    reference.push_back(load_image(manifest, e, Modality::MR));
                }
                break;
        }
    }
    if (inputs.empty()) throw_invalid_argument("evaluate: eval split has no inputs for this model");

    std::vector<SliceImage> translations;
    translations.reserve(inputs.size());
    for (const SliceImage& img : inputs) {
        Modality out_mod = translate_input_modality_check(ckpt.model, img.modality);
        SliceImage t;
        t.pixels = g->forward(img.pixels);
        t.modality = out_mod;
        t.case_id = img.case_id;
        translations.push_back(std::move(t));
    }

    MetricReport rep = evaluate_sets(reference, inputs, translations,
                                     ckpt.model == ModelKind::pixmc, cfg);
    rep.model = model_kind_name(ckpt.model);
    rep.config_hash = config_hash;

    // translation-vs-paired-target alignment, when targets exist
    if (ckpt.model != ModelKind::pixcm) {
        Modality target_mod = ckpt.model == ModelKind::pixmc ? Modality::MRCAT : Modality::MR;
        double acc = 0;
        for (std::size_t i = 0; i < translations.size(); ++i) {
            SliceImage target = load_image(manifest, *input_cases[i], target_mod);
            acc += l1_aux(target.pixels, translations[i].pixels);
        }
        rep.paired_l1 = acc / static_cast<double>(translations.size());
    }

    std::error_code ec;
    fs::create_directories(out_dir / "translations", ec);
    if (ec || !fs::is_directory(out_dir / "translations"))
        throw_io_error("evaluate: cannot create " + out_dir.string());
    for (const SliceImage& t : translations) {
        std::string name = t.case_id + "_" + modality_name(t.modality) + ".npy";
        npy::write_f32(out_dir / "translations" / name, t.pixels.data, t.height(), t.width());
    }
    write_metric_report(rep, out_dir / "metric_report.json", out_dir / "metrics.csv");
    return rep;
}

MetricReport evaluate_identity(const DatasetManifest& manifest, const EvalConfig& cfg,
                               const fs::path& out_dir, const std::string& config_hash) {
    std::vector<SliceImage> images;
    bool have_ct = false;
    for (const CaseEntry& e : manifest.cases) {
        if (e.split != cfg.split || e.paired) continue;
        images.push_back(load_image(manifest, e, Modality::CT));
        have_ct = true;
    }
    if (!have_ct) // CT-less dataset: fall back to the paired MRs
        for (const CaseEntry& e : manifest.cases) {
            if (e.split != cfg.split || !e.paired) continue;
            images.push_back(load_image(manifest, e, Modality::MR));
        }
    if (images.size() < 2) throw_invalid_argument("evaluate: eval split too small for a self-check");

    MetricReport rep = evaluate_sets(images, images, images, have_ct, cfg);
    rep.model = "identity";
    rep.config_hash = config_hash;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir))
        throw_io_error("evaluate: cannot create " + out_dir.string());
    write_metric_report(rep, out_dir / "metric_report.json", out_dir / "metrics.csv");
    return rep;
}

void write_metric_report(const MetricReport& rep, const fs::path& json_path,
                         const fs::path& csv_path) {
    json j;
    j["model"] = rep.model;
    j["config_hash"] = rep.config_hash;
    j["extractor_id"] = rep.extractor_id;
    j["fid"] = rep.fid;
    j["kid"] = rep.kid;
    j["dice_mean"] = rep.dice_mean;
    j["dice_std"] = rep.dice_std;
    json dpl;
    for (auto& [label, v] : rep.dice_per_label) dpl[std::to_string(label)] = v;
    j["dice_per_label"] = dpl;
    if (rep.hu_dif) {
        j["hu_dif"] = *rep.hu_dif;
        json hpl;
        for (auto& [label, v] : rep.hu_dif_per_label) hpl[std::to_string(label)] = v;
        j["hu_dif_per_label"] = hpl;
        j["hu_dif_excluded"] = rep.hu_dif_excluded;
    } else {
        j["hu_dif"] = nullptr;
    }
    if (rep.paired_l1) j["paired_l1"] = *rep.paired_l1;
    j["n_reference"] = rep.n_reference;
    j["n_translated"] = rep.n_translated;
    std::ofstream jf(json_path, std::ios::trunc);
    if (!jf) throw_io_error("cannot write " + json_path.string());
    jf << j.dump(2) << "\n";

    std::ofstream cf(csv_path, std::ios::trunc);
    if (!cf) throw_io_error("cannot write " + csv_path.string());
    char line[128];
    cf << "metric,value\n";
    auto row = [&](const char* name, double v) {
        std::snprintf(line, sizeof line, "%s,%.17g\n", name, v);
        cf << line;
    };
    row("fid", rep.fid);
    row("kid", rep.kid);
    row("dice_mean", rep.dice_mean);
    row("dice_std", rep.dice_std);
    for (auto& [label, v] : rep.dice_per_label)
        row(("dice_label_" + std::to_string(label)).c_str(), v);
    if (rep.hu_dif) row("hu_dif", *rep.hu_dif);
    if (rep.paired_l1) row("paired_l1", *rep.paired_l1);
}

} // namespace mrct

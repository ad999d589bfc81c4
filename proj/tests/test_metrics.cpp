#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/metrics.hpp"
#include "core/npy.hpp"
#include "core/rng.hpp"
#include "core/trainer.hpp"
#include "support.hpp"

using namespace mrct;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

FeatureSet feature_set(Eigen::MatrixXd rows, const std::string& id = "test-embed") {
    FeatureSet f;
    f.features = std::move(rows);
    f.extractor_id = id;
    return f;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SliceImage const_image(int size, double value, Modality mod = Modality::CT,
                       const std::string& id = "c") {
    SliceImage s;
    s.pixels = Tensor(1, 1, size, size);
    for (double& v : s.pixels.data) v = value;
    s.modality = mod;
    s.case_id = id;
    return s;
}

} // namespace

TEST_CASE("frechet distance matches the closed form for sampled gaussians") {
    // Two diagonal 2-d Gaussians, 1e5 samples each; the estimate from sample
    // moments must land within 0.05 of the analytic distance.
    const int n = 100000;
    Eigen::Vector2d mu1(0.0, 0.0), mu2(1.0, -0.5);
    Eigen::Vector2d s1(1.0, 2.0), s2(0.5, 1.5); // variances
    Rng rng(2024);
    Eigen::MatrixXd a(n, 2), b(n, 2);
    for (int i = 0; i < n; ++i) {
        a(i, 0) = rng.normal(mu1(0), std::sqrt(s1(0)));
        a(i, 1) = rng.normal(mu1(1), std::sqrt(s1(1)));
        b(i, 0) = rng.normal(mu2(0), std::sqrt(s2(0)));
        b(i, 1) = rng.normal(mu2(1), std::sqrt(s2(1)));
    }
    double analytic = (mu1 - mu2).squaredNorm();
    for (int k = 0; k < 2; ++k)
        analytic += s1(k) + s2(k) - 2.0 * std::sqrt(s1(k) * s2(k));

    double est = fid(feature_set(a), feature_set(b));
    CHECK(std::abs(est - analytic) <= 0.05);
}

TEST_CASE("frechet distance is exact on constructed moments") {
    // Rows engineered so the sample mean and covariance are known in closed
    // form: set A has rows (+-a,0),(0,+-b) -> cov diag(2a^2/3, 2b^2/3); set B
    // is the four sign combinations of (c,d) shifted by s -> mean s, cov
    // diag(4c^2/3, 4d^2/3). Both diagonal, so the cross term is elementwise.
    const double av = 0.75, bv = 1.25, cv = 0.5, dv = 1.0;
    const double sx = 0.25, sy = -1.5, jitter = 1e-6;
    Eigen::MatrixXd a(4, 2), b(4, 2);
    a << av, 0, -av, 0, 0, bv, 0, -bv;
    b << cv + sx, dv + sy, -cv + sx, dv + sy, cv + sx, -dv + sy, -cv + sx, -dv + sy;

    double va1 = 2.0 * av * av / 3.0 + jitter, va2 = 2.0 * bv * bv / 3.0 + jitter;
    double vb1 = 4.0 * cv * cv / 3.0 + jitter, vb2 = 4.0 * dv * dv / 3.0 + jitter;
    double want = sx * sx + sy * sy + (va1 + vb1 - 2.0 * std::sqrt(va1 * vb1)) +
                  (va2 + vb2 - 2.0 * std::sqrt(va2 * vb2));

    CHECK(fid(feature_set(a), feature_set(b)) == doctest::Approx(want).epsilon(1e-8));
    CHECK(fid(feature_set(b), feature_set(a)) == doctest::Approx(want).epsilon(1e-8));
}

TEST_CASE("frechet distance of a set against itself is zero") {
    Rng rng(9);
    Eigen::MatrixXd a(6, 3);
    for (int i = 0; i < a.size(); ++i) a(i / 3, i % 3) = rng.normal();
    FeatureSet f = feature_set(a);
    CHECK(fid(f, f) == 0.0);
}

TEST_CASE("kernel distance matches a scalar double-loop oracle") {
    // One block of three rows; the oracle evaluates the unbiased estimator
    // with explicit loops and the cubic kernel written out longhand.
    Eigen::MatrixXd a(3, 4), b(3, 4);
    a << 0.1, -0.2, 0.3, 0.4, 1.0, 0.5, -0.5, 0.25, -1.0, 0.75, 0.2, -0.3;
    b << 0.6, -0.1, 0.05, 0.8, -0.4, 0.9, 1.1, -0.7, 0.3, 0.3, -0.2, 0.1;
    const double d = 4.0;
    auto k = [&](const Eigen::RowVector4d& x, const Eigen::RowVector4d& y) {
        double g = x.dot(y) / d + 1.0;
        return g * g * g;
    };
    double sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (i != j) {
                sxx += k(a.row(i), a.row(j));
                syy += k(b.row(i), b.row(j));
            }
            sxy += k(a.row(i), b.row(j));
        }
    double want = sxx / 6.0 + syy / 6.0 - 2.0 * sxy / 9.0;

    CHECK(kid(feature_set(a), feature_set(b), 3) == doctest::Approx(want).epsilon(1e-12));
    // any block size >= the row count collapses to the same single block
    CHECK(kid(feature_set(a), feature_set(b), 100) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("kernel distance averages disjoint in-order blocks and drops the remainder") {
    Rng rng(5);
    Eigen::MatrixXd a(7, 3), b(7, 3);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 3; ++j) {
            a(i, j) = rng.normal();
            b(i, j) = rng.normal();
        }
    // block size 3 over 7 rows: rows 0-2 and 3-5 score, row 6 is dropped
    double b1 = kid(feature_set(a.topRows(3)), feature_set(b.topRows(3)), 3);
    double b2 = kid(feature_set(a.middleRows(3, 3)), feature_set(b.middleRows(3, 3)), 3);
    double whole = kid(feature_set(a), feature_set(b), 3);
    CHECK(whole == doctest::Approx(0.5 * (b1 + b2)).epsilon(1e-12));

    // unequal set sizes: blocks are sized by the smaller set
    Eigen::MatrixXd b4 = b.topRows(4);
    double uneven = kid(feature_set(a), feature_set(b4), 100);
    double expect = kid(feature_set(a.topRows(4)), feature_set(b4), 4);
    CHECK(uneven == doctest::Approx(expect).epsilon(1e-12));

    // the unbiased estimator is legitimately non-positive on identical sets
    FeatureSet same = feature_set(a);
    CHECK(kid(same, same, 7) <= 1e-12);

    CHECK_THROWS_AS(kid(feature_set(a), feature_set(b), 1), Error);
    Eigen::MatrixXd one(1, 3);
    one.setZero();
    CHECK_THROWS_AS(kid(feature_set(one), feature_set(b), 3), Error);
}

TEST_CASE("feature sets from different extractors refuse to mix") {
    Eigen::MatrixXd a(3, 2);
    a.setZero();
    CHECK_THROWS_AS(fid(feature_set(a, "rconv64-v1-seed1"), feature_set(a, "rconv64-v1-seed2")),
                    Error);
    CHECK_THROWS_AS(kid(feature_set(a, "x"), feature_set(a, "y"), 3), Error);
}

TEST_CASE("moment fits use the sample covariance plus diagonal jitter") {
    Eigen::MatrixXd rows(3, 2);
    rows << 1.0, 2.0, 3.0, 4.0, 5.0, 9.0;
    MomentStats m = moment_stats(feature_set(rows), 1e-6);
    CHECK(m.mu(0) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(m.mu(1) == doctest::Approx(5.0).epsilon(1e-15));
    // hand-computed (n-1) covariance: var0 = 4, var1 = 13, cov01 = 7
    CHECK(m.sigma(0, 0) == doctest::Approx(4.0 + 1e-6).epsilon(1e-12));
    CHECK(m.sigma(1, 1) == doctest::Approx(13.0 + 1e-6).epsilon(1e-12));
    CHECK(m.sigma(0, 1) == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(m.sigma == m.sigma.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.sigma);
    CHECK(es.eigenvalues().minCoeff() >= 0.0);

    Eigen::MatrixXd single(1, 2);
    single.setZero();
    CHECK_THROWS_AS(moment_stats(feature_set(single)), Error);
}

TEST_CASE("overlap coefficient fixtures") {
    LabelMap a(4, 4), b(4, 4);
    // |A| = 3, |B| = 4, overlap 2 -> 2*2 / 7
    a.at(0, 0) = 1;
    a.at(0, 1) = 1;
    a.at(1, 0) = 1;
    b.at(0, 0) = 1;
    b.at(0, 1) = 1;
    b.at(2, 2) = 1;
    b.at(3, 3) = 1;
    CHECK(dice(a, b, 1) == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
    CHECK(dice(b, a, 1) == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
    CHECK(dice(a, a, 1) == 1.0);
    CHECK(dice(a, b, 2) == 1.0); // label absent on both sides
    LabelMap c(4, 4);
    c.at(3, 0) = 1;
    CHECK(dice(a, c, 1) == 0.0); // disjoint
    LabelMap wrong(3, 4);
    CHECK_THROWS_AS(dice(a, wrong, 1), Error);
}

TEST_CASE("intensity difference compares population label means and reports exclusions") {
    // Real side: label 1 at intensity 0.2 -> 200 HU, label 2 at -0.4 -> -400.
    // Translated side: label 1 at 0.25 -> 250 HU; label 2 never appears.
    SliceImage real_img = const_image(8, 0.0);
    LabelMap real_mask(8, 8);
    for (int x = 0; x < 4; ++x) {
        real_img.pixels.at(0, 0, 0, x) = 0.2;
        real_mask.at(0, x) = 1;
        real_img.pixels.at(0, 0, 1, x) = -0.4;
        real_mask.at(1, x) = 2;
    }
    SliceImage trans_img = const_image(8, 0.0);
    LabelMap trans_mask(8, 8);
    for (int x = 0; x < 2; ++x) { // fewer pixels, same population mean rules
        trans_img.pixels.at(0, 0, 5, x) = 0.25;
        trans_mask.at(5, x) = 1;
    }

    HuDifResult r = hu_dif_detail({{real_img, real_mask}}, {{trans_img, trans_mask}}, {1, 2, 3},
                                  1000.0, 0.0);
    REQUIRE(r.per_label.count(1) == 1);
    CHECK(r.per_label.at(1) == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(r.value == doctest::Approx(50.0).epsilon(1e-9)); // mean over the one included label
    CHECK(r.excluded == std::vector<int>{2, 3});

    // population pooling: two real images with different label-1 means pool
    // into one weighted mean before differencing
    SliceImage real2 = const_image(8, 0.0);
    LabelMap mask2(8, 8);
    real2.pixels.at(0, 0, 0, 0) = 0.4; // one pixel at 400 HU
    mask2.at(0, 0) = 1;
    // real pool: 4 px at 200 + 1 px at 400 -> 240; translated stays 250
    HuDifResult pooled = hu_dif_detail({{real_img, real_mask}, {real2, mask2}},
                                       {{trans_img, trans_mask}}, {1}, 1000.0, 0.0);
    CHECK(pooled.value == doctest::Approx(10.0).epsilon(1e-9));

    CHECK_THROWS_AS(hu_dif_detail({}, {{trans_img, trans_mask}}, {1}), Error);
    CHECK_THROWS_AS(
        hu_dif_detail({{real_img, real_mask}}, {{trans_img, trans_mask}}, std::vector<int>{}),
        Error);
    // nothing shared between the sides
    CHECK_THROWS_AS(hu_dif_detail({{real_img, real_mask}}, {{trans_img, trans_mask}}, {3}), Error);
    CHECK(hu_dif({{real_img, real_mask}}, {{trans_img, trans_mask}}, {1}, 1000.0, 0.0) ==
          doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("feature extractor is deterministic, seed-sensitive and loadable from file") {
    EmbeddingSpec spec;
    spec.seed = 17;
    spec.dim = 64;
    FeatureExtractor ex(spec);
    CHECK(ex.id() == "rconv64-v1-seed17");
    CHECK(ex.dim() == 64);
    // conv stacks 1->8->16->32 (3x3 kernels + biases) plus the 512->dim head
    std::size_t want = (8 * 9 + 8) + (16 * 8 * 9 + 16) + (32 * 16 * 9 + 32) + (64 * 512 + 64);
    CHECK(ex.weight_count() == want);

    SliceImage img = const_image(32, 0.3, Modality::MR, "m");
    Rng rng(3);
    for (double& v : img.pixels.data) v = rng.normal(0.0, 0.4);
    Eigen::VectorXd f1 = ex.extract(img);
    Eigen::VectorXd f2 = FeatureExtractor(spec).extract(img);
    CHECK(f1 == f2);

    EmbeddingSpec other = spec;
    other.seed = 18;
    FeatureExtractor ex2(other);
    CHECK(ex2.id() == "rconv64-v1-seed18");
    CHECK(ex2.extract(img) != f1);

    SUBCASE("external weight files swap the embedding identity") {
        fs::path dir = testsup::scratch_dir("metrics_weights");
        std::vector<double> weights(ex.weight_count());
        Rng wr(41);
        for (double& v : weights) v = wr.normal(0.0, 0.05);
        npy::write_f32(dir / "w.npy", weights, 1, static_cast<int>(weights.size()));

        EmbeddingSpec filespec = spec;
        filespec.weights_file = dir / "w.npy";
        FeatureExtractor fx(filespec);
        CHECK(fx.id().substr(0, 15) == "rconv64-v1-file");
        CHECK(fx.id() != ex.id());
        CHECK(FeatureExtractor(filespec).id() == fx.id()); // hash is stable
        CHECK(fx.extract(img) != f1);

        npy::write_f32(dir / "short.npy", std::vector<double>(100, 0.0), 1, 100);
        EmbeddingSpec badspec = spec;
        badspec.weights_file = dir / "short.npy";
        CHECK_THROWS_AS(FeatureExtractor{badspec}, Error);
    }

    SUBCASE("degenerate inputs are rejected") {
        EmbeddingSpec bad = spec;
        bad.dim = 0;
        CHECK_THROWS_AS(FeatureExtractor{bad}, Error);
        SliceImage tiny = const_image(4, 0.0);
        CHECK_THROWS_AS(ex.extract(tiny), Error);
        CHECK_THROWS_AS(extract_features({img}, spec), Error); // needs >= 2 images
        SliceImage nan_img = const_image(32, 0.0);
        nan_img.pixels.data[5] = std::numeric_limits<double>::quiet_NaN();
        bool threw = false;
        try {
            extract_features({nan_img, nan_img}, spec);
        } catch (const Error& e) {
            threw = true;
            CHECK(e.code() == ErrorCode::numeric_error);
        }
        CHECK(threw);
    }
}

TEST_CASE("identity translation scores perfectly") {
    fs::path dir = testsup::scratch_dir("metrics_identity");
    DatasetManifest m = testsup::tiny_dataset(dir / "data");

    std::vector<SliceImage> cts;
    for (const CaseEntry& e : m.cases)
        if (!e.paired) cts.push_back(load_image(m, e, Modality::CT));
    REQUIRE(cts.size() >= 2);

    EvalConfig cfg;
    MetricReport rep = evaluate_sets(cts, cts, cts, true, cfg);
    // equal moments: anything left is eigendecomposition residue, bounded by
    // the same 1e-6 window the implementation uses for its negative clamp
    CHECK(rep.fid >= 0.0);
    CHECK(rep.fid <= 1e-6);
    CHECK(rep.dice_mean == 1.0);
    CHECK(rep.dice_std == 0.0);
    for (auto& [label, v] : rep.dice_per_label) CHECK(v == 1.0);
    REQUIRE(rep.hu_dif.has_value());
    CHECK(*rep.hu_dif == 0.0);
    CHECK(rep.n_reference == static_cast<int>(cts.size()));
    CHECK(rep.n_translated == static_cast<int>(cts.size()));
    CHECK(std::isfinite(rep.kid)); // unbiased estimator may dip below zero here
}

TEST_CASE("trained-model evaluation writes reports and translations") {
    fs::path dir = testsup::scratch_dir("metrics_evaluate");
    DatasetManifest m = testsup::tiny_dataset(dir / "data", 12, 10);
    TrainConfig cfg = testsup::tiny_train_config(ModelKind::pixmc);
    cfg.epochs = 1;
    train(cfg, m, dir / "train");

    EvalConfig ec;
    MetricReport rep =
        evaluate(dir / "train" / "checkpoint.ckpt", m, ec, dir / "eval", "deadbeef");
    CHECK(rep.model == "pixmc");
    CHECK(rep.config_hash == "deadbeef");
    CHECK(rep.extractor_id == "rconv64-v1-seed17");
    CHECK(std::isfinite(rep.fid));
    CHECK(rep.fid >= 0.0);
    CHECK(std::isfinite(rep.kid));
    CHECK(rep.dice_mean >= 0.0);
    CHECK(rep.dice_mean <= 1.0);
    REQUIRE(rep.hu_dif.has_value()); // mr-to-ct always scores intensity drift
    REQUIRE(rep.paired_l1.has_value());
    CHECK(*rep.paired_l1 >= 0.0);

    REQUIRE(fs::exists(dir / "eval" / "metric_report.json"));
    REQUIRE(fs::exists(dir / "eval" / "metrics.csv"));
    json j = json::parse(slurp(dir / "eval" / "metric_report.json"));
    CHECK(j["model"] == "pixmc");
    CHECK(j["fid"].get<double>() == rep.fid);
    CHECK(j["n_translated"].get<int>() == rep.n_translated);

    // one translated image per eval-split paired case
    int eval_paired = 0;
    for (const CaseEntry& e : m.cases)
        if (e.paired && e.split == "eval") ++eval_paired;
    CHECK(rep.n_translated == eval_paired);
    int written = 0;
    for (auto& entry : fs::directory_iterator(dir / "eval" / "translations")) {
        CHECK(entry.path().extension() == ".npy");
        ++written;
    }
    CHECK(written == eval_paired);

    std::string csv = slurp(dir / "eval" / "metrics.csv");
    CHECK(csv.find("metric,value") == 0);
    CHECK(csv.find("\nfid,") != std::string::npos);
    CHECK(csv.find("\nkid,") != std::string::npos);
    CHECK(csv.find("\ndice_mean,") != std::string::npos);
    CHECK(csv.find("\nhu_dif,") != std::string::npos);
    CHECK(csv.find("\npaired_l1,") != std::string::npos);

    // missing checkpoint surfaces as an io error
    CHECK_THROWS_AS(evaluate(dir / "nope.ckpt", m, ec, dir / "eval2"), Error);
}

TEST_CASE("pipeline self-check uses the identity translator end to end") {
    fs::path dir = testsup::scratch_dir("metrics_selfcheck");
    DatasetManifest m = testsup::tiny_dataset(dir / "data", 12, 10);
    EvalConfig ec;
    MetricReport rep = evaluate_identity(m, ec, dir / "out");
    CHECK(rep.model == "identity");
    CHECK(rep.fid >= 0.0);
    CHECK(rep.fid <= 1e-6);
    CHECK(rep.dice_mean == 1.0);
    REQUIRE(rep.hu_dif.has_value());
    CHECK(*rep.hu_dif == 0.0);
    CHECK(fs::exists(dir / "out" / "metric_report.json"));
}

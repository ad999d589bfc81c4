#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "core/errors.hpp"
#include "core/metrics.hpp"
#include "core/npy.hpp"
#include "core/phantom.hpp"
#include "support.hpp"

using namespace mrct;
namespace fs = std::filesystem;

namespace {

std::string file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("geometry sampling is deterministic and valid across many seeds") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        PhantomGeometry g = sample_geometry(seed, 64);
        PhantomGeometry h = sample_geometry(seed, 64);
        CHECK(g == h);
        CHECK_NOTHROW(validate_geometry(g));
        CHECK(g.couch_height >= 2);
    }
    PhantomGeometry a = sample_geometry(1, 64);
    PhantomGeometry b = sample_geometry(2, 64);
    CHECK(a != b);
}

TEST_CASE("geometry sampling rejects sub-minimum resolutions") {
    CHECK_THROWS_AS(sample_geometry(1, 16), Error);
}

TEST_CASE("air cavity presence follows the probability knob") {
    int with_air = 0;
    const int n = 400;
    for (std::uint64_t seed = 0; seed < n; ++seed)
        if (sample_geometry(seed, 64, 0.5).air_cavity) ++with_air;
    CHECK(with_air > n / 2 - 60);
    CHECK(with_air < n / 2 + 60);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        CHECK_FALSE(sample_geometry(seed, 64, 0.0).air_cavity.has_value());
        CHECK(sample_geometry(seed, 64, 1.0).air_cavity.has_value());
    }
}

TEST_CASE("air cavity probability does not perturb the rest of the geometry") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        PhantomGeometry with = sample_geometry(seed, 64, 1.0);
        PhantomGeometry without = sample_geometry(seed, 64, 0.0);
        CHECK(with.body == without.body);
        CHECK(with.femur_left == without.femur_left);
        CHECK(with.bladder == without.bladder);
        CHECK(with.prostate == without.prostate);
        CHECK(with.couch_height == without.couch_height);
    }
}

TEST_CASE("MRCAT is a pure function of geometry with exactly five levels") {
    PhantomGeometry g = sample_geometry(3, 64);
    RenderResult a = render(g, Modality::MRCAT, 100);
    RenderResult b = render(g, Modality::MRCAT, 999); // noise seed must not matter
    CHECK(a.image.pixels.data == b.image.pixels.data);

    std::set<double> levels(a.image.pixels.data.begin(), a.image.pixels.data.end());
    CHECK(levels.size() <= 5);
    CHECK(levels.count(-1.0) == 1); // background stays at air level
}

TEST_CASE("renders are deterministic in the noise seed and bounded") {
    PhantomGeometry g = sample_geometry(4, 64);
    for (Modality m : {Modality::MR, Modality::CT}) {
        RenderResult a = render(g, m, 42);
        RenderResult b = render(g, m, 42);
        RenderResult c = render(g, m, 43);
        CHECK(a.image.pixels.data == b.image.pixels.data);
        CHECK(a.image.pixels.data != c.image.pixels.data);
        for (double v : a.image.pixels.data) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("couch and air cavity are CT-only features") {
    PhantomGeometry g = sample_geometry(5, 64, 1.0);
    REQUIRE(g.air_cavity.has_value());
    RenderResult ct = render(g, Modality::CT, 7);
    RenderResult mr = render(g, Modality::MR, 7);
    RenderResult mrcat = render(g, Modality::MRCAT, 7);

    auto count_label = [](const LabelMap& m, int label) {
        int n = 0;
        for (auto v : m.values) n += v == label;
        return n;
    };
    CHECK(count_label(ct.mask, labels::couch) > 0);
    CHECK(count_label(ct.mask, labels::air_cavity) > 0);
    CHECK(count_label(mr.mask, labels::couch) == 0);
    CHECK(count_label(mr.mask, labels::air_cavity) == 0);
    CHECK(count_label(mrcat.mask, labels::couch) == 0);
    CHECK(count_label(mrcat.mask, labels::air_cavity) == 0);
}

TEST_CASE("rule-based segmentation recovers the ground-truth masks") {
    // The generator promises masks that the rule-based segmenter can find
    // again; anatomy overlap must be high for every organ, both families.
    double worst = 1.0;
    for (std::uint64_t seed = 10; seed < 18; ++seed) {
        PhantomGeometry g = sample_geometry(seed, 64, seed % 2 == 0 ? 1.0 : 0.0);
        for (Modality m : {Modality::CT, Modality::MR, Modality::MRCAT}) {
            RenderResult r = render(g, m, seed * 3 + 1);
            LabelMap seg = segment_rule_based(r.image);
            for (int label : {labels::body, labels::bone, labels::bladder, labels::prostate}) {
                double d = dice(r.mask, seg, label);
                worst = std::min(worst, d);
                CAPTURE(seed);
                CAPTURE(static_cast<int>(m));
                CAPTURE(label);
                CHECK(d >= 0.95);
            }
        }
    }
    MESSAGE("worst per-organ dice: ", worst);
}

TEST_CASE("segmentation finds the couch only in CT images") {
    PhantomGeometry g = sample_geometry(21, 64);
    RenderResult ct = render(g, Modality::CT, 3);
    RenderResult mr = render(g, Modality::MR, 3);
    LabelMap seg_ct = segment_rule_based(ct.image);
    LabelMap seg_mr = segment_rule_based(mr.image);
    int couch_ct = 0, couch_mr = 0;
    for (auto v : seg_ct.values) couch_ct += v == labels::couch;
    for (auto v : seg_mr.values) couch_mr += v == labels::couch;
    CHECK(couch_ct > 0);
    CHECK(couch_mr == 0);
}

TEST_CASE("dataset generation is reproducible byte for byte") {
    fs::path dir = testsup::scratch_dir("phantom_repro");
    GenerateConfig cfg;
    cfg.n_paired = 3;
    cfg.n_unpaired_ct = 4;
    cfg.resolution = 32;
    cfg.master_seed = 9;
    generate_dataset(cfg, dir / "a");
    generate_dataset(cfg, dir / "b");

    CHECK(file_bytes(dir / "a/manifest.json") == file_bytes(dir / "b/manifest.json"));
    CHECK(file_bytes(dir / "a/cases/paired_0000/mr.npy") ==
          file_bytes(dir / "b/cases/paired_0000/mr.npy"));
    CHECK(file_bytes(dir / "a/cases/ct_0003/ct.npy") == file_bytes(dir / "b/cases/ct_0003/ct.npy"));

    GenerateConfig other = cfg;
    other.master_seed = 10;
    generate_dataset(other, dir / "c");
    CHECK(file_bytes(dir / "a/cases/paired_0000/mr.npy") !=
          file_bytes(dir / "c/cases/paired_0000/mr.npy"));
    fs::remove_all(dir);
}

TEST_CASE("manifest round trip preserves cases, splits and the HU map") {
    fs::path dir = testsup::scratch_dir("phantom_manifest");
    DatasetManifest m = testsup::tiny_dataset(dir, 5, 10, 32, 2);
    CHECK(m.cases.size() == 15);
    CHECK(m.hu_slope == kHuSlope);
    CHECK(m.hu_intercept == kHuIntercept);

    DatasetManifest r = load_manifest(dir / "manifest.json");
    CHECK(r.cases.size() == m.cases.size());
    CHECK(r.resolution == 32);
    CHECK(r.master_seed == 2);

    int eval_paired = 0, eval_ct = 0;
    for (const CaseEntry& e : r.cases) {
        if (e.split != "eval") continue;
        (e.paired ? eval_paired : eval_ct) += 1;
    }
    CHECK(eval_paired == 1); // floor(5 * 0.2)
    CHECK(eval_ct == 2);     // floor(10 * 0.2)

    // images load with the right shape, modality tag and value range
    const CaseEntry* paired = nullptr;
    for (const CaseEntry& e : r.cases)
        if (e.paired) {
            paired = &e;
            break;
        }
    REQUIRE(paired != nullptr);
    SliceImage mr = load_image(r, *paired, Modality::MR);
    CHECK(mr.height() == 32);
    CHECK(mr.width() == 32);
    CHECK(mr.modality == Modality::MR);
    LabelMap mask = load_mask(r, *paired, Modality::MR);
    CHECK(mask.h == 32);
    fs::remove_all(dir);
}

TEST_CASE("generation failures map to the documented error kinds") {
    fs::path dir = testsup::scratch_dir("phantom_errors");
    GenerateConfig cfg;
    cfg.n_paired = 2;
    cfg.n_unpaired_ct = 0;
    cfg.resolution = 16; // below the minimum
    CHECK_THROWS_AS(generate_dataset(cfg, dir / "x"), Error);

    cfg.resolution = 32;
    cfg.eval_fraction = 0.95; // above the cap
    CHECK_THROWS_AS(generate_dataset(cfg, dir / "y"), Error);

    // out dir already exists as a *file*
    std::ofstream(dir / "blocker").put('x');
    cfg.n_unpaired_ct = 2;
    cfg.eval_fraction = 0.2;
    try {
        generate_dataset(cfg, dir / "blocker");
        FAIL("expected an io error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::io_error);
    }

    CHECK_THROWS_AS(load_manifest(dir / "missing/manifest.json"), Error);
    fs::remove_all(dir);
}

TEST_CASE("npy round trip preserves float and label payloads") {
    fs::path dir = testsup::scratch_dir("phantom_npy");
    std::vector<double> vals = {-1.0, -0.5, 0.0, 0.25, 1.0, 0.125};
    npy::write_f32(dir / "a.npy", vals, 2, 3);
    int rows = 0, cols = 0;
    std::vector<double> back = npy::read_f32(dir / "a.npy", rows, cols);
    CHECK(rows == 2);
    CHECK(cols == 3);
    CHECK(back == vals); // all values exactly representable in f32

    std::vector<std::uint8_t> lab = {0, 1, 2, 3, 4, 5, 6, 7};
    npy::write_u8(dir / "b.npy", lab, 4, 2);
    std::vector<std::uint8_t> lback = npy::read_u8(dir / "b.npy", rows, cols);
    CHECK(rows == 4);
    CHECK(lback == lab);

    CHECK_THROWS_AS(npy::read_f32(dir / "b.npy", rows, cols), Error); // wrong dtype
    fs::remove_all(dir);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace mrct {

enum class Modality { MR, CT, MRCAT, sCT, sMR };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// Label codes shared by ground-truth masks and the rule-based segmenter.
namespace labels {
constexpr std::uint8_t background = 0;
constexpr std::uint8_t body = 1;
constexpr std::uint8_t bone = 2;
constexpr std::uint8_t bladder = 3;
constexpr std::uint8_t prostate = 4;
constexpr std::uint8_t couch = 5;
constexpr std::uint8_t air_cavity = 6;
constexpr int count = 7;
} // namespace labels

struct LabelMap {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> values;

    LabelMap() = default;
    LabelMap(int h_, int w_) : h(h_), w(w_), values(static_cast<std::size_t>(h_) * w_, 0) {}
    std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
};

struct SliceImage {
    Tensor pixels; // 1xCxHxW, values in [-1, 1]
    Modality modality = Modality::MR;
    std::string case_id;

    int channels() const { return pixels.c(); }
    int height() const { return pixels.h(); }
    int width() const { return pixels.w(); }
};

struct EllipseShape {
    double cx = 0, cy = 0, rx = 0, ry = 0;
    bool operator==(const EllipseShape&) const = default;
    bool contains(double px, double py) const {
        double u = (px - cx) / rx, v = (py - cy) / ry;
        return u * u + v * v <= 1.0;
    }
};

struct CircleShape {
    double cx = 0, cy = 0, r = 0;
    bool operator==(const CircleShape&) const = default;
    bool contains(double px, double py) const {
        double u = px - cx, v = py - cy;
        return u * u + v * v <= r * r;
    }
};

struct PhantomGeometry {
    std::uint64_t seed = 0;
    int resolution = 0;
    EllipseShape body;
    CircleShape femur_left;
    CircleShape femur_right;
    EllipseShape bladder;
    EllipseShape prostate;
    std::optional<EllipseShape> air_cavity;
    int couch_height = 0; // couch strip thickness in pixels (drawn in CT only)

    bool operator==(const PhantomGeometry&) const = default;
};

struct PhantomCase {
    PhantomGeometry geometry;
    std::map<Modality, SliceImage> images;
    std::map<Modality, LabelMap> masks;
    bool paired = false;
};

// Affine map from normalized [-1,1] intensities to nominal HU, recorded in
// the manifest so HU-Dif stays meaningful: HU = slope * v + intercept.
constexpr double kHuSlope = 1000.0;
constexpr double kHuIntercept = 0.0;

// Sampling ranges are uniform and scaled to the resolution; see phantom.cpp
// for the table. air_cavity_prob controls the fraction of geometries carrying
// an air cavity (only the CT render ever draws it).
PhantomGeometry sample_geometry(std::uint64_t seed, int resolution, double air_cavity_prob = 0.5);

// Throws if a shape escapes the body or the femurs intersect.
void validate_geometry(const PhantomGeometry& g);

struct RenderResult {
    SliceImage image;
    LabelMap mask;
};

// MR: bias field + noise, dark bone, no couch, no air cavity.
// CT: noisy, bright bone, couch strip, air cavity when present.
// MRCAT: pure function of geometry, exactly 5 intensity levels, smoothed
//        bone boundary, no couch, no air cavity.
RenderResult render(const PhantomGeometry& geometry, Modality modality, std::uint64_t noise_seed);

// Threshold windows + connected-component cleanup; window table in phantom.cpp.
LabelMap segment_rule_based(const SliceImage& image);

struct GenerateConfig {
    int n_paired = 32;
    int n_unpaired_ct = 128;
    int resolution = 128;
    std::uint64_t master_seed = 1;
    double air_fraction = 0.5;  // fraction of CT geometries with an air cavity
    double eval_fraction = 0.2; // trailing fraction of each kind held out for eval
};

struct CaseEntry {
    std::string case_id;
    bool paired = false;
    std::string split; // "train" | "eval"
    std::uint64_t geometry_seed = 0;
    std::map<Modality, std::string> images; // paths relative to dataset root
    std::map<Modality, std::string> masks;
};

struct DatasetManifest {
    std::filesystem::path root;
    int format_version = 1;
    int resolution = 0;
    int n_paired = 0;
    int n_unpaired_ct = 0;
    std::uint64_t master_seed = 0;
    double air_fraction = 0.5;
    double eval_fraction = 0.2;
    double hu_slope = kHuSlope;
    double hu_intercept = kHuIntercept;
    std::vector<CaseEntry> cases;
};

DatasetManifest generate_dataset(const GenerateConfig& cfg, const std::filesystem::path& out_dir);

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

SliceImage load_image(const DatasetManifest& m, const CaseEntry& entry, Modality modality);
LabelMap load_mask(const DatasetManifest& m, const CaseEntry& entry, Modality modality);

} // namespace mrct

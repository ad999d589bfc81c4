#include "core/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "core/npy.hpp"
#include "core/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mrct {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::MR: return "MR";
        case Modality::CT: return "CT";
        case Modality::MRCAT: return "MRCAT";
        case Modality::sCT: return "sCT";
        case Modality::sMR: return "sMR";
    }
    return "?";
}

Modality modality_from_name(const std::string& name) {
    if (name == "MR") return Modality::MR;
    if (name == "CT") return Modality::CT;
    if (name == "MRCAT") return Modality::MRCAT;
    if (name == "sCT") return Modality::sCT;
    if (name == "sMR") return Modality::sMR;
    throw_invalid_argument("unknown modality: " + name);
}

namespace {

// Tissue intensity table, normalized to [-1,1]. MRCAT deliberately reuses the
// CT tissue levels: it is a CT-like map derived from geometry alone, missing
// couch and air cavities. MR values are pre-bias-field nominal levels.
struct Levels {
    double air = -1.0;
    double soft, bone, bladder, prostate;
    double couch = 0.45; // CT only
};
constexpr Levels kCtLevels{-1.0, -0.10, 0.70, -0.45, 0.20, 0.45};
constexpr Levels kMrLevels{-1.0, 0.25, -0.55, 0.75, -0.15, 0.0};

constexpr double kNoiseSigma = 0.03;
constexpr double kMrBiasAmplitude = 0.08;
constexpr double kMrcatBoneBlurSigma = 1.2; // px
constexpr double kMrcatBoneThreshold = 0.45;

bool is_ct_family(Modality m) { return m == Modality::CT || m == Modality::sCT || m == Modality::MRCAT; }

std::uint8_t geometry_label(const PhantomGeometry& g, double px, double py, bool with_ct_extras) {
    std::uint8_t lab = labels::background;
    if (g.body.contains(px, py)) lab = labels::body;
    if (lab == labels::body) {
        if (g.femur_left.contains(px, py) || g.femur_right.contains(px, py)) lab = labels::bone;
        if (g.bladder.contains(px, py)) lab = labels::bladder;
        if (g.prostate.contains(px, py)) lab = labels::prostate;
        if (with_ct_extras && g.air_cavity && g.air_cavity->contains(px, py)) lab = labels::air_cavity;
    }
    if (with_ct_extras && lab == labels::background) {
        int h = g.resolution, w = g.resolution;
        int top = h - 2 - g.couch_height;
        int x0 = static_cast<int>(0.15 * w), x1 = static_cast<int>(0.85 * w);
        int xi = static_cast<int>(px), yi = static_cast<int>(py);
        if (yi >= top && yi < h - 2 && xi >= x0 && xi < x1) lab = labels::couch;
    }
    return lab;
}

LabelMap make_mask(const PhantomGeometry& g, bool with_ct_extras) {
    int n = g.resolution;
    LabelMap m(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            m.at(y, x) = geometry_label(g, x + 0.5, y + 0.5, with_ct_extras);
    return m;
}

double level_for_label(const Levels& lv, std::uint8_t lab) {
    switch (lab) {
        case labels::body: return lv.soft;
        case labels::bone: return lv.bone;
        case labels::bladder: return lv.bladder;
        case labels::prostate: return lv.prostate;
        case labels::couch: return lv.couch;
        case labels::air_cavity: return lv.air;
        default: return lv.air;
    }
}

// Separable Gaussian blur of a scalar field, reflecting at the borders.
void gaussian_blur(std::vector<double>& field, int h, int w, double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    std::vector<double> tmp(field.size());
    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return i;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[k + radius] * field[static_cast<std::size_t>(y) * w + reflect(x + k, w)];
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[k + radius] * tmp[static_cast<std::size_t>(reflect(y + k, h)) * w + x];
            field[static_cast<std::size_t>(y) * w + x] = acc;
        }
}

} // namespace

PhantomGeometry sample_geometry(std::uint64_t seed, int resolution, double air_cavity_prob) {
    if (resolution < 32)
        throw_invalid_argument("sample_geometry: resolution must be >= 32, got " + std::to_string(resolution));
    if (air_cavity_prob < 0.0 || air_cavity_prob > 1.0)
        throw_invalid_argument("sample_geometry: air_cavity_prob must be in [0,1]");

    double R = static_cast<double>(resolution);
    Rng rng(Rng::derive(seed, "phantom-geometry"));

    PhantomGeometry g;
    g.seed = seed;
    g.resolution = resolution;

    // Sampling ranges (fractions of resolution). Shapes stay strictly inside
    // the body for the whole range; validate_geometry re-checks.
    g.body.cx = R * rng.uniform(0.48, 0.52);
    g.body.cy = R * rng.uniform(0.50, 0.54);
    g.body.rx = R * rng.uniform(0.30, 0.38);
    g.body.ry = R * rng.uniform(0.24, 0.30);

    double fdx = rng.uniform(0.16, 0.20), fdy = rng.uniform(0.02, 0.06);
    g.femur_left = {g.body.cx - R * fdx, g.body.cy + R * fdy, R * rng.uniform(0.045, 0.060)};
    fdx = rng.uniform(0.16, 0.20);
    fdy = rng.uniform(0.02, 0.06);
    g.femur_right = {g.body.cx + R * fdx, g.body.cy + R * fdy, R * rng.uniform(0.045, 0.060)};

    g.bladder.cx = g.body.cx + R * rng.uniform(-0.02, 0.02);
    g.bladder.cy = g.body.cy - R * rng.uniform(0.10, 0.14);
    g.bladder.rx = R * rng.uniform(0.07, 0.10);
    g.bladder.ry = R * rng.uniform(0.05, 0.08);

    g.prostate.cx = g.body.cx + R * rng.uniform(-0.01, 0.01);
    g.prostate.cy = g.body.cy + R * rng.uniform(0.04, 0.07);
    g.prostate.rx = R * rng.uniform(0.04, 0.06);
    g.prostate.ry = R * rng.uniform(0.03, 0.05);

    // Air cavity params are always drawn so the stream layout does not depend
    // on the probability; presence is decided afterwards.
    EllipseShape air;
    air.cx = g.body.cx + R * rng.uniform(-0.02, 0.02);
    air.cy = g.body.cy + R * rng.uniform(0.10, 0.14);
    air.rx = R * rng.uniform(0.035, 0.055);
    air.ry = R * rng.uniform(0.025, 0.040);
    bool has_air = rng.uniform01() < air_cavity_prob;
    if (has_air) g.air_cavity = air;

    int couch_lo = std::max(2, static_cast<int>(0.03 * R));
    int couch_hi = std::max(couch_lo, static_cast<int>(0.06 * R));
    g.couch_height = static_cast<int>(rng.uniform_int(couch_lo, couch_hi));

    validate_geometry(g);
    return g;
}

void validate_geometry(const PhantomGeometry& g) {
    auto inside_body = [&](double px, double py) {
        double u = (px - g.body.cx) / g.body.rx, v = (py - g.body.cy) / g.body.ry;
        return u * u + v * v < 0.995;
    };
    auto check_ellipse = [&](const EllipseShape& e, const char* name) {
        for (int i = 0; i < 256; ++i) {
            double t = 2.0 * M_PI * i / 256.0;
            if (!inside_body(e.cx + e.rx * std::cos(t), e.cy + e.ry * std::sin(t)))
                throw_invalid_argument(std::string("geometry: ") + name + " escapes the body ellipse");
        }
    };
    auto check_circle = [&](const CircleShape& c, const char* name) {
        for (int i = 0; i < 256; ++i) {
            double t = 2.0 * M_PI * i / 256.0;
            if (!inside_body(c.cx + c.r * std::cos(t), c.cy + c.r * std::sin(t)))
                throw_invalid_argument(std::string("geometry: ") + name + " escapes the body ellipse");
        }
    };
    check_circle(g.femur_left, "femur_left");
    check_circle(g.femur_right, "femur_right");
    check_ellipse(g.bladder, "bladder");
    check_ellipse(g.prostate, "prostate");
    if (g.air_cavity) check_ellipse(*g.air_cavity, "air_cavity");

    double dx = g.femur_left.cx - g.femur_right.cx, dy = g.femur_left.cy - g.femur_right.cy;
    if (std::sqrt(dx * dx + dy * dy) <= g.femur_left.r + g.femur_right.r)
        throw_invalid_argument("geometry: femurs intersect");
}

RenderResult render(const PhantomGeometry& geometry, Modality modality, std::uint64_t noise_seed) {
    if (modality != Modality::MR && modality != Modality::CT && modality != Modality::MRCAT)
        throw_invalid_argument("render: modality must be MR, CT or MRCAT");

    int n = geometry.resolution;
    bool ct_extras = modality == Modality::CT;
    LabelMap mask = make_mask(geometry, ct_extras);

    RenderResult out;
    out.mask = mask;
    out.image.modality = modality;
    out.image.pixels = Tensor(1, 1, n, n);
    Tensor& img = out.image.pixels;

    if (modality == Modality::MRCAT) {
        // Deterministic 5-level map. The bone region is a re-thresholded blur
        // of the exact bone indicator, so the boundary is smoothed without
        // introducing extra intensity levels.
        std::vector<double> bone(static_cast<std::size_t>(n) * n, 0.0);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if (mask.at(y, x) == labels::bone) bone[static_cast<std::size_t>(y) * n + x] = 1.0;
        gaussian_blur(bone, n, n, kMrcatBoneBlurSigma);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                std::uint8_t lab = mask.at(y, x);
                double v = level_for_label(kCtLevels, lab == labels::bone ? labels::body : lab);
                if (bone[static_cast<std::size_t>(y) * n + x] >= kMrcatBoneThreshold) v = kCtLevels.bone;
                img.at(0, 0, y, x) = v;
            }
        return out;
    }

    const Levels& lv = modality == Modality::CT ? kCtLevels : kMrLevels;
    Rng noise(Rng::derive(noise_seed, modality == Modality::CT ? "render-ct" : "render-mr"));

    double f1 = 0, f2 = 0, phase = 0;
    if (modality == Modality::MR) {
        f1 = noise.uniform(0.4, 1.2);
        f2 = noise.uniform(0.4, 1.2);
        phase = noise.uniform(0.0, 2.0 * M_PI);
    }

    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double v = level_for_label(lv, mask.at(y, x));
            if (modality == Modality::MR) {
                double bias = 1.0 + kMrBiasAmplitude *
                                        std::sin(2.0 * M_PI * (f1 * x + f2 * y) / n + phase);
                v = (v + 1.0) * bias - 1.0;
            }
            v += noise.normal(0.0, kNoiseSigma);
            img.at(0, 0, y, x) = std::clamp(v, -1.0, 1.0);
        }
    return out;
}

namespace {

// 4-connected components over an arbitrary pixel predicate; returns component
// id per pixel (-1 outside the mask) and component sizes.
struct Components {
    std::vector<int> id;
    std::vector<int> size;
};

template <typename Pred>
Components connected_components(int h, int w, Pred pred) {
    Components c;
    c.id.assign(static_cast<std::size_t>(h) * w, -1);
    std::vector<int> stack;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * w + x;
            if (c.id[p] != -1 || !pred(y, x)) continue;
            int cid = static_cast<int>(c.size.size());
            c.size.push_back(0);
            stack.push_back(static_cast<int>(p));
            c.id[p] = cid;
            while (!stack.empty()) {
                int q = stack.back();
                stack.pop_back();
                ++c.size[cid];
                int qy = q / w, qx = q % w;
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    int ny = qy + dy[k], nx = qx + dx[k];
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    std::size_t np = static_cast<std::size_t>(ny) * w + nx;
                    if (c.id[np] == -1 && pred(ny, nx)) {
                        c.id[np] = cid;
                        stack.push_back(static_cast<int>(np));
                    }
                }
            }
        }
    return c;
}

} // namespace

LabelMap segment_rule_based(const SliceImage& image) {
    int h = image.height(), w = image.width();
    const Tensor& px = image.pixels;
    auto v = [&](int y, int x) { return px.at(0, 0, y, x); };

    bool ct = is_ct_family(image.modality);
    // Window edges; see the level table above. Margins are several noise
    // sigmas wide for every rendered tissue level.
    double tissue_floor = ct ? -0.70 : -0.78;

    Components comps = connected_components(h, w, [&](int y, int x) { return v(y, x) > tissue_floor; });

    // Largest tissue component is the patient body.
    int body_comp = -1, body_size = 0;
    for (std::size_t i = 0; i < comps.size.size(); ++i)
        if (comps.size[i] > body_size) {
            body_size = comps.size[i];
            body_comp = static_cast<int>(i);
        }

    LabelMap out(h, w);
    if (body_comp < 0) return out; // e.g. an all-air image

    // Mean intensity per non-body component, to pick out the couch strip.
    std::vector<double> comp_mean(comps.size.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int cid = comps.id[static_cast<std::size_t>(y) * w + x];
            if (cid >= 0) comp_mean[cid] += v(y, x);
        }
    for (std::size_t i = 0; i < comps.size.size(); ++i) comp_mean[i] /= std::max(1, comps.size[i]);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * w + x;
            int cid = comps.id[p];
            if (cid < 0) continue;
            double val = v(y, x);
            if (cid == body_comp) {
                std::uint8_t lab;
                if (ct) {
                    if (val <= -0.275) lab = labels::bladder;
                    else if (val <= 0.05) lab = labels::body;
                    else if (val <= 0.45) lab = labels::prostate;
                    else lab = labels::bone;
                } else {
                    if (val <= -0.36) lab = labels::bone;
                    else if (val <= 0.03) lab = labels::prostate;
                    else if (val <= 0.48) lab = labels::body;
                    else lab = labels::bladder;
                }
                out.at(y, x) = lab;
            } else if (ct && comps.size[cid] >= 20 && comp_mean[cid] > 0.325 && comp_mean[cid] <= 0.575) {
                out.at(y, x) = labels::couch;
            }
            // other non-body components are left as background
        }

    if (ct) {
        // Air pockets: sub-floor pixels enclosed by the body. Flood the
        // outside air from the border; whatever air is left inside is cavity.
        Components air = connected_components(h, w, [&](int y, int x) { return v(y, x) <= tissue_floor; });
        std::set<int> border_air;
        for (int x = 0; x < w; ++x) {
            if (air.id[x] >= 0) border_air.insert(air.id[x]);
            if (air.id[static_cast<std::size_t>(h - 1) * w + x] >= 0)
                border_air.insert(air.id[static_cast<std::size_t>(h - 1) * w + x]);
        }
        for (int y = 0; y < h; ++y) {
            if (air.id[static_cast<std::size_t>(y) * w] >= 0)
                border_air.insert(air.id[static_cast<std::size_t>(y) * w]);
            if (air.id[static_cast<std::size_t>(y) * w + w - 1] >= 0)
                border_air.insert(air.id[static_cast<std::size_t>(y) * w + w - 1]);
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int cid = air.id[static_cast<std::size_t>(y) * w + x];
                if (cid >= 0 && !border_air.count(cid) && air.size[cid] >= 4)
                    out.at(y, x) = labels::air_cavity;
            }
    }
    return out;
}

namespace {

std::string seed_to_hex(std::uint64_t s) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(s));
    return buf;
}

std::uint64_t seed_from_hex(const std::string& s) {
    return std::strtoull(s.c_str(), nullptr, 16);
}

void write_image(const fs::path& root, const std::string& rel, const SliceImage& img) {
    fs::path p = root / rel;
    npy::write_f32(p, img.pixels.data, img.height(), img.width());
    json side;
    side["case_id"] = img.case_id;
    side["modality"] = modality_name(img.modality);
    side["hu_slope"] = kHuSlope;
    side["hu_intercept"] = kHuIntercept;
    fs::path sp = p;
    sp.replace_extension(".json");
    std::ofstream f(sp, std::ios::trunc);
    if (!f) throw_io_error("cannot write sidecar: " + sp.string());
    f << side.dump(2) << "\n";
}

void write_mask(const fs::path& root, const std::string& rel, const LabelMap& m) {
    npy::write_u8(root / rel, m.values, m.h, m.w);
}

} // namespace

DatasetManifest generate_dataset(const GenerateConfig& cfg, const fs::path& out_dir) {
    if (cfg.n_paired < 1) throw_invalid_argument("generate_dataset: n_paired must be >= 1");
    if (cfg.n_unpaired_ct < 1) throw_invalid_argument("generate_dataset: n_unpaired_ct must be >= 1");
    if (cfg.eval_fraction < 0.0 || cfg.eval_fraction > 0.9)
        throw_invalid_argument("generate_dataset: eval_fraction must be in [0, 0.9]");
    if (cfg.air_fraction < 0.0 || cfg.air_fraction > 1.0)
        throw_invalid_argument("generate_dataset: air_fraction must be in [0, 1]");

    std::error_code ec;
    fs::create_directories(out_dir / "cases", ec);
    if (ec || !fs::is_directory(out_dir / "cases"))
        throw_io_error("generate_dataset: cannot create output directory " + out_dir.string());

    DatasetManifest man;
    man.root = out_dir;
    man.resolution = cfg.resolution;
    man.n_paired = cfg.n_paired;
    man.n_unpaired_ct = cfg.n_unpaired_ct;
    man.master_seed = cfg.master_seed;
    man.air_fraction = cfg.air_fraction;
    man.eval_fraction = cfg.eval_fraction;

    int eval_paired = static_cast<int>(cfg.n_paired * cfg.eval_fraction);
    int eval_ct = static_cast<int>(cfg.n_unpaired_ct * cfg.eval_fraction);

    char idbuf[32];
    for (int i = 0; i < cfg.n_paired; ++i) {
        std::snprintf(idbuf, sizeof idbuf, "paired_%04d", i);
        CaseEntry e;
        e.case_id = idbuf;
        e.paired = true;
        e.split = i >= cfg.n_paired - eval_paired ? "eval" : "train";
        e.geometry_seed = Rng::derive(cfg.master_seed, "geom-paired", static_cast<std::uint64_t>(i));
        // paired geometries never carry an air cavity: the defect is specific
        // to the unpaired CT population
        PhantomGeometry g = sample_geometry(e.geometry_seed, cfg.resolution, 0.0);
        std::uint64_t noise_seed = Rng::derive(cfg.master_seed, "noise-paired", static_cast<std::uint64_t>(i));

        fs::create_directories(out_dir / "cases" / e.case_id);
        RenderResult mr = render(g, Modality::MR, noise_seed);
        RenderResult mrcat = render(g, Modality::MRCAT, noise_seed);
        mr.image.case_id = e.case_id;
        mrcat.image.case_id = e.case_id;
        std::string base = "cases/" + e.case_id + "/";
        e.images[Modality::MR] = base + "mr.npy";
        e.images[Modality::MRCAT] = base + "mrcat.npy";
        e.masks[Modality::MR] = base + "mr_mask.npy";
        e.masks[Modality::MRCAT] = base + "mrcat_mask.npy";
        write_image(out_dir, e.images[Modality::MR], mr.image);
        write_image(out_dir, e.images[Modality::MRCAT], mrcat.image);
        write_mask(out_dir, e.masks[Modality::MR], mr.mask);
        write_mask(out_dir, e.masks[Modality::MRCAT], mrcat.mask);
        man.cases.push_back(std::move(e));
    }

    for (int i = 0; i < cfg.n_unpaired_ct; ++i) {
        std::snprintf(idbuf, sizeof idbuf, "ct_%04d", i);
        CaseEntry e;
        e.case_id = idbuf;
        e.paired = false;
        e.split = i >= cfg.n_unpaired_ct - eval_ct ? "eval" : "train";
        e.geometry_seed = Rng::derive(cfg.master_seed, "geom-ct", static_cast<std::uint64_t>(i));
        PhantomGeometry g = sample_geometry(e.geometry_seed, cfg.resolution, cfg.air_fraction);
        std::uint64_t noise_seed = Rng::derive(cfg.master_seed, "noise-ct", static_cast<std::uint64_t>(i));

        fs::create_directories(out_dir / "cases" / e.case_id);
        RenderResult ctr = render(g, Modality::CT, noise_seed);
        ctr.image.case_id = e.case_id;
        std::string base = "cases/" + e.case_id + "/";
        e.images[Modality::CT] = base + "ct.npy";
        e.masks[Modality::CT] = base + "ct_mask.npy";
        write_image(out_dir, e.images[Modality::CT], ctr.image);
        write_mask(out_dir, e.masks[Modality::CT], ctr.mask);
        man.cases.push_back(std::move(e));
    }

    json j;
    j["format_version"] = man.format_version;
    j["resolution"] = man.resolution;
    j["n_paired"] = man.n_paired;
    j["n_unpaired_ct"] = man.n_unpaired_ct;
    j["master_seed"] = seed_to_hex(man.master_seed);
    j["air_fraction"] = man.air_fraction;
    j["eval_fraction"] = man.eval_fraction;
    j["hu_slope"] = man.hu_slope;
    j["hu_intercept"] = man.hu_intercept;
    j["pixel_format"] = "npy-f32";
    json cases = json::array();
    for (const CaseEntry& e : man.cases) {
        json c;
        c["case_id"] = e.case_id;
        c["paired"] = e.paired;
        c["split"] = e.split;
        c["geometry_seed"] = seed_to_hex(e.geometry_seed);
        json imgs, masks;
        for (auto& [m, p] : e.images) imgs[modality_name(m)] = p;
        for (auto& [m, p] : e.masks) masks[modality_name(m)] = p;
        c["images"] = imgs;
        c["masks"] = masks;
        cases.push_back(c);
    }
    j["cases"] = cases;
    std::ofstream f(out_dir / "manifest.json", std::ios::trunc);
    if (!f) throw_io_error("cannot write manifest in " + out_dir.string());
    f << j.dump(2) << "\n";
    return man;
}

DatasetManifest load_manifest(const fs::path& manifest_path) {
    fs::path p = manifest_path;
    if (fs::is_directory(p)) p /= "manifest.json";
    std::ifstream f(p);
    if (!f) throw_io_error("cannot open manifest: " + p.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw_io_error("malformed manifest " + p.string() + ": " + e.what());
    }
    DatasetManifest man;
    man.root = p.parent_path();
    try {
        man.format_version = j.at("format_version").get<int>();
        man.resolution = j.at("resolution").get<int>();
        man.n_paired = j.at("n_paired").get<int>();
        man.n_unpaired_ct = j.at("n_unpaired_ct").get<int>();
        man.master_seed = seed_from_hex(j.at("master_seed").get<std::string>());
        man.air_fraction = j.at("air_fraction").get<double>();
        man.eval_fraction = j.at("eval_fraction").get<double>();
        man.hu_slope = j.at("hu_slope").get<double>();
        man.hu_intercept = j.at("hu_intercept").get<double>();
        for (const json& c : j.at("cases")) {
            CaseEntry e;
            e.case_id = c.at("case_id").get<std::string>();
            e.paired = c.at("paired").get<bool>();
            e.split = c.at("split").get<std::string>();
            e.geometry_seed = seed_from_hex(c.at("geometry_seed").get<std::string>());
            for (auto& [k, v] : c.at("images").items()) e.images[modality_from_name(k)] = v.get<std::string>();
            for (auto& [k, v] : c.at("masks").items()) e.masks[modality_from_name(k)] = v.get<std::string>();
            man.cases.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw_io_error("manifest missing fields: " + std::string(e.what()));
    }
    return man;
}

SliceImage load_image(const DatasetManifest& m, const CaseEntry& entry, Modality modality) {
    auto it = entry.images.find(modality);
    if (it == entry.images.end())
        throw_invalid_argument("case " + entry.case_id + " has no " + modality_name(modality) + " image");
    int rows = 0, cols = 0;
    std::vector<double> vals = npy::read_f32(m.root / it->second, rows, cols);
    SliceImage img;
    img.modality = modality;
    img.case_id = entry.case_id;
    img.pixels = Tensor(1, 1, rows, cols);
    img.pixels.data = std::move(vals);
    return img;
}

LabelMap load_mask(const DatasetManifest& m, const CaseEntry& entry, Modality modality) {
    auto it = entry.masks.find(modality);
    if (it == entry.masks.end())
        throw_invalid_argument("case " + entry.case_id + " has no " + modality_name(modality) + " mask");
    int rows = 0, cols = 0;
    LabelMap lm;
    lm.values = npy::read_u8(m.root / it->second, rows, cols);
    lm.h = rows;
    lm.w = cols;
    return lm;
}

} // namespace mrct

#include "core/ablate.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/trainer.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace mrct {

namespace {

ObjectiveConfig with_terms(const ObjectiveConfig& base, bool gan, bool cgan, bool l1) {
    ObjectiveConfig cfg = base;
    cfg.term_gan = gan;
    cfg.term_cgan = cgan;
    cfg.term_l1 = l1;
    return cfg;
}

json terms_json(const ObjectiveConfig& o) {
    json t = json::array();
    if (o.term_gan) t.push_back("GAN");
    if (o.term_cgan) t.push_back("cGAN");
    if (o.term_l1) t.push_back("L1");
    return t;
}

} // namespace

std::vector<AblateVariant> ablation_variants(ModelKind model, const ObjectiveConfig& base) {
    std::vector<AblateVariant> v;
    switch (model) {
        case ModelKind::pixmc:
            v.push_back({"L1", "l1", with_terms(base, false, false, true), "", {}});
            v.push_back({"GAN", "gan", with_terms(base, true, false, false), "", {}});
            v.push_back({"GAN+L1", "gan_l1", with_terms(base, true, false, true), "", {}});
            break;
        case ModelKind::pixcm:
            v.push_back({"GAN", "gan", with_terms(base, true, false, false), "", {}});
            v.push_back({"GAN+cGAN", "gan_cgan", with_terms(base, true, true, false), "", {}});
            v.push_back({"GAN+cGAN+L1", "gan_cgan_l1", with_terms(base, true, true, true), "", {}});
            break;
        case ModelKind::baseline_pix2pix:
            throw_invalid_config("ablate: the baseline model has no ablation table");
    }
    for (AblateVariant& var : v) validate_objective(var.objective, model);
    return v;
}

AblateReport ablate(const RunConfig& cfg, const DatasetManifest& manifest, const fs::path& out_dir) {
    AblateReport rep;
    rep.model = model_kind_name(cfg.train.model);
    rep.config_hash = run_config_hash(cfg);
    rep.variants = ablation_variants(cfg.train.model, cfg.train.objective);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw_io_error("ablate: cannot create " + out_dir.string());

    for (AblateVariant& var : rep.variants) {
        TrainConfig tc = cfg.train;
        tc.objective = var.objective; // same seed, data and budget; objective is the only difference
        var.train_config_hash = train_config_hash(tc);

        fs::path vdir = out_dir / var.dir;
        TrainReport tr = train(tc, manifest, vdir);
        var.report = evaluate(vdir / tr.checkpoint_path, manifest, cfg.eval, vdir / "eval",
                              var.train_config_hash);
    }

    write_ablate_report(rep, out_dir / "ablate_report.json", out_dir / "ablate_report.csv");
    return rep;
}

void write_ablate_report(const AblateReport& rep, const fs::path& json_path,
                         const fs::path& csv_path) {
    json j;
    j["model"] = rep.model;
    j["config_hash"] = rep.config_hash;
    json rows = json::array();
    for (const AblateVariant& var : rep.variants) {
        json r;
        r["name"] = var.name;
        r["terms"] = terms_json(var.objective);
        r["dir"] = var.dir;
        r["train_config_hash"] = var.train_config_hash;
        r["fid"] = var.report.fid;
        r["kid"] = var.report.kid;
        r["dice_mean"] = var.report.dice_mean;
        r["dice_std"] = var.report.dice_std;
        r["hu_dif"] = var.report.hu_dif ? json(*var.report.hu_dif) : json(nullptr);
        r["paired_l1"] = var.report.paired_l1 ? json(*var.report.paired_l1) : json(nullptr);
        rows.push_back(r);
    }
    j["variants"] = rows;
    std::ofstream jf(json_path, std::ios::trunc);
    if (!jf) throw_io_error("cannot write " + json_path.string());
    jf << j.dump(2) << "\n";

    std::ofstream cf(csv_path, std::ios::trunc);
    if (!cf) throw_io_error("cannot write " + csv_path.string());
    cf << "objective,fid,kid,dice_mean,dice_std,hu_dif,paired_l1\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const AblateVariant& var : rep.variants) {
        cf << var.name << "," << num(var.report.fid) << "," << num(var.report.kid) << ","
           << num(var.report.dice_mean) << "," << num(var.report.dice_std) << ","
           << (var.report.hu_dif ? num(*var.report.hu_dif) : std::string())
           << "," << (var.report.paired_l1 ? num(*var.report.paired_l1) : std::string()) << "\n";
    }
}

} // namespace mrct

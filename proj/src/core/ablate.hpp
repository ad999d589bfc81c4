#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/metrics.hpp"
#include "core/objectives.hpp"

namespace mrct {

struct AblateVariant {
    std::string name;      // row label, e.g. "GAN+L1"
    std::string dir;       // sub-directory under out_dir, e.g. "gan_l1"
    ObjectiveConfig objective;
    std::string train_config_hash;
    MetricReport report;
};

struct AblateReport {
    std::string model;
    std::string config_hash; // hash of the shared base config
    std::vector<AblateVariant> variants;
};

// The three objective variants trained per model family, in table row order:
// pixmc: L1, GAN, GAN+L1; pixcm: GAN, GAN+cGAN, GAN+cGAN+L1. lambda_l1 is
// taken from `base` wherever the variant keeps the L1 term.
std::vector<AblateVariant> ablation_variants(ModelKind model, const ObjectiveConfig& base);

// Trains every variant under the shared seed in cfg.train, evaluates each on
// the dataset's eval split, and writes ablate_report.{json,csv} plus one
// sub-directory per variant under out_dir.
AblateReport ablate(const RunConfig& cfg, const DatasetManifest& manifest,
                    const std::filesystem::path& out_dir);

void write_ablate_report(const AblateReport& rep, const std::filesystem::path& json_path,
                         const std::filesystem::path& csv_path);

} // namespace mrct

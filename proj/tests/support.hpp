// Shared helpers for the test binaries: scratch directories under the
// working directory and small dataset/config factories.
#pragma once

#include <filesystem>
#include <string>

#include "core/phantom.hpp"
#include "core/trainer.hpp"

namespace testsup {

// Fresh scratch directory (removed first if a previous run left one).
inline std::filesystem::path scratch_dir(const std::string& name) {
    std::filesystem::path p = std::filesystem::current_path() / ("scratch_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline mrct::DatasetManifest tiny_dataset(const std::filesystem::path& dir, int n_paired = 6,
                                          int n_ct = 8, int resolution = 32,
                                          std::uint64_t seed = 11) {
    mrct::GenerateConfig cfg;
    cfg.n_paired = n_paired;
    cfg.n_unpaired_ct = n_ct;
    cfg.resolution = resolution;
    cfg.master_seed = seed;
    return mrct::generate_dataset(cfg, dir);
}

// Smallest config that still exercises every code path: two epochs, a few
// iterations, narrow nets.
inline mrct::TrainConfig tiny_train_config(mrct::ModelKind model, int resolution = 32) {
    mrct::TrainConfig cfg;
    cfg.model = model;
    cfg.objective = mrct::default_objective(model);
    cfg.epochs = 2;
    cfg.iters_per_epoch = 3;
    cfg.batch_size = 2;
    cfg.base_width = 4;
    cfg.depth = 2;
    cfg.d_layers = 1;
    cfg.schedule = {2e-4, 1, 1};
    cfg.augment.crop_size = resolution;
    cfg.seed = 5;
    return cfg;
}

} // namespace testsup

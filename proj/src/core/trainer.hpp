#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "core/checkpoint.hpp"
#include "core/datapipe.hpp"
#include "core/nets.hpp"
#include "core/objectives.hpp"

namespace mrct {

struct TrainConfig {
    ModelKind model = ModelKind::pixmc;
    int epochs = 10;
    int iters_per_epoch = 200;
    int batch_size = 16;
    int base_width = 32;
    int depth = 5;
    int d_layers = 3;
    ObjectiveConfig objective = default_objective(ModelKind::pixmc);
    LRSchedule schedule{2e-4, 6, 4}; // shape of the full 30+20 schedule at desk scale
    AdamConfig adam;
    AugmentConfig augment;
    std::uint64_t seed = 1;
    int checkpoint_every = 0; // extra mid-epoch checkpoints every N iterations; 0 = epoch ends only
    std::string split = "train";
};

void validate_train_config(const TrainConfig& cfg);
// Canonical serialization and its fingerprint; equal hashes mean an identical
// training trajectory on the same dataset.
std::string train_config_json(const TrainConfig& cfg);
std::string train_config_hash(const TrainConfig& cfg);

struct TrainReport {
    std::string config_hash;
    std::string model;
    int epochs_run = 0;
    int total_iterations = 0;
    std::map<std::string, double> final_losses; // mean over the last epoch
    std::map<std::string, std::size_t> parameter_counts;
    std::string checkpoint_path; // relative to out_dir
    std::string loss_log_path;
};

// Alternating-optimization driver. Within an iteration the active
// discriminator(s) update first; the generator's adversarial term is then
// evaluated against the *updated* discriminator.
class Trainer {
public:
    Trainer(const TrainConfig& cfg, const DatasetManifest& manifest);

    void resume_from(const std::filesystem::path& checkpoint_path);
    TrainReport run(const std::filesystem::path& out_dir);

    // phases: iter_start, d_updated, g_updated (epoch/iter are 1-/0-based)
    using PhaseHook = std::function<void(std::string_view phase, int epoch, int iter)>;
    void set_phase_hook(PhaseHook hook) { hook_ = std::move(hook); }

    UNetGenerator& generator() { return *g_; }
    PatchDiscriminator* unconditional_d() { return d_u_.get(); }
    PatchDiscriminator* conditional_d() { return d_c_.get(); }
    const TrainConfig& config() const { return cfg_; }

    Checkpoint snapshot(int epoch_completed, int iter_in_epoch, std::uint64_t loader_state,
                        std::uint64_t route_state) const;

private:
    struct IterLog {
        std::vector<std::pair<std::string, double>> terms;
        std::vector<std::string> case_ids;
    };
    IterLog step_pixmc(const MixedBatch& mb, double lr);
    IterLog step_pixcm(const MixedBatch& mb, double lr, Rng& route_rng);
    void phase(std::string_view p, int epoch, int iter) {
        if (hook_) hook_(p, epoch, iter);
    }

    TrainConfig cfg_;
    const DatasetManifest& manifest_;
    std::unique_ptr<UNetGenerator> g_;
    std::unique_ptr<PatchDiscriminator> d_u_, d_c_;
    std::unique_ptr<Adam> opt_g_, opt_d_u_, opt_d_c_;
    std::unique_ptr<DataLoader> loader_;
    PhaseHook hook_;
    int start_epoch_ = 1;
    int start_iter_ = 0;
    std::optional<Checkpoint> resumed_;
    int cur_epoch_ = 0, cur_iter_ = 0;
};

TrainReport train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume = std::nullopt);

// Loads the generator from a checkpoint and translates each image; outputs
// are tagged sCT (pixmc) or sMR (pixcm/baseline).
std::vector<SliceImage> translate(const std::filesystem::path& checkpoint_path,
                                  const std::vector<SliceImage>& images);

// Rebuilds just the generator (with init parameters when init_only).
std::unique_ptr<UNetGenerator> generator_from_checkpoint(const Checkpoint& ckpt);
Modality translate_input_modality_check(ModelKind model, Modality input);

} // namespace mrct

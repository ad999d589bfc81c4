#pragma once

#include <optional>
#include <string>

#include "core/datapipe.hpp"
#include "core/nn.hpp"
#include "core/tensor.hpp"

namespace mrct {

enum class ModelKind { pixmc, pixcm, baseline_pix2pix };
const char* model_kind_name(ModelKind m);
ModelKind model_kind_from_name(const std::string& name);

// Which loss terms are active. The composite objectives read these flags so
// ablation variants are plain subsets of the full objective.
struct ObjectiveConfig {
    std::string gan_mode = "vanilla";
    double lambda_l1 = 50.0;
    bool term_gan = true;
    bool term_cgan = false;
    bool term_l1 = true;
};

ObjectiveConfig default_objective(ModelKind model);
// invalid-config on: empty term set, negative lambda, terms the model cannot
// express (conditional term outside pixcm/baseline, unconditional term in
// baseline, L1 without the conditional branch in pixcm).
void validate_objective(const ObjectiveConfig& cfg, ModelKind model);

double stable_softplus(double x);
double stable_sigmoid(double x);

// Logistic-discriminator loss: -mean log s(real) - mean log(1 - s(fake)).
double d_loss_vanilla(const Tensor& real_logits, const Tensor& fake_logits);
// Non-saturating generator loss: -mean log s(fake).
double g_loss_nonsaturating(const Tensor& fake_logits);
// Mean absolute difference over all pixels.
double l1_aux(const Tensor& target, const Tensor& translated);

// Analytic input-gradients of the scalar losses above.
void d_loss_vanilla_grads(const Tensor& real_logits, const Tensor& fake_logits, Tensor& d_real,
                          Tensor& d_fake);
Tensor g_loss_nonsaturating_grad(const Tensor& fake_logits);
Tensor l1_aux_grad(const Tensor& target, const Tensor& translated);

enum class RouteBranch { CT_branch, MRCAT_branch };
const char* route_branch_name(RouteBranch b);
// CT branch iff draw < 0.5; draw must lie in [0,1).
RouteBranch route_input(double rng_draw);

struct PixMcLossValues {
    double g_total = 0, g_gan = 0, g_l1 = 0;
    std::optional<double> d_total;
};

struct PixCmLossValues {
    double g_total = 0, g_gan = 0, g_cgan = 0, g_l1 = 0;
    std::optional<double> d_u_total, d_c_total;
    RouteBranch branch = RouteBranch::MRCAT_branch;
};

// Forward-only composite losses (no gradients are consumed by the caller;
// layer caches are clobbered). mr/mrcat must hold the same cases in the same
// order. Values match what one training step of the same nets would log.
PixMcLossValues pixmc_losses(const Batch& mr, const Batch& mrcat, const Batch& ct,
                             Net& g_a, Net& d_a, const ObjectiveConfig& cfg);
PixCmLossValues pixcm_losses(const Batch& ct, const Batch& mrcat, const Batch& mr,
                             Net& g_b, Net* d_bu, Net* d_bc,
                             const ObjectiveConfig& cfg, RouteBranch branch);

// Backward variants used by the trainer and by gradient checks. Each fills
// exactly one network's parameter gradients (accumulating); the other nets are
// used forward-only, though their gradient buffers may be polluted.
std::optional<double> pixmc_d_loss_backward(const Batch& mr, const Batch& ct, Net& g_a,
                                            Net& d_a, const ObjectiveConfig& cfg);
PixMcLossValues pixmc_g_loss_backward(const Batch& mr, const Batch& mrcat, Net& g_a,
                                      Net& d_a, const ObjectiveConfig& cfg);
std::optional<double> pixcm_d_loss_backward(const Batch& ct, const Batch& mrcat, const Batch& mr,
                                            Net& g_b, Net* d_bu,
                                            Net* d_bc, const ObjectiveConfig& cfg,
                                            RouteBranch branch);
PixCmLossValues pixcm_g_loss_backward(const Batch& ct, const Batch& mrcat, const Batch& mr,
                                      Net& g_b, Net* d_bu,
                                      Net* d_bc, const ObjectiveConfig& cfg,
                                      RouteBranch branch);

struct LRSchedule {
    double base_lr = 2e-4;
    int constant_epochs = 30;
    int decay_epochs = 20;
    int total_epochs() const { return constant_epochs + decay_epochs; }
};

// Constant through constant_epochs, then linear decay
// base_lr * (total - epoch + 1) / (decay_epochs + 1); epoch is 1-based and
// the final epoch keeps a strictly positive rate.
double lr_at(int epoch, const LRSchedule& sched);

} // namespace mrct

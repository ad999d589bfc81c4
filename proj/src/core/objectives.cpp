#include "core/objectives.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace mrct {

const char* model_kind_name(ModelKind m) {
    switch (m) {
        case ModelKind::pixmc: return "pixmc";
        case ModelKind::pixcm: return "pixcm";
        case ModelKind::baseline_pix2pix: return "baseline";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "pixmc") return ModelKind::pixmc;
    if (name == "pixcm") return ModelKind::pixcm;
    if (name == "baseline" || name == "baseline_pix2pix") return ModelKind::baseline_pix2pix;
    throw_invalid_config("unknown model: " + name);
}

ObjectiveConfig default_objective(ModelKind model) {
    ObjectiveConfig cfg;
    switch (model) {
        case ModelKind::pixmc:
            cfg.lambda_l1 = 50.0;
            cfg.term_gan = true;
            cfg.term_cgan = false;
            cfg.term_l1 = true;
            break;
        case ModelKind::pixcm:
            cfg.lambda_l1 = 100.0;
            cfg.term_gan = true;
            cfg.term_cgan = true;
            cfg.term_l1 = true;
            break;
        case ModelKind::baseline_pix2pix:
            cfg.lambda_l1 = 100.0;
            cfg.term_gan = false;
            cfg.term_cgan = true;
            cfg.term_l1 = true;
            break;
    }
    return cfg;
}

void validate_objective(const ObjectiveConfig& cfg, ModelKind model) {
    if (cfg.gan_mode != "vanilla") throw_invalid_config("objective: gan_mode must be 'vanilla'");
    if (cfg.lambda_l1 < 0.0) throw_invalid_config("objective: lambda_l1 must be >= 0");
    if (!cfg.term_gan && !cfg.term_cgan && !cfg.term_l1)
        throw_invalid_config("objective: at least one loss term required");
    switch (model) {
        case ModelKind::pixmc:
            if (cfg.term_cgan) throw_invalid_config("objective: pixmc has no conditional discriminator");
            break;
        case ModelKind::pixcm:
            if (cfg.term_l1 && !cfg.term_cgan)
                throw_invalid_config(
                    "objective: pixcm L1 is computed on the MRCAT branch, which requires the cGAN term");
            if (!cfg.term_gan && !cfg.term_cgan)
                throw_invalid_config("objective: pixcm needs at least one adversarial term");
            break;
        case ModelKind::baseline_pix2pix:
            if (cfg.term_gan)
                throw_invalid_config("objective: baseline has no unconditional discriminator");
            if (!cfg.term_cgan) throw_invalid_config("objective: baseline requires the cGAN term");
            break;
    }
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw_numeric_error(std::string(what) + ": non-finite logits");
}

} // namespace

double d_loss_vanilla(const Tensor& real_logits, const Tensor& fake_logits) {
    require_finite(real_logits, "d_loss_vanilla");
    require_finite(fake_logits, "d_loss_vanilla");
    // -log s(x) = softplus(-x); -log(1 - s(x)) = softplus(x)
    double lr = 0, lf = 0;
    for (double v : real_logits.data) lr += stable_softplus(-v);
    for (double v : fake_logits.data) lf += stable_softplus(v);
    return lr / static_cast<double>(real_logits.data.size()) +
           lf / static_cast<double>(fake_logits.data.size());
}

double g_loss_nonsaturating(const Tensor& fake_logits) {
    require_finite(fake_logits, "g_loss_nonsaturating");
    double l = 0;
    for (double v : fake_logits.data) l += stable_softplus(-v);
    return l / static_cast<double>(fake_logits.data.size());
}

double l1_aux(const Tensor& target, const Tensor& translated) {
    check_same_shape(target, translated, "l1_aux");
    double l = 0;
    for (std::size_t i = 0; i < target.data.size(); ++i)
        l += std::abs(translated.data[i] - target.data[i]);
    return l / static_cast<double>(target.data.size());
}

void d_loss_vanilla_grads(const Tensor& real_logits, const Tensor& fake_logits, Tensor& d_real,
                          Tensor& d_fake) {
    d_real = Tensor::zeros_like(real_logits);
    d_fake = Tensor::zeros_like(fake_logits);
    double nr = static_cast<double>(real_logits.data.size());
    double nf = static_cast<double>(fake_logits.data.size());
    for (std::size_t i = 0; i < real_logits.data.size(); ++i)
        d_real.data[i] = (stable_sigmoid(real_logits.data[i]) - 1.0) / nr;
    for (std::size_t i = 0; i < fake_logits.data.size(); ++i)
        d_fake.data[i] = stable_sigmoid(fake_logits.data[i]) / nf;
}

Tensor g_loss_nonsaturating_grad(const Tensor& fake_logits) {
    Tensor g = Tensor::zeros_like(fake_logits);
    double n = static_cast<double>(fake_logits.data.size());
    for (std::size_t i = 0; i < fake_logits.data.size(); ++i)
        g.data[i] = (stable_sigmoid(fake_logits.data[i]) - 1.0) / n;
    return g;
}

Tensor l1_aux_grad(const Tensor& target, const Tensor& translated) {
    check_same_shape(target, translated, "l1_aux_grad");
    Tensor g = Tensor::zeros_like(translated);
    double n = static_cast<double>(target.data.size());
    for (std::size_t i = 0; i < target.data.size(); ++i) {
        double d = translated.data[i] - target.data[i];
        g.data[i] = (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / n;
    }
    return g;
}

const char* route_branch_name(RouteBranch b) {
    return b == RouteBranch::CT_branch ? "ct" : "mrcat";
}

RouteBranch route_input(double rng_draw) {
    if (!(rng_draw >= 0.0 && rng_draw < 1.0))
        throw_invalid_argument("route_input: draw must lie in [0,1)");
    return rng_draw < 0.5 ? RouteBranch::CT_branch : RouteBranch::MRCAT_branch;
}

namespace {

void check_aligned(const Batch& mr, const Batch& mrcat, const char* what) {
    if (mr.case_ids != mrcat.case_ids)
        throw_invalid_argument(std::string(what) + ": MR/MRCAT batches hold different cases");
    check_same_shape(mr.input, mrcat.input, what);
}

// One discriminator half-loss (real or fake side) with its backward pass.
// Must run immediately after the forward that produced `logits`.
double d_half_backward(Net& d, const Tensor& logits, bool real_side) {
    double loss = 0;
    for (double v : logits.data) loss += stable_softplus(real_side ? -v : v);
    double n = static_cast<double>(logits.data.size());
    loss /= n;
    Tensor g = Tensor::zeros_like(logits);
    for (std::size_t i = 0; i < logits.data.size(); ++i)
        g.data[i] = real_side ? (stable_sigmoid(logits.data[i]) - 1.0) / n
                              : stable_sigmoid(logits.data[i]) / n;
    d.backward(g);
    return loss;
}

} // namespace

PixMcLossValues pixmc_losses(const Batch& mr, const Batch& mrcat, const Batch& ct,
                             Net& g_a, Net& d_a, const ObjectiveConfig& cfg) {
    check_aligned(mr, mrcat, "pixmc_losses");
    PixMcLossValues out;
    Tensor fake = g_a.forward(mr.input);
    if (cfg.term_gan) {
        if (ct.empty()) throw_invalid_argument("pixmc_losses: adversarial term needs a CT batch");
        Tensor real_logits = d_a.forward(ct.input);
        Tensor fake_logits = d_a.forward(fake);
        out.d_total = d_loss_vanilla(real_logits, fake_logits);
        out.g_gan = g_loss_nonsaturating(fake_logits);
    }
    out.g_l1 = l1_aux(mrcat.input, fake);
    out.g_total = (cfg.term_gan ? out.g_gan : 0.0) + (cfg.term_l1 ? cfg.lambda_l1 * out.g_l1 : 0.0);
    return out;
}

std::optional<double> pixmc_d_loss_backward(const Batch& mr, const Batch& ct, Net& g_a,
                                            Net& d_a, const ObjectiveConfig& cfg) {
    if (!cfg.term_gan) return std::nullopt;
    if (ct.empty()) throw_invalid_argument("pixmc_d_loss_backward: CT batch required");
    Tensor fake = g_a.forward(mr.input); // generator is a constant here
    double lr = d_half_backward(d_a, d_a.forward(ct.input), true);
    double lf = d_half_backward(d_a, d_a.forward(fake), false);
    return lr + lf;
}

PixMcLossValues pixmc_g_loss_backward(const Batch& mr, const Batch& mrcat, Net& g_a,
                                      Net& d_a, const ObjectiveConfig& cfg) {
    check_aligned(mr, mrcat, "pixmc_g_loss_backward");
    PixMcLossValues out;
    Tensor fake = g_a.forward(mr.input);
    Tensor d_fake = Tensor::zeros_like(fake);
    if (cfg.term_gan) {
        Tensor fake_logits = d_a.forward(fake);
        out.g_gan = g_loss_nonsaturating(fake_logits);
        d_fake = d_a.backward(g_loss_nonsaturating_grad(fake_logits));
    }
    out.g_l1 = l1_aux(mrcat.input, fake);
    if (cfg.term_l1) {
        Tensor gl1 = l1_aux_grad(mrcat.input, fake);
        for (std::size_t i = 0; i < d_fake.data.size(); ++i)
            d_fake.data[i] += cfg.lambda_l1 * gl1.data[i];
    }
    g_a.backward(d_fake);
    out.g_total = (cfg.term_gan ? out.g_gan : 0.0) + (cfg.term_l1 ? cfg.lambda_l1 * out.g_l1 : 0.0);
    return out;
}

namespace {

void check_pixcm_nets(const ObjectiveConfig& cfg, Net* d_bu, Net* d_bc,
                      RouteBranch branch) {
    if (branch == RouteBranch::CT_branch && (!cfg.term_gan || d_bu == nullptr))
        throw_invalid_argument("pixcm: CT branch needs the unconditional discriminator and GAN term");
    if (branch == RouteBranch::MRCAT_branch && cfg.term_cgan && d_bc == nullptr)
        throw_invalid_argument("pixcm: MRCAT branch needs the conditional discriminator");
}

} // namespace

PixCmLossValues pixcm_losses(const Batch& ct, const Batch& mrcat, const Batch& mr,
                             Net& g_b, Net* d_bu, Net* d_bc,
                             const ObjectiveConfig& cfg, RouteBranch branch) {
    check_pixcm_nets(cfg, d_bu, d_bc, branch);
    PixCmLossValues out;
    out.branch = branch;
    if (branch == RouteBranch::CT_branch) {
        if (ct.empty() || mr.empty()) throw_invalid_argument("pixcm_losses: CT branch needs CT and MR");
        Tensor fake = g_b.forward(ct.input);
        Tensor real_logits = d_bu->forward(mr.input);
        Tensor fake_logits = d_bu->forward(fake);
        out.d_u_total = d_loss_vanilla(real_logits, fake_logits);
        out.g_gan = g_loss_nonsaturating(fake_logits);
        out.g_total = out.g_gan;
        return out;
    }
    check_aligned(mr, mrcat, "pixcm_losses");
    Tensor fake = g_b.forward(mrcat.input);
    if (cfg.term_cgan) {
        Tensor real_pair = concat_channels(mrcat.input, mr.input);
        Tensor fake_pair = concat_channels(mrcat.input, fake);
        Tensor real_logits = d_bc->forward(real_pair);
        Tensor fake_logits = d_bc->forward(fake_pair);
        out.d_c_total = d_loss_vanilla(real_logits, fake_logits);
        out.g_cgan = g_loss_nonsaturating(fake_logits);
    }
    out.g_l1 = l1_aux(mr.input, fake);
    out.g_total = (cfg.term_cgan ? out.g_cgan : 0.0) + (cfg.term_l1 ? cfg.lambda_l1 * out.g_l1 : 0.0);
    return out;
}

std::optional<double> pixcm_d_loss_backward(const Batch& ct, const Batch& mrcat, const Batch& mr,
                                            Net& g_b, Net* d_bu,
                                            Net* d_bc, const ObjectiveConfig& cfg,
                                            RouteBranch branch) {
    check_pixcm_nets(cfg, d_bu, d_bc, branch);
    if (branch == RouteBranch::CT_branch) {
        Tensor fake = g_b.forward(ct.input);
        double lr = d_half_backward(*d_bu, d_bu->forward(mr.input), true);
        double lf = d_half_backward(*d_bu, d_bu->forward(fake), false);
        return lr + lf;
    }
    if (!cfg.term_cgan) return std::nullopt; // pure-L1 step: no discriminator work
    check_aligned(mr, mrcat, "pixcm_d_loss_backward");
    Tensor fake = g_b.forward(mrcat.input);
    Tensor real_pair = concat_channels(mrcat.input, mr.input);
    Tensor fake_pair = concat_channels(mrcat.input, fake);
    double lr = d_half_backward(*d_bc, d_bc->forward(real_pair), true);
    double lf = d_half_backward(*d_bc, d_bc->forward(fake_pair), false);
    return lr + lf;
}

PixCmLossValues pixcm_g_loss_backward(const Batch& ct, const Batch& mrcat, const Batch& mr,
                                      Net& g_b, Net* d_bu,
                                      Net* d_bc, const ObjectiveConfig& cfg,
                                      RouteBranch branch) {
    check_pixcm_nets(cfg, d_bu, d_bc, branch);
    PixCmLossValues out;
    out.branch = branch;
    if (branch == RouteBranch::CT_branch) {
        Tensor fake = g_b.forward(ct.input);
        Tensor fake_logits = d_bu->forward(fake);
        out.g_gan = g_loss_nonsaturating(fake_logits);
        Tensor d_fake = d_bu->backward(g_loss_nonsaturating_grad(fake_logits));
        g_b.backward(d_fake);
        out.g_total = out.g_gan;
        return out;
    }
    check_aligned(mr, mrcat, "pixcm_g_loss_backward");
    Tensor fake = g_b.forward(mrcat.input);
    Tensor d_fake = Tensor::zeros_like(fake);
    if (cfg.term_cgan) {
        Tensor fake_pair = concat_channels(mrcat.input, fake);
        Tensor fake_logits = d_bc->forward(fake_pair);
        out.g_cgan = g_loss_nonsaturating(fake_logits);
        Tensor d_pair = d_bc->backward(g_loss_nonsaturating_grad(fake_logits));
        Tensor d_cond;
        split_channels(d_pair, mrcat.input.c(), d_cond, d_fake); // conditioning grad is discarded
    }
    out.g_l1 = l1_aux(mr.input, fake);
    if (cfg.term_l1) {
        Tensor gl1 = l1_aux_grad(mr.input, fake);
        for (std::size_t i = 0; i < d_fake.data.size(); ++i)
            d_fake.data[i] += cfg.lambda_l1 * gl1.data[i];
    }
    g_b.backward(d_fake);
    out.g_total = (cfg.term_cgan ? out.g_cgan : 0.0) + (cfg.term_l1 ? cfg.lambda_l1 * out.g_l1 : 0.0);
    return out;
}

double lr_at(int epoch, const LRSchedule& sched) {
    if (sched.base_lr <= 0) throw_invalid_config("lr schedule: base_lr must be > 0");
    if (sched.constant_epochs < 0 || sched.decay_epochs < 0 || sched.total_epochs() < 1)
        throw_invalid_config("lr schedule: epoch counts must be positive");
    if (epoch < 1 || epoch > sched.total_epochs())
        throw_invalid_argument("lr_at: epoch " + std::to_string(epoch) + " outside schedule of " +
                               std::to_string(sched.total_epochs()) + " epochs");
    if (epoch <= sched.constant_epochs) return sched.base_lr;
    return sched.base_lr * static_cast<double>(sched.total_epochs() - epoch + 1) /
           static_cast<double>(sched.decay_epochs + 1);
}

} // namespace mrct

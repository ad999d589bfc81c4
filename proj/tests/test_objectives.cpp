#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "core/errors.hpp"
#include "core/nn.hpp"
#include "core/objectives.hpp"
#include "core/rng.hpp"

using namespace mrct;

namespace {

Tensor random_tensor(int b, int c, int h, int w, Rng& rng, double scale = 1.0) {
    Tensor t(b, c, h, w);
    for (double& v : t.data) v = rng.normal(0.0, scale);
    return t;
}

Batch make_batch(std::vector<std::string> ids, Tensor input) {
    Batch b;
    b.case_ids = std::move(ids);
    b.input = std::move(input);
    return b;
}

// Minimal generator: one 3x3 same-padding conv into tanh, 10 parameters.
// Small enough that exhaustive finite differences stay cheap, but it still
// runs through the real layer implementations.
struct ToyGen : Net {
    Rng init_rng; // declared first so the conv can draw from it
    Conv2d conv;
    Tanh tanh;
    ToyGen(std::uint64_t seed) : init_rng(seed), conv(1, 1, 3, 1, 1, init_rng) {
        // larger-than-default weights give the losses something to push on
        for (double& v : conv.weight.data) v = init_rng.normal(0.0, 0.4);
        for (double& v : conv.bias.data) v = init_rng.normal(0.0, 0.1);
    }
    Tensor forward(const Tensor& x) override { return tanh.forward(conv.forward(x)); }
    Tensor backward(const Tensor& dy) override { return conv.backward(tanh.backward(dy)); }
    std::vector<Tensor*> parameters() override { return {&conv.weight, &conv.bias}; }
    std::vector<Tensor*> gradients() override { return {&conv.dweight, &conv.dbias}; }
};

// Minimal discriminator: one valid conv, 4x4 input -> 3x3 logit map.
// in_channels 1 gives 5 parameters, 2 (conditional) gives 9.
struct ToyDisc : Net {
    Rng init_rng;
    Conv2d conv;
    ToyDisc(int in_channels, std::uint64_t seed)
        : init_rng(seed), conv(in_channels, 1, 2, 1, 0, init_rng) {
        for (double& v : conv.weight.data) v = init_rng.normal(0.0, 0.5);
        for (double& v : conv.bias.data) v = init_rng.normal(0.0, 0.1);
    }
    Tensor forward(const Tensor& x) override { return conv.forward(x); }
    Tensor backward(const Tensor& dy) override { return conv.backward(dy); }
    std::vector<Tensor*> parameters() override { return {&conv.weight, &conv.bias}; }
    std::vector<Tensor*> gradients() override { return {&conv.dweight, &conv.dbias}; }
};

// Exhaustive central-difference check of `analytic` (already filled) against
// the scalar function `f`, perturbing every entry of every parameter.
void fd_check(const std::function<double()>& f, const std::vector<Tensor*>& params,
              const std::vector<Tensor*>& grads, double tol = 1e-3) {
    REQUIRE(params.size() == grads.size());
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        REQUIRE(p.data.size() == grads[pi]->data.size());
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            double keep = p.data[i];
            double h = 1e-6;
            p.data[i] = keep + h;
            double up = f();
            p.data[i] = keep - h;
            double down = f();
            p.data[i] = keep;
            double num = (up - down) / (2 * h);
            double ana = grads[pi]->data[i];
            double ref = std::max({std::abs(num), std::abs(ana), 1e-8});
            CAPTURE(pi);
            CAPTURE(i);
            CHECK(std::abs(num - ana) / ref < tol);
        }
    }
}

} // namespace

TEST_CASE("losses hit their closed-form values at indifferent logits") {
    // At zero logits the sigmoid sits at 1/2 on both sides.
    Tensor z(2, 1, 3, 3); // all zeros
    CHECK(std::abs(d_loss_vanilla(z, z) - 2.0 * std::log(2.0)) < 1e-9);
    CHECK(std::abs(g_loss_nonsaturating(z) - std::log(2.0)) < 1e-9);

    Tensor a(1, 1, 4, 4), b(1, 1, 4, 4);
    for (double& v : a.data) v = -1.0;
    for (double& v : b.data) v = 1.0;
    CHECK(l1_aux(a, b) == 2.0);
    CHECK(l1_aux(b, a) == 2.0);
    CHECK(l1_aux(a, a) == 0.0);
}

TEST_CASE("losses match independent scalar-loop oracles on random logits") {
    Rng rng(77);
    Tensor real = random_tensor(2, 1, 5, 5, rng, 3.0);
    Tensor fake = random_tensor(3, 1, 4, 4, rng, 3.0);

    // Direct -log sigmoid / -log(1-sigmoid) evaluation, no softplus rewrite.
    double dr = 0, df = 0;
    for (double v : real.data) dr += -std::log(1.0 / (1.0 + std::exp(-v)));
    for (double v : fake.data) df += -std::log(1.0 - 1.0 / (1.0 + std::exp(-v)));
    double want_d = dr / real.data.size() + df / fake.data.size();
    CHECK(d_loss_vanilla(real, fake) == doctest::Approx(want_d).epsilon(1e-12));

    double gf = 0;
    for (double v : fake.data) gf += -std::log(1.0 / (1.0 + std::exp(-v)));
    CHECK(g_loss_nonsaturating(fake) == doctest::Approx(gf / fake.data.size()).epsilon(1e-12));

    Tensor t = random_tensor(2, 1, 5, 5, rng);
    Tensor u = random_tensor(2, 1, 5, 5, rng);
    double l = 0;
    for (std::size_t i = 0; i < t.data.size(); ++i) l += std::abs(t.data[i] - u.data[i]);
    CHECK(l1_aux(t, u) == doctest::Approx(l / t.data.size()).epsilon(1e-12));
}

TEST_CASE("loss input-gradients match finite differences") {
    Rng rng(13);
    Tensor real = random_tensor(1, 1, 4, 4, rng);
    Tensor fake = random_tensor(1, 1, 4, 4, rng);

    Tensor d_real, d_fake;
    d_loss_vanilla_grads(real, fake, d_real, d_fake);
    const double h = 1e-6;
    for (std::size_t i = 0; i < real.data.size(); ++i) {
        double keep = real.data[i];
        real.data[i] = keep + h;
        double up = d_loss_vanilla(real, fake);
        real.data[i] = keep - h;
        double down = d_loss_vanilla(real, fake);
        real.data[i] = keep;
        CHECK(std::abs((up - down) / (2 * h) - d_real.data[i]) < 1e-8);
    }
    for (std::size_t i = 0; i < fake.data.size(); ++i) {
        double keep = fake.data[i];
        fake.data[i] = keep + h;
        double up = d_loss_vanilla(real, fake);
        fake.data[i] = keep - h;
        double down = d_loss_vanilla(real, fake);
        fake.data[i] = keep;
        CHECK(std::abs((up - down) / (2 * h) - d_fake.data[i]) < 1e-8);
    }

    Tensor gg = g_loss_nonsaturating_grad(fake);
    for (std::size_t i = 0; i < fake.data.size(); ++i) {
        double keep = fake.data[i];
        fake.data[i] = keep + h;
        double up = g_loss_nonsaturating(fake);
        fake.data[i] = keep - h;
        double down = g_loss_nonsaturating(fake);
        fake.data[i] = keep;
        CHECK(std::abs((up - down) / (2 * h) - gg.data[i]) < 1e-8);
    }

    // keep |target - translated| away from the absolute-value kink
    Tensor tgt = random_tensor(1, 1, 4, 4, rng);
    Tensor tr(1, 1, 4, 4);
    for (std::size_t i = 0; i < tr.data.size(); ++i)
        tr.data[i] = tgt.data[i] + (i % 2 ? 0.5 : -0.5);
    Tensor gl = l1_aux_grad(tgt, tr);
    for (std::size_t i = 0; i < tr.data.size(); ++i) {
        double keep = tr.data[i];
        tr.data[i] = keep + h;
        double up = l1_aux(tgt, tr);
        tr.data[i] = keep - h;
        double down = l1_aux(tgt, tr);
        tr.data[i] = keep;
        CHECK(std::abs((up - down) / (2 * h) - gl.data[i]) < 1e-8);
    }
}

TEST_CASE("losses reject non-finite logits") {
    Tensor ok(1, 1, 2, 2), bad(1, 1, 2, 2);
    bad.data[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(d_loss_vanilla(bad, ok), Error);
    CHECK_THROWS_AS(d_loss_vanilla(ok, bad), Error);
    CHECK_THROWS_AS(g_loss_nonsaturating(bad), Error);
}

TEST_CASE("input routing splits at one half") {
    CHECK(route_input(0.0) == RouteBranch::CT_branch);
    CHECK(route_input(0.499999999) == RouteBranch::CT_branch);
    CHECK(route_input(0.5) == RouteBranch::MRCAT_branch);
    CHECK(route_input(0.999999999) == RouteBranch::MRCAT_branch);
    CHECK_THROWS_AS(route_input(-0.001), Error);
    CHECK_THROWS_AS(route_input(1.0), Error);
    CHECK_THROWS_AS(route_input(std::numeric_limits<double>::quiet_NaN()), Error);

    CHECK(std::string(route_branch_name(RouteBranch::CT_branch)) == "ct");
    CHECK(std::string(route_branch_name(RouteBranch::MRCAT_branch)) == "mrcat");
}

TEST_CASE("routing is balanced over a long stream") {
    Rng rng(Rng::derive(123, "route", 0));
    int n = 100000, ct = 0;
    for (int i = 0; i < n; ++i)
        if (route_input(rng.uniform01()) == RouteBranch::CT_branch) ++ct;
    double frac = static_cast<double>(ct) / n;
    CHECK(frac >= 0.49);
    CHECK(frac <= 0.51);
}

TEST_CASE("learning rate is constant then decays linearly to a positive floor") {
    LRSchedule s; // 2e-4, 30 constant + 20 decay
    CHECK(lr_at(1, s) == 2e-4);
    CHECK(lr_at(10, s) == 2e-4);
    CHECK(lr_at(30, s) == 2e-4);
    CHECK(lr_at(31, s) == 2e-4 * 20.0 / 21.0);
    CHECK(lr_at(40, s) == 2e-4 * 11.0 / 21.0);
    CHECK(lr_at(50, s) == 2e-4 * 1.0 / 21.0);
    CHECK(lr_at(50, s) > 0.0);

    for (int e = 2; e <= 50; ++e) CHECK(lr_at(e, s) <= lr_at(e - 1, s));

    CHECK_THROWS_AS(lr_at(0, s), Error);
    CHECK_THROWS_AS(lr_at(51, s), Error);
    LRSchedule bad = s;
    bad.base_lr = 0.0;
    CHECK_THROWS_AS(lr_at(1, bad), Error);
    LRSchedule none;
    none.constant_epochs = 0;
    none.decay_epochs = 0;
    CHECK_THROWS_AS(lr_at(1, none), Error);
}

TEST_CASE("objective validation enforces per-model term rules") {
    auto cfg_with = [](bool gan, bool cgan, bool l1) {
        ObjectiveConfig c;
        c.term_gan = gan;
        c.term_cgan = cgan;
        c.term_l1 = l1;
        return c;
    };

    CHECK_NOTHROW(validate_objective(default_objective(ModelKind::pixmc), ModelKind::pixmc));
    CHECK_NOTHROW(validate_objective(default_objective(ModelKind::pixcm), ModelKind::pixcm));
    CHECK_NOTHROW(validate_objective(default_objective(ModelKind::baseline_pix2pix),
                                     ModelKind::baseline_pix2pix));

    // pixmc ablations: adversarial-only and L1-only are both trainable
    CHECK_NOTHROW(validate_objective(cfg_with(true, false, false), ModelKind::pixmc));
    CHECK_NOTHROW(validate_objective(cfg_with(false, false, true), ModelKind::pixmc));
    CHECK_THROWS_AS(validate_objective(cfg_with(true, true, true), ModelKind::pixmc), Error);

    // pixcm ablations: GAN, GAN+cGAN, GAN+cGAN+L1; L1 rides on the conditional branch
    CHECK_NOTHROW(validate_objective(cfg_with(true, false, false), ModelKind::pixcm));
    CHECK_NOTHROW(validate_objective(cfg_with(true, true, false), ModelKind::pixcm));
    CHECK_NOTHROW(validate_objective(cfg_with(true, true, true), ModelKind::pixcm));
    CHECK_NOTHROW(validate_objective(cfg_with(false, true, true), ModelKind::pixcm));
    CHECK_THROWS_AS(validate_objective(cfg_with(false, false, true), ModelKind::pixcm), Error);
    CHECK_THROWS_AS(validate_objective(cfg_with(true, false, true), ModelKind::pixcm), Error);

    // baseline is the conditional branch only
    CHECK_THROWS_AS(validate_objective(cfg_with(true, true, true), ModelKind::baseline_pix2pix),
                    Error);
    CHECK_THROWS_AS(validate_objective(cfg_with(false, false, true), ModelKind::baseline_pix2pix),
                    Error);
    CHECK_NOTHROW(validate_objective(cfg_with(false, true, false), ModelKind::baseline_pix2pix));

    ObjectiveConfig none = cfg_with(false, false, false);
    CHECK_THROWS_AS(validate_objective(none, ModelKind::pixmc), Error);
    ObjectiveConfig neg = default_objective(ModelKind::pixmc);
    neg.lambda_l1 = -1.0;
    CHECK_THROWS_AS(validate_objective(neg, ModelKind::pixmc), Error);
    ObjectiveConfig mode = default_objective(ModelKind::pixmc);
    mode.gan_mode = "lsgan";
    CHECK_THROWS_AS(validate_objective(mode, ModelKind::pixmc), Error);

    CHECK(std::string(model_kind_name(ModelKind::pixmc)) == "pixmc");
    CHECK(model_kind_from_name("baseline") == ModelKind::baseline_pix2pix);
    CHECK(model_kind_from_name("baseline_pix2pix") == ModelKind::baseline_pix2pix);
    CHECK_THROWS_AS(model_kind_from_name("cyclegan"), Error);
}

TEST_CASE("mr-to-ct composite loss gradients match finite differences") {
    Rng rng(21);
    ToyGen g(5);
    ToyDisc d(1, 6);
    REQUIRE(g.parameter_count() == 10);
    REQUIRE(d.parameter_count() == 5);

    Batch mr = make_batch({"a", "b"}, random_tensor(2, 1, 4, 4, rng, 0.7));
    Batch mrcat = make_batch({"a", "b"}, random_tensor(2, 1, 4, 4, rng, 0.7));
    Batch ct = make_batch({"c", "d"}, random_tensor(2, 1, 4, 4, rng, 0.7));

    for (ObjectiveConfig cfg :
         {default_objective(ModelKind::pixmc), [] {
              ObjectiveConfig c = default_objective(ModelKind::pixmc);
              c.term_l1 = false;
              return c;
          }()}) {
        CAPTURE(cfg.term_l1);

        // generator parameters against g_total
        g.zero_grad();
        PixMcLossValues back = pixmc_g_loss_backward(mr, mrcat, g, d, cfg);
        auto g_total = [&] { return pixmc_losses(mr, mrcat, ct, g, d, cfg).g_total; };
        fd_check(g_total, g.parameters(), g.gradients());

        // discriminator parameters against d_total
        d.zero_grad();
        std::optional<double> dloss = pixmc_d_loss_backward(mr, ct, g, d, cfg);
        REQUIRE(dloss.has_value());
        auto d_total = [&] { return *pixmc_losses(mr, mrcat, ct, g, d, cfg).d_total; };
        fd_check(d_total, d.parameters(), d.gradients());

        // the backward variants report the same loss values as the forward pass
        PixMcLossValues fwd = pixmc_losses(mr, mrcat, ct, g, d, cfg);
        CHECK(fwd.g_total == doctest::Approx(back.g_total).epsilon(1e-12));
        CHECK(fwd.g_gan == doctest::Approx(back.g_gan).epsilon(1e-12));
        CHECK(fwd.g_l1 == doctest::Approx(back.g_l1).epsilon(1e-12));
        CHECK(fwd.d_total.has_value());
        CHECK(*fwd.d_total == doctest::Approx(*dloss).epsilon(1e-12));
    }

    // L1-only objective trains without any discriminator work
    ObjectiveConfig l1only = default_objective(ModelKind::pixmc);
    l1only.term_gan = false;
    CHECK(!pixmc_d_loss_backward(mr, ct, g, d, l1only).has_value());
    g.zero_grad();
    PixMcLossValues back = pixmc_g_loss_backward(mr, mrcat, g, d, l1only);
    CHECK(back.g_total == doctest::Approx(l1only.lambda_l1 * back.g_l1).epsilon(1e-12));
    auto g_total = [&] { return pixmc_losses(mr, mrcat, ct, g, d, l1only).g_total; };
    fd_check(g_total, g.parameters(), g.gradients());
}

TEST_CASE("ct-to-mr composite loss gradients match finite differences on both branches") {
    Rng rng(31);
    ToyGen g(7);
    ToyDisc d_u(1, 8);
    ToyDisc d_c(2, 9);
    REQUIRE(d_c.parameter_count() == 9);

    Batch ct = make_batch({"u1", "u2"}, random_tensor(2, 1, 4, 4, rng, 0.7));
    Batch mrcat = make_batch({"p1", "p2"}, random_tensor(2, 1, 4, 4, rng, 0.7));
    Batch mr = make_batch({"p1", "p2"}, random_tensor(2, 1, 4, 4, rng, 0.7));
    ObjectiveConfig cfg = default_objective(ModelKind::pixcm);

    SUBCASE("ct branch") {
        RouteBranch br = RouteBranch::CT_branch;
        // On this branch MR plays the real set; batches need not align with CT.
        g.zero_grad();
        PixCmLossValues back = pixcm_g_loss_backward(ct, mrcat, mr, g, &d_u, &d_c, cfg, br);
        CHECK(back.branch == br);
        CHECK(back.g_total == back.g_gan);
        CHECK(back.g_cgan == 0.0);
        auto g_total = [&] { return pixcm_losses(ct, mrcat, mr, g, &d_u, &d_c, cfg, br).g_total; };
        fd_check(g_total, g.parameters(), g.gradients());

        d_u.zero_grad();
        std::optional<double> dloss = pixcm_d_loss_backward(ct, mrcat, mr, g, &d_u, &d_c, cfg, br);
        REQUIRE(dloss.has_value());
        auto d_total = [&] {
            return *pixcm_losses(ct, mrcat, mr, g, &d_u, &d_c, cfg, br).d_u_total;
        };
        fd_check(d_total, d_u.parameters(), d_u.gradients());

        PixCmLossValues fwd = pixcm_losses(ct, mrcat, mr, g, &d_u, &d_c, cfg, br);
        CHECK(fwd.d_u_total.has_value());
        CHECK(!fwd.d_c_total.has_value());
        CHECK(*fwd.d_u_total == doctest::Approx(*dloss).epsilon(1e-12));
        CHECK(fwd.g_total == doctest::Approx(back.g_total).epsilon(1e-12));
    }

    SUBCASE("mrcat branch") {
        RouteBranch br = RouteBranch::MRCAT_branch;
        g.zero_grad();
        PixCmLossValues back = pixcm_g_loss_backward(ct, mrcat, mr, g, &d_u, &d_c, cfg, br);
        CHECK(back.branch == br);
        CHECK(back.g_gan == 0.0);
        CHECK(back.g_total ==
              doctest::Approx(back.g_cgan + cfg.lambda_l1 * back.g_l1).epsilon(1e-12));
        auto g_total = [&] { return pixcm_losses(ct, mrcat, mr, g, &d_u, &d_c, cfg, br).g_total; };
        fd_check(g_total, g.parameters(), g.gradients());

        d_c.zero_grad();
        std::optional<double> dloss = pixcm_d_loss_backward(ct, mrcat, mr, g, &d_u, &d_c, cfg, br);
        REQUIRE(dloss.has_value());
        auto d_total = [&] {
            return *pixcm_losses(ct, mrcat, mr, g, &d_u, &d_c, cfg, br).d_c_total;
        };
        fd_check(d_total, d_c.parameters(), d_c.gradients());

        PixCmLossValues fwd = pixcm_losses(ct, mrcat, mr, g, &d_u, &d_c, cfg, br);
        CHECK(!fwd.d_u_total.has_value());
        CHECK(fwd.d_c_total.has_value());
        CHECK(*fwd.d_c_total == doctest::Approx(*dloss).epsilon(1e-12));
        CHECK(fwd.g_total == doctest::Approx(back.g_total).epsilon(1e-12));
    }

    SUBCASE("forced conditional-only objective skips discriminator work without cgan") {
        ObjectiveConfig pure;
        pure.term_gan = false;
        pure.term_cgan = false;
        pure.term_l1 = true;
        pure.lambda_l1 = 100.0;
        CHECK(!pixcm_d_loss_backward(ct, mrcat, mr, g, nullptr, nullptr, pure,
                                     RouteBranch::MRCAT_branch)
                   .has_value());
        g.zero_grad();
        PixCmLossValues back =
            pixcm_g_loss_backward(ct, mrcat, mr, g, nullptr, nullptr, pure,
                                  RouteBranch::MRCAT_branch);
        CHECK(back.g_total == doctest::Approx(pure.lambda_l1 * back.g_l1).epsilon(1e-12));
        auto g_total = [&] {
            return pixcm_losses(ct, mrcat, mr, g, nullptr, nullptr, pure,
                                RouteBranch::MRCAT_branch)
                .g_total;
        };
        fd_check(g_total, g.parameters(), g.gradients());
    }
}

TEST_CASE("composite losses reject inconsistent inputs") {
    Rng rng(41);
    ToyGen g(1);
    ToyDisc d_u(1, 2);
    ToyDisc d_c(2, 3);
    ObjectiveConfig mc = default_objective(ModelKind::pixmc);
    ObjectiveConfig cm = default_objective(ModelKind::pixcm);

    Batch mr = make_batch({"a", "b"}, random_tensor(2, 1, 4, 4, rng));
    Batch mrcat_wrong = make_batch({"a", "x"}, random_tensor(2, 1, 4, 4, rng));
    Batch mrcat = make_batch({"a", "b"}, random_tensor(2, 1, 4, 4, rng));
    Batch ct = make_batch({"c"}, random_tensor(1, 1, 4, 4, rng));
    Batch none;

    // misaligned pair identities
    CHECK_THROWS_AS(pixmc_losses(mr, mrcat_wrong, ct, g, d_u, mc), Error);
    // adversarial term without real CT
    CHECK_THROWS_AS(pixmc_losses(mr, mrcat, none, g, d_u, mc), Error);
    // ct branch requires the unconditional discriminator
    CHECK_THROWS_AS(
        pixcm_losses(ct, mrcat, mr, g, nullptr, &d_c, cm, RouteBranch::CT_branch), Error);
    // mrcat branch with cgan requires the conditional discriminator
    CHECK_THROWS_AS(
        pixcm_losses(ct, mrcat, mr, g, &d_u, nullptr, cm, RouteBranch::MRCAT_branch), Error);
    // ct branch is out of reach when the unconditional term is disabled
    ObjectiveConfig no_gan = cm;
    no_gan.term_gan = false;
    CHECK_THROWS_AS(
        pixcm_losses(ct, mrcat, mr, g, &d_u, &d_c, no_gan, RouteBranch::CT_branch), Error);
    // ct branch needs both streams present
    CHECK_THROWS_AS(pixcm_losses(none, mrcat, mr, g, &d_u, &d_c, cm, RouteBranch::CT_branch),
                    Error);
}

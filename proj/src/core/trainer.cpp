#include "core/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/hashutil.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace mrct {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw_invalid_config("train: epochs must be >= 1");
    if (cfg.iters_per_epoch < 1) throw_invalid_config("train: iters_per_epoch must be >= 1");
    if (cfg.batch_size < 1) throw_invalid_config("train: batch_size must be >= 1");
    if (cfg.epochs > cfg.schedule.total_epochs())
        throw_invalid_config("train: epochs exceed the learning-rate schedule length");
    if (cfg.base_width < 1 || cfg.depth < 2 || cfg.depth > 8)
        throw_invalid_config("train: bad generator geometry");
    if (cfg.d_layers < 1 || cfg.d_layers > 6) throw_invalid_config("train: d_layers must be in [1, 6]");
    if (cfg.augment.crop_size % (1 << cfg.depth) != 0)
        throw_invalid_config("train: crop_size must be divisible by 2^depth");
    if (cfg.checkpoint_every < 0) throw_invalid_config("train: checkpoint_every must be >= 0");
    if (cfg.split != "train" && cfg.split != "eval" && cfg.split != "all")
        throw_invalid_config("train: split must be train, eval or all");
    validate_objective(cfg.objective, cfg.model);
    // exercises schedule validation
    lr_at(1, cfg.schedule);
}

std::string train_config_json(const TrainConfig& cfg) {
    json terms = json::array();
    if (cfg.objective.term_gan) terms.push_back("GAN");
    if (cfg.objective.term_cgan) terms.push_back("cGAN");
    if (cfg.objective.term_l1) terms.push_back("L1");
    char seedbuf[19];
    std::snprintf(seedbuf, sizeof seedbuf, "0x%016llx", static_cast<unsigned long long>(cfg.seed));
    json j;
    j["model"] = model_kind_name(cfg.model);
    j["epochs"] = cfg.epochs;
    j["iters_per_epoch"] = cfg.iters_per_epoch;
    j["batch_size"] = cfg.batch_size;
    j["base_width"] = cfg.base_width;
    j["depth"] = cfg.depth;
    j["d_layers"] = cfg.d_layers;
    j["objective"] = {{"gan_mode", cfg.objective.gan_mode},
                      {"lambda_l1", cfg.objective.lambda_l1},
                      {"terms", terms}};
    j["schedule"] = {{"base_lr", cfg.schedule.base_lr},
                     {"constant_epochs", cfg.schedule.constant_epochs},
                     {"decay_epochs", cfg.schedule.decay_epochs}};
    j["adam"] = {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}};
    j["augment"] = {{"enabled", cfg.augment.enabled}, {"hflip_prob", cfg.augment.hflip_prob},
                    {"zoom_min", cfg.augment.zoom_min}, {"zoom_max", cfg.augment.zoom_max},
                    {"crop_size", cfg.augment.crop_size}};
    j["seed"] = seedbuf;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["split"] = cfg.split;
    return j.dump();
}

std::string train_config_hash(const TrainConfig& cfg) { return fnv1a64_hex(train_config_json(cfg)); }

namespace {

Batch view_batch(const Tensor& t, const std::vector<std::string>& ids) {
    Batch b;
    b.input = t;
    b.case_ids = ids;
    return b;
}

void load_moments(Adam& opt, const std::vector<double>& flat_m, const std::vector<double>& flat_v,
                  std::uint64_t t) {
    auto fill = [](std::vector<Tensor>& dst, const std::vector<double>& src) {
        std::size_t off = 0;
        for (Tensor& x : dst) {
            if (off + x.data.size() > src.size())
                throw_invalid_argument("checkpoint: optimizer blob smaller than network");
            std::copy(src.begin() + static_cast<std::ptrdiff_t>(off),
                      src.begin() + static_cast<std::ptrdiff_t>(off + x.data.size()), x.data.begin());
            off += x.data.size();
        }
        if (off != src.size()) throw_invalid_argument("checkpoint: optimizer blob larger than network");
    };
    fill(opt.m(), flat_m);
    fill(opt.v(), flat_v);
    opt.set_t(t);
}

std::vector<double> flatten_moments(std::vector<Tensor>& ts) {
    std::vector<double> flat;
    for (Tensor& t : ts) flat.insert(flat.end(), t.data.begin(), t.data.end());
    return flat;
}

double param_l2(Net& net) {
    double s = 0;
    for (Tensor* p : net.parameters())
        for (double v : p->data) s += v * v;
    return std::sqrt(s);
}

bool same_spec(const NetSpec& a, const NetSpec& b) {
    return a.name == b.name && a.kind == b.kind && a.in_channels == b.in_channels &&
           a.out_channels == b.out_channels && a.base_width == b.base_width && a.depth == b.depth &&
           a.n_layers == b.n_layers;
}

} // namespace

Trainer::Trainer(const TrainConfig& cfg, const DatasetManifest& manifest)
    : cfg_(cfg), manifest_(manifest) {
    validate_train_config(cfg_);

    auto gen_seed = [&](const char* name) { return Rng::derive(cfg_.seed, name); };
    switch (cfg_.model) {
        case ModelKind::pixmc:
            g_ = build_generator(1, 1, cfg_.base_width, cfg_.depth, gen_seed("init-g_a"));
            d_u_ = build_discriminator(1, cfg_.base_width, cfg_.d_layers, gen_seed("init-d_a"));
            break;
        case ModelKind::pixcm:
            g_ = build_generator(1, 1, cfg_.base_width, cfg_.depth, gen_seed("init-g_b"));
            d_u_ = build_discriminator(1, cfg_.base_width, cfg_.d_layers, gen_seed("init-d_bu"));
            d_c_ = build_discriminator(2, cfg_.base_width, cfg_.d_layers, gen_seed("init-d_bc"));
            break;
        case ModelKind::baseline_pix2pix:
            g_ = build_generator(1, 1, cfg_.base_width, cfg_.depth, gen_seed("init-g_b"));
            d_c_ = build_discriminator(2, cfg_.base_width, cfg_.d_layers, gen_seed("init-d_bc"));
            break;
    }
    opt_g_ = std::make_unique<Adam>(*g_, cfg_.adam);
    if (d_u_) opt_d_u_ = std::make_unique<Adam>(*d_u_, cfg_.adam);
    if (d_c_) opt_d_c_ = std::make_unique<Adam>(*d_c_, cfg_.adam);

    LoaderConfig lc;
    lc.regime = cfg_.model == ModelKind::baseline_pix2pix ? LoaderRegime::paired_only
                                                          : LoaderRegime::mixed;
    lc.split = cfg_.split;
    lc.batch_size = cfg_.batch_size;
    lc.iterations_per_epoch = cfg_.iters_per_epoch;
    lc.seed = Rng::derive(cfg_.seed, "loader");
    lc.augment = cfg_.augment;
    loader_ = std::make_unique<DataLoader>(manifest_, lc);
}

Checkpoint Trainer::snapshot(int epoch_completed, int iter_in_epoch, std::uint64_t loader_state,
                             std::uint64_t route_state) const {
    Checkpoint c;
    c.model = cfg_.model;
    c.seed = cfg_.seed;
    c.config_hash = train_config_hash(cfg_);
    c.epoch = epoch_completed;
    c.iter = iter_in_epoch;
    c.loader_rng_state = loader_state;
    c.route_rng_state = route_state;

    auto add_net = [&](const std::string& name, Net& net, Adam& opt, NetSpec spec) {
        spec.name = name;
        c.nets.push_back(spec);
        c.params.push_back(flatten_parameters(net));
        c.adam_t.push_back(opt.t());
        c.adam_m.push_back(flatten_moments(opt.m()));
        c.adam_v.push_back(flatten_moments(opt.v()));
    };
    NetSpec gs{"", "unet", 1, 1, cfg_.base_width, cfg_.depth, 0};
    NetSpec du{"", "patchgan", 1, 0, cfg_.base_width, 0, cfg_.d_layers};
    NetSpec dc{"", "patchgan", 2, 0, cfg_.base_width, 0, cfg_.d_layers};
    switch (cfg_.model) {
        case ModelKind::pixmc:
            add_net("g_a", *g_, *opt_g_, gs);
            add_net("d_a", *d_u_, *opt_d_u_, du);
            break;
        case ModelKind::pixcm:
            add_net("g_b", *g_, *opt_g_, gs);
            add_net("d_bu", *d_u_, *opt_d_u_, du);
            add_net("d_bc", *d_c_, *opt_d_c_, dc);
            break;
        case ModelKind::baseline_pix2pix:
            add_net("g_b", *g_, *opt_g_, gs);
            add_net("d_bc", *d_c_, *opt_d_c_, dc);
            break;
    }
    return c;
}

void Trainer::resume_from(const fs::path& checkpoint_path) {
    Checkpoint c = load_checkpoint(checkpoint_path);
    if (c.model != cfg_.model)
        throw_invalid_argument("resume: checkpoint is for model " +
                               std::string(model_kind_name(c.model)));
    Checkpoint expect = snapshot(0, 0, 0, 0);
    if (c.nets.size() != expect.nets.size())
        throw_invalid_argument("resume: checkpoint net count does not match config");
    for (std::size_t i = 0; i < c.nets.size(); ++i)
        if (!same_spec(c.nets[i], expect.nets[i]))
            throw_invalid_argument("resume: architecture mismatch for net '" + c.nets[i].name + "'");

    auto restore = [&](std::size_t i, Net& net, Adam& opt) {
        load_parameters(net, c.params[i]);
        load_moments(opt, c.adam_m[i], c.adam_v[i], c.adam_t[i]);
    };
    std::size_t i = 0;
    restore(i++, *g_, *opt_g_);
    if (d_u_) restore(i++, *d_u_, *opt_d_u_);
    if (d_c_) restore(i++, *d_c_, *opt_d_c_);

    start_epoch_ = c.epoch + 1;
    start_iter_ = c.iter;
    resumed_ = std::move(c);
}

Trainer::IterLog Trainer::step_pixmc(const MixedBatch& mb, double lr) {
    IterLog log;
    Batch mr = view_batch(mb.paired.input, mb.paired.case_ids);
    Batch mrcat = view_batch(mb.paired.target, mb.paired.case_ids);
    const ObjectiveConfig& ob = cfg_.objective;

    if (ob.term_gan) {
        d_u_->zero_grad();
        auto d_total = pixmc_d_loss_backward(mr, mb.ct, *g_, *d_u_, ob);
        opt_d_u_->step(lr);
        phase("d_updated", cur_epoch_, cur_iter_);
        log.terms.emplace_back("d_a", *d_total);
    }
    g_->zero_grad();
    PixMcLossValues gv = pixmc_g_loss_backward(mr, mrcat, *g_, *d_u_, ob);
    opt_g_->step(lr);
    phase("g_updated", cur_epoch_, cur_iter_);

    if (ob.term_gan) log.terms.emplace_back("g_gan", gv.g_gan);
    if (ob.term_l1) log.terms.emplace_back("g_l1", gv.g_l1);
    log.terms.emplace_back("g_total", gv.g_total);
    log.case_ids = mb.paired.case_ids;
    log.case_ids.insert(log.case_ids.end(), mb.ct.case_ids.begin(), mb.ct.case_ids.end());
    return log;
}

Trainer::IterLog Trainer::step_pixcm(const MixedBatch& mb, double lr, Rng& route_rng) {
    IterLog log;
    Batch mr = view_batch(mb.paired.input, mb.paired.case_ids);
    Batch mrcat = view_batch(mb.paired.target, mb.paired.case_ids);
    const ObjectiveConfig& ob = cfg_.objective;

    RouteBranch branch;
    if (cfg_.model == ModelKind::baseline_pix2pix) branch = RouteBranch::MRCAT_branch;
    else if (ob.term_gan && ob.term_cgan) branch = route_input(route_rng.uniform01());
    else if (ob.term_gan) branch = RouteBranch::CT_branch;
    else branch = RouteBranch::MRCAT_branch;
    log.terms.emplace_back("branch", branch == RouteBranch::CT_branch ? 0.0 : 1.0);

    if (branch == RouteBranch::CT_branch) {
        d_u_->zero_grad();
        auto d_total = pixcm_d_loss_backward(mb.ct, mrcat, mr, *g_, d_u_.get(), d_c_.get(), ob, branch);
        opt_d_u_->step(lr);
        phase("d_updated", cur_epoch_, cur_iter_);
        log.terms.emplace_back("d_bu", *d_total);
    } else if (ob.term_cgan) {
        d_c_->zero_grad();
        auto d_total = pixcm_d_loss_backward(mb.ct, mrcat, mr, *g_, d_u_.get(), d_c_.get(), ob, branch);
        opt_d_c_->step(lr);
        phase("d_updated", cur_epoch_, cur_iter_);
        log.terms.emplace_back("d_bc", *d_total);
    }
    g_->zero_grad();
    PixCmLossValues gv =
        pixcm_g_loss_backward(mb.ct, mrcat, mr, *g_, d_u_.get(), d_c_.get(), ob, branch);
    opt_g_->step(lr);
    phase("g_updated", cur_epoch_, cur_iter_);

    if (branch == RouteBranch::CT_branch) {
        log.terms.emplace_back("g_gan", gv.g_gan);
    } else {
        if (ob.term_cgan) log.terms.emplace_back("g_cgan", gv.g_cgan);
        if (ob.term_l1) log.terms.emplace_back("g_l1", gv.g_l1);
    }
    log.terms.emplace_back("g_total", gv.g_total);
    log.case_ids = mb.paired.case_ids;
    log.case_ids.insert(log.case_ids.end(), mb.ct.case_ids.begin(), mb.ct.case_ids.end());
    return log;
}

TrainReport Trainer::run(const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw_io_error("train: cannot create " + out_dir.string());

    fs::path log_path = out_dir / "loss_log.jsonl";
    bool append = resumed_.has_value() && fs::exists(log_path);
    std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw_io_error("train: cannot open loss log " + log_path.string());

    std::map<std::string, double> term_sum;
    std::map<std::string, int> term_n;
    int total_iters = 0;
    char line[256];

    for (int e = start_epoch_; e <= cfg_.epochs; ++e) {
        double lr = lr_at(e, cfg_.schedule);
        loader_->start_epoch(e);
        Rng route_rng(Rng::derive(cfg_.seed, "route", static_cast<std::uint64_t>(e)));
        if (resumed_ && e == start_epoch_ && start_iter_ > 0) {
            loader_->set_rng_state(resumed_->loader_rng_state);
            loader_->set_iteration(start_iter_);
            route_rng.set_state(resumed_->route_rng_state);
        }
        if (e == cfg_.epochs) {
            term_sum.clear();
            term_n.clear();
        }
        auto write_abort = [&](int iter, const std::vector<std::string>& case_ids) {
            json snap;
            snap["epoch"] = e;
            snap["iter"] = iter;
            snap["case_ids"] = case_ids;
            json norms;
            norms["g"] = param_l2(*g_);
            if (d_u_) norms["d_u"] = param_l2(*d_u_);
            if (d_c_) norms["d_c"] = param_l2(*d_c_);
            snap["param_l2"] = norms;
            std::ofstream snapf(out_dir / "abort.json", std::ios::trunc);
            snapf << snap.dump(2) << "\n";
        };
        while (loader_->has_next()) {
            MixedBatch mb = loader_->next();
            cur_epoch_ = e;
            cur_iter_ = mb.iteration;
            phase("iter_start", e, mb.iteration);
            IterLog il;
            try {
                il = cfg_.model == ModelKind::pixmc ? step_pixmc(mb, lr)
                                                    : step_pixcm(mb, lr, route_rng);
            } catch (const Error& err) {
                if (err.code() != ErrorCode::numeric_error) throw;
                std::vector<std::string> ids = mb.paired.case_ids;
                ids.insert(ids.end(), mb.ct.case_ids.begin(), mb.ct.case_ids.end());
                write_abort(mb.iteration, ids);
                throw;
            }
            bool bad = false;
            for (auto& [name, value] : il.terms) {
                std::snprintf(line, sizeof line, "{\"epoch\":%d,\"iter\":%d,\"term\":\"%s\",\"value\":%.17g}\n",
                              e, mb.iteration, name.c_str(), value);
                log << line;
                if (!std::isfinite(value)) bad = true;
                if (e == cfg_.epochs) {
                    term_sum[name] += value;
                    term_n[name] += 1;
                }
            }
            log.flush();
            ++total_iters;
            if (bad) {
                write_abort(mb.iteration, il.case_ids);
                throw_numeric_error("training loss became non-finite at epoch " + std::to_string(e) +
                                    " iter " + std::to_string(mb.iteration) + "; see abort.json");
            }
            int done = mb.iteration + 1;
            if (cfg_.checkpoint_every > 0 && done % cfg_.checkpoint_every == 0 &&
                done < cfg_.iters_per_epoch) {
                char name[64];
                std::snprintf(name, sizeof name, "checkpoint_e%03d_i%05d.ckpt", e, done);
                save_checkpoint(snapshot(e - 1, done, loader_->rng_state(), route_rng.state()),
                                out_dir / name);
            }
        }
        save_checkpoint(snapshot(e, 0, loader_->rng_state(), route_rng.state()),
                        out_dir / "checkpoint.ckpt");
    }

    TrainReport rep;
    rep.config_hash = train_config_hash(cfg_);
    rep.model = model_kind_name(cfg_.model);
    rep.epochs_run = cfg_.epochs - start_epoch_ + 1;
    rep.total_iterations = total_iters;
    for (auto& [name, s] : term_sum) rep.final_losses[name] = s / term_n[name];
    rep.parameter_counts["g"] = g_->parameter_count();
    if (d_u_) rep.parameter_counts["d_u"] = d_u_->parameter_count();
    if (d_c_) rep.parameter_counts["d_c"] = d_c_->parameter_count();
    rep.checkpoint_path = "checkpoint.ckpt";
    rep.loss_log_path = "loss_log.jsonl";

    json j;
    j["config_hash"] = rep.config_hash;
    j["config"] = json::parse(train_config_json(cfg_));
    j["model"] = rep.model;
    j["epochs_run"] = rep.epochs_run;
    j["total_iterations"] = rep.total_iterations;
    j["final_losses"] = rep.final_losses;
    j["parameter_counts"] = rep.parameter_counts;
    j["checkpoint"] = rep.checkpoint_path;
    j["loss_log"] = rep.loss_log_path;
    std::ofstream repf(out_dir / "train_report.json", std::ios::trunc);
    if (!repf) throw_io_error("train: cannot write report");
    repf << j.dump(2) << "\n";
    return rep;
}

TrainReport train(const TrainConfig& cfg, const DatasetManifest& manifest, const fs::path& out_dir,
                  const std::optional<fs::path>& resume) {
    Trainer t(cfg, manifest);
    if (resume) t.resume_from(*resume);
    return t.run(out_dir);
}

std::unique_ptr<UNetGenerator> generator_from_checkpoint(const Checkpoint& ckpt) {
    for (std::size_t i = 0; i < ckpt.nets.size(); ++i) {
        const NetSpec& n = ckpt.nets[i];
        if (n.kind != "unet") continue;
        auto g = build_generator(n.in_channels, n.out_channels, n.base_width, n.depth, ckpt.seed);
        load_parameters(*g, ckpt.params[i]);
        return g;
    }
    throw_invalid_argument("checkpoint holds no generator");
}

Modality translate_input_modality_check(ModelKind model, Modality input) {
    switch (model) {
        case ModelKind::pixmc:
            if (input != Modality::MR)
                throw_invalid_argument("pixmc translates MR inputs, got " +
                                       std::string(modality_name(input)));
            return Modality::sCT;
        case ModelKind::pixcm:
            if (input != Modality::CT && input != Modality::MRCAT)
                throw_invalid_argument("pixcm translates CT or MRCAT inputs, got " +
                                       std::string(modality_name(input)));
            return Modality::sMR;
        case ModelKind::baseline_pix2pix:
            if (input != Modality::MRCAT)
                throw_invalid_argument("baseline translates MRCAT inputs, got " +
                                       std::string(modality_name(input)));
            return Modality::sMR;
    }
    throw_internal("unreachable model kind");
}

std::vector<SliceImage> translate(const fs::path& checkpoint_path,
                                  const std::vector<SliceImage>& images) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    auto g = generator_from_checkpoint(ckpt);
    std::vector<SliceImage> out;
    out.reserve(images.size());
    for (const SliceImage& img : images) {
        Modality out_mod = translate_input_modality_check(ckpt.model, img.modality);
        SliceImage t;
        t.pixels = g->forward(img.pixels);
        t.modality = out_mod;
        t.case_id = img.case_id;
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace mrct

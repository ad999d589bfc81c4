#include "mrct.h"

#include <exception>
#include <memory>
#include <string>

#include "core/ablate.hpp"
#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/errors.hpp"
#include "core/metrics.hpp"
#include "core/phantom.hpp"
#include "core/trainer.hpp"

namespace {

thread_local std::string g_last_error;

mrct_status status_of(mrct::ErrorCode code) {
    switch (code) {
        case mrct::ErrorCode::io_error: return MRCT_E_IO;
        case mrct::ErrorCode::invalid_argument:
        case mrct::ErrorCode::invalid_config: return MRCT_E_INVALID;
        case mrct::ErrorCode::numeric_error: return MRCT_E_NUMERIC;
        case mrct::ErrorCode::internal: return MRCT_E_INTERNAL;
    }
    return MRCT_E_INTERNAL;
}

template <typename F>
mrct_status wrap(F&& body) noexcept {
    try {
        body();
        g_last_error.clear();
        return MRCT_OK;
    } catch (const mrct::Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MRCT_E_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return MRCT_E_INTERNAL;
    }
}

std::string text_or_empty(const char* s) { return s ? std::string(s) : std::string(); }

mrct::RunConfig parse_config_arg(const char* config_json, const char* model) {
    mrct::ModelKind kind = mrct::ModelKind::pixmc;
    // The model flag decides which defaults apply, so resolve it first.
    if (model && *model) kind = mrct::model_kind_from_name(model);
    std::string text = text_or_empty(config_json);
    mrct::RunConfig cfg = text.empty() ? mrct::default_run_config(kind)
                                       : mrct::parse_run_config(text, kind);
    if (model && *model && cfg.train.model != kind) {
        // Flag overrides the file; objective terms follow the model.
        cfg.train.model = kind;
        cfg.train.objective = mrct::default_objective(kind);
    }
    mrct::validate_run_config(cfg);
    return cfg;
}

const char* require(const char* value, const char* what) {
    if (!value || !*value) mrct::throw_invalid_argument(std::string(what) + " is required");
    return value;
}

} // namespace

struct mrct_dataset {
    mrct::DatasetManifest manifest;
};

struct mrct_model {
    mrct::Checkpoint checkpoint;
    std::unique_ptr<mrct::UNetGenerator> generator;
};

extern "C" {

int mrct_api_version(void) { return 1; }

const char* mrct_last_error(void) { return g_last_error.c_str(); }

mrct_status mrct_gen_data(const char* config_json, const char* out_dir) {
    return wrap([&] {
        mrct::RunConfig cfg = parse_config_arg(config_json, nullptr);
        mrct::generate_dataset(cfg.data, require(out_dir, "out_dir"));
    });
}

mrct_status mrct_train_run(const char* config_json, const char* model, const char* manifest_path,
                           const char* out_dir, const char* resume_checkpoint) {
    return wrap([&] {
        mrct::RunConfig cfg = parse_config_arg(config_json, model);
        mrct::DatasetManifest manifest = mrct::load_manifest(require(manifest_path, "manifest_path"));
        std::optional<std::filesystem::path> resume;
        if (resume_checkpoint && *resume_checkpoint) resume = resume_checkpoint;
        mrct::train(cfg.train, manifest, require(out_dir, "out_dir"), resume);
    });
}

mrct_status mrct_evaluate_run(const char* config_json, const char* checkpoint_path,
                              const char* manifest_path, const char* out_dir,
                              int identity_self_check) {
    return wrap([&] {
        mrct::RunConfig cfg = parse_config_arg(config_json, nullptr);
        mrct::DatasetManifest manifest = mrct::load_manifest(require(manifest_path, "manifest_path"));
        std::string hash = mrct::run_config_hash(cfg);
        if (identity_self_check) {
            mrct::evaluate_identity(manifest, cfg.eval, require(out_dir, "out_dir"), hash);
        } else {
            mrct::evaluate(require(checkpoint_path, "checkpoint_path"), manifest, cfg.eval,
                           require(out_dir, "out_dir"), hash);
        }
    });
}

mrct_status mrct_ablate_run(const char* config_json, const char* model, const char* manifest_path,
                            const char* out_dir) {
    return wrap([&] {
        mrct::RunConfig cfg = parse_config_arg(config_json, model);
        if (cfg.train.model == mrct::ModelKind::baseline_pix2pix)
            mrct::throw_invalid_config("ablate: model must be pixmc or pixcm");
        mrct::DatasetManifest manifest = mrct::load_manifest(require(manifest_path, "manifest_path"));
        mrct::ablate(cfg, manifest, require(out_dir, "out_dir"));
    });
}

mrct_status mrct_dataset_open(const char* manifest_path, mrct_dataset** out) {
    return wrap([&] {
        if (!out) mrct::throw_invalid_argument("out is required");
        auto ds = std::make_unique<mrct_dataset>();
        ds->manifest = mrct::load_manifest(require(manifest_path, "manifest_path"));
        *out = ds.release();
    });
}

void mrct_dataset_close(mrct_dataset* ds) { delete ds; }

int mrct_dataset_case_count(const mrct_dataset* ds) {
    return ds ? static_cast<int>(ds->manifest.cases.size()) : 0;
}

int mrct_dataset_resolution(const mrct_dataset* ds) { return ds ? ds->manifest.resolution : 0; }

mrct_status mrct_model_open(const char* checkpoint_path, mrct_model** out) {
    return wrap([&] {
        if (!out) mrct::throw_invalid_argument("out is required");
        auto m = std::make_unique<mrct_model>();
        m->checkpoint = mrct::load_checkpoint(require(checkpoint_path, "checkpoint_path"));
        m->generator = mrct::generator_from_checkpoint(m->checkpoint);
        *out = m.release();
    });
}

void mrct_model_close(mrct_model* m) { delete m; }

const char* mrct_model_kind(const mrct_model* m) {
    return m ? mrct::model_kind_name(m->checkpoint.model) : nullptr;
}

mrct_status mrct_model_translate(mrct_model* m, const double* input, int h, int w,
                                 const char* input_modality, double* output) {
    return wrap([&] {
        if (!m || !input || !output) mrct::throw_invalid_argument("translate: null argument");
        if (h < 1 || w < 1) mrct::throw_invalid_argument("translate: bad image size");
        mrct::Modality mod = mrct::Modality::MR;
        std::string name = text_or_empty(require(input_modality, "input_modality"));
        if (name == "MR") mod = mrct::Modality::MR;
        else if (name == "CT") mod = mrct::Modality::CT;
        else if (name == "MRCAT") mod = mrct::Modality::MRCAT;
        else mrct::throw_invalid_argument("translate: unknown modality " + name);
        mrct::translate_input_modality_check(m->checkpoint.model, mod);

        mrct::Tensor x(1, 1, h, w);
        std::copy(input, input + static_cast<std::size_t>(h) * w, x.data.begin());
        mrct::Tensor y = m->generator->forward(x);
        std::copy(y.data.begin(), y.data.end(), output);
    });
}

} // extern "C"
